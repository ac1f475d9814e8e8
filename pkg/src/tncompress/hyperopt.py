"""Anytime gradient-free search over tree-generator hyperparameters."""

import math

import numpy as np

from .costs import score_tree
from .engine import CompressionConfig
from .tngraph import centrality
from .trees import (
    SPACES,
    HyperParams,
    build_agglom,
    build_greedy,
    build_span,
)

BUILDERS = {"greedy": build_greedy, "span": build_span, "agglom": build_agglom}


class EvolutionarySearch:
    """Population-based sampler over one generator's mixed parameter space.

    Keeps the ``population`` best configurations seen; each draw either
    explores uniformly (probability ``eps``) or mutates a random elite:
    Gaussian steps on reals with a step size adapted by a 1/5-style rule,
    uniform resampling of categoricals with probability ``p_cat``.
    """

    def __init__(self, space, rng, population=8, eps=0.2, p_cat=0.2):
        self.space = space
        self.rng = rng
        self.population = population
        self.eps = eps
        self.p_cat = p_cat
        self.elites = []
        self.trial = 0
        self.step = 0.25
        self.best = math.inf

    def _uniform(self):
        values = {}
        for name, spec in self.space.items():
            kind = spec[0]
            if kind == "real":
                values[name] = float(self.rng.uniform(spec[1], spec[2]))
            elif kind == "int":
                lo, hi = spec[1], spec[2]
                values[name] = int(
                    round(math.exp(self.rng.uniform(math.log(lo), math.log(hi))))
                )
            else:
                choices = spec[1]
                values[name] = choices[int(self.rng.integers(len(choices)))]
        return values

    def _mutate(self, base):
        values = {}
        for name, spec in self.space.items():
            kind = spec[0]
            cur = base[name]
            if kind == "real":
                lo, hi = spec[1], spec[2]
                values[name] = float(
                    np.clip(cur + self.rng.normal(0.0, self.step * (hi - lo)), lo, hi)
                )
            elif kind == "int":
                lo, hi = spec[1], spec[2]
                prop = cur * math.exp(self.rng.normal(0.0, self.step))
                values[name] = int(np.clip(round(prop), lo, hi))
            else:
                if self.rng.random() < self.p_cat:
                    choices = spec[1]
                    values[name] = choices[int(self.rng.integers(len(choices)))]
                else:
                    values[name] = cur
        return values

    def sample_parameters(self):
        if not self.elites or self.rng.random() < self.eps:
            return self._uniform()
        k = int(self.rng.integers(len(self.elites)))
        return self._mutate(self.elites[k][2])

    def report(self, values, score):
        self.trial += 1
        if score < self.best:
            self.best = score
            self.step = min(0.5, self.step * 1.1)
        else:
            self.step = max(0.02, self.step * 0.98)
        self.elites.append((score, self.trial, values))
        self.elites.sort(key=lambda rec: (rec[0], rec[1]))
        del self.elites[self.population:]


def optimize(
    tn,
    chi,
    generator_set=("greedy", "span", "agglom"),
    objective="M",
    budget=128,
    seed=0,
    cfg=None,
    history_sink=None,
):
    """Sample, build and score contraction trees, returning the best found.

    Families in ``generator_set`` are sampled round-robin, each driven by
    its own evolutionary state. A failed trial scores infinity and the loop
    continues. Returns ``(best_tree, best_score, history)`` where history
    holds one record per trial; best-so-far is monotone nonincreasing.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if isinstance(generator_set, str):
        generator_set = (generator_set,)
    families = list(generator_set)
    rng = np.random.default_rng(seed)
    searchers = {
        fam: EvolutionarySearch(SPACES[fam], np.random.default_rng(rng.integers(2**31)))
        for fam in families
    }
    cent = centrality(tn)
    if cfg is None:
        cfg = CompressionConfig(chi=chi, r=0)
    best_tree = None
    best_score = math.inf
    history = []
    for trial in range(budget):
        fam = families[trial % len(families)]
        searcher = searchers[fam]
        values = searcher.sample_parameters()
        hp = HyperParams(fam, values, seed=int(rng.integers(2**31)))
        try:
            tree = BUILDERS[fam](tn, chi, hp, centralities=cent)
            score = score_tree(tn, tree, cfg=cfg).objective(objective)
        except Exception:
            tree, score = None, math.inf
        searcher.report(values, score)
        if score < best_score and tree is not None:
            best_score = score
            best_tree = tree
        rec = {
            "trial": trial,
            "generator": fam,
            "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in values.items()},
            "seed": hp.seed,
            "score": score if math.isfinite(score) else None,
            "best": best_score if math.isfinite(best_score) else None,
        }
        history.append(rec)
        if history_sink is not None:
            history_sink(rec)
    if best_tree is None:
        raise RuntimeError("every trial failed; no tree found")
    return best_tree, best_score, history
