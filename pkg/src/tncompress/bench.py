"""Experiment runner and post-processing fits for contraction sweeps."""

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import models, schemes
from .costs import score_tree
from .engine import CompressionConfig, contract_value
from .hyperopt import optimize
from .trees import boundary_sweep_tree


def config_hash(obj):
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def tree_hash(tree):
    return config_hash(tree.to_json_dict()["merges"])


def build_instance(lattice_spec, model_spec, seed=0):
    """Materialize one (lattice, model, seed) tensor network."""
    mspec = models.ModelSpec.parse(model_spec) if isinstance(model_spec, str) else model_spec
    if mspec.kind == "cdl":
        lspec = models.LatticeSpec.parse(lattice_spec) if isinstance(lattice_spec, str) else lattice_spec
        sides = lspec.params if lspec.params else (4,)
        lx = sides[0]
        ly = sides[1] if len(sides) > 1 else lx
        return models.build_cdl(lx, int(mspec.params.get("d", 2)), ly)
    lat = models.build_lattice(lattice_spec, seed=seed)
    return models.build_model(lat, mspec, seed=seed)


def run_method(tn, method, seed=0):
    """Contract one instance with one method description.

    Returns a dict holding (sign, log_z), the cost report for tree methods,
    and tree provenance.
    """
    scheme = method.get("scheme", "approx")
    chi = int(method["chi"])
    out = {"sign": None, "log_z": None, "cost": None, "tree_hash": None,
           "generator": None}
    if scheme == "approx":
        cfg = CompressionConfig(
            chi=chi,
            r=method.get("r", 1),
            compress_late=method.get("mode", "early") == "late",
            cutoff=method.get("cutoff", 1e-12),
        )
        family = method.get("family", "all")
        if family == "boundary":
            tree = boundary_sweep_tree(tn)
        else:
            fams = ("greedy", "span", "agglom") if family == "all" else (family,)
            tree, _, _ = optimize(
                tn,
                chi,
                generator_set=fams,
                objective=method.get("objective", "M"),
                budget=int(method.get("budget", 64)),
                seed=int(method.get("opt_seed", seed)),
            )
        sign, log_z = contract_value(tn, tree, cfg)
        out.update(
            sign=sign,
            log_z=log_z,
            cost=score_tree(tn, tree, cfg=cfg).to_dict(),
            tree_hash=tree_hash(tree),
            generator=tree.generator,
        )
    else:
        fn = schemes.SCHEMES[scheme]
        sign, log_z = fn(tn, chi)
        out.update(sign=sign, log_z=log_z, generator=scheme)
    return out


def _run_record(args):
    rec, lattice, model, seed, method = args
    t0 = time.monotonic()
    row = {
        "record": rec,
        "lattice": lattice,
        "model": model,
        "seed": seed,
        "method": method,
    }
    try:
        tn = build_instance(lattice, model, seed=seed)
        row["n_sites"] = len(tn)
        row.update(run_method(tn, method, seed=seed))
        mspec = models.ModelSpec.parse(model)
        if mspec.kind == "ising" and row["log_z"] is not None:
            beta = float(mspec.params.get("beta", 0.44))
            row["f"] = -row["log_z"] / (beta * len(tn))
    except Exception as exc:  # record the failure, keep sweeping
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["wall_time"] = time.monotonic() - t0
    return row


def run_experiment(config, out_path=None, workers=1):
    """Execute the (instances x seeds x methods) matrix of a sweep config.

    Returns the list of result records (deterministic apart from the
    ``wall_time`` fields) and optionally writes JSON lines plus a summary
    CSV next to it.
    """
    chash = config_hash(config)
    tasks = []
    rec = 0
    for inst in config.get("instances", []):
        for seed in inst.get("seeds", [0]):
            for method in config.get("methods", []):
                tasks.append(
                    (rec, inst["lattice"], inst["model"], seed, method)
                )
                rec += 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_record, tasks))
    else:
        rows = [_run_record(t) for t in tasks]
    for row in rows:
        row["config_hash"] = chash
    if out_path is not None:
        with open(out_path, "w") as f:
            for row in rows:
                f.write(json.dumps(row, sort_keys=True) + "\n")
        _write_summary_csv(str(out_path) + ".csv", rows)
    return rows


def _write_summary_csv(path, rows):
    fields = [
        "record", "lattice", "model", "seed", "generator", "sign", "log_z",
        "f", "wall_time",
    ]
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow(row)


# -- fits --------------------------------------------------------------------


@dataclass
class InverseChiFit:
    a: float
    b: float
    sigma_a: float
    exact_fit: bool


def fit_inverse_chi(samples):
    """Least squares of ``f = a + b / chi``; ``a`` estimates the infinite
    bond dimension limit and ``sigma_a`` its standard error (0, flagged,
    when the fit interpolates exactly)."""
    chis = np.asarray([c for c, _ in samples], dtype=float)
    ys = np.asarray([y for _, y in samples], dtype=float)
    if len(chis) < 2:
        raise ValueError("need at least two samples")
    x = np.column_stack([np.ones_like(chis), 1.0 / chis])
    coef, _, _, _ = np.linalg.lstsq(x, ys, rcond=None)
    resid = ys - x @ coef
    dof = len(chis) - 2
    if dof <= 0:
        return InverseChiFit(float(coef[0]), float(coef[1]), 0.0, True)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(x.T @ x)
    return InverseChiFit(
        float(coef[0]), float(coef[1]), float(math.sqrt(max(cov[0, 0], 0.0))),
        False,
    )


@dataclass
class EntropySurfaceFit:
    s_inf: float
    coeffs: tuple
    rank_deficient: bool


def fit_entropy_surface(samples):
    """Linear least squares of the per-site entropy on the basis
    ``[1, 1/V^2, 1/V, 1/(V*chi), 1/chi, 1/chi^2]``."""
    vs = np.asarray([v for v, _, _ in samples], dtype=float)
    chis = np.asarray([c for _, c, _ in samples], dtype=float)
    ys = np.asarray([s for _, _, s in samples], dtype=float)
    x = np.column_stack(
        [
            np.ones_like(vs),
            1.0 / vs**2,
            1.0 / vs,
            1.0 / (vs * chis),
            1.0 / chis,
            1.0 / chis**2,
        ]
    )
    coef, _, rank, _ = np.linalg.lstsq(x, ys, rcond=None)
    return EntropySurfaceFit(
        float(coef[0]), tuple(float(c) for c in coef[1:]), rank < 6
    )


def second_derivative(betas, values):
    """Central finite differences on a uniform grid; returns the interior
    second-derivative estimates."""
    betas = np.asarray(betas, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(betas) < 3:
        raise ValueError("need at least three points")
    h = np.diff(betas)
    if not np.allclose(h, h[0], rtol=1e-8):
        raise ValueError("beta grid must be uniform")
    return (values[2:] - 2.0 * values[1:-1] + values[:-2]) / (h[0] ** 2)
