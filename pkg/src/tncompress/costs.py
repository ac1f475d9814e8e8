"""Symbolic cost models for ordered contraction trees.

Costs are simulated on shapes alone, with its own bookkeeping independent
of the execution engine so the two can cross-check each other:

- ``M`` (peak memory): max over stages of the total live tensor elements,
  where stages are the initial network, each post-contraction state (before
  its compressions) and each post-compression state.
- ``W``: the largest single tensor ever live.
- ``flops_contract``: multiply-add counts of the tree's contractions only.
- ``C``: ``flops_contract`` plus all QR/SVD/projector work of compressions.
- ``Mt`` (traced peak): like M but adding per-operation transients
  (inputs + output during a contraction, input + Q + R during a QR,
  input + factors during an SVD).
"""

import math
from dataclasses import dataclass

from .engine import CompressionConfig, contract_approx
from .tngraph import local_spanning_tree, node_key


def contract_flops(m, n, k):
    return float(m) * float(n) * float(k)


def qr_flops(m, n):
    if m < n:
        m, n = n, m
    return 2.0 * m * n * n - (2.0 / 3.0) * n**3


def svd_flops(m, n):
    if m < n:
        m, n = n, m
    return 4.0 * m * n * n - (4.0 / 3.0) * n**3


@dataclass
class CostReport:
    peak_memory: float
    largest_intermediate: float
    flops_contract: float
    flops_total: float
    traced_peak: float

    def to_dict(self):
        return {
            "M": self.peak_memory,
            "W": self.largest_intermediate,
            "flops_contract": self.flops_contract,
            "C": self.flops_total,
            "Mt": self.traced_peak,
        }

    def objective(self, name):
        key = {
            "M": "peak_memory",
            "W": "largest_intermediate",
            "C": "flops_total",
            "Mt": "traced_peak",
            "flops_contract": "flops_contract",
        }[name]
        return getattr(self, key)


class SizeNetwork:
    """Shape-only view of a tensor network: bond dims and open sizes."""

    def __init__(self, bonds=None, open_size=None):
        self.bonds = bonds if bonds is not None else {}
        self.open_size = open_size if open_size is not None else {}

    @classmethod
    def from_tn(cls, tn):
        g = cls()
        for nid in tn.nodes:
            g.bonds[nid] = {}
            g.open_size[nid] = 1
        for a, b, ix, d in tn.bonds():
            g.bonds[a][b] = g.bonds[a].get(b, 1) * d
            g.bonds[b][a] = g.bonds[b].get(a, 1) * d
        for nid, ix, d in tn.open_indices():
            g.open_size[nid] *= d
        return g

    def copy(self):
        return SizeNetwork(
            {v: dict(nb) for v, nb in self.bonds.items()}, dict(self.open_size)
        )

    @property
    def nodes(self):
        return self.bonds

    def __len__(self):
        return len(self.bonds)

    def size(self, v):
        s = self.open_size[v]
        for d in self.bonds[v].values():
            s *= d
        return s

    def neighbors(self, v):
        return set(self.bonds[v])

    def sorted_neighbors(self, v):
        return sorted(self.bonds[v], key=node_key)

    def pair_connectivity(self, i, j):
        return self.bonds[i].get(j, 1)

    def bond(self, i, j):
        return self.bonds[i].get(j, 1)

    def set_bond(self, i, j, d):
        self.bonds[i][j] = d
        self.bonds[j][i] = d

    def merge(self, i, j):
        """Contract j into i; returns (size_i, size_j, shared, new_size)."""
        si, sj = self.size(i), self.size(j)
        shared = self.bonds[i].pop(j, 1)
        self.bonds[j].pop(i, None)
        for w, d in self.bonds[j].items():
            self.bonds[w].pop(j, None)
            self.bonds[i][w] = self.bonds[i].get(w, 1) * d
            self.bonds[w][i] = self.bonds[i][w]
        self.open_size[i] *= self.open_size[j]
        del self.bonds[j], self.open_size[j]
        return si, sj, shared, self.size(i)


class TraceMismatchError(AssertionError):
    pass


class CostSim:
    """Incremental symbolic execution of the compressed contraction."""

    def __init__(self, net, cfg):
        self.net = net
        self.cfg = cfg
        self.intermediates = set()
        self.sum_sizes = sum(net.size(v) for v in net.bonds)
        self.peak = self.sum_sizes
        self.traced_peak = self.sum_sizes
        self.largest = max((net.size(v) for v in net.bonds), default=0)
        self.flops_contract = 0.0
        self.flops_total = 0.0

    @classmethod
    def from_tn(cls, tn, cfg):
        return cls(SizeNetwork.from_tn(tn), cfg)

    def copy(self):
        new = CostSim.__new__(CostSim)
        new.net = self.net.copy()
        new.cfg = self.cfg
        new.intermediates = set(self.intermediates)
        new.sum_sizes = self.sum_sizes
        new.peak = self.peak
        new.traced_peak = self.traced_peak
        new.largest = self.largest
        new.flops_contract = self.flops_contract
        new.flops_total = self.flops_total
        return new

    # -- event helpers -------------------------------------------------

    def _stage(self):
        if self.sum_sizes > self.peak:
            self.peak = self.sum_sizes
        if self.sum_sizes > self.traced_peak:
            self.traced_peak = self.sum_sizes

    def _transient(self, extra):
        t = self.sum_sizes + extra
        if t > self.traced_peak:
            self.traced_peak = t

    def _qr(self, m, n):
        k = min(m, n)
        self.flops_total += qr_flops(m, n)
        self._transient(m * n + m * k + k * n)
        return k

    def _svd(self, m, n):
        k = min(m, n)
        self.flops_total += svd_flops(m, n)
        self._transient(m * n + m * k + k + k * n)
        return k

    def _aux_contract(self, m, n, k):
        self.flops_total += contract_flops(m, n, k)
        self._transient(m * k)

    # -- compression ----------------------------------------------------

    def _compress(self, i, l, events):
        net, cfg = self.net, self.cfg
        exclude = None
        if cfg.exclude_inputs:
            exclude = lambda v: v not in self.intermediates  # noqa: E731
        span = local_spanning_tree(net, {i, l}, r=cfg.r, exclude=exclude)
        vsize = {}
        env_qr = []
        for u, v in reversed(span.pairs):
            d = net.bond(v, u)
            sv = vsize.get(v, net.size(v))
            left = sv // d
            env_qr.append([left, d])
            k = self._qr(left, d)
            su = vsize.get(u, net.size(u))
            self._aux_contract(su // d, d, k)
            vsize[u] = su // d * k
            vsize.pop(v, None)
        dgroup = net.bond(i, l)
        rest_a = vsize.get(i, net.size(i)) // dgroup
        rest_b = vsize.get(l, net.size(l)) // dgroup
        ka = self._qr(rest_a, dgroup)
        kb = self._qr(rest_b, dgroup)
        self._aux_contract(ka, dgroup, kb)
        knew = min(cfg.chi, self._svd(ka, kb))
        # projector formation and absorption into the two endpoints
        self._aux_contract(dgroup, kb, knew)
        self._aux_contract(knew, ka, dgroup)
        si, sl = net.size(i), net.size(l)
        self._aux_contract(si // dgroup, dgroup, knew)
        self._aux_contract(knew, dgroup, sl // dgroup)
        net.set_bond(i, l, knew)
        new_si, new_sl = net.size(i), net.size(l)
        self.sum_sizes += new_si + new_sl - si - sl
        self._stage()
        if events is not None:
            events.append(
                {
                    "op": "compress",
                    "i": i,
                    "l": l,
                    "group_dim": dgroup,
                    "env_qr": env_qr,
                    "qr_a": [rest_a, dgroup],
                    "qr_b": [rest_b, dgroup],
                    "svd": [ka, kb],
                    "new_dim": knew,
                    "size_i": new_si,
                    "size_l": new_sl,
                }
            )

    def _compress_around(self, node, skip, events):
        for l in self.net.sorted_neighbors(node):
            if l != skip and self.net.bond(node, l) > self.cfg.chi:
                self._compress(node, l, events)

    # -- contraction ------------------------------------------------------

    def apply_merge(self, i, j, events=None):
        if i not in self.net.bonds or j not in self.net.bonds:
            raise ValueError(f"merge ({i!r}, {j!r}) references a dead node")
        if self.cfg.compress_late:
            self._compress_around(i, skip=j, events=events)
            self._compress_around(j, skip=i, events=events)
        si, sj, shared, sk = self.net.merge(i, j)
        self.flops_contract += contract_flops(si // shared, shared, sj // shared)
        self.flops_total += contract_flops(si // shared, shared, sj // shared)
        self._transient(sk)
        self.sum_sizes += sk - si - sj
        self._stage()
        if sk > self.largest:
            self.largest = sk
        if events is not None:
            events.append(
                {
                    "op": "contract",
                    "i": i,
                    "j": j,
                    "size_i": si,
                    "size_j": sj,
                    "size_out": sk,
                }
            )
        self.intermediates.add(i)
        if not self.cfg.compress_late:
            self._compress_around(i, skip=None, events=events)

    def score(self, objective="M"):
        return self.report().objective(objective)

    def report(self):
        return CostReport(
            peak_memory=float(self.peak),
            largest_intermediate=float(self.largest),
            flops_contract=self.flops_contract,
            flops_total=self.flops_total,
            traced_peak=float(self.traced_peak),
        )


def _as_merges(tree):
    return list(getattr(tree, "merges", tree))


def score_tree(tn_shape, tree, chi=None, cfg=None, events=None):
    """Simulate a tree symbolically and report its costs.

    ``tn_shape`` may be a TensorNetwork or a SizeNetwork. Either ``chi`` or
    a full CompressionConfig must be given.
    """
    if cfg is None:
        if chi is None:
            raise ValueError("need chi or cfg")
        cfg = CompressionConfig(chi=chi, r=0)
    elif chi is not None and chi != cfg.chi:
        raise ValueError("chi argument conflicts with cfg.chi")
    net = tn_shape.copy() if isinstance(tn_shape, SizeNetwork) else SizeNetwork.from_tn(tn_shape)
    sim = CostSim(net, cfg)
    for i, j in _as_merges(tree):
        sim.apply_merge(i, j, events=events)
    return sim.report()


def _exec_record_view(rec):
    if rec["op"] == "contract":
        return (
            "contract",
            rec["i"],
            rec["j"],
            math.prod(rec["shape_i"]) if "shape_i" in rec else rec["size_i"],
            math.prod(rec["shape_j"]) if "shape_j" in rec else rec["size_j"],
            math.prod(rec["shape_out"]) if "shape_out" in rec else rec["size_out"],
        )
    return (
        "compress",
        rec["i"],
        rec["l"],
        rec["group_dim"],
        tuple(tuple(s) for s in rec["env_qr"]),
        tuple(rec["qr_a"]),
        tuple(rec["qr_b"]),
        tuple(rec["svd"]),
        rec["new_dim"],
        math.prod(rec["shape_i"]) if "shape_i" in rec else rec["size_i"],
        math.prod(rec["shape_l"]) if "shape_l" in rec else rec["size_l"],
    )


def verify_trace(tn, tree, cfg):
    """Run the real contraction and check every executed shape against the
    independent symbolic simulation; raises TraceMismatchError with a diff.
    """
    executed = []
    contract_approx(tn, tree, cfg, trace=executed)
    simulated = []
    score_tree(tn, tree, cfg=cfg, events=simulated)
    if len(executed) != len(simulated):
        raise TraceMismatchError(
            f"event count differs: executed {len(executed)} vs "
            f"simulated {len(simulated)}"
        )
    for idx, (er, sr) in enumerate(zip(executed, simulated)):
        ev, sv = _exec_record_view(er), _exec_record_view(sr)
        if ev != sv:
            raise TraceMismatchError(
                f"event {idx} differs:\n  executed:  {ev}\n  simulated: {sv}"
            )
    return len(executed)
