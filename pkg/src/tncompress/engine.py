"""Ordered-tree contraction with tree-gauge bond compression."""

import math
from dataclasses import dataclass

import numpy as np

from .tensor_ops import (
    DEFAULT_CUTOFF,
    DenseTensor,
    Matricization,
    compute_projectors,
    contract_pair,
    fresh_ind,
    matricize,
)
from .tngraph import local_spanning_tree, node_key


class InvalidTreeError(ValueError):
    pass


class ContractionTooLargeError(RuntimeError):
    pass


@dataclass
class CompressionConfig:
    """Settings for compressed contraction.

    chi
        Maximum retained bond dimension (>= 1).
    r
        Gauge distance: how far the local spanning tree used to gauge each
        compression extends around the bond. ``math.inf`` allowed.
    compress_late
        If true, oversized bonds are compressed just before one of their
        endpoint tensors is contracted; otherwise right after each
        contraction.
    cutoff
        Relative singular value floor applied before truncation/inversion.
    exclude_inputs
        Bar never-contracted tensors from gauge spanning trees.
    """

    chi: int
    r: float = 1
    compress_late: bool = False
    cutoff: float = DEFAULT_CUTOFF
    exclude_inputs: bool = False

    def __post_init__(self):
        if self.chi < 1:
            raise ValueError("chi must be >= 1")


class ScaleTracker:
    """Accumulates the log magnitude stripped off intermediate tensors."""

    def __init__(self):
        self.log_scale = 0.0

    def strip(self, t):
        m = float(np.max(np.abs(t.data))) if t.size else 0.0
        if m > 0.0 and m != 1.0:
            self.log_scale += math.log(m)
            return DenseTensor(t.data / m, t.inds)
        return t

    def result(self, x):
        """Final scalar as ``(sign, log magnitude)``; zero maps to (0, -inf)."""
        x = float(x)
        if x == 0.0:
            return 0, -math.inf
        sign = 1 if x > 0 else -1
        return sign, math.log(abs(x)) + self.log_scale


def sign_log(t, log_scale=0.0):
    """Convert a scalar tensor plus accumulated log scale to (sign, log|Z|)."""
    if t.inds:
        raise ValueError(f"expected a scalar tensor, got indices {t.inds}")
    tracker = ScaleTracker()
    tracker.log_scale = log_scale
    return tracker.result(t.data)


def write_trace(trace, path):
    """Write a contraction trace as JSON lines (tuple node ids as arrays)."""
    import json

    def enc(v):
        return list(v) if isinstance(v, tuple) else v

    with open(path, "w") as f:
        for rec in trace:
            f.write(json.dumps({k: enc(v) for k, v in rec.items()}) + "\n")


def _qr_r_only(t, m, reverse=False):
    """R factor of the matricized QR (or RQ when ``reverse``), plus its shape.

    For QR the result carries ``(new,) + right_inds``; for RQ it carries
    ``left_inds + (new,)``. The orthogonal factor is never formed.
    """
    mat = matricize(t, m)
    if reverse:
        r = np.linalg.qr(mat.T, mode="r")
        k = r.shape[0]
        left_dims = tuple(t.ind_dim(ix) for ix in m.left_inds)
        rt = DenseTensor(r.T.reshape(left_dims + (k,)), m.left_inds + (fresh_ind(),))
        return rt, (mat.shape[1], mat.shape[0])
    r = np.linalg.qr(mat, mode="r")
    k = r.shape[0]
    right_dims = tuple(t.ind_dim(ix) for ix in m.right_inds)
    rt = DenseTensor(r.reshape((k,) + right_dims), (fresh_ind(),) + m.right_inds)
    return rt, mat.shape


def compress_tree_gauge(tn, i, l, cfg, tracker=None, trace=None, sink=None, exclude=None):
    """Compress the bond group between nodes ``i`` and ``l`` in place.

    A spanning tree of radius ``cfg.r`` is grown around ``{i, l}`` and its
    tensors are QR-reduced inward onto virtual copies of the endpoints,
    accumulating the gauge of the local environment. The resulting reduced
    factors define a projector pair which is contracted into ``i`` and
    ``l``; no other tensor is touched. Parallel bonds between the pair are
    fused into the single new bond.
    """
    group = tuple(tn.shared_inds(i, l))
    if not group:
        raise ValueError(f"nodes {i!r} and {l!r} share no bond")
    span = local_spanning_tree(tn, {i, l}, r=cfg.r, exclude=exclude)
    virt = {}
    env_qr = []
    for u, v in reversed(span.pairs):
        tv = virt.get(v, tn.nodes[v])
        tu = virt.get(u, tn.nodes[u])
        vu = [ix for ix in tv.inds if ix in set(tu.inds)]
        rest = tuple(ix for ix in tv.inds if ix not in set(vu))
        rt, shape = _qr_r_only(tv, Matricization(rest, tuple(vu)))
        env_qr.append(shape)
        virt[u] = contract_pair(tu, rt)
        virt.pop(v, None)
    ta = virt.get(i, tn.nodes[i])
    tb = virt.get(l, tn.nodes[l])
    rest_a = tuple(ix for ix in ta.inds if ix not in group)
    rest_b = tuple(ix for ix in tb.inds if ix not in group)
    r_a, shape_a = _qr_r_only(ta, Matricization(rest_a, group))
    r_b, shape_b = _qr_r_only(tb, Matricization(group, rest_b), reverse=True)
    pp = compute_projectors(r_a, r_b, cfg.chi, cfg.cutoff)
    new_i = contract_pair(tn.nodes[i], pp.p_left)
    new_l = contract_pair(pp.p_right, tn.nodes[l])
    if tracker is not None:
        new_i = tracker.strip(new_i)
        new_l = tracker.strip(new_l)
    tn.replace_tensor(i, new_i)
    tn.replace_tensor(l, new_l)
    if trace is not None:
        trace.append(
            {
                "op": "compress",
                "i": i,
                "l": l,
                "group_dim": _prod_dims(pp.p_left.dims[:-1]),
                "env_qr": [list(s) for s in env_qr],
                "qr_a": list(shape_a),
                "qr_b": list(shape_b),
                "svd": [min(shape_a), min(shape_b)],
                "new_dim": int(pp.new_dim),
                "shape_i": list(new_i.dims),
                "shape_l": list(new_l.dims),
            }
        )
    if sink is not None:
        sink(i, l, group, pp)


def _prod_dims(dims):
    p = 1
    for d in dims:
        p *= int(d)
    return p


def _run_tree(work, merges, cfg, tracker, trace=None, sink=None, max_size=None):
    """Execute an ordered contraction tree with interleaved compressions."""
    intermediates = set()
    exclude = None
    if cfg.exclude_inputs:
        exclude = lambda v: v not in intermediates  # noqa: E731

    def compress_around(node, skip):
        for l in work.sorted_neighbors(node):
            if l != skip and work.bondsize(node, l) > cfg.chi:
                compress_tree_gauge(
                    work, node, l, cfg, tracker=tracker, trace=trace,
                    sink=sink, exclude=exclude,
                )

    for i, j in merges:
        if i not in work.nodes or j not in work.nodes:
            raise InvalidTreeError(f"merge ({i!r}, {j!r}) references a dead node")
        if i == j:
            raise InvalidTreeError(f"merge ({i!r}, {j!r}) is degenerate")
        if cfg.compress_late:
            compress_around(i, skip=j)
            compress_around(j, skip=i)
        shape_i = list(work.nodes[i].dims)
        shape_j = list(work.nodes[j].dims)
        if max_size is not None:
            shared = 1
            for ix in work.shared_inds(i, j):
                shared *= work.nodes[i].ind_dim(ix)
            out_size = (work.nodes[i].size // shared) * (
                work.nodes[j].size // shared
            )
            if out_size > max_size:
                raise ContractionTooLargeError(
                    f"intermediate of {out_size} elements exceeds limit {max_size}"
                )
        work.merge(i, j)
        if tracker is not None:
            work.replace_tensor(i, tracker.strip(work.nodes[i]))
        if trace is not None:
            trace.append(
                {
                    "op": "contract",
                    "i": i,
                    "j": j,
                    "shape_i": shape_i,
                    "shape_j": shape_j,
                    "shape_out": list(work.nodes[i].dims),
                }
            )
        intermediates.add(i)
        if sink is not None:
            sink_merge = getattr(sink, "on_merge", None)
            if sink_merge is not None:
                sink_merge(i, j)
        if not cfg.compress_late:
            compress_around(i, skip=None)
    if len(work) != 1:
        raise InvalidTreeError(
            f"tree left {len(work)} tensors; expected a single result"
        )
    (nid,) = work.nodes
    return work.nodes[nid]


def _tree_merges(tree):
    merges = getattr(tree, "merges", tree)
    return [(i, j) for i, j in merges]


def contract_approx(tn, tree, cfg, trace=None, max_size=None):
    """Approximately contract ``tn`` along an ordered tree.

    Oversized bonds (combined size > ``cfg.chi``) are compressed in the tree
    gauge either before each endpoint's next contraction (late mode) or
    right after each contraction (early mode). Every intermediate is
    rescaled to unit maximum entry and the stripped magnitude accumulated.
    ``max_size`` optionally bounds intermediate element counts.

    Returns ``(tensor, log_scale)``: the final (rescaled) tensor together
    with the log of the stripped scale factor.
    """
    work = tn.copy()
    tracker = ScaleTracker()
    for nid in sorted(work.nodes, key=node_key):
        work.replace_tensor(nid, tracker.strip(work.nodes[nid]))
    out = _run_tree(
        work, _tree_merges(tree), cfg, tracker, trace=trace, max_size=max_size
    )
    return out, tracker.log_scale


def contract_value(tn, tree, cfg, trace=None, max_size=None):
    """Contract a closed network to ``(sign, log|Z|)``."""
    out, log_scale = contract_approx(tn, tree, cfg, trace=trace, max_size=max_size)
    return sign_log(out, log_scale)


def greedy_exact_path(tn):
    """Cheap contraction order: repeatedly merge the adjacent pair with the
    smallest output, ties broken by node id. Used as the default exact path.
    """
    sizes = {nid: t.size for nid, t in tn.nodes.items()}
    adj = {nid: {} for nid in tn.nodes}
    for a, b, ix, d in tn.bonds():
        adj[a][b] = adj[a].get(b, 1) * d
        adj[b][a] = adj[b].get(a, 1) * d
    merges = []
    live = set(tn.nodes)
    while len(live) > 1:
        best = None
        for a in sorted(live, key=node_key):
            for b in sorted(adj[a], key=node_key):
                if node_key(b) <= node_key(a):
                    continue
                shared = adj[a][b]
                out = (sizes[a] // shared) * (sizes[b] // shared)
                cand = (out, node_key(a), node_key(b), a, b)
                if best is None or cand < best:
                    best = cand
        if best is None:
            # disconnected: outer-product the two smallest components
            rest = sorted(live, key=lambda n: (sizes[n], node_key(n)))
            a, b = rest[0], rest[1]
            out = sizes[a] * sizes[b]
            best = (out, node_key(a), node_key(b), a, b)
        out, _, _, a, b = best
        merges.append((a, b))
        sizes[a] = out
        shared = adj[a].pop(b, 1)
        adj[b].pop(a, None)
        for c, d in adj[b].items():
            adj[c].pop(b, None)
            adj[a][c] = adj[a].get(c, 1) * d
            adj[c][a] = adj[a][c]
        del adj[b], sizes[b]
        live.remove(b)
    return merges


def contract_exact(tn, tree=None, max_size=2**27):
    """Contract with no compression, guarding intermediate sizes.

    Uses the given tree/path if provided, otherwise a greedy min-output
    order. Returns ``(tensor, log_scale)``.
    """
    merges = _tree_merges(tree) if tree is not None else greedy_exact_path(tn)
    work = tn.copy()
    tracker = ScaleTracker()
    for nid in sorted(work.nodes, key=node_key):
        work.replace_tensor(nid, tracker.strip(work.nodes[nid]))
    if not merges and len(work) == 1:
        (nid,) = work.nodes
        return work.nodes[nid], tracker.log_scale
    for i, j in merges:
        if i not in work.nodes or j not in work.nodes:
            raise InvalidTreeError(f"merge ({i!r}, {j!r}) references a dead node")
        ti, tj = work.nodes[i], work.nodes[j]
        shared = 1
        for ix in work.shared_inds(i, j):
            shared *= ti.ind_dim(ix)
        out_size = (ti.size // shared) * (tj.size // shared)
        if out_size > max_size:
            raise ContractionTooLargeError(
                f"intermediate of {out_size} elements exceeds limit {max_size}"
            )
        work.merge(i, j)
        work.replace_tensor(i, tracker.strip(work.nodes[i]))
    if len(work) != 1:
        raise InvalidTreeError("contraction did not reduce to a single tensor")
    (nid,) = work.nodes
    return work.nodes[nid], tracker.log_scale


def exact_value(tn, tree=None, max_size=2**27):
    out, log_scale = contract_exact(tn, tree=tree, max_size=max_size)
    return sign_log(out, log_scale)


class _ProjectorSink:
    """Mirrors compression events of a running contraction into a static
    network, inserting the projector pairs on the bonds they truncate."""

    def __init__(self, tp):
        self.tp = tp
        self.smap = {nid: {nid} for nid in tp.nodes}
        self.count = 0

    def on_merge(self, i, j):
        self.smap[i] |= self.smap.pop(j)

    def __call__(self, i, l, group, pp):
        relabel = {}
        for g in group:
            ends = self.tp.ind_endpoints(g)
            (lside,) = [n for n in ends if n in self.smap[l]]
            relabel.setdefault(lside, {})[g] = fresh_ind("_g")
        mapping = {}
        for lside, sub in relabel.items():
            self.tp.replace_tensor(lside, self.tp.nodes[lside].relabel(sub))
            mapping.update(sub)
        pl_id = ("_proj", 2 * self.count)
        pr_id = ("_proj", 2 * self.count + 1)
        self.count += 1
        self.tp.add_tensor(pl_id, pp.p_left)
        self.tp.add_tensor(pr_id, pp.p_right.relabel(mapping))
        self.smap[i].add(pl_id)
        self.smap[l].add(pr_id)


def insert_projectors(tn, tree, cfg):
    """Statically transform ``tn`` so exact contraction reproduces the
    approximate contraction along ``tree``.

    Runs the compressed contraction and lazily inserts each projector pair
    on the bond group it truncates, yielding a new network containing the
    original tensors plus two extra tensors per compression.
    """
    tp = tn.copy()
    sink = _ProjectorSink(tp)
    work = tn.copy()
    tracker = ScaleTracker()
    for nid in sorted(work.nodes, key=node_key):
        work.replace_tensor(nid, tracker.strip(work.nodes[nid]))
    _run_tree(work, _tree_merges(tree), cfg, tracker, sink=sink)
    return tp
