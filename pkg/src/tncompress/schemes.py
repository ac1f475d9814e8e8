"""Hand-coded baseline contraction schemes for regular lattices.

All schemes consume a grid-coordinate TensorNetwork, compress with the
shared projector primitives, and emit ``(sign, log|Z|)``, so they are
interchangeable with tree-based contraction in the benchmark harness.
"""

import math

from .engine import CompressionConfig, ScaleTracker, compress_tree_gauge, sign_log
from .tensor_ops import (
    DEFAULT_CUTOFF,
    DenseTensor,
    Matricization,
    compute_projectors,
    contract_pair,
    qr_reduced,
    rq_reduced,
    svd_truncated,
)
from .tngraph import node_key


def _grid_extents(tn, ndim):
    ids = sorted(tn.nodes, key=node_key)
    if not all(isinstance(n, tuple) and len(n) == ndim for n in ids):
        raise ValueError(f"expected {ndim}-tuple grid coordinates as node ids")
    return tuple(max(n[ax] for n in ids) + 1 for ax in range(ndim))


def _lazy_pair_compress(work, a, b, chi, cutoff, tracker, log=None):
    """Compress the bond group between two tensors using the tensors
    themselves as the reduced factors (no QR pre-reduction)."""
    ta, tb = work.nodes[a], work.nodes[b]
    pp = compute_projectors(ta, tb, chi, cutoff)
    na = tracker.strip(contract_pair(ta, pp.p_left))
    nb = tracker.strip(contract_pair(pp.p_right, tb))
    work.replace_tensor(a, na)
    work.replace_tensor(b, nb)
    if log is not None:
        log.append((a, b, pp))
    return pp


def _compress_mps_none(work, row, chi, cutoff, tracker):
    """Left-to-right pairwise compression without canonicalization."""
    for a, b in zip(row, row[1:]):
        if work.bondsize(a, b) > chi:
            _lazy_pair_compress(work, a, b, chi, cutoff, tracker)


def _compress_mps_canonical(work, row, chi, cutoff, tracker):
    """Canonicalize around the leftmost tensor, then sweep a truncating
    compression left to right."""
    # right-to-left QR sweep making every tensor right-canonical
    for k in range(len(row) - 1, 0, -1):
        t = work.nodes[row[k]]
        left_group = tuple(work.shared_inds(row[k], row[k - 1]))
        rest = tuple(ix for ix in t.inds if ix not in left_group)
        r, q = rq_reduced(t, Matricization(left_group, rest))
        work.replace_tensor(row[k], q)
        work.replace_tensor(
            row[k - 1], tracker.strip(contract_pair(work.nodes[row[k - 1]], r))
        )
    # left-to-right truncation sweep, carrying the center along
    for k in range(len(row) - 1):
        a, b = row[k], row[k + 1]
        bond = tuple(work.shared_inds(a, b))
        ta = work.nodes[a]
        rest = tuple(ix for ix in ta.inds if ix not in bond)
        if work.bondsize(a, b) > chi:
            u, s, v = svd_truncated(ta, Matricization(rest, bond), chi, cutoff)
            work.replace_tensor(a, u)
            sv = DenseTensor(s.reshape((-1,) + (1,) * (v.ndim - 1)) * v.data, v.inds)
            work.replace_tensor(b, tracker.strip(contract_pair(sv, work.nodes[b])))
        else:
            q, r = qr_reduced(ta, Matricization(rest, bond))
            work.replace_tensor(a, q)
            work.replace_tensor(
                b, tracker.strip(contract_pair(r, work.nodes[b]))
            )


def boundary_2d(tn, chi, gauge="boundary", cutoff=DEFAULT_CUTOFF):
    """Absorb rows of a 2D grid into a boundary chain, compressing after
    each row; ``gauge`` picks canonicalized sweeps ("boundary") or plain
    pairwise truncation ("none")."""
    if gauge not in ("boundary", "none"):
        raise ValueError(f"unknown gauge {gauge!r}")
    lx, ly = _grid_extents(tn, 2)
    work = tn.copy()
    tracker = ScaleTracker()
    row = [(x, 0) for x in range(lx)]
    for y in range(1, ly):
        for x in range(lx):
            work.merge((x, 0), (x, y))
            work.replace_tensor((x, 0), tracker.strip(work.nodes[(x, 0)]))
        if lx > 1 and any(
            work.bondsize(a, b) > chi for a, b in zip(row, row[1:])
        ):
            if gauge == "boundary":
                _compress_mps_canonical(work, row, chi, cutoff, tracker)
            else:
                _compress_mps_none(work, row, chi, cutoff, tracker)
    for x in range(1, lx):
        work.merge((0, 0), (x, 0))
        work.replace_tensor((0, 0), tracker.strip(work.nodes[(0, 0)]))
    out = work.nodes[(0, 0)]
    return sign_log(out, tracker.log_scale)


def ctmrg_finite(tn, chi, cutoff=DEFAULT_CUTOFF, projector_log=None):
    """Corner-style contraction of a finite 2D grid: absorb the four sides
    inward in rotation, compressing each affected row or column with
    per-site lazy projectors."""
    lx, ly = _grid_extents(tn, 2)
    work = tn.copy()
    tracker = ScaleTracker()
    x0, x1, y0, y1 = 0, lx - 1, 0, ly - 1

    def absorb(direction):
        nonlocal x0, x1, y0, y1
        if direction == "N":
            src, dst = y1, y1 - 1
            cols = range(x0, x1 + 1)
            for x in cols:
                work.merge((x, dst), (x, src))
                work.replace_tensor((x, dst), tracker.strip(work.nodes[(x, dst)]))
            y1 -= 1
            for x in range(x0, x1 + 1):
                if x + 1 <= x1 and work.bondsize((x, dst), (x + 1, dst)) > chi:
                    _lazy_pair_compress(work, (x, dst), (x + 1, dst), chi, cutoff, tracker, log=projector_log)
        elif direction == "S":
            src, dst = y0, y0 + 1
            for x in range(x0, x1 + 1):
                work.merge((x, dst), (x, src))
                work.replace_tensor((x, dst), tracker.strip(work.nodes[(x, dst)]))
            y0 += 1
            for x in range(x0, x1 + 1):
                if x + 1 <= x1 and work.bondsize((x, dst), (x + 1, dst)) > chi:
                    _lazy_pair_compress(work, (x, dst), (x + 1, dst), chi, cutoff, tracker, log=projector_log)
        elif direction == "E":
            src, dst = x1, x1 - 1
            for y in range(y0, y1 + 1):
                work.merge((dst, y), (src, y))
                work.replace_tensor((dst, y), tracker.strip(work.nodes[(dst, y)]))
            x1 -= 1
            for y in range(y0, y1 + 1):
                if y + 1 <= y1 and work.bondsize((dst, y), (dst, y + 1)) > chi:
                    _lazy_pair_compress(work, (dst, y), (dst, y + 1), chi, cutoff, tracker, log=projector_log)
        else:
            src, dst = x0, x0 + 1
            for y in range(y0, y1 + 1):
                work.merge((dst, y), (src, y))
                work.replace_tensor((dst, y), tracker.strip(work.nodes[(dst, y)]))
            x0 += 1
            for y in range(y0, y1 + 1):
                if y + 1 <= y1 and work.bondsize((dst, y), (dst, y + 1)) > chi:
                    _lazy_pair_compress(work, (dst, y), (dst, y + 1), chi, cutoff, tracker, log=projector_log)

    while x1 > x0 or y1 > y0:
        for direction in ("N", "E", "S", "W"):
            if direction in ("N", "S") and y1 == y0:
                continue
            if direction in ("E", "W") and x1 == x0:
                continue
            absorb(direction)
            if x1 == x0 and y1 == y0:
                break
    out = work.nodes[(x0, y0)]
    return sign_log(out, tracker.log_scale)


def hotrg_finite(tn, chi, dims=2, cutoff=DEFAULT_CUTOFF):
    """Alternating-direction pairwise coarse graining with per-pair lazy
    projectors; odd rows/columns pass through uncoarsened that round."""
    extents = _grid_extents(tn, dims)
    work = tn.copy()
    tracker = ScaleTracker()
    grid = {n: n for n in work.nodes}
    sizes = list(extents)

    def coords():
        out = [c for c in grid]
        out.sort(key=node_key)
        return out

    axis = 0
    while max(sizes) > 1:
        if sizes[axis] > 1:
            newgrid = {}
            for c in coords():
                pos = c[axis]
                tgt = list(c)
                tgt[axis] = pos // 2
                tgt = tuple(tgt)
                if pos % 2 == 0:
                    newgrid[tgt] = grid[c]
                else:
                    partner = list(c)
                    partner[axis] = pos - 1
                    a = grid[tuple(partner)]
                    work.merge(a, grid[c])
                    work.replace_tensor(a, tracker.strip(work.nodes[a]))
                    newgrid[tgt] = a
            grid = newgrid
            sizes[axis] = (sizes[axis] + 1) // 2
            # compress the doubled transverse bonds of the coarse lattice
            for other in range(dims):
                if other == axis or sizes[other] == 1:
                    continue
                for c in coords():
                    nxt = list(c)
                    nxt[other] = c[other] + 1
                    nxt = tuple(nxt)
                    if nxt in grid and work.bondsize(grid[c], grid[nxt]) > chi:
                        _lazy_pair_compress(
                            work, grid[c], grid[nxt], chi, cutoff, tracker
                        )
        axis = (axis + 1) % dims
    (last,) = grid.values()
    return sign_log(work.nodes[last], tracker.log_scale)


def peps_boundary_3d(tn, chi, cutoff=DEFAULT_CUTOFF, gauge_distance=1):
    """Sweep a compressed 2D boundary layer through a cubic grid, then hand
    the final layer to ``boundary_2d`` at the same ``chi``.

    When any side has length 1 the input is already a 2D problem and is
    delegated to ``boundary_2d`` directly.
    """
    lx, ly, lz = _grid_extents(tn, 3)
    for axis, size in ((0, lx), (1, ly), (2, lz)):
        if size == 1:
            flat = {}
            for nid in tn.nodes:
                key = tuple(c for k, c in enumerate(nid) if k != axis)
                flat[key] = tn.nodes[nid]
            from .tngraph import TensorNetwork

            return boundary_2d(TensorNetwork.from_tensors(flat), chi, cutoff=cutoff)
    work = tn.copy()
    tracker = ScaleTracker()
    cfg = CompressionConfig(chi=chi, r=gauge_distance, cutoff=cutoff)
    layer_bonds = []
    for x in range(lx):
        for y in range(ly):
            if x + 1 < lx:
                layer_bonds.append(((x, y, 0), (x + 1, y, 0)))
            if y + 1 < ly:
                layer_bonds.append(((x, y, 0), (x, y + 1, 0)))
    for z in range(1, lz):
        for x in range(lx):
            for y in range(ly):
                work.merge((x, y, 0), (x, y, z))
                work.replace_tensor(
                    (x, y, 0), tracker.strip(work.nodes[(x, y, 0)])
                )
        for a, b in layer_bonds:
            if work.bondsize(a, b) > chi:
                compress_tree_gauge(work, a, b, cfg, tracker=tracker)
    from .tngraph import TensorNetwork

    flat = {(x, y): work.nodes[(x, y, 0)] for x in range(lx) for y in range(ly)}
    sign, logz = boundary_2d(TensorNetwork.from_tensors(flat), chi, cutoff=cutoff)
    if sign == 0:
        return 0, -math.inf
    return sign, logz + tracker.log_scale


SCHEMES = {
    "boundary2d": boundary_2d,
    "ctmrg": ctmrg_finite,
    "hotrg2d": lambda tn, chi, **kw: hotrg_finite(tn, chi, dims=2, **kw),
    "hotrg3d": lambda tn, chi, **kw: hotrg_finite(tn, chi, dims=3, **kw),
    "peps3d": peps_boundary_3d,
}
