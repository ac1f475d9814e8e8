"""Ordered contraction tree generators: Greedy, Span, Agglom, branch & bound."""

import heapq
import itertools
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .costs import CostSim, SizeNetwork
from .engine import CompressionConfig
from .tngraph import DisconnectedGraphError, centrality, node_key


@dataclass
class ContractionTree:
    """Ordered list of pairwise merges; each ``(i, j)`` contracts j into i."""

    merges: list
    generator: str = ""
    params: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.merges)

    def __len__(self):
        return len(self.merges)

    def to_json_dict(self):
        def enc(n):
            return list(n) if isinstance(n, tuple) else n

        return {
            "merges": [[enc(i), enc(j)] for i, j in self.merges],
            "generator": self.generator,
            "params": {k: _encode_param(v) for k, v in self.params.items()},
        }

    @classmethod
    def from_json_dict(cls, obj):
        def dec(n):
            return tuple(n) if isinstance(n, list) else n

        return cls(
            merges=[(dec(i), dec(j)) for i, j in obj["merges"]],
            generator=obj.get("generator", ""),
            params=obj.get("params", {}),
        )


def _encode_param(v):
    if isinstance(v, tuple):
        return list(v)
    return v


def check_tree(node_ids, tree):
    """Validate that replaying the merges visits only live nodes and leaves
    exactly one; raises ValueError otherwise."""
    live = set(node_ids)
    for i, j in getattr(tree, "merges", tree):
        if i == j or i not in live or j not in live:
            raise ValueError(f"invalid merge ({i!r}, {j!r})")
        live.remove(j)
    if len(live) != 1:
        raise ValueError(f"{len(live)} nodes left after replay")
    return True


@dataclass
class HyperParams:
    """Generator choice plus its named weight/choice values and a seed."""

    generator: str
    values: dict = field(default_factory=dict)
    seed: int = 0


# parameter spaces: name -> ("real", lo, hi, default)
#                         | ("cat", choices, default)
#                         | ("int", lo, hi, default)
STATS = ("min", "max", "sum", "mean", "diff")

GREEDY_SPACE = {
    "w_new_size": ("real", -1.0, 1.0, 1.0),
    "w_old_size": ("real", -1.0, 1.0, 0.0),
    "w_inputs": ("real", -1.0, 1.0, 0.0),
    "w_subgraph": ("real", -1.0, 1.0, 0.0),
    "w_centrality": ("real", -1.0, 1.0, 0.0),
    "stat_inputs": ("cat", STATS, "sum"),
    "stat_subgraph": ("cat", STATS, "sum"),
    "stat_centrality": ("cat", ("min", "max", "mean", "diff"), "mean"),
    "centrality_prop": ("cat", ("min", "max", "mean"), "mean"),
    "temperature": ("real", 0.0, 1.0, 0.0),
    "chi_factor": ("cat", (0.5, 1.0, 2.0), 1.0),
}

SPAN_SPACE = {
    "seed_center": ("cat", ("max", "min"), "max"),
    "w_connectivity": ("real", -1.0, 1.0, -1.0),
    "w_ndim": ("real", -1.0, 1.0, 0.0),
    "w_distance": ("real", -1.0, 1.0, 1.0),
    "w_centrality": ("real", -1.0, 1.0, 0.0),
    "priority": ("cat", tuple(itertools.permutations(range(4))), (2, 0, 1, 3)),
    "temperature": ("real", 0.0, 1.0, 0.0),
}

AGGLOM_SPACE = {
    "group_size": ("int", 2, 64, 8),
    "imbalance": ("real", 0.01, 1.0, 0.1),
    "objective": ("cat", ("cut", "km1"), "cut"),
    "weighting": ("cat", ("const", "log"), "log"),
    "chi_factor": ("cat", (0.5, 1.0, 2.0), 1.0),
}

SPACES = {"greedy": GREEDY_SPACE, "span": SPAN_SPACE, "agglom": AGGLOM_SPACE}


def default_params(generator, seed=0):
    space = SPACES[generator]
    return HyperParams(generator, {k: v[-1] for k, v in space.items()}, seed=seed)


def random_params(generator, rng):
    """Uniform draw from a generator's declared parameter ranges."""
    space = SPACES[generator]
    values = {}
    for name, spec in space.items():
        kind = spec[0]
        if kind == "real":
            values[name] = float(rng.uniform(spec[1], spec[2]))
        elif kind == "int":
            lo, hi = spec[1], spec[2]
            values[name] = int(round(math.exp(rng.uniform(math.log(lo), math.log(hi)))))
        else:
            choices = spec[1]
            values[name] = choices[int(rng.integers(len(choices)))]
    return HyperParams(generator, values, seed=int(rng.integers(2**31)))


def _stat(name, a, b):
    if name == "min":
        return min(a, b)
    if name == "max":
        return max(a, b)
    if name == "sum":
        return a + b
    if name == "mean":
        return 0.5 * (a + b)
    return abs(a - b)


def _log2(x):
    return math.log2(x) if x > 0 else 0.0


# -- Greedy ------------------------------------------------------------------


def _greedy_merge_order(g, allowed, chi_sim, vals, cent, subtree, rng):
    """Repeatedly merge the minimum-score adjacent pair within ``allowed``.

    Mutates ``g`` (capping new bonds at ``chi_sim``), ``cent`` and
    ``subtree``; returns the merge list. Stale heap entries are skipped via
    per-node version stamps.
    """
    temp = vals["temperature"]
    w_new, w_old = vals["w_new_size"], vals["w_old_size"]
    w_in, w_sub, w_cent = vals["w_inputs"], vals["w_subgraph"], vals["w_centrality"]
    st_in, st_sub = vals["stat_inputs"], vals["stat_subgraph"]
    st_cent = vals["stat_centrality"]
    nidx = {v: k for k, v in enumerate(sorted(allowed, key=node_key))}
    bonds, open_size = g.bonds, g.open_size

    def size_of(v):
        # float sizes: heuristic scoring only, avoids bignum arithmetic
        s = float(open_size[v])
        for d in bonds[v].values():
            s *= d
        return s

    def pair_score(a, b):
        sa, sb = size_of(a), size_of(b)
        ga, gb = bonds[a], bonds[b]
        shared = ga[b]
        before = (sa / shared) * (sb / shared)
        after = float(open_size[a] * open_size[b])
        for w, d in ga.items():
            if w != b:
                x = d * gb.get(w, 1)
                after *= x if x < chi_sim else chi_sim
        for w, d in gb.items():
            if w != a and w not in ga:
                after *= d if d < chi_sim else chi_sim
        scr = (
            w_new * _log2(after)
            + w_old * _log2(before)
            + w_in * _stat(st_in, _log2(sa), _log2(sb))
            + w_sub * _stat(st_sub, subtree[a], subtree[b])
            + w_cent * _stat(st_cent, cent[a], cent[b])
        )
        if temp > 0:
            scr += temp * float(rng.gumbel())
        return scr

    version = {v: 0 for v in allowed}
    heap = []
    counter = itertools.count()

    def push_pair(a, b):
        if nidx[b] < nidx[a]:
            a, b = b, a
        heapq.heappush(
            heap,
            (pair_score(a, b), nidx[a], nidx[b], next(counter),
             a, b, version[a], version[b]),
        )

    for a in sorted(allowed, key=node_key):
        for b in bonds[a]:
            if b in nidx and nidx[b] > nidx[a]:
                push_pair(a, b)

    merges = []
    live = set(allowed)
    while len(live) > 1:
        entry = None
        while heap:
            cand = heapq.heappop(heap)
            a, b, va, vb = cand[4], cand[5], cand[6], cand[7]
            if a in live and b in live and version[a] == va and version[b] == vb:
                entry = cand
                break
        if entry is None:
            # disconnected remainder: outer-product the smallest pieces
            rest = sorted(live, key=lambda v: (size_of(v), nidx[v]))
            a, b = rest[0], rest[1]
        else:
            a, b = entry[4], entry[5]
        merges.append((a, b))
        g.merge(a, b)
        for w in list(bonds[a]):
            if bonds[a][w] > chi_sim:
                g.set_bond(a, w, chi_sim)
        prop = vals["centrality_prop"]
        ca, cb = cent.get(a, 0.0), cent.get(b, 0.0)
        cent[a] = {"min": min(ca, cb), "max": max(ca, cb), "mean": 0.5 * (ca + cb)}[prop]
        subtree[a] = subtree.get(a, 1) + subtree.pop(b, 1)
        live.remove(b)
        affected = [a] + [w for w in bonds[a] if w in live]
        for v in affected:
            version[v] += 1
        # every pair touching an affected node needs a fresh entry
        fresh = set()
        for v in affected:
            iv = nidx[v]
            for w in bonds[v]:
                if w in live:
                    iw = nidx[w]
                    fresh.add((v, w) if iv < iw else (w, v))
        for v, w in sorted(fresh, key=lambda p: (nidx[p[0]], nidx[p[1]])):
            push_pair(v, w)
    return merges


def build_greedy(tn, chi, params=None, centralities=None):
    """Greedy bottom-up tree: repeatedly contract the adjacent pair with the
    lowest local score, simulating compression at ``chi * chi_factor``."""
    params = params or default_params("greedy")
    vals = dict(params.values)
    rng = np.random.default_rng(params.seed)
    g = SizeNetwork.from_tn(tn)
    cent = dict(centralities) if centralities is not None else (
        centrality(tn) if len(tn) > 1 and tn.is_connected() else
        {v: 1.0 for v in tn.nodes}
    )
    subtree = {v: 1 for v in tn.nodes}
    chi_sim = max(1, int(round(chi * vals.get("chi_factor", 1.0))))
    merges = _greedy_merge_order(g, set(tn.nodes), chi_sim, vals, cent, subtree, rng)
    return ContractionTree(merges, "greedy", {**vals, "seed": params.seed})


# -- Span ----------------------------------------------------------------------


def build_span(tn, chi, params=None, centralities=None):
    """Boundary-style tree from a tunable full spanning-tree expansion,
    replayed in reverse so leaves contract inward."""
    params = params or default_params("span")
    vals = dict(params.values)
    rng = np.random.default_rng(params.seed)
    cent = dict(centralities) if centralities is not None else centrality(tn)
    if vals["seed_center"] == "max":
        s0 = max(sorted(tn.nodes, key=node_key), key=lambda v: cent[v])
    else:
        s0 = min(sorted(tn.nodes, key=node_key), key=lambda v: cent[v])
    perm = tuple(vals["priority"])
    temp = vals["temperature"]

    def cand_key(u, v, dist, region):
        conn = 1
        for w in tn.neighbors(v) & region:
            conn *= tn.pair_connectivity(v, w)
        keys = (
            vals["w_connectivity"] * _log2(conn),
            vals["w_ndim"] * len(tn.nodes[v].inds),
            vals["w_distance"] * dist,
            vals["w_centrality"] * cent[v],
        )
        total = sum(keys)
        if temp > 0:
            total += temp * float(rng.gumbel())
        return tuple(keys[p] for p in perm) + (total,)

    region = {s0}
    counter = itertools.count()
    heap = []
    for v in tn.sorted_neighbors(s0):
        heapq.heappush(
            heap, (cand_key(s0, v, 1, region), next(counter), s0, v, 1)
        )
    pairs = []
    while heap:
        _, _, u, v, dist = heapq.heappop(heap)
        if v in region:
            continue
        region.add(v)
        pairs.append((u, v))
        for w in tn.sorted_neighbors(v):
            if w not in region:
                heapq.heappush(
                    heap, (cand_key(v, w, dist + 1, region), next(counter), v, w, dist + 1)
                )
    if len(region) != len(tn.nodes):
        raise DisconnectedGraphError([region, set(tn.nodes) - region])
    merges = [(u, v) for u, v in reversed(pairs)]
    return ContractionTree(merges, "span", {**vals, "seed": params.seed})


# -- Agglom ----------------------------------------------------------------------


def _cut_cost(g, side_of, nodes, objective, weighting):
    total = 0.0
    largest = 0.0
    for a in nodes:
        for b, d in g.bonds[a].items():
            if b in side_of and side_of[a] != side_of[b] and node_key(a) < node_key(b):
                w = 1.0 if weighting == "const" else _log2(d)
                total += w
                largest = max(largest, w)
    if objective == "km1":
        return total - largest
    return total


def _components(g, nodes):
    nodes = set(nodes)
    comps = []
    seen = set()
    for start in sorted(nodes, key=node_key):
        if start in seen:
            continue
        comp = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for w in g.bonds[u]:
                if w in nodes and w not in comp:
                    comp.add(w)
                    stack.append(w)
        seen |= comp
        comps.append(comp)
    return comps


def bisect_nodes(g, nodes, imbalance=0.1, objective="cut", weighting="log"):
    """Split ``nodes`` into two connected, roughly equal halves with a small
    cut: BFS-grown seed split, refined by gain moves, repaired by component
    reassignment."""
    nodes = sorted(nodes, key=node_key)
    n = len(nodes)
    if n < 2:
        return set(nodes), set()
    nodeset = set(nodes)
    # BFS from a peripheral node (double sweep)
    def bfs_order(start):
        order = [start]
        seen = {start}
        k = 0
        while k < len(order):
            for w in sorted(g.bonds[order[k]], key=node_key):
                if w in nodeset and w not in seen:
                    seen.add(w)
                    order.append(w)
            k += 1
        return order

    far = bfs_order(nodes[0])[-1]
    order = bfs_order(far)
    half = (n + 1) // 2
    side_a = set(order[:half])
    side_b = nodeset - side_a
    if not side_b:
        side_b = {order[-1]}
        side_a.discard(order[-1])
    side_of = {v: 0 for v in side_a}
    side_of.update({v: 1 for v in side_b})
    max_side = max(half, int(math.ceil(n * (1.0 + imbalance) / 2.0)))

    def boundary_nodes():
        out = []
        for v in nodes:
            if any(w in nodeset and side_of[w] != side_of[v] for w in g.bonds[v]):
                out.append(v)
        return out

    cost = _cut_cost(g, side_of, nodes, objective, weighting)
    for _ in range(2):
        improved = False
        for v in boundary_nodes():
            src = side_of[v]
            n_src = sum(1 for s in side_of.values() if s == src)
            n_dst = n - n_src
            if n_src <= 1 or n_dst + 1 > max_side:
                continue
            side_of[v] = 1 - src
            new_cost = _cut_cost(g, side_of, nodes, objective, weighting)
            if new_cost < cost - 1e-12:
                cost = new_cost
                improved = True
            else:
                side_of[v] = src
        if not improved:
            break
    side_a = {v for v in nodes if side_of[v] == 0}
    side_b = nodeset - side_a
    # repair: keep each side connected by shifting stray components across
    for _ in range(10):
        moved = False
        for side, other in ((side_a, side_b), (side_b, side_a)):
            comps = _components(g, side)
            if len(comps) > 1:
                comps.sort(key=lambda c: (len(c), node_key(min(c, key=node_key))))
                for c in comps[:-1]:
                    side -= c
                    other |= c
                moved = True
        if not moved:
            break
    if not side_a or not side_b:
        comps = _components(g, nodeset)
        if len(comps) > 1:
            side_a = comps[0]
            side_b = nodeset - side_a
        else:
            order = bfs_order(far)
            side_a = set(order[:half])
            side_b = nodeset - side_a
    return side_a, side_b


def partition_graph(g, k, imbalance=0.1, objective="cut", weighting="log"):
    """Recursively bisect into connected groups of at most ``k*(1+imbalance)``."""
    cap = max(1, int(math.floor(k * (1.0 + imbalance))))
    groups = []
    stack = [set(g.bonds)]
    while stack:
        part = stack.pop()
        if len(part) <= cap:
            groups.append(part)
            continue
        a, b = bisect_nodes(g, part, imbalance, objective, weighting)
        if not a or not b:
            groups.append(part)
            continue
        stack.append(a)
        stack.append(b)
    groups.sort(key=lambda grp: node_key(min(grp, key=node_key)))
    return groups


def build_agglom(tn, chi, params=None, centralities=None):
    """Tree from repeated balanced partitioning: groups contract internally
    via default Greedy, inter-group bonds are capped at ``chi * chi_factor``,
    and the process recurses on the coarse graph. The final merge order is
    sorted by subtree size then average centrality."""
    params = params or default_params("agglom")
    vals = dict(params.values)
    if vals["group_size"] < 2:
        raise ValueError("group_size must be >= 2")
    rng = np.random.default_rng(params.seed)
    cent = dict(centralities) if centralities is not None else centrality(tn)
    g = SizeNetwork.from_tn(tn)
    subtree = {v: 1 for v in tn.nodes}
    chi_sim = max(1, int(round(chi * vals.get("chi_factor", 1.0))))
    gdef = default_params("greedy").values
    merges = []
    while len(g) > 1:
        groups = partition_graph(
            g, vals["group_size"], vals["imbalance"], vals["objective"],
            vals["weighting"],
        )
        if len(groups) == 1:
            merges.extend(
                _greedy_merge_order(g, groups[0], chi_sim, gdef, cent, subtree, rng)
            )
            break
        progressed = False
        for grp in groups:
            if len(grp) > 1:
                sub = _greedy_merge_order(g, grp, chi_sim, gdef, cent, subtree, rng)
                merges.extend(sub)
                progressed = True
        if not progressed:
            # disconnected singleton groups: finish with outer products
            merges.extend(
                _greedy_merge_order(g, set(g.bonds), chi_sim, gdef, cent,
                                    subtree, rng)
            )
            break
        for v in sorted(g.bonds, key=node_key):
            for w in list(g.bonds[v]):
                if g.bonds[v][w] > chi_sim:
                    g.set_bond(v, w, chi_sim)
    # derive subtree sizes along the merge list for the final ordering
    size = {v: 1 for v in tn.nodes}
    csum = {v: cent[v] for v in tn.nodes}
    keyed = []
    for i, j in merges:
        size[i] = size[i] + size.pop(j)
        csum[i] = csum[i] + csum.pop(j)
        keyed.append((size[i], csum[i] / size[i], (i, j)))
    keyed.sort(key=lambda rec: (rec[0], rec[1], node_key(rec[2][0]), node_key(rec[2][1])))
    ordered = [rec[2] for rec in keyed]
    return ContractionTree(ordered, "agglom", {**vals, "seed": params.seed})


# -- boundary-order trees ------------------------------------------------------


def boundary_sweep_tree(tn):
    """Row-by-row sweep order for grid-coordinate networks (2D or 3D ids).

    Columns accumulate layer by layer, then rows, then a final chain, which
    reproduces the classic boundary contraction schedule as an ordered tree.
    """
    ids = sorted(tn.nodes, key=node_key)
    ndim = len(ids[0])
    if not all(isinstance(n, tuple) and len(n) == ndim for n in ids):
        raise ValueError("boundary sweep needs tuple-coordinate node ids")
    merges = []
    if ndim == 3:
        lx = max(n[0] for n in ids) + 1
        ly = max(n[1] for n in ids) + 1
        lz = max(n[2] for n in ids) + 1
        for z in range(1, lz):
            for x in range(lx):
                for y in range(ly):
                    merges.append(((x, y, 0), (x, y, z)))
        for y in range(1, ly):
            for x in range(lx):
                merges.append(((x, 0, 0), (x, y, 0)))
        for x in range(1, lx):
            merges.append(((0, 0, 0), (x, 0, 0)))
    elif ndim == 2:
        lx = max(n[0] for n in ids) + 1
        ly = max(n[1] for n in ids) + 1
        for y in range(1, ly):
            for x in range(lx):
                merges.append(((x, 0), (x, y)))
        for x in range(1, lx):
            merges.append(((0, 0), (x, 0)))
    else:
        raise ValueError("boundary sweep supports 2D or 3D coordinates")
    return ContractionTree(merges, "boundary", {})


def snake_tree(tn):
    """Single-accumulator raster order for grids; the workhorse order for
    exact grid contraction since intermediates stay one boundary slice."""
    ids = sorted(tn.nodes, key=node_key)
    ndim = len(ids[0])
    if not all(isinstance(n, tuple) and len(n) == ndim for n in ids):
        raise ValueError("snake order needs tuple-coordinate node ids")
    if ndim == 2:
        root = (0, 0)
        order = sorted(ids, key=lambda n: (n[1], n[0]))
    elif ndim == 3:
        root = (0, 0, 0)
        order = sorted(ids, key=lambda n: (n[2], n[1], n[0]))
    else:
        raise ValueError("snake order supports 2D or 3D coordinates")
    merges = [(root, n) for n in order if n != root]
    return ContractionTree(merges, "snake", {})


# -- branch and bound ------------------------------------------------------------


def build_branch_bound(
    tn,
    chi,
    cost_fn="M",
    budget=None,
    time_limit=None,
    warm_start=None,
    cfg=None,
    max_nodes=40,
):
    """Depth-first branch and bound over adjacent-pair merge sequences.

    The running score (per ``cost_fn``: M, W, C, Mt or flops_contract) is
    monotone, so branches at or above the incumbent are pruned. Anytime:
    returns the best complete tree found when the expansion ``budget`` or
    ``time_limit`` (seconds) runs out; with no limits the search is
    exhaustive. ``warm_start`` seeds the incumbent with an existing tree.
    """
    if len(tn.nodes) > max_nodes:
        raise ValueError(f"network too large for exhaustive search ({len(tn.nodes)} nodes)")
    if cfg is None:
        cfg = CompressionConfig(chi=chi, r=0)
    base = CostSim.from_tn(tn, cfg)
    best_score = math.inf
    best_path = None
    if warm_start is not None:
        sim = base.copy()
        merges = list(getattr(warm_start, "merges", warm_start))
        for i, j in merges:
            sim.apply_merge(i, j)
        best_score = sim.score(cost_fn)
        best_path = merges
    deadline = time.monotonic() + time_limit if time_limit is not None else None
    expansions = 0

    def candidates(sim):
        out = []
        for a in sim.net.bonds:
            for b in sim.net.bonds[a]:
                if node_key(a) < node_key(b):
                    out.append((a, b))
        return out

    stack = [(base, [])]
    while stack:
        if deadline is not None and time.monotonic() > deadline:
            break
        if budget is not None and expansions >= budget:
            break
        sim, path = stack.pop()
        if sim.score(cost_fn) >= best_score:
            continue
        children = []
        for a, b in candidates(sim):
            child = sim.copy()
            child.apply_merge(a, b)
            expansions += 1
            y = child.score(cost_fn)
            if y >= best_score:
                continue
            cpath = path + [(a, b)]
            if len(child.net) == 1:
                best_score = y
                best_path = cpath
            else:
                children.append((y, node_key(a), node_key(b), child, cpath))
        # explore the most promising child first
        children.sort(reverse=True)
        for y, _, _, child, cpath in children:
            if y < best_score:
                stack.append((child, cpath))
    if best_path is None:
        raise RuntimeError("no complete contraction found within budget")
    return ContractionTree(
        list(best_path), "bnb", {"cost_fn": cost_fn, "chi": chi}
    )


def tree_to_json(tree, path):
    with open(path, "w") as f:
        json.dump(tree.to_json_dict(), f)


def tree_from_json(path):
    with open(path) as f:
        return ContractionTree.from_json_dict(json.load(f))
