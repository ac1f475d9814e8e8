"""Tensor network graph model and the pure graph algorithms built on it."""

import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .tensor_ops import DenseTensor, contract_pair


def node_key(n):
    """Total-order sort key over mixed node id types (ints, strings, tuples)."""
    if isinstance(n, tuple):
        return (2,) + tuple(node_key(x) for x in n)
    if isinstance(n, str):
        return (1, n)
    return (0, int(n))


class DisconnectedGraphError(ValueError):
    def __init__(self, components):
        self.components = components
        sizes = sorted(len(c) for c in components)
        super().__init__(
            f"graph is disconnected: {len(components)} components of sizes {sizes}"
        )


class TensorNetwork:
    """A multigraph of labelled dense tensors with sized bonds.

    Bonds are identified by index labels shared between exactly two node
    tensors; labels appearing on a single tensor are open indices. Parallel
    bonds between the same node pair are permitted. Queries are read-only;
    mutation goes through the explicit ``merge`` / ``replace_tensor``
    mutators or tensor addition/removal.
    """

    def __init__(self):
        self.nodes = {}
        self._ind_map = {}

    @classmethod
    def from_tensors(cls, tensors):
        """Build a network from a mapping ``node-id -> DenseTensor``."""
        tn = cls()
        for nid in sorted(tensors, key=node_key):
            tn.add_tensor(nid, tensors[nid])
        return tn

    # -- mutators ----------------------------------------------------------

    def add_tensor(self, nid, t):
        if nid in self.nodes:
            raise ValueError(f"node {nid!r} already present")
        for ix in t.inds:
            ends = self._ind_map.setdefault(ix, [])
            if len(ends) >= 2:
                raise ValueError(f"index {ix} would appear on more than two tensors")
            if ends:
                other = self.nodes[ends[0]]
                if other.ind_dim(ix) != t.ind_dim(ix):
                    raise ValueError(
                        f"index {ix} dimension mismatch: "
                        f"{other.ind_dim(ix)} != {t.ind_dim(ix)}"
                    )
            ends.append(nid)
        self.nodes[nid] = t

    def pop_tensor(self, nid):
        t = self.nodes.pop(nid)
        for ix in t.inds:
            ends = self._ind_map[ix]
            ends.remove(nid)
            if not ends:
                del self._ind_map[ix]
        return t

    def replace_tensor(self, nid, t):
        """Swap the tensor at ``nid``, revalidating its bonds."""
        self.pop_tensor(nid)
        self.add_tensor(nid, t)

    def merge(self, i, j):
        """Contract node ``j`` into node ``i`` (the result keeps id ``i``)."""
        if i == j:
            raise ValueError("cannot merge a node with itself")
        a = self.pop_tensor(i)
        b = self.pop_tensor(j)
        self.add_tensor(i, contract_pair(a, b))
        return i

    # -- queries -----------------------------------------------------------

    def __contains__(self, nid):
        return nid in self.nodes

    def __len__(self):
        return len(self.nodes)

    def copy(self):
        tn = TensorNetwork()
        for nid, t in self.nodes.items():
            tn.nodes[nid] = t.copy()
        tn._ind_map = {ix: list(ends) for ix, ends in self._ind_map.items()}
        return tn

    def ind_endpoints(self, ix):
        return tuple(self._ind_map[ix])

    def ind_dim(self, ix):
        return self.nodes[self._ind_map[ix][0]].ind_dim(ix)

    def neighbors(self, nid):
        """Set of nodes sharing at least one bond with ``nid``."""
        out = set()
        for ix in self.nodes[nid].inds:
            for other in self._ind_map[ix]:
                if other != nid:
                    out.add(other)
        return out

    def sorted_neighbors(self, nid):
        return sorted(self.neighbors(nid), key=node_key)

    def shared_inds(self, i, j):
        """Bond labels between ``i`` and ``j``, in ``i``'s index order."""
        jinds = set(self.nodes[j].inds)
        return [ix for ix in self.nodes[i].inds if ix in jinds]

    def bondsize(self, i, j):
        """Combined dimension of all parallel bonds between ``i`` and ``j``."""
        d = 1
        for ix in self.shared_inds(i, j):
            d *= self.nodes[i].ind_dim(ix)
        return d

    def pair_connectivity(self, i, j):
        return self.bondsize(i, j)

    def bonds(self):
        """Iterate ``(a, b, ind, dim)`` over all bonds, deterministically."""
        for nid in sorted(self.nodes, key=node_key):
            for ix in self.nodes[nid].inds:
                ends = self._ind_map[ix]
                if len(ends) == 2:
                    a, b = sorted(ends, key=node_key)
                    if a == nid:
                        yield a, b, ix, self.ind_dim(ix)

    def open_indices(self):
        """List of ``(node, ind, dim)`` for indices with a single endpoint."""
        out = []
        for nid in sorted(self.nodes, key=node_key):
            t = self.nodes[nid]
            for ix in t.inds:
                if len(self._ind_map[ix]) == 1:
                    out.append((nid, ix, t.ind_dim(ix)))
        return out

    def total_size(self):
        return sum(t.size for t in self.nodes.values())

    def max_bond(self):
        dims = [d for _, _, _, d in self.bonds()]
        return max(dims) if dims else 1

    # -- graph traversal ---------------------------------------------------

    def distances_from(self, sources):
        """Unweighted BFS hop distances from a node or set of nodes.

        Tuples are node ids; pass a set or list for multiple sources.
        """
        if not isinstance(sources, (set, frozenset, list)):
            sources = [sources]
        dist = {s: 0 for s in sources}
        queue = deque(sorted(dist, key=node_key))
        while queue:
            u = queue.popleft()
            for v in self.sorted_neighbors(u):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def connected_components(self):
        seen = set()
        comps = []
        for nid in sorted(self.nodes, key=node_key):
            if nid in seen:
                continue
            comp = set(self.distances_from(nid))
            seen |= comp
            comps.append(comp)
        return comps

    def is_connected(self):
        return len(self.connected_components()) <= 1


@dataclass
class SpanningTree:
    """Ordered expansion of a seed region: ``pairs`` of (inner, outer) nodes."""

    pairs: list
    region: set = field(default_factory=set)


def _csr_adjacency(tn, nodes):
    """Flat neighbor arrays (parallel bonds collapsed) for fast traversal."""
    idx = {v: k for k, v in enumerate(nodes)}
    nbrs = [set() for _ in nodes]
    for ix, ends in tn._ind_map.items():
        if len(ends) == 2:
            a, b = idx[ends[0]], idx[ends[1]]
            nbrs[a].add(b)
            nbrs[b].add(a)
    counts = np.fromiter((len(s) for s in nbrs), dtype=np.int64, count=len(nodes))
    offsets = np.zeros(len(nodes) + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    flat = np.fromiter(
        (w for s in nbrs for w in sorted(s)), dtype=np.int64, count=int(counts.sum())
    )
    return flat, offsets


def _bfs_level_sizes(flat, offsets, n, source):
    """Number of newly reached nodes per BFS level from ``source``."""
    visited = np.zeros(n, dtype=bool)
    visited[source] = True
    frontier = np.array([source], dtype=np.int64)
    sizes = []
    while frontier.size:
        starts = offsets[frontier]
        counts = offsets[frontier + 1] - starts
        total = int(counts.sum())
        if total == 0:
            break
        shift = np.repeat(starts - np.concatenate(([0], np.cumsum(counts)[:-1])), counts)
        cand = flat[shift + np.arange(total)]
        cand = cand[~visited[cand]]
        if cand.size == 0:
            break
        frontier = np.unique(cand)
        visited[frontier] = True
        sizes.append(frontier.size)
    return sizes, int(visited.sum())


def centrality(tn):
    """Per-node centrality from inverse square-root hop distances.

    Each node scores ``sum over other nodes of 1/sqrt(d + 1)``; values are
    normalized so the maximum is 1. Raises for disconnected graphs.
    """
    nodes = sorted(tn.nodes, key=node_key)
    n = len(nodes)
    if n == 1:
        return {nodes[0]: 1.0}
    flat, offsets = _csr_adjacency(tn, nodes)
    inv_w = 1.0 / np.sqrt(np.arange(1, n + 2, dtype=float) + 1.0)
    raw = np.zeros(n)
    for s in range(n):
        sizes, reached = _bfs_level_sizes(flat, offsets, n, s)
        if reached != n:
            raise DisconnectedGraphError(tn.connected_components())
        sizes = np.asarray(sizes, dtype=float)
        raw[s] = float(sizes @ inv_w[: len(sizes)])
    raw /= raw.max()
    return {v: float(raw[k]) for k, v in enumerate(nodes)}


def local_spanning_tree(tn, seed, r=math.inf, exclude=None):
    """Greedy spanning tree of the region within distance ``r`` of ``seed``.

    Candidates are scored closest-first, then by highest connectivity to the
    already-spanned region (product of connecting bond dimensions), with
    node-id order as the final tie break. ``exclude`` is an optional
    predicate barring nodes from the span.
    """
    seed = set(seed)
    if not seed:
        raise ValueError("seed region must be non-empty")
    region = set(seed)
    pairs = []
    candidates = []
    for u in sorted(seed, key=node_key):
        for v in tn.sorted_neighbors(u):
            if v not in region:
                candidates.append((u, v, 1))
    while candidates:
        best = None
        best_score = None
        for entry in candidates:
            u, v, duv = entry
            conn = 1
            for w in region & tn.neighbors(v):
                conn *= tn.pair_connectivity(v, w)
            score = (duv, -conn, node_key(v), node_key(u))
            if best_score is None or score < best_score:
                best_score = score
                best = entry
        candidates.remove(best)
        u, v, duv = best
        if v in region or duv > r:
            continue
        if exclude is not None and exclude(v):
            continue
        region.add(v)
        pairs.append((u, v))
        for w in tn.sorted_neighbors(v):
            if w not in region:
                candidates.append((v, w, duv + 1))
    return SpanningTree(pairs=pairs, region=region)


# -- JSON graph format -----------------------------------------------------


def _id_to_json(nid):
    return list(nid) if isinstance(nid, tuple) else nid


def _id_from_json(nid):
    return tuple(nid) if isinstance(nid, list) else nid


def to_json_dict(tn, include_data=True):
    """Serialize a network to the JSON graph format."""
    nodes = []
    for nid in sorted(tn.nodes, key=node_key):
        t = tn.nodes[nid]
        rec = {"id": _id_to_json(nid), "shape": list(t.dims), "inds": list(t.inds)}
        if include_data:
            rec["data"] = t.data.reshape(-1).tolist()
        nodes.append(rec)
    bonds = [
        {"id": ix, "a": _id_to_json(a), "b": _id_to_json(b), "dim": d}
        for a, b, ix, d in tn.bonds()
    ]
    return {"nodes": nodes, "bonds": bonds}


def from_json_dict(obj, fill_model=None):
    """Load a network from the JSON graph format.

    Nodes without inline ``data`` are filled by ``fill_model``, a callable
    ``(node-id, shape, inds) -> DenseTensor`` (see the models module).
    """
    tn = TensorNetwork()
    for rec in obj["nodes"]:
        nid = _id_from_json(rec["id"])
        shape = tuple(rec["shape"])
        inds = tuple(rec["inds"])
        if "data" in rec:
            data = np.asarray(rec["data"], dtype=np.float64).reshape(shape)
            t = DenseTensor(data, inds)
        elif fill_model is not None:
            t = fill_model(nid, shape, inds)
        else:
            raise ValueError(f"node {nid!r} has no data and no model was given")
        tn.add_tensor(nid, t)
    for bond in obj.get("bonds", []):
        ix = bond["id"]
        ends = tn._ind_map.get(ix, [])
        if len(ends) != 2 or tn.ind_dim(ix) != bond["dim"]:
            raise ValueError(f"bond record {bond} inconsistent with node tensors")
    return tn


def save_json(tn, path, include_data=True):
    with open(path, "w") as f:
        json.dump(to_json_dict(tn, include_data=include_data), f)


def load_json(path, fill_model=None):
    with open(path) as f:
        return from_json_dict(json.load(f), fill_model=fill_model)
