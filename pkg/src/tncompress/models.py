"""Benchmark lattices and tensor models, with brute-force oracles and constants."""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .tensor_ops import DenseTensor
from .tngraph import TensorNetwork, node_key


@dataclass(frozen=True)
class LatticeSpec:
    kind: str
    params: tuple = ()

    @classmethod
    def parse(cls, text):
        """Parse shorthand like ``square2d:4,4`` or ``random_regular:30,3``."""
        if ":" in text:
            kind, rest = text.split(":", 1)
            params = tuple(int(x) for x in rest.split(",") if x)
        else:
            kind, params = text, ()
        return cls(kind, params)


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, text):
        """Parse shorthand like ``ising:beta=0.44`` or ``urand:lam=-0.5,D=2``."""
        if ":" in text:
            kind, rest = text.split(":", 1)
            params = {}
            for part in rest.split(","):
                if not part:
                    continue
                k, v = part.split("=")
                params[k] = float(v) if ("." in v or "-" in v or "e" in v) else int(v)
        else:
            kind, params = text, {}
        return cls(kind, params)


@dataclass
class LatticeGraph:
    """Plain graph: node ids plus an edge list, no tensor data yet."""

    nodes: list
    edges: list

    def degree(self, v):
        return sum(1 for a, b in self.edges if a == v or b == v)

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_edges(self):
        return len(self.edges)


def _grid_nodes(shape):
    return [tuple(c) for c in itertools.product(*(range(s) for s in shape))]


def _grid_edges(shape):
    edges = []
    for c in _grid_nodes(shape):
        for ax in range(len(shape)):
            if c[ax] + 1 < shape[ax]:
                d = list(c)
                d[ax] += 1
                edges.append((c, tuple(d)))
    return edges


def square_lattice(lx, ly):
    shape = (lx, ly)
    return LatticeGraph(_grid_nodes(shape), _grid_edges(shape))


def cubic_lattice(lx, ly, lz):
    shape = (lx, ly, lz)
    return LatticeGraph(_grid_nodes(shape), _grid_edges(shape))


def pyrochlore_lattice(l):
    """Corner-sharing tetrahedra, four sites per cell, open boundaries.

    Cells sit on an fcc lattice (integer coordinates here); sublattice 0 is
    the cell origin and sublattices 1..3 sit half way along each primitive
    vector. Every cell carries an "up" tetrahedron on its own four sites and
    a "down" tetrahedron linking sites of displaced cells.
    """
    cells = list(itertools.product(range(l), repeat=3))
    nodes = [c + (s,) for c in cells for s in range(4)]
    nodeset = set(nodes)
    edges = set()

    def unit(s):
        e = [0, 0, 0]
        if s > 0:
            e[s - 1] = 1
        return tuple(e)

    for c in cells:
        for s in range(4):
            for sp in range(s + 1, 4):
                # up tetrahedron: all pairs within the cell
                edges.add((c + (s,), c + (sp,)))
        for s in range(4):
            for sp in range(4):
                if s == sp:
                    continue
                # down tetrahedron: displaced by the difference of half-vectors
                d = tuple(c[i] + unit(s)[i] - unit(sp)[i] for i in range(3))
                v = d + (sp,)
                if v in nodeset:
                    a, b = sorted((c + (s,), v), key=node_key)
                    edges.add((a, b))
    return LatticeGraph(nodes, sorted(edges, key=lambda e: (node_key(e[0]), node_key(e[1]))))


def diamond_lattice(l):
    """Two-site-basis cubic cell diamond lattice with open boundaries."""
    cells = list(itertools.product(range(l), repeat=3))
    nodes = [c + (s,) for c in cells for s in range(2)]
    nodeset = set(nodes)
    edges = []
    for c in cells:
        a = c + (0,)
        for d in [(0, 0, 0), (-1, 0, 0), (0, -1, 0), (0, 0, -1)]:
            v = tuple(c[i] + d[i] for i in range(3)) + (1,)
            if v in nodeset:
                edges.append((a, v) if node_key(a) < node_key(v) else (v, a))
    return LatticeGraph(nodes, sorted(edges, key=lambda e: (node_key(e[0]), node_key(e[1]))))


def random_regular_graph(n, degree, seed):
    """Uniform-ish simple k-regular graph via the pairing model with rejection."""
    if (n * degree) % 2:
        raise ValueError(f"infeasible parity: n*degree = {n * degree} is odd")
    rng = np.random.default_rng(seed)
    stubs0 = np.repeat(np.arange(n), degree)
    for _ in range(2000):
        stubs = rng.permutation(stubs0)
        pairs = stubs.reshape(-1, 2)
        seen = set()
        ok = True
        for a, b in pairs:
            a, b = int(a), int(b)
            if a == b or (min(a, b), max(a, b)) in seen:
                ok = False
                break
            seen.add((min(a, b), max(a, b)))
        if ok:
            edges = sorted((min(int(a), int(b)), max(int(a), int(b))) for a, b in pairs)
            return LatticeGraph(list(range(n)), edges)
    raise RuntimeError("failed to sample a simple regular graph")


def build_lattice(spec, seed=0):
    """Build a named lattice graph from a LatticeSpec (cdl2d handled by build_cdl).

    ``seed`` is used by random ensembles when the spec does not pin one.
    """
    if isinstance(spec, str):
        spec = LatticeSpec.parse(spec)
    kind, p = spec.kind, spec.params
    if kind in ("square2d", "square"):
        return square_lattice(*p)
    if kind in ("cube3d", "cube"):
        return cubic_lattice(*p)
    if kind == "pyrochlore":
        return pyrochlore_lattice(*p)
    if kind == "diamond":
        return diamond_lattice(*p)
    if kind == "random_regular":
        return random_regular_graph(*p) if len(p) >= 3 else random_regular_graph(
            *p, seed=seed
        )
    if kind == "cdl2d":
        # the loop network lives on the plain square grid
        lx = p[0]
        ly = p[1] if len(p) > 1 else lx
        return square_lattice(lx, ly)
    raise ValueError(f"unknown lattice kind {kind!r}")


def _bond_labels(graph):
    return {e: f"b{i}" for i, e in enumerate(graph.edges)}


def _incident(graph, labels):
    inc = {v: [] for v in graph.nodes}
    for e in graph.edges:
        a, b = e
        inc[a].append(labels[e])
        inc[b].append(labels[e])
    return inc


# -- Ising -----------------------------------------------------------------


def ising_bond_matrix(beta, j=1.0):
    """Symmetric square root of the Boltzmann bond weights exp(j*beta*s*s')."""
    a = math.sqrt(math.cosh(j * beta))
    b = math.sqrt(math.sinh(j * beta))
    return np.array([[a + b, a - b], [a - b, a + b]]) / math.sqrt(2.0)


def ising_vertex_tensor(w, degree):
    """Spin-summed vertex tensor with one bond-matrix factor per incident edge."""
    t = np.zeros((2,) * degree)
    for spin in range(2):
        term = np.array(1.0)
        for _ in range(degree):
            term = np.multiply.outer(term, w[spin])
        t += term
    return t


def build_ising(lattice, beta, j=1.0):
    """Tensor network for the ferromagnetic Ising partition function."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    w = ising_bond_matrix(beta, j)
    labels = _bond_labels(lattice)
    inc = _incident(lattice, labels)
    tensors = {}
    for v in lattice.nodes:
        inds = tuple(inc[v])
        tensors[v] = DenseTensor(ising_vertex_tensor(w, len(inds)), inds)
    return TensorNetwork.from_tensors(tensors)


def brute_force_ising(lattice, beta, j=1.0):
    """Exact partition function by summing over all spin configurations."""
    n = lattice.num_nodes
    if n > 24:
        raise ValueError("too many spins for brute force")
    order = {v: i for i, v in enumerate(lattice.nodes)}
    configs = np.arange(1 << n, dtype=np.int64)
    spins = ((configs[:, None] >> np.arange(n)) & 1) * 2 - 1
    energy = np.zeros(1 << n)
    for a, b in lattice.edges:
        energy += spins[:, order[a]] * spins[:, order[b]]
    return float(np.exp(j * beta * energy).sum())


# -- URand -----------------------------------------------------------------


def build_urand(lattice, lam, d, seed):
    """Tensors with i.i.d. entries uniform on [lam, 1]; bonds of dimension d."""
    if lam > 1:
        raise ValueError("lam must be <= 1")
    rng = np.random.default_rng(seed)
    labels = _bond_labels(lattice)
    inc = _incident(lattice, labels)
    tensors = {}
    for v in sorted(lattice.nodes, key=node_key):
        inds = tuple(inc[v])
        data = rng.uniform(lam, 1.0, size=(d,) * len(inds))
        tensors[v] = DenseTensor(data, inds)
    return TensorNetwork.from_tensors(tensors)


# -- dimer covering --------------------------------------------------------


def dimer_vertex_tensor(degree):
    t = np.zeros((2,) * degree)
    for k in range(degree):
        t[tuple(1 if i == k else 0 for i in range(degree))] = 1.0
    return t


def build_dimer(lattice):
    """Exactly-one-dimer vertex tensors; contraction counts perfect matchings."""
    labels = _bond_labels(lattice)
    inc = _incident(lattice, labels)
    tensors = {}
    for v in lattice.nodes:
        inds = tuple(inc[v])
        tensors[v] = DenseTensor(dimer_vertex_tensor(len(inds)), inds)
    return TensorNetwork.from_tensors(tensors)


def brute_force_dimer(lattice):
    """Count perfect matchings by enumerating edge subsets."""
    ne = lattice.num_edges
    if ne > 24:
        raise ValueError("too many edges for brute force")
    count = 0
    for mask in range(1 << ne):
        cover = {}
        for i in range(ne):
            if mask >> i & 1:
                a, b = lattice.edges[i]
                cover[a] = cover.get(a, 0) + 1
                cover[b] = cover.get(b, 0) + 1
        if len(cover) == lattice.num_nodes and all(c == 1 for c in cover.values()):
            count += 1
    return count


# -- brute force index sum for any small network ----------------------------


def brute_force_contract(tn):
    """Sum the full index assignment space of a closed network directly."""
    bonds = [(ix, d) for _, _, ix, d in tn.bonds()]
    total = 1
    for _, d in bonds:
        total *= d
    if total > 1 << 22:
        raise ValueError("index space too large for brute force")
    if tn.open_indices():
        raise ValueError("brute force oracle expects a closed network")
    names = [ix for ix, _ in bonds]
    dims = [d for _, d in bonds]
    grids = np.meshgrid(*(np.arange(d) for d in dims), indexing="ij")
    flat = [g.reshape(-1) for g in grids]
    assign = dict(zip(names, flat))
    prod = np.ones(flat[0].size if flat else 1)
    for nid in sorted(tn.nodes, key=node_key):
        t = tn.nodes[nid]
        sel = tuple(assign[ix] for ix in t.inds)
        prod = prod * t.data[sel]
    return float(prod.sum())


# -- corner double line ----------------------------------------------------


def build_cdl(l, d, ly=None):
    """Plaquette-loop network of corner identity matrices on an l x ly grid.

    Every interior plaquette contributes a closed loop of four d-dimensional
    identity corners; boundary-facing corners are trivial. Bulk bonds then
    have dimension d**2 and the exact contraction value is
    ``d ** ((l-1) * (ly-1))``.
    """
    lx = l
    ly = l if ly is None else ly
    if d < 1 or lx < 1 or ly < 1:
        raise ValueError("need d >= 1 and positive lattice sides")
    plaq_dims = {}
    for px in range(lx - 1):
        for py in range(ly - 1):
            plaq_dims[(px, py)] = d

    tensors = {}
    bond_of = {}
    for x in range(lx):
        for y in range(ly):
            # corner pieces keyed by adjacent plaquette; each has one leg on
            # each of the two incident bonds that touch that plaquette
            legs = []  # (bond-label, plaquette, dim) per tensor leg
            for p in [(x - 1, y - 1), (x, y - 1), (x - 1, y), (x, y)]:
                if p not in plaq_dims:
                    continue
                px, py = p
                hbond = ("h", x - 1 if px < x else x, y)
                vbond = ("v", x, y - 1 if py < y else y)
                legs.append((hbond, p, d))
                legs.append((vbond, p, d))
            corners = sorted({p for _, p, _ in legs}, key=node_key)
            arr = np.array(1.0)
            leg_order = []
            for p in corners:
                arr = np.multiply.outer(arr, np.eye(d))
                plegs = [lg for lg in legs if lg[1] == p]
                leg_order.extend(plegs)
            if not corners:
                arr = np.array(1.0)
            # group legs per incident bond, ordered by plaquette coordinate
            by_bond = {}
            for pos, (bond, p, dim) in enumerate(leg_order):
                by_bond.setdefault(bond, []).append((node_key(p), pos, dim))
            inds, perm, shape = [], [], []
            for bond in sorted(by_bond, key=lambda b: (b[0], b[1], b[2])):
                grp = sorted(by_bond[bond])
                label = bond_of.setdefault(bond, f"b{bond[0]}{bond[1]}.{bond[2]}")
                inds.append(label)
                perm.extend(pos for _, pos, _ in grp)
                dim = 1
                for _, _, dd in grp:
                    dim *= dd
                shape.append(dim)
            arr = np.transpose(arr, perm).reshape(shape) if perm else arr.reshape(shape)
            tensors[(x, y)] = DenseTensor(arr, inds)
    return TensorNetwork.from_tensors(tensors)


def cdl_exact_value(lx, ly, d):
    # exact integer power: one loop trace per interior plaquette
    return d ** ((lx - 1) * (ly - 1))


def cdl_exact_log(lx, ly, d):
    return (lx - 1) * (ly - 1) * math.log(d)


def build_model(lattice, spec, seed=0):
    """Dispatch a ModelSpec onto a lattice graph."""
    if isinstance(spec, str):
        spec = ModelSpec.parse(spec)
    kind, p = spec.kind, spec.params
    if kind == "ising":
        return build_ising(lattice, beta=p.get("beta", 0.44), j=p.get("j", 1.0))
    if kind == "urand":
        return build_urand(lattice, lam=p.get("lam", 0.0), d=int(p.get("D", 2)), seed=seed)
    if kind == "dimer":
        return build_dimer(lattice)
    raise ValueError(f"unknown model kind {spec.kind!r}")


def model_filler(spec, seed=0):
    """Tensor filler for JSON graphs stored without inline data."""
    if isinstance(spec, str):
        spec = ModelSpec.parse(spec)
    kind, p = spec.kind, spec.params

    if kind == "ising":
        w = ising_bond_matrix(p.get("beta", 0.44), p.get("j", 1.0))

        def fill(nid, shape, inds):
            return DenseTensor(ising_vertex_tensor(w, len(inds)), inds)

    elif kind == "urand":
        rng = np.random.default_rng(seed)
        lam = p.get("lam", 0.0)

        def fill(nid, shape, inds):
            return DenseTensor(rng.uniform(lam, 1.0, size=shape), inds)

    elif kind == "dimer":

        def fill(nid, shape, inds):
            return DenseTensor(dimer_vertex_tensor(len(inds)), inds)

    else:
        raise ValueError(f"model {kind!r} cannot be regenerated from shapes")
    return fill


# -- constants and error metrics --------------------------------------------


def matching_entropy_limit(k=3):
    """Infinite-size perfect-matching entropy per site of random k-regular graphs."""
    return 0.5 * (k - 1) * math.log(k - 1) + 0.5 * (2 - k) * math.log(k)


def square_ising_beta_critical():
    return math.log(1.0 + math.sqrt(2.0)) / 2.0


def analytic_constants():
    return {
        "matching_entropy_k3": matching_entropy_limit(3),
        "square_ising_beta_c": square_ising_beta_critical(),
    }


def delta_z(z, z_exact):
    """Relative contraction error 1 - z / z_exact."""
    return 1.0 - z / z_exact


def delta_z_log(sign, log_z, sign_exact, log_z_exact):
    """Log-space version of ``delta_z`` for values that overflow floats."""
    if sign_exact == 0:
        raise ZeroDivisionError("exact value is zero")
    if sign == 0:
        return 1.0
    ratio = sign * sign_exact * math.exp(min(log_z - log_z_exact, 700.0))
    return 1.0 - ratio


def delta_f(log_z, log_z_exact):
    """Relative free-energy error |1 - log z / log z_exact|."""
    return abs(1.0 - log_z / log_z_exact)
