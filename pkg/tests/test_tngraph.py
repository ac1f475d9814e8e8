import math

import numpy as np
import pytest

from tncompress.models import build_urand, random_regular_graph, square_lattice
from tncompress.tensor_ops import DenseTensor
from tncompress.tngraph import (
    DisconnectedGraphError,
    TensorNetwork,
    centrality,
    from_json_dict,
    local_spanning_tree,
    node_key,
    to_json_dict,
)


def chain_tn(labels, dim=2):
    """Path network a-b-c-... with the given node labels."""
    tensors = {}
    rng = np.random.default_rng(0)
    for k, v in enumerate(labels):
        inds = []
        if k > 0:
            inds.append(f"e{k - 1}")
        if k < len(labels) - 1:
            inds.append(f"e{k}")
        tensors[v] = DenseTensor(rng.normal(size=(dim,) * len(inds)), inds)
    return TensorNetwork.from_tensors(tensors)


def cycle_tn(labels, dim=2):
    n = len(labels)
    tensors = {}
    rng = np.random.default_rng(1)
    for k, v in enumerate(labels):
        inds = (f"e{(k - 1) % n}", f"e{k}")
        tensors[v] = DenseTensor(rng.normal(size=(dim, dim)), inds)
    return TensorNetwork.from_tensors(tensors)


class TestTensorNetwork:
    def test_bond_bookkeeping(self):
        tn = chain_tn(["a", "b", "c"])
        assert tn.neighbors("b") == {"a", "c"}
        assert tn.bondsize("a", "b") == 2
        assert [ix for _, _, ix, _ in tn.bonds()] == ["e0", "e1"]
        assert tn.open_indices() == []

    def test_parallel_bonds(self):
        a = DenseTensor(np.ones((2, 3)), ("x", "y"))
        b = DenseTensor(np.ones((2, 3)), ("x", "y"))
        tn = TensorNetwork.from_tensors({0: a, 1: b})
        assert tn.bondsize(0, 1) == 6
        assert len(list(tn.bonds())) == 2

    def test_dim_mismatch_rejected(self):
        a = DenseTensor(np.ones(2), ("x",))
        b = DenseTensor(np.ones(3), ("x",))
        tn = TensorNetwork()
        tn.add_tensor(0, a)
        with pytest.raises(ValueError):
            tn.add_tensor(1, b)

    def test_third_endpoint_rejected(self):
        tn = TensorNetwork()
        tn.add_tensor(0, DenseTensor(np.ones(2), ("x",)))
        tn.add_tensor(1, DenseTensor(np.ones(2), ("x",)))
        with pytest.raises(ValueError):
            tn.add_tensor(2, DenseTensor(np.ones(2), ("x",)))

    def test_merge(self):
        tn = chain_tn(["a", "b", "c"])
        tn.merge("a", "b")
        assert set(tn.nodes) == {"a", "c"}
        assert tn.neighbors("a") == {"c"}

    def test_copy_independent(self):
        tn = chain_tn(["a", "b", "c"])
        tn2 = tn.copy()
        tn2.merge("a", "b")
        assert set(tn.nodes) == {"a", "b", "c"}


class TestCentrality:
    def test_path_center(self):
        tn = chain_tn(["a", "b", "c"])
        c = centrality(tn)
        assert c["b"] == 1.0
        assert c["a"] == pytest.approx(c["c"])
        assert c["a"] < 1.0

    def test_single_node(self):
        tn = TensorNetwork.from_tensors({"v": DenseTensor(np.ones(()), ())})
        assert centrality(tn) == {"v": 1.0}

    def test_four_cycle_uniform(self):
        tn = cycle_tn(["a", "b", "c", "d"])
        c = centrality(tn)
        assert all(v == pytest.approx(1.0) for v in c.values())

    def test_disconnected_raises(self):
        tn = TensorNetwork.from_tensors(
            {0: DenseTensor(np.ones(()), ()), 1: DenseTensor(np.ones(()), ())}
        )
        with pytest.raises(DisconnectedGraphError) as exc:
            centrality(tn)
        assert len(exc.value.components) == 2

    def test_relabel_invariance(self):
        lat = random_regular_graph(12, 3, seed=5)
        tn = build_urand(lat, 0.0, 2, seed=0)
        c1 = centrality(tn)
        # relabel nodes i -> i + 100
        tensors = {nid + 100: t for nid, t in tn.nodes.items()}
        c2 = centrality(TensorNetwork.from_tensors(tensors))
        for nid, val in c1.items():
            assert c2[nid + 100] == pytest.approx(val)


class TestLocalSpanningTree:
    def test_path_r1(self):
        tn = chain_tn(["a", "b", "c", "d"])
        span = local_spanning_tree(tn, {"b", "c"}, r=1)
        assert sorted(span.pairs) == [("b", "a"), ("c", "d")]
        assert span.region == {"a", "b", "c", "d"}

    def test_r0_no_expansion(self):
        tn = chain_tn(["a", "b", "c", "d"])
        span = local_spanning_tree(tn, {"b"}, r=0)
        assert span.pairs == []
        assert span.region == {"b"}

    def test_empty_seed_errors(self):
        tn = chain_tn(["a", "b"])
        with pytest.raises(ValueError):
            local_spanning_tree(tn, set())

    def test_four_cycle_spans_all(self):
        tn = cycle_tn(["a", "b", "c", "d"])
        span = local_spanning_tree(tn, {"a"}, r=math.inf)
        assert len(span.pairs) == 3
        assert span.region == {"a", "b", "c", "d"}
        # derived by enumerating both valid trees with the documented
        # distance-then-connectivity score and id tiebreak: b expands first,
        # then d, then c is reached from b; the cycle bond c-d is excluded
        assert span.pairs == [("a", "b"), ("a", "d"), ("b", "c")]

    def test_acyclic_full_span_keeps_all_bonds(self):
        # on a tree graph every bond ends up in the span
        tn = chain_tn(list("abcdef"))
        span = local_spanning_tree(tn, {"c"}, r=math.inf)
        assert len(span.pairs) == 5

    def test_replay_visits_each_node_once(self):
        for seed in range(8):
            lat = random_regular_graph(14, 3, seed=seed)
            tn = build_urand(lat, 0.0, 2, seed=seed)
            span = local_spanning_tree(tn, {0, *tn.neighbors(0)}, r=math.inf)
            region = {0, *tn.neighbors(0)}
            for u, v in span.pairs:
                assert u in region and v not in region
                region.add(v)
            assert region == span.region == set(tn.nodes)

    def test_exclude_predicate(self):
        tn = chain_tn(["a", "b", "c", "d"])
        span = local_spanning_tree(tn, {"b"}, r=math.inf, exclude=lambda v: v == "c")
        assert span.region == {"a", "b"}


class TestJson:
    def test_roundtrip(self):
        lat = square_lattice(3, 2)
        tn = build_urand(lat, -0.2, 2, seed=4)
        obj = to_json_dict(tn)
        tn2 = from_json_dict(obj)
        assert set(tn2.nodes) == set(tn.nodes)
        for nid in tn.nodes:
            np.testing.assert_allclose(
                tn2.nodes[nid].transpose_to(tn.nodes[nid].inds).data,
                tn.nodes[nid].data,
            )
        assert sorted(b["id"] for b in obj["bonds"]) == sorted(
            ix for _, _, ix, _ in tn.bonds()
        )

    def test_shape_only_with_model_filler(self):
        from tncompress.models import model_filler

        lat = square_lattice(2, 2)
        tn = build_urand(lat, 0.5, 2, seed=9)
        obj = to_json_dict(tn, include_data=False)
        tn2 = from_json_dict(obj, fill_model=model_filler("urand:lam=0.5,D=2", seed=9))
        for nid in tn.nodes:
            assert tn2.nodes[nid].dims == tn.nodes[nid].dims

    def test_node_key_total_order(self):
        vals = [(0, 1), (0, 10), "z", 3, (1, "a"), 10]
        assert sorted(vals, key=node_key) == sorted(vals, key=node_key)
