import numpy as np
import pytest

from shared.graph import build_graph, normalize, sample_lhop, spmm
from shared.sbm import random_graph
from shared.validation import ValidationError


def test_build_graph_symmetrizes_and_dedups():
    graph = build_graph([(0, 1), (1, 0), (0, 1), (1, 2)], 3)
    dense = graph.to_dense()
    np.testing.assert_array_equal(dense, dense.T)
    assert graph.num_entries == 4
    assert list(graph.neighbors(1)) == [0, 2]


def test_build_graph_rejects_out_of_range_ids():
    with pytest.raises(ValidationError):
        build_graph([(0, 3)], 3)
    with pytest.raises(ValidationError):
        build_graph([], 0)


def test_normalize_two_nodes(two_node_graph):
    np.testing.assert_allclose(two_node_graph.to_dense(), np.full((2, 2), 0.5))


def test_normalize_path_values(path3_graph):
    dense = path3_graph.to_dense()
    np.testing.assert_allclose(dense[0, 1], 1.0 / np.sqrt(6.0))
    np.testing.assert_allclose(dense[1, 1], 1.0 / 3.0)
    np.testing.assert_allclose(dense, dense.T)


def test_isolated_node_self_loop_and_zero_row():
    with_loops = normalize(build_graph([(0, 1)], 3))
    assert with_loops.to_dense()[2, 2] == 1.0

    without = normalize(build_graph([(0, 1)], 3), add_self_loops=False)
    assert not without.to_dense()[2].any()


def test_existing_self_loop_not_doubled():
    graph = normalize(build_graph([(0, 0), (0, 1)], 2))
    np.testing.assert_allclose(graph.to_dense(), np.full((2, 2), 0.5))


def test_spmm_matches_dense(random_graph_factory, rng):
    graph = random_graph_factory(n=30, p=0.2, seed=5)
    x = rng.standard_normal((30, 4))
    np.testing.assert_allclose(spmm(graph, x), graph.to_dense() @ x, atol=1e-12)


def test_spmm_preserves_float32(two_node_graph):
    out = spmm(two_node_graph, np.ones((2, 3), dtype=np.float32))
    assert out.dtype == np.float32


def test_spmm_row_mismatch(two_node_graph):
    with pytest.raises(ValidationError):
        spmm(two_node_graph, np.ones((3, 1)))


def test_sample_lhop_path_hops(path3_graph):
    one = sample_lhop(path3_graph, [0], 1)
    assert list(one.closure) == [0, 1]
    two = sample_lhop(path3_graph, [0], 2)
    assert list(two.closure) == [0, 1, 2]
    assert two.global_to_local == {0: 0, 1: 1, 2: 2}


def test_sample_lhop_targets_first_and_global_slice(path3_graph):
    batch = sample_lhop(path3_graph, [1], 1)
    assert list(batch.closure) == [1, 0, 2]
    assert batch.num_targets == 1
    dense = path3_graph.to_dense()
    np.testing.assert_allclose(batch.local_graph.to_dense(), dense[np.ix_(batch.closure, batch.closure)])


def test_sample_lhop_local_values_not_renormalized(random_graph_factory):
    graph = random_graph_factory(n=50, p=0.05, seed=2)
    batch = sample_lhop(graph, [3, 7], 1)
    local = batch.local_graph.to_dense()
    dense = graph.to_dense()
    for i, gi in enumerate(batch.closure):
        for j, gj in enumerate(batch.closure):
            assert local[i, j] == dense[gi, gj]


def test_sample_lhop_drops_duplicate_targets(path3_graph):
    batch = sample_lhop(path3_graph, [2, 2, 0], 1)
    assert list(batch.targets) == [2, 0]
    assert list(batch.closure) == [2, 0, 1]


def test_sample_lhop_errors(path3_graph):
    with pytest.raises(ValidationError):
        sample_lhop(path3_graph, [], 1)
    with pytest.raises(ValidationError):
        sample_lhop(path3_graph, [5], 1)
    with pytest.raises(ValidationError):
        sample_lhop(path3_graph, [0], 0)


def _bfs_closure(graph, targets, hops):
    seen = set(targets)
    frontier = list(targets)
    for _ in range(hops):
        nxt = []
        for node in frontier:
            for neighbor in graph.neighbors(node):
                if int(neighbor) not in seen:
                    seen.add(int(neighbor))
                    nxt.append(int(neighbor))
        frontier = nxt
    return seen


def test_build_graph_empty():
    graph = build_graph([], 3)
    assert list(graph.row_ptr) == [0, 0, 0, 0]
    assert graph.num_entries == 0
    np.testing.assert_array_equal(spmm(graph, np.ones((3, 2))), np.zeros((3, 2)))


def test_normalize_triangle_without_self_loops():
    graph = normalize(build_graph([(0, 1), (1, 2), (0, 2)], 3), add_self_loops=False)
    expected = np.full((3, 3), 0.5)
    np.fill_diagonal(expected, 0.0)
    np.testing.assert_allclose(graph.to_dense(), expected, atol=1e-15)


def test_spmm_identity_graph(rng):
    graph = normalize(build_graph([], 4))
    np.testing.assert_array_equal(graph.to_dense(), np.eye(4))
    x = rng.standard_normal((4, 3))
    np.testing.assert_array_equal(spmm(graph, x), x)


def test_spmm_two_node_example(two_node_graph):
    np.testing.assert_allclose(spmm(two_node_graph, np.array([[1.0], [0.0]])), [[0.5], [0.5]])


@pytest.mark.parametrize("add_self_loops", [True, False])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_normalized_spectral_radius_at_most_one(add_self_loops, seed):
    graph = random_graph(120, 0.05, seed=seed, add_self_loops=add_self_loops)
    eigenvalues = np.linalg.eigvalsh(graph.to_dense())
    assert np.max(np.abs(eigenvalues)) <= 1.0 + 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_spmm_is_symmetric_operator(seed):
    graph = random_graph(80, 0.08, seed=seed)
    local = np.random.default_rng(seed)
    x = local.standard_normal((80, 1))
    y = local.standard_normal((80, 1))
    left = (x.T @ spmm(graph, y)).item()
    right = (spmm(graph, x).T @ y).item()
    assert abs(left - right) <= 1e-10


@pytest.mark.parametrize("seed", range(10))
def test_sample_lhop_matches_bfs(seed):
    local = np.random.default_rng(100 + seed)
    n = int(local.integers(10, 101))
    graph = random_graph(n, 0.04, seed=seed)
    targets = [int(t) for t in local.choice(n, size=min(3, n), replace=False)]
    hops = int(local.integers(1, 4))

    batch = sample_lhop(graph, targets, hops)
    assert len(set(batch.closure.tolist())) == len(batch.closure)
    assert set(batch.closure.tolist()) == _bfs_closure(graph, targets, hops)
    assert list(batch.closure[:len(targets)]) == targets


def test_sample_lhop_all_targets_is_full_graph(path3_graph):
    batch = sample_lhop(path3_graph, [0, 1, 2], 1)
    np.testing.assert_array_equal(batch.local_graph.to_dense(), path3_graph.to_dense())


def test_sample_lhop_path4_two_hops():
    graph = normalize(build_graph([(0, 1), (1, 2), (2, 3)], 4))
    assert list(sample_lhop(graph, [0], 2).closure) == [0, 1, 2]
