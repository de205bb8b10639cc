import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signalgrid.network import (
    NetworkError,
    build_network,
    build_operator,
    diffusion_matrix,
    hop_distance,
    rwr_distribution,
)


def random_strongly_connected(rng, n):
    """Directed ring plus random extra edges: always strongly connected."""
    edges = [((i, (i + 1) % n)) for i in range(n)]
    extra = rng.integers(0, 2, size=(n, n))
    for i in range(n):
        for j in range(n):
            if i != j and extra[i, j] and (i, j) not in edges:
                edges.append((i, j))
    weights = [float(rng.uniform(0.1, 2.0)) for _ in edges]
    return build_network(edges=edges, weights=weights)


class TestBuildNetwork:
    def test_5x5_grid_shape(self):
        net = build_network(rows=5, cols=5)
        assert net.n == 25
        # interior nodes have 4 out-edges
        interior = 5 * 1 + 1  # row 1, col 1 -> node 6
        assert len(net.out_neighbors(interior)) == 4

    def test_1x1_grid_degenerate(self):
        net = build_network(rows=1, cols=1)
        assert net.n == 1
        assert net.edges == ()
        assert net.hop_dist.tolist() == [[0.0]]

    def test_three_node_cycle_hops(self):
        net = build_network(edges=[(0, 1), (1, 2), (2, 0)])
        assert hop_distance(net, 0, 2) == 2
        assert hop_distance(net, 2, 1) == 2
        assert hop_distance(net, 0, 0) == 0

    def test_duplicate_edge_rejected(self):
        with pytest.raises(NetworkError, match="duplicate"):
            build_network(edges=[(0, 1), (0, 1)])

    def test_negative_weight_rejected(self):
        with pytest.raises(NetworkError, match="negative"):
            build_network(edges=[(0, 1)], weights=[-1.0])

    def test_self_edge_rejected(self):
        with pytest.raises(NetworkError, match="self-edge"):
            build_network(edges=[(1, 1)])

    def test_hop_dist_matches_edges(self):
        net = build_network(rows=3, cols=3)
        for i in net.nodes:
            for j in net.nodes:
                if (i, j) in net.edges:
                    assert net.hop_dist[i, j] == 1.0

    def test_unreachable_is_inf(self):
        net = build_network(edges=[(0, 1)], n_nodes=3)
        assert math.isinf(hop_distance(net, 2, 0))
        assert math.isinf(hop_distance(net, 1, 0))


class TestBuildOperator:
    def test_two_node_bidirectional_fwd(self):
        net = build_network(edges=[(0, 1), (1, 0)])
        op = build_operator(net)
        assert np.allclose(op.fwd, [[0.0, 1.0], [1.0, 0.0]])
        assert np.allclose(op.rev, [[0.0, 1.0], [1.0, 0.0]])

    def test_depth_zero_powers(self):
        net = build_network(rows=2, cols=2)
        op = build_operator(net, depth=0)
        assert len(op.powers_fwd) == 1
        assert np.array_equal(op.powers_fwd[0], np.eye(4))

    def test_grid_columns_stochastic(self):
        net = build_network(rows=5, cols=5)
        op = build_operator(net)
        assert np.allclose(op.fwd.sum(axis=0), 1.0, atol=1e-12)
        assert np.allclose(op.rev.sum(axis=0), 1.0, atol=1e-12)

    def test_power_cache_consistent(self):
        net = build_network(rows=3, cols=3)
        op = build_operator(net, depth=4)
        assert np.array_equal(op.powers_fwd[0], np.eye(9))
        for d in range(1, 5):
            assert np.allclose(op.powers_fwd[d], op.powers_fwd[d - 1] @ op.fwd,
                               atol=1e-12)
            assert np.allclose(op.powers_rev[d], op.powers_rev[d - 1] @ op.rev,
                               atol=1e-12)

    def test_zero_degree_self_loop(self):
        # node 2 has no out-edges; preprocessing adds a self-loop
        net = build_network(edges=[(0, 1), (1, 0), (1, 2)])
        op = build_operator(net)
        assert np.allclose(op.fwd.sum(axis=0), 1.0, atol=1e-12)

    def test_zero_degree_error_when_disabled(self):
        net = build_network(edges=[(0, 1), (1, 0), (1, 2)])
        with pytest.raises(NetworkError, match="node 2"):
            build_operator(net, add_self_loops=False)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=2, max_value=16), st.integers(min_value=0, max_value=10_000))
    def test_column_stochastic_random_graphs(self, n, seed):
        rng = np.random.default_rng(seed)
        net = random_strongly_connected(rng, n)
        op = build_operator(net)
        assert np.allclose(op.fwd.sum(axis=0), 1.0, atol=1e-12)
        assert np.allclose(op.rev.sum(axis=0), 1.0, atol=1e-12)


class TestRwrDistribution:
    def test_restart_one_is_indicator(self):
        net = build_network(rows=2, cols=2)
        op = build_operator(net, restart_alpha=1.0, depth=3)
        v = rwr_distribution(op, 2)
        expected = np.zeros(4)
        expected[2] = 1.0
        assert np.allclose(v, expected)

    def test_two_node_hand_computed(self):
        net = build_network(edges=[(0, 1), (1, 0)])
        op = build_operator(net, restart_alpha=0.5, depth=1)
        assert np.allclose(rwr_distribution(op, 0), [0.5, 0.25], atol=1e-12)

    @pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75, 1.0])
    @pytest.mark.parametrize("depth", range(6))
    def test_sum_identity(self, alpha, depth):
        net = build_network(rows=3, cols=3)
        op = build_operator(net, restart_alpha=alpha, depth=depth)
        for src in (0, 4, 8):
            total = rwr_distribution(op, src).sum()
            assert total == pytest.approx(1 - (1 - alpha) ** (depth + 1), abs=1e-12)

    def test_dense_power_series_oracle(self):
        rng = np.random.default_rng(11)
        net = random_strongly_connected(rng, 6)
        op = build_operator(net, restart_alpha=0.6, depth=4)
        base = op.walk_base()
        expected = np.zeros((6, 6))
        for d in range(5):
            expected += 0.6 * 0.4 ** d * np.linalg.matrix_power(base, d)
        for src in range(6):
            assert np.allclose(rwr_distribution(op, src), expected[:, src], atol=1e-12)

    def test_unknown_source_rejected(self):
        net = build_network(rows=2, cols=2)
        op = build_operator(net)
        with pytest.raises(NetworkError):
            rwr_distribution(op, 7)


class TestDiffusionMatrix:
    def test_rows_are_rwr_distributions(self):
        rng = np.random.default_rng(3)
        net = random_strongly_connected(rng, 5)
        op = build_operator(net, restart_alpha=0.5, depth=3)
        mat = diffusion_matrix(op)
        for i in range(5):
            assert np.allclose(mat[i], rwr_distribution(op, i), atol=1e-12)

    def test_two_node_hand_computed(self):
        net = build_network(edges=[(0, 1), (1, 0)])
        op = build_operator(net, restart_alpha=0.5, depth=1)
        assert np.allclose(diffusion_matrix(op), [[0.5, 0.25], [0.25, 0.5]], atol=1e-12)

    def test_restart_one_identity_pattern(self):
        net = build_network(rows=2, cols=3)
        op = build_operator(net, restart_alpha=1.0, depth=2)
        assert np.allclose(diffusion_matrix(op), np.eye(6))

    def test_row_sums_and_entry_range(self):
        net = build_network(rows=4, cols=4)
        op = build_operator(net, restart_alpha=0.3, depth=5)
        mat = diffusion_matrix(op)
        assert np.allclose(mat.sum(axis=1), 1 - 0.7 ** 6, atol=1e-12)
        assert np.all(mat >= 0.0) and np.all(mat <= 1.0)


class TestHopDistance:
    def test_adjacent_grid_nodes(self):
        net = build_network(rows=3, cols=3)
        assert hop_distance(net, 0, 1) == 1

    def test_opposite_corners_3x3(self):
        net = build_network(rows=3, cols=3)
        assert hop_distance(net, 0, 8) == 4

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=2, max_value=5), st.integers(min_value=2, max_value=5))
    def test_symmetry_and_triangle_on_grids(self, rows, cols):
        net = build_network(rows=rows, cols=cols)
        d = net.hop_dist
        assert np.array_equal(d, d.T)
        n = net.n
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    assert d[i, j] <= d[i, k] + d[k, j]
