import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signalgrid.aggregation import (
    AggregationError,
    SequenceBuilder,
    aggregate_step,
    dense_fixed_oracle,
    dense_time_varying_oracle,
    locality_check,
)
from signalgrid.network import build_network, build_operator


def random_net(rng, n):
    seen = set()
    for i in range(n):
        seen.add((i, (i + 1) % n))
        seen.add(((i + 1) % n, i))
    extra = rng.integers(0, 2, size=(n, n))
    for i in range(n):
        for j in range(n):
            if i != j and extra[i, j]:
                seen.add((i, j))
    return build_network(edges=sorted(seen))


def one_hop_matrix(rng, net):
    n = net.n
    m = np.zeros((n, n))
    for i in range(n):
        m[i, i] = rng.uniform(0.1, 1.0)
        for j in net.neighbors(i):
            m[i, j] = rng.uniform(0.0, 1.0)
    return m


class TestAggregateStep:
    def test_identity_passthrough(self):
        net = build_network(rows=2, cols=2)
        sig = np.arange(8.0).reshape(4, 2)
        assert np.array_equal(aggregate_step(np.eye(4), sig, net), sig)

    def test_two_node_hand_computed(self):
        net = build_network(edges=[(0, 1), (1, 0)])
        mat = np.array([[0.5, 0.25], [0.25, 0.5]])
        out = aggregate_step(mat, np.array([1.0, 0.0]), net)
        assert np.allclose(out, [0.5, 0.25], atol=1e-12)

    def test_zero_signal(self):
        net = build_network(rows=2, cols=2)
        mat = np.full((4, 4), 0.3)
        out = aggregate_step(mat, np.zeros((4, 3)), net)
        assert np.array_equal(out, np.zeros((4, 3)))

    def test_dimension_mismatch(self):
        net = build_network(rows=2, cols=2)
        with pytest.raises(AggregationError):
            aggregate_step(np.eye(3), np.zeros((4, 2)), net)

    def test_neighbor_masking(self):
        # entries outside the 1-hop neighborhood are ignored
        net = build_network(edges=[(0, 1), (1, 0), (1, 2), (2, 1)])
        mat = np.ones((3, 3))
        sig = np.array([1.0, 1.0, 1.0])
        out = aggregate_step(mat, sig, net)
        assert np.allclose(out, [2.0, 3.0, 2.0])  # node 0 cannot see node 2

    def test_matches_dense_matvec_on_supported_matrices(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            net = random_net(rng, int(rng.integers(2, 7)))
            mat = one_hop_matrix(rng, net)
            sig = rng.standard_normal((net.n, 3))
            assert np.allclose(aggregate_step(mat, sig, net), mat @ sig, atol=1e-12)


class TestSequenceBuilder:
    def test_k1_is_raw_observation(self):
        net = build_network(rows=2, cols=2)
        op = build_operator(net)
        b = SequenceBuilder(op, K=1)
        sig = np.arange(4.0).reshape(4, 1)
        out = b.push(sig)
        assert out.shape == (4, 1, 1)
        assert np.array_equal(out[:, 0, :], sig)
        assert b.last_tick_exchanges == 0

    def test_edgeless_graph_entries_from_identity(self):
        net = build_network(edges=[], n_nodes=3)
        op = build_operator(net)  # self-loops added -> fwd = rev = I
        b = SequenceBuilder(op, K=3)
        sigs = [np.array([[1.0], [2.0], [3.0]]) * (t + 1) for t in range(4)]
        out = None
        for s in sigs:
            out = b.push(s)
        # entry k is (I^0+I^0+...) applied to the stale signal: 2k * y0_{t-k}
        assert np.allclose(out[:, 1, :], 2.0 * sigs[-2])
        assert np.allclose(out[:, 2, :], 4.0 * sigs[-3])

    def test_fixed_mode_matches_dense_oracle(self):
        rng = np.random.default_rng(1)
        for trial in range(30):
            n = int(rng.integers(2, 9))
            K = int(rng.integers(1, 5))
            net = random_net(rng, n)
            op = build_operator(net)
            b = SequenceBuilder(op, K=K)
            hist = [rng.standard_normal((n, 2)) for _ in range(K + 2)]
            out = None
            for h in hist:
                out = b.push(h)
            oracle = dense_fixed_oracle(op, hist[-K:] if K <= len(hist) else hist, K)
            assert np.abs(out - oracle).max() < 1e-12

    def test_single_identity_flag(self):
        rng = np.random.default_rng(2)
        net = random_net(rng, 4)
        op = build_operator(net)
        hist = [rng.standard_normal((4, 2)) for _ in range(4)]
        b = SequenceBuilder(op, K=3, single_identity=True)
        out = None
        for h in hist:
            out = b.push(h)
        oracle = dense_fixed_oracle(op, hist[-3:], 3, single_identity=True)
        assert np.abs(out - oracle).max() < 1e-12
        # and it differs from the double-identity default
        b2 = SequenceBuilder(op, K=3)
        out2 = None
        for h in hist:
            out2 = b2.push(h)
        assert np.abs(out - out2).max() > 1e-9

    def test_time_varying_matches_product_oracle(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            n = int(rng.integers(2, 9))
            K = int(rng.integers(1, 5))
            net = random_net(rng, n)
            op = build_operator(net)
            b = SequenceBuilder(op, K=K, mode="time_varying")
            hist, mats = [], []
            out = None
            for _ in range(K + 1):
                sig = rng.standard_normal((n, 2))
                mat = one_hop_matrix(rng, net)
                hist.append(sig)
                mats.append(mat)
                out = b.push(sig, mat)
            oracle = dense_time_varying_oracle(mats, hist, K)
            assert np.abs(out - oracle).max() < 1e-12

    def test_time_varying_rejects_wide_support(self):
        net = build_network(edges=[(0, 1), (1, 0), (1, 2), (2, 1)])
        op = build_operator(net)
        b = SequenceBuilder(op, K=2, mode="time_varying")
        bad = np.ones((3, 3))  # (0,2) is 2 hops away
        with pytest.raises(AggregationError, match="support"):
            b.push(np.zeros((3, 1)), bad)

    def test_zero_padding_at_start(self):
        net = build_network(rows=2, cols=2)
        op = build_operator(net)
        b = SequenceBuilder(op, K=3)
        out = b.push(np.ones((4, 1)))
        assert np.array_equal(out[:, 1, :], np.zeros((4, 1)))
        assert np.array_equal(out[:, 2, :], np.zeros((4, 1)))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000),
           st.floats(min_value=-3, max_value=3, allow_nan=False),
           st.floats(min_value=-3, max_value=3, allow_nan=False))
    def test_linearity(self, seed, a, b_coef):
        rng = np.random.default_rng(seed)
        net = random_net(rng, 5)
        op = build_operator(net)
        xs = [rng.standard_normal((5, 2)) for _ in range(4)]
        ys = [rng.standard_normal((5, 2)) for _ in range(4)]

        def run(hist):
            builder = SequenceBuilder(op, K=3)
            out = None
            for h in hist:
                out = builder.push(h)
            return out

        lhs = run([a * x + b_coef * y for x, y in zip(xs, ys)])
        rhs = a * run(xs) + b_coef * run(ys)
        assert np.abs(lhs - rhs).max() < 1e-10

    def test_exchange_count_is_one_per_neighbor_per_tick(self):
        net = build_network(rows=3, cols=3)
        op = build_operator(net)
        b = SequenceBuilder(op, K=3)
        deg_total = sum(len(net.neighbors(i)) for i in net.nodes)
        for t in range(4):
            b.push(np.ones((9, 1)))
            assert b.last_tick_exchanges == deg_total
        assert b.exchange_count == 4 * deg_total

    def test_reset_clears_history(self):
        net = build_network(rows=2, cols=2)
        op = build_operator(net)
        b = SequenceBuilder(op, K=2)
        b.push(np.ones((4, 1)))
        b.reset()
        out = b.push(np.ones((4, 1)))
        assert np.array_equal(out[:, 1, :], np.zeros((4, 1)))

    def test_dump_json(self, tmp_path):
        net = build_network(rows=2, cols=2)
        op = build_operator(net)
        b = SequenceBuilder(op, K=2)
        out = b.push(np.ones((4, 2)))
        path = tmp_path / "seq.json"
        b.dump_json(out, path)
        payload = json.loads(path.read_text())
        assert payload["K"] == 2
        assert len(payload["sequences"]) == 4


class TestLocality:
    def test_self_perturbation_changes_entry_zero(self):
        net = build_network(rows=2, cols=2)
        op = build_operator(net)
        hist = [np.ones((4, 1)) for _ in range(3)]
        assert locality_check(op, hist, perturbed_node=1, agent=1, K=3)

    def test_two_hop_pair_entries_before_distance_unchanged(self):
        net = build_network(edges=[(0, 1), (1, 0), (1, 2), (2, 1)])
        op = build_operator(net)
        hist = [np.ones((3, 1)) for _ in range(4)]
        assert locality_check(op, hist, perturbed_node=2, agent=0, K=3)

    def test_exhaustive_on_random_graphs(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            n = int(rng.integers(2, 9))
            net = random_net(rng, n)
            op = build_operator(net)
            hist = [rng.standard_normal((n, 1)) for _ in range(4)]
            for i in range(n):
                for j in range(n):
                    assert locality_check(op, hist, perturbed_node=j, agent=i, K=4)

    def test_entry_k_invariant_beyond_k_hops(self):
        # perturbing a node farther than k undirected hops never moves entry k
        rng = np.random.default_rng(10)
        for _ in range(10):
            n = int(rng.integers(3, 9))
            net = random_net(rng, n)
            op = build_operator(net)
            K = 4
            hist = [rng.standard_normal((n, 1)) for _ in range(K + 1)]

            def run(h):
                b = SequenceBuilder(op, K=K)
                out = None
                for sig in h:
                    out = b.push(sig)
                return out

            base = run(hist)
            for j in range(n):
                pert = [h.copy() for h in hist]
                for h in pert:
                    h[j] += 1.0
                out = run(pert)
                for i in range(n):
                    d = net.comm_hop_dist[i, j]
                    for k in range(K):
                        if d > k:
                            assert np.array_equal(base[i, k], out[i, k])
