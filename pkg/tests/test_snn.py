import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurosplit.snn import (
    LayerState,
    MLifLayer,
    SplitNetwork,
    classify,
    load_checkpoint,
    mlif_step,
    quantize,
    save_checkpoint,
    synaptic_current,
    threshold,
)


def _state(V, spiked):
    return LayerState(np.atleast_1d(np.asarray(V, float)), np.atleast_1d(np.asarray(spiked, bool)))


class TestQuantize:
    @pytest.mark.parametrize(
        "V, alpha, m, expected", [(2.0, 0.25, 2, 2), (100.0, 0.25, 2, 4), (1.5, 0.9, 0, 1)]
    )
    def test_examples(self, V, alpha, m, expected):
        assert quantize(V, alpha, m) == expected

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.3, 1.5])
    def test_alpha_domain(self, alpha):
        with pytest.raises(ValueError):
            quantize(1.0, alpha, 1)

    @pytest.mark.parametrize("m", [0, 1, 2, 4, 8])
    def test_payload_bound_on_grid(self, m):
        alpha = 0.37
        V = np.linspace(threshold(alpha, m), 10 / alpha, 20001)[1:]
        q = quantize(V, alpha, m)
        assert q.min() >= 1 and q.max() <= 2**m
        assert np.all(np.diff(q) >= 0)

    def test_threshold_coupling(self):
        assert threshold(0.25, 2) == pytest.approx(1.0)
        assert threshold(0.5, 0) == pytest.approx(2.0)


class TestMlifStep:
    def test_leak_without_spike(self):
        # delta=0.5, V_prev=0.4, Z=0.3, V_thr=1 (alpha=0.25, m=2)
        out, st_ = mlif_step(_state(0.4, False), [0.3], 0.5, 0.25, 2)
        assert st_.V[0] == pytest.approx(0.5)
        assert out[0] == 0

    def test_reset_after_spike(self):
        out, st_ = mlif_step(_state(0.4, True), [0.3], 0.5, 0.25, 2)
        assert st_.V[0] == pytest.approx(0.3)

    def test_strict_threshold(self):
        thr = threshold(0.25, 2)
        out, _ = mlif_step(_state(0.0, False), [thr], 0.5, 0.25, 2)
        assert out[0] == 0
        out, _ = mlif_step(_state(0.0, False), [np.nextafter(thr, 2)], 0.5, 0.25, 2)
        assert out[0] == 1

    def test_decays_geometrically_without_input(self):
        state = _state(0.9, False)
        for k in range(1, 20):
            out, state = mlif_step(state, [0.0], 0.5, 0.25, 2)
            assert out[0] == 0
            assert state.V[0] == pytest.approx(0.9 * 0.5**k)

    def test_graded_spike_resets_like_binary(self):
        out, state = mlif_step(_state(0.0, False), [100.0], 0.5, 0.25, 2)
        assert out[0] == 4
        _, state = mlif_step(state, [0.1], 0.5, 0.25, 2)
        assert state.V[0] == pytest.approx(0.1)

    def test_non_spiking_integrates(self):
        out, state = mlif_step(_state(1.0, False), [50.0], 0.5, 0.25, 2, spiking=False)
        assert out[0] == 0 and state.V[0] == pytest.approx(50.5)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mlif_step(_state([0.0, 0.0], [False, False]), [1.0], 0.5, 0.25, 2)

    @settings(max_examples=200, deadline=None)
    @given(
        V=st.lists(st.floats(-5, 5), min_size=1, max_size=8),
        Z=st.floats(-5, 20),
        delta=st.floats(0.01, 0.99),
        alpha=st.floats(0.05, 0.95),
        m=st.integers(0, 8),
    )
    def test_payload_and_reset_properties(self, V, Z, delta, alpha, m):
        V = np.array(V)
        spiked = V > 0
        out, state = mlif_step(LayerState(V, spiked), np.full(len(V), Z), delta, alpha, m)
        assert out.min() >= 0 and out.max() <= 2**m
        assert np.array_equal(out > 0, state.spiked)
        # reset: a neuron that spiked last slot carries no memory
        np.testing.assert_array_equal(state.V[spiked], Z)


class TestSynapticCurrent:
    def test_identity(self):
        np.testing.assert_array_equal(synaptic_current(np.eye(3), [0, 3, 0]), [0, 3, 0])

    def test_ones_row(self):
        np.testing.assert_array_equal(synaptic_current(np.ones((1, 3)), [1, 2, 0]), [3])

    def test_zero_spikes(self):
        W = np.random.default_rng(0).normal(size=(4, 5))
        np.testing.assert_array_equal(synaptic_current(W, np.zeros(5, int)), np.zeros(4))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            synaptic_current(np.eye(3), [1, 2])


class TestClassify:
    @pytest.mark.parametrize(
        "hist, expected",
        [([[1, 0], [1, 0]], 0), ([[0.4, 0.5], [0.2, 0.0]], 0), ([[1, 1, 1], [2, 2, 2]], 0), ([[0, 1]], 1)],
    )
    def test_examples(self, hist, expected):
        assert classify(hist) == expected

    def test_empty(self):
        with pytest.raises(ValueError):
            classify(np.zeros((0, 3)))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10_000), st.floats(-10, 10), st.floats(0.1, 10))
    def test_invariances(self, seed, shift, scale):
        h = np.random.default_rng(seed).normal(size=(4, 5))
        c = classify(h)
        assert classify(h + shift) == c
        assert classify(h * scale) == c


def _small_net(m=2, seed=0):
    return SplitNetwork.random([6, 8, 5, 3], split=1, m=m, rng=seed)


class TestSplitNetwork:
    def test_validation(self):
        a = MLifLayer(np.ones((4, 3)), m=1)
        out = MLifLayer(np.ones((2, 4)), spiking=False)
        with pytest.raises(ValueError):
            SplitNetwork([a, out], split=0)
        with pytest.raises(ValueError):
            SplitNetwork([a, MLifLayer(np.ones((2, 5)), spiking=False)], split=1)
        with pytest.raises(ValueError):
            SplitNetwork([a, MLifLayer(np.ones((2, 4)))], split=1)
        net = SplitNetwork([a, out], split=1)
        assert (net.n_inputs, net.n_encoder_out, net.n_classes, net.encoder_m) == (3, 4, 2, 1)

    def test_layer_validation(self):
        with pytest.raises(ValueError):
            MLifLayer(np.ones((2, 2)), delta=1.0)
        with pytest.raises(ValueError):
            MLifLayer(np.array([[np.nan]]))

    def test_uninitialised_state(self):
        net = _small_net()
        with pytest.raises(RuntimeError):
            net.forward_slot(None, np.zeros(6), "encoder")

    def test_subthreshold_identity_encoder(self):
        enc = MLifLayer(np.eye(4), alpha=0.5, m=0)
        net = SplitNetwork([enc, MLifLayer(np.ones((2, 4)), spiking=False)], split=1)
        state = net.initial_state()
        assert not net.forward_slot(state, np.full(4, 1.0), "encoder").any()

    def test_binary_spikes_for_m0(self):
        net = _small_net(m=0)
        rng = np.random.default_rng(1)
        state = net.initial_state((16,))
        for _ in range(5):
            S = net.forward_slot(state, rng.integers(0, 5, (16, 6)), "encoder")
            assert set(np.unique(S)) <= {0, 1}

    def test_deterministic(self):
        X = np.random.default_rng(2).integers(0, 5, (4, 3, 6))
        a = _small_net(seed=3).run_centralized(X)
        b = _small_net(seed=3).run_centralized(X)
        np.testing.assert_array_equal(a, b)

    def test_split_equals_centralized(self):
        net = _small_net()
        X = np.random.default_rng(4).integers(0, 5, (5, 6))
        central = net.run_centralized(X[:, None, :])[:, 0]
        state = net.initial_state()
        hist = [net.forward_slot(state, net.forward_slot(state, x, "encoder"), "decoder") for x in X]
        np.testing.assert_array_equal(np.stack(hist), central)


def test_checkpoint_round_trip(tmp_path):
    net = _small_net(m=3, seed=5)
    path = tmp_path / "net.mlif"
    save_checkpoint(net, path)
    back = load_checkpoint(path)
    assert back.split == net.split
    for a, b in zip(net.layers, back.layers):
        assert a.weights.dtype == b.weights.dtype == np.float32
        np.testing.assert_array_equal(a.weights, b.weights)
        assert (a.delta, a.alpha, a.m, a.spiking) == (b.delta, b.alpha, b.m, b.spiking)


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.mlif"
    path.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(ValueError):
        load_checkpoint(path)
    net = _small_net()
    save_checkpoint(net, path)
    path.write_bytes(path.read_bytes() + b"x")
    with pytest.raises(ValueError):
        load_checkpoint(path)
