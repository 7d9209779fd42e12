"""Spiking layer forward pass against hand traces and brute-force oracles."""

import numpy as np
import pytest

from sodnet.errors import DataError, ParameterError
from sodnet.net import (
    ConvLayerParams,
    FcLayerParams,
    LayerSpec,
    ModelConfig,
    ReadoutParams,
    build_network,
    conv_spiking_forward,
    fc_spiking_forward,
    load_checkpoint,
    network_forward,
    readout_forward,
    save_checkpoint,
)

DT = 0.010


def brute_force_fc(W, beta, b, eps, lateral, x):
    """Re-evaluate the cell equations with explicit loops (previous-step reset)."""
    T, n_in = x.shape
    n_out = W.shape[0]
    sq = np.array([float(W[i] @ W[i]) for i in range(n_out)])
    M = np.array([[float(W[i] @ W[j]) for j in range(n_out)] for i in range(n_out)])
    U = np.zeros(n_out)
    s_prev = np.zeros(n_out)
    Us, Ss = [], []
    for n in range(T):
        I = np.array([sum(W[i, j] * x[n, j] for j in range(n_in)) for i in range(n_out)])
        if lateral:
            R = np.array([sum(M[i, j] * s_prev[j] for j in range(n_out))
                          for i in range(n_out)])
        else:
            R = sq * s_prev
        U = beta * (U - R) + (1.0 - beta) * I
        s = ((U / (sq + eps) - b) >= 0).astype(np.float64)
        Us.append(U.copy())
        Ss.append(s.copy())
        s_prev = s
    return np.array(Us), np.array(Ss)


class TestFcForward:
    def test_zero_weights_stay_silent(self):
        p = FcLayerParams(W=np.zeros((3, 4)), beta=np.float64(0.6), b=np.ones(3))
        x = np.random.default_rng(0).normal(size=(20, 4))
        spikes, trace = fc_spiking_forward(p, x)
        assert spikes.sum() == 0
        assert np.all(trace.U == 0.0)

    def test_hand_traced_single_neuron(self):
        # W=2, beta=0.5, b=0.4, three input spikes then silence:
        # U = 1, 1.5, 1.75 (spike), then 0.5*(1.75 - 4) = -1.125; all dyadic.
        p = FcLayerParams(W=np.array([[2.0]]), beta=np.float64(0.5), b=np.array([0.4]))
        x = np.zeros((6, 1))
        x[:3, 0] = 1.0
        spikes, trace = fc_spiking_forward(p, x)
        assert trace.U[0, 0] == 1.0
        assert trace.U[1, 0] == 1.5
        assert trace.U[2, 0] == 1.75
        assert trace.U[3, 0] == -1.125
        assert spikes[2, 0] == 1.0
        assert spikes.sum() == 1.0
        np.testing.assert_array_equal(
            spikes[:, 0] / 1.0, [0, 0, 1, 0, 0, 0])

    def test_identical_rows_share_the_reset(self):
        # b makes only neuron 0 fire; neuron 1 still drops by beta * ||W||^2.
        W = np.array([[1.0, 2.0], [1.0, 2.0]])
        beta = 0.5
        p = FcLayerParams(W=W, beta=np.float64(beta), b=np.array([0.4, 10.0]))
        x = np.ones((4, 2))
        spikes, trace = fc_spiking_forward(p, x)
        fire_steps = np.flatnonzero(spikes[:, 0])
        assert fire_steps.size > 0 and spikes[:, 1].sum() == 0
        n = fire_steps[0]
        assert n + 1 < x.shape[0]
        sq = float(W[0] @ W[0])
        I_next = W @ x[n + 1]
        for i in range(2):
            no_reset = beta * trace.U[n, i] + (1 - beta) * I_next[i]
            assert trace.U[n + 1, i] == pytest.approx(no_reset - beta * sq, abs=1e-12)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(12)
        for lateral in (True, False):
            for _ in range(10):
                n_in, n_out, T = rng.integers(2, 6), rng.integers(2, 7), rng.integers(5, 25)
                W = rng.normal(size=(n_out, n_in))
                beta = rng.uniform(0.1, 0.95)
                b = rng.uniform(0.1, 0.8, size=n_out)
                x = rng.normal(size=(T, n_in)) * 1.5
                p = FcLayerParams(W=W, beta=np.float64(beta), b=b, lateral_enabled=lateral)
                spikes, trace = fc_spiking_forward(p, x)
                U_ref, S_ref = brute_force_fc(W, beta, b, p.epsilon, lateral, x)
                scale = max(1.0, np.abs(U_ref).max())
                assert np.abs(trace.U - U_ref).max() / scale < 1e-9
                np.testing.assert_array_equal(spikes, S_ref)

    def test_outputs_strictly_binary(self):
        rng = np.random.default_rng(2)
        net = build_network(ModelConfig(input_shape=(6,), n_classes=3, layers=[
            LayerSpec("fc", 10), LayerSpec("fc", 8, lateral=False)]), seed=4)
        x = rng.normal(size=(3, 30, 6))
        _, traces = net.forward_batch(x)
        for trace in traces:
            assert set(np.unique(trace.spikes)) <= {0.0, 1.0}

    def test_normalizer_tracks_current_weights(self):
        # spikes must follow theta(U / (||W||^2 + eps) - b) with the norm
        # recomputed from whatever W is now; scaling a row is NOT invariant.
        rng = np.random.default_rng(9)
        W = rng.normal(size=(4, 5))
        x = rng.normal(size=(25, 5)) * 2.0
        for c in (1.0, 3.0):
            Wc = W.copy()
            Wc[2] *= c
            p = FcLayerParams(W=Wc, beta=np.float64(0.6), b=np.full(4, 0.5))
            spikes, trace = fc_spiking_forward(p, x)
            norm = np.einsum("ij,ij->i", Wc, Wc) + p.epsilon
            np.testing.assert_array_equal(
                spikes, (trace.U / norm - p.b >= 0).astype(float))
        p1 = FcLayerParams(W=W, beta=np.float64(0.6), b=np.full(4, 0.5))
        p3 = FcLayerParams(W=3.0 * W, beta=np.float64(0.6), b=np.full(4, 0.5))
        s1, _ = fc_spiking_forward(p1, x)
        s3, _ = fc_spiking_forward(p3, x)
        assert not np.array_equal(s1, s3)

    def test_causality(self):
        rng = np.random.default_rng(21)
        p = FcLayerParams(W=rng.normal(size=(5, 3)), beta=np.float64(0.7),
                          b=rng.uniform(0.2, 0.6, size=5))
        x = rng.normal(size=(30, 3)) * 2
        cut = 12
        x2 = x.copy()
        x2[cut:] = 0.0
        s1, t1 = fc_spiking_forward(p, x)
        s2, t2 = fc_spiking_forward(p, x2)
        np.testing.assert_array_equal(s1[:cut], s2[:cut])
        np.testing.assert_array_equal(t1.U[:cut], t2.U[:cut])

    def test_rejects_nan_and_bad_shapes(self):
        p = FcLayerParams(W=np.ones((2, 3)), beta=np.float64(0.5), b=np.ones(2))
        bad = np.ones((5, 3))
        bad[2, 1] = np.nan
        with pytest.raises(DataError):
            fc_spiking_forward(p, bad)
        with pytest.raises(ParameterError):
            fc_spiking_forward(p, np.ones((5, 4)))
        with pytest.raises(ParameterError):
            FcLayerParams(W=np.ones((2, 3)), beta=np.float64(1.5), b=np.ones(2))
        with pytest.raises(ParameterError):
            FcLayerParams(W=np.ones((2, 3)), beta=np.float64(0.5), b=-np.ones(2))


class TestConvForward:
    def test_all_zero_kernels_silent(self):
        p = ConvLayerParams(kernels=np.zeros((4, 2, 3, 3)), beta=np.float64(0.5),
                            b=np.ones(4))
        x = np.random.default_rng(1).normal(size=(12, 6, 2))
        spikes, _ = conv_spiking_forward(p, x)
        assert spikes.sum() == 0

    def test_one_by_one_kernels_match_fc_per_position(self):
        rng = np.random.default_rng(5)
        c_in, c_out, T, F = 3, 5, 18, 4
        mix = rng.normal(size=(c_out, c_in))
        conv = ConvLayerParams(kernels=mix[:, :, None, None], beta=np.float64(0.6),
                               b=np.full(c_out, 0.5), dilation=(1, 1))
        fc = FcLayerParams(W=mix, beta=np.float64(0.6), b=np.full(c_out, 0.5))
        x = rng.normal(size=(T, F, c_in)) * 2
        conv_spikes, _ = conv_spiking_forward(conv, x)
        for f in range(F):
            fc_spikes, _ = fc_spiking_forward(fc, x[:, f, :])
            np.testing.assert_array_equal(conv_spikes[:, f, :], fc_spikes)

    def test_reference_stack_preserves_shape(self):
        # 3 conv layers, 64 channels, 4x3 kernels, dilations (1,1),(4,3),(16,9):
        # output stays 98 x 40 x C at every layer; the time receptive field
        # spans 1 + 3*(1 + 4 + 16) = 64 steps.
        config = ModelConfig(input_shape=(40, 3), n_classes=12, layers=[
            LayerSpec("conv", 64, (4, 3), (1, 1)),
            LayerSpec("conv", 64, (4, 3), (4, 3)),
            LayerSpec("conv", 64, (4, 3), (16, 9)),
        ])
        net = build_network(config, seed=0)
        x = np.random.default_rng(0).normal(size=(98, 40, 3))
        logits, traces, stats = network_forward(net, x)
        assert logits.shape == (12,)
        for trace in traces:
            assert trace.spikes.shape == (98, 40, 64)

    def test_causal_time_padding(self):
        # an impulse at step n cannot affect outputs before n
        rng = np.random.default_rng(8)
        p = ConvLayerParams(kernels=rng.normal(size=(2, 1, 3, 3)), beta=np.float64(0.8),
                            b=np.full(2, 0.3), dilation=(2, 1))
        T, F = 20, 5
        quiet = np.zeros((T, F, 1))
        impulse = quiet.copy()
        impulse[10, 2, 0] = 5.0
        s_quiet, t_quiet = conv_spiking_forward(p, quiet)
        s_imp, t_imp = conv_spiking_forward(p, impulse)
        np.testing.assert_array_equal(t_quiet.I[:10], t_imp.I[:10])
        np.testing.assert_array_equal(s_quiet[:10], s_imp[:10])
        assert np.any(t_imp.I[10:] != t_quiet.I[10:])

    def test_lateral_reset_couples_channels_at_same_position(self):
        rng = np.random.default_rng(14)
        K = rng.normal(size=(3, 2, 2, 2))
        p = ConvLayerParams(kernels=K, beta=np.float64(0.5), b=rng.uniform(0.2, 0.5, 3),
                            dilation=(1, 1), lateral_enabled=True)
        x = rng.normal(size=(10, 4, 2)) * 2
        spikes, trace = conv_spiking_forward(p, x)
        # re-evaluate U with the Gram-matrix reset applied per position
        k_flat = K.reshape(3, -1)
        gram = k_flat @ k_flat.T
        U = np.zeros((4, 3))
        for n in range(10):
            R = spikes[n - 1] @ gram.T if n > 0 else 0.0
            U = 0.5 * (U - R) + 0.5 * trace.I[n]
            assert np.abs(U - trace.U[n]).max() < 1e-9

    def test_rejects_dimension_mismatch(self):
        p = ConvLayerParams(kernels=np.ones((2, 3, 2, 2)), beta=np.float64(0.5),
                            b=np.ones(2))
        with pytest.raises(ParameterError):
            conv_spiking_forward(p, np.ones((10, 4, 2)))
        with pytest.raises(ParameterError):
            ConvLayerParams(kernels=np.ones((2, 3, 2, 2)), beta=np.float64(0.5),
                            b=np.ones(2), dilation=(0, 1))


class TestReadout:
    def test_silent_input_returns_bias(self):
        p = ReadoutParams(W=np.ones((3, 4)), bias=np.array([0.1, -0.2, 0.3]))
        logits = readout_forward(p, np.zeros((10, 4)))
        np.testing.assert_allclose(logits, p.bias)

    def test_single_spike_contribution(self):
        rng = np.random.default_rng(3)
        W = rng.normal(size=(3, 4))
        p = ReadoutParams(W=W, bias=rng.normal(size=3))
        T, j, n = 8, 2, 5
        s = np.zeros((T, 4))
        s[n, j] = 1.0
        logits = readout_forward(p, s)
        np.testing.assert_allclose(logits, p.bias + W[:, j] / T, rtol=1e-12)

    def test_time_permutation_invariance(self):
        rng = np.random.default_rng(4)
        p = ReadoutParams(W=rng.normal(size=(5, 6)), bias=rng.normal(size=5))
        s = (rng.random(size=(12, 6)) < 0.3).astype(float)
        perm = rng.permutation(12)
        np.testing.assert_allclose(readout_forward(p, s), readout_forward(p, s[perm]),
                                   rtol=1e-12)


class TestNetworkForward:
    def test_zero_weights_yield_bias_logits_and_zero_rates(self):
        config = ModelConfig(input_shape=(5,), n_classes=4,
                             layers=[LayerSpec("fc", 6), LayerSpec("fc", 7)])
        net = build_network(config, seed=0)
        for lp in net.layer_params:
            lp.W = np.zeros_like(lp.W)
        net.readout.W = np.zeros_like(net.readout.W)
        net.readout.bias = np.array([0.5, -1.0, 2.0, 0.0])
        x = np.random.default_rng(0).normal(size=(20, 5))
        logits, _, stats = network_forward(net, x)
        np.testing.assert_allclose(logits, net.readout.bias)
        assert stats["mean_firing_rate_hz"] == 0.0
        assert all(v == 0.0 for v in stats["firing_rate_hz"].values())

    def test_firing_rate_bookkeeping(self):
        # K=1 neuron, N=6 steps, one spike -> 1 / (K N dt) Hz
        config = ModelConfig(input_shape=(1,), n_classes=2,
                             layers=[LayerSpec("fc", 1)], dt_s=DT)
        net = build_network(config, seed=0)
        net.layer_params[0].W = np.array([[2.0]])
        net.layer_params[0].beta = np.float64(0.5)
        net.layer_params[0].b = np.array([0.4])
        x = np.zeros((6, 1))
        x[:3, 0] = 1.0
        _, _, stats = network_forward(net, x)
        assert stats["spike_counts"]["layer1"] == 1.0
        assert stats["firing_rate_hz"]["layer1"] == pytest.approx(1.0 / (1 * 6 * DT))

    def test_conv_stack_flattens_into_readout(self):
        config = ModelConfig(input_shape=(8, 2), n_classes=12, layers=[
            LayerSpec("conv", 4, (2, 3), (1, 1)),
            LayerSpec("conv", 4, (2, 3), (2, 2)),
        ])
        net = build_network(config, seed=1)
        assert net.readout.W.shape == (12, 8 * 4)
        logits, _, _ = network_forward(net, np.random.default_rng(0).normal(size=(15, 8, 2)))
        assert logits.shape == (12,)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        config = ModelConfig(input_shape=(6, 2), n_classes=5, layers=[
            LayerSpec("conv", 3, (2, 2), (2, 1)),
            LayerSpec("fc", 7, lateral=False),
        ], sigma=12.0, tau_mem_s=0.025)
        net = build_network(config, seed=9)
        path = tmp_path / "ck.npz"
        save_checkpoint(path, net)
        restored = load_checkpoint(path)
        assert restored.config.to_json() == net.config.to_json()
        for key, val in net.params().items():
            np.testing.assert_array_equal(restored.params()[key], val)
        x = np.random.default_rng(5).normal(size=(10, 6, 2))
        a, _, _ = network_forward(net, x)
        b, _, _ = network_forward(restored, x)
        np.testing.assert_array_equal(a, b)

    def test_model_config_json_roundtrip(self):
        config = ModelConfig(input_shape=(40, 3), n_classes=12, layers=[
            LayerSpec("conv", 64, (4, 3), (16, 9), lateral=False)])
        clone = ModelConfig.from_json(config.to_json())
        assert clone.layers[0].dilation == (16, 9)
        assert clone.layers[0].lateral is False
        assert clone.input_shape == (40, 3)
