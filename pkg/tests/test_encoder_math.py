"""Encoder math: kernels against explicit scalar-loop oracles, rotary
embedding properties, mixture-of-experts routing, frontend shape
contracts, closed-form parameter counts, and weight-file round trips."""

import math

import numpy as np
import pytest

from helpers import (
    attention_oracle,
    expert_oracle,
    moe_oracle,
    rand_attention_weights,
    rand_experts,
    rope_oracle,
)

from amtkit.encoder_math import (
    AttentionWeights,
    ExpertWeights,
    FrontendConfig,
    attention_forward,
    count_parameters,
    expert_forward,
    ffn_forward,
    frontend_shapes,
    frontend_ymt3,
    frontend_yptf,
    load_weights,
    model_config,
    moe_forward,
    rms_norm,
    rope_rotate,
    save_weights,
    sca_forward,
    silu,
    sinusoidal_positions,
    softmax,
)

RTOL = 1e-5


class TestBasicKernels:
    def test_rms_norm_scalar(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(3, 5))
        w = rng.normal(size=5)
        got = rms_norm(x, w)
        for i in range(3):
            ms = sum(x[i, j] ** 2 for j in range(5)) / 5
            scale = math.sqrt(ms + 1e-6)
            for j in range(5):
                assert got[i, j] == pytest.approx(x[i, j] / scale * w[j], rel=RTOL)

    def test_softmax_rows(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 7)) * 10
        s = softmax(x)
        assert np.all(s >= 0)
        assert np.allclose(np.sum(s, axis=-1), 1.0)

    def test_softmax_shift_invariant(self):
        x = np.array([1.0, 2.0, 3.0])
        assert np.allclose(softmax(x), softmax(x + 100.0))

    def test_silu_scalar(self):
        for v in (-3.0, -0.5, 0.0, 0.5, 3.0):
            assert silu(np.array([v]))[0] == pytest.approx(
                v / (1 + math.exp(-v)), rel=RTOL
            )

    def test_sinusoidal_positions(self):
        enc = sinusoidal_positions(4, 6)
        assert enc.shape == (4, 6)
        for pos in range(4):
            for i in range(3):
                freq = 10000.0 ** (-2.0 * i / 6)
                assert enc[pos, 2 * i] == pytest.approx(math.sin(pos * freq))
                assert enc[pos, 2 * i + 1] == pytest.approx(math.cos(pos * freq))
        with pytest.raises(ValueError):
            sinusoidal_positions(4, 5)


class TestRope:
    def test_position_zero_identity(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(1, 8))
        out = rope_rotate(x, positions=np.array([0.0]))
        assert np.allclose(out, x)

    def test_matches_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 5, 8))
        pos = np.array([0.0, 3.0, 7.0, 11.0, 20.0])
        assert np.allclose(rope_rotate(x, pos), rope_oracle(x, pos), rtol=RTOL)

    def test_norm_preserved(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(6, 10))
        out = rope_rotate(x)
        assert np.allclose(
            np.linalg.norm(out, axis=-1), np.linalg.norm(x, axis=-1)
        )

    def test_inner_product_depends_on_relative_position(self):
        rng = np.random.default_rng(5)
        q = rng.normal(size=8)
        k = rng.normal(size=8)

        def dot(m, n):
            qr = rope_rotate(q[None, :], positions=np.array([float(m)]))[0]
            kr = rope_rotate(k[None, :], positions=np.array([float(n)]))[0]
            return float(qr @ kr)

        for m, n, s in [(0, 3, 5), (2, 9, 11), (7, 1, 4)]:
            assert dot(m, n) == pytest.approx(dot(m + s, n + s), rel=1e-9)

    def test_odd_dim_rejected(self):
        with pytest.raises(ValueError):
            rope_rotate(np.zeros((2, 7)))

    def test_position_shape_checked(self):
        with pytest.raises(ValueError):
            rope_rotate(np.zeros((3, 4)), positions=np.zeros(2))


class TestAttention:
    def test_matches_oracle(self):
        rng = np.random.default_rng(10)
        w = rand_attention_weights(rng, d_q=6, d_kv=5, n_heads=2, d_head=4, d_out=7)
        q_in = rng.normal(size=(3, 6))
        kv_in = rng.normal(size=(4, 5))
        got_out, got_attn = attention_forward(q_in, kv_in, w)
        exp_out, exp_attn = attention_oracle(q_in, kv_in, w)
        assert np.allclose(got_out, exp_out, rtol=RTOL)
        assert np.allclose(got_attn, exp_attn, rtol=RTOL)

    def test_matches_oracle_with_rope(self):
        rng = np.random.default_rng(11)
        w = rand_attention_weights(rng, d_q=6, d_kv=6, n_heads=2, d_head=4, d_out=6)
        x = rng.normal(size=(5, 6))
        pos = np.arange(5, dtype=np.float64)
        got_out, got_attn = attention_forward(x, x, w, positions_q=pos, positions_k=pos)
        exp_out, exp_attn = attention_oracle(x, x, w, pos_q=pos, pos_k=pos)
        assert np.allclose(got_out, exp_out, rtol=RTOL)
        assert np.allclose(got_attn, exp_attn, rtol=RTOL)

    def test_rows_are_convex(self):
        rng = np.random.default_rng(12)
        w = rand_attention_weights(rng, d_q=4, d_kv=4, n_heads=3, d_head=2, d_out=4)
        for _ in range(10):
            q_in = rng.normal(size=(3, 4)) * 5
            kv_in = rng.normal(size=(6, 4)) * 5
            _, attn = attention_forward(q_in, kv_in, w)
            assert attn.shape == (3, 3, 6)
            assert np.all(attn >= 0)
            assert np.allclose(np.sum(attn, axis=-1), 1.0)

    def test_head_count_validated(self):
        rng = np.random.default_rng(13)
        with pytest.raises(ValueError):
            AttentionWeights(
                wq=rng.normal(size=(4, 9)), wk=rng.normal(size=(4, 9)),
                wv=rng.normal(size=(4, 9)), wo=rng.normal(size=(9, 4)), n_heads=2,
            )


class TestSpectralCrossAttention:
    def test_shapes_and_per_frame_equivalence(self):
        rng = np.random.default_rng(20)
        k_latents, d_latent, c, f, t = 2, 6, 5, 4, 3
        w = rand_attention_weights(rng, d_q=d_latent, d_kv=f, n_heads=2,
                                    d_head=4, d_out=d_latent)
        latents = rng.normal(size=(k_latents, d_latent))
        features = rng.normal(size=(t, c, f))
        pos = np.arange(k_latents, dtype=np.float64)
        out, attn = sca_forward(latents, features, w, positions=pos)
        assert out.shape == (t, k_latents, d_latent)
        assert attn.shape == (t, 2, k_latents, c)
        exp_out, exp_attn = attention_oracle(latents, features[1], w, pos_q=pos)
        assert np.allclose(out[1], exp_out, rtol=RTOL)
        assert np.allclose(attn[1], exp_attn, rtol=RTOL)

    def test_feature_rank_checked(self):
        rng = np.random.default_rng(21)
        w = rand_attention_weights(rng, 4, 4, 2, 2, 4)
        with pytest.raises(ValueError):
            sca_forward(rng.normal(size=(2, 4)), rng.normal(size=(3, 4)), w)


class TestFeedForward:
    def test_elementwise_scalar(self):
        rng = np.random.default_rng(30)
        d, dff = 4, 6
        h = rng.normal(size=(3, d))
        w1 = rng.normal(size=(dff, d))
        w2 = rng.normal(size=dff)
        got = ffn_forward(h, w1, w2)
        assert got.shape == (3, dff)
        for i in range(3):
            for r in range(dff):
                pre = sum(h[i, j] * w1[r, j] for j in range(d))
                assert got[i, r] == pytest.approx(max(pre, 0.0) * w2[r], rel=RTOL,
                                                  abs=1e-12)

    def test_projection_scalar(self):
        rng = np.random.default_rng(31)
        d, dff, dout = 4, 6, 5
        h = rng.normal(size=(2, d))
        w1 = rng.normal(size=(dff, d))
        w2 = rng.normal(size=(dout, dff))
        got = ffn_forward(h, w1, w2, mode="projection")
        for i in range(2):
            hidden = [max(sum(h[i, j] * w1[r, j] for j in range(d)), 0.0)
                      for r in range(dff)]
            for o in range(dout):
                exp = sum(w2[o, r] * hidden[r] for r in range(dff))
                assert got[i, o] == pytest.approx(exp, rel=RTOL, abs=1e-12)

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            ffn_forward(np.zeros((2, 4)), np.zeros((6, 4)), np.zeros(5))
        with pytest.raises(ValueError):
            ffn_forward(np.zeros((2, 4)), np.zeros((6, 4)), np.zeros((5, 7)),
                        mode="projection")
        with pytest.raises(ValueError):
            ffn_forward(np.zeros((2, 4)), np.zeros((6, 4)), np.zeros(6), mode="banana")


class TestExperts:
    def test_expert_matches_oracle(self):
        rng = np.random.default_rng(40)
        expert = rand_experts(rng, 1, 4, 6)[0]
        x = rng.normal(size=(3, 4))
        got = expert_forward(x, expert)
        for i in range(3):
            assert np.allclose(got[i], expert_oracle(x[i], expert), rtol=RTOL)

    def test_expert_shape_validation(self):
        rng = np.random.default_rng(41)
        with pytest.raises(ValueError):
            ExpertWeights(w1=rng.normal(size=(6, 4)), v_gate=rng.normal(size=(5, 4)),
                          w2=rng.normal(size=(4, 6)))
        with pytest.raises(ValueError):
            ExpertWeights(w1=rng.normal(size=(6, 4)), v_gate=rng.normal(size=(6, 4)),
                          w2=rng.normal(size=(6, 4)))

    def test_moe_matches_oracle(self):
        rng = np.random.default_rng(42)
        d, dff, n = 4, 6, 5
        experts = rand_experts(rng, n, d, dff)
        gate_w = rng.normal(size=(d, n))
        tokens = rng.normal(size=(7, d))
        got_out, trace = moe_forward(tokens, gate_w, experts, top_k=2)
        exp_out, exp_idx, exp_gw = moe_oracle(tokens, gate_w, experts, 2)
        assert np.allclose(got_out, exp_out, rtol=RTOL)
        assert np.array_equal(trace.indices, exp_idx)
        assert np.allclose(trace.gate_weights, exp_gw, rtol=RTOL)

    def test_top1_equals_argmax_expert(self):
        rng = np.random.default_rng(43)
        d, dff, n = 4, 6, 4
        experts = rand_experts(rng, n, d, dff)
        gate_w = rng.normal(size=(d, n))
        tokens = rng.normal(size=(5, d))
        out, trace = moe_forward(tokens, gate_w, experts, top_k=1)
        logits = tokens @ gate_w
        for i in range(5):
            e = int(np.argmax(logits[i]))
            assert trace.indices[i, 0] == e
            assert trace.gate_weights[i, 0] == pytest.approx(1.0)
            assert np.allclose(out[i], expert_forward(tokens[i], experts[e]),
                               rtol=RTOL)

    def test_tie_breaks_toward_lower_index(self):
        d, dff, n = 2, 3, 3
        rng = np.random.default_rng(44)
        experts = rand_experts(rng, n, d, dff)
        # Zero gate makes every logit exactly 0: a three-way tie.
        gate_w = np.zeros((d, n))
        _, trace = moe_forward(np.ones((1, d)), gate_w, experts, top_k=2)
        assert list(trace.indices[0]) == [0, 1]
        assert np.allclose(trace.gate_weights[0], [0.5, 0.5])

    def test_gate_weights_convex(self):
        rng = np.random.default_rng(45)
        experts = rand_experts(rng, 8, 4, 6)
        gate_w = rng.normal(size=(4, 8))
        _, trace = moe_forward(rng.normal(size=(9, 4)), gate_w, experts, top_k=2)
        assert np.all(trace.gate_weights > 0)
        assert np.allclose(np.sum(trace.gate_weights, axis=-1), 1.0)

    def test_leading_shapes(self):
        rng = np.random.default_rng(46)
        experts = rand_experts(rng, 3, 4, 5)
        gate_w = rng.normal(size=(4, 3))
        one = rng.normal(size=4)
        out1, trace1 = moe_forward(one, gate_w, experts)
        assert out1.shape == (4,) and trace1.indices.shape == (2,)
        grid = rng.normal(size=(2, 3, 4))
        out2, trace2 = moe_forward(grid, gate_w, experts)
        assert out2.shape == (2, 3, 4) and trace2.indices.shape == (2, 3, 2)
        # Grid routing equals flattened routing.
        flat_out, _ = moe_forward(grid.reshape(6, 4), gate_w, experts)
        assert np.allclose(out2.reshape(6, 4), flat_out)

    def test_top_k_validated(self):
        rng = np.random.default_rng(47)
        experts = rand_experts(rng, 3, 4, 5)
        gate_w = rng.normal(size=(4, 3))
        with pytest.raises(ValueError):
            moe_forward(np.zeros(4), gate_w, experts, top_k=0)
        with pytest.raises(ValueError):
            moe_forward(np.zeros(4), gate_w, experts, top_k=4)


class TestFrontendShapes:
    def test_mel_frontend(self):
        assert frontend_shapes(frontend_ymt3()) == (256, 512)

    def test_linear_frontend_with_pre_encoder(self):
        assert frontend_shapes(frontend_yptf()) == (110, 128, 128)

    def test_hop_equal_to_input_gives_one_frame(self):
        cfg = FrontendConfig(codec="mel", hop_length=32767, n_bins=64)
        assert frontend_shapes(cfg) == (1, 64)

    def test_ceil_division(self):
        cfg = FrontendConfig(codec="mel", hop_length=100, n_bins=16,
                             input_frames=101)
        assert frontend_shapes(cfg) == (2, 16)

    def test_codec_validated(self):
        with pytest.raises(ValueError):
            FrontendConfig(codec="wavelet", hop_length=128, n_bins=512)

    def test_pre_encoder_divisibility(self):
        with pytest.raises(ValueError):
            FrontendConfig(codec="linear", hop_length=300, n_bins=1020,
                           pre_encoder=True)


class TestParameterCounts:
    def test_dense_encoder_layer_arithmetic(self):
        counts = count_parameters(model_config("ymt3"))
        c = counts.components
        # Per layer: attention 4 * 512 * 384, gated FFN 3 * 512 * 1024,
        # two norm scales.
        layer = 4 * 512 * 384 + 3 * 512 * 1024 + 2 * 512
        assert layer == 2_360_320
        assert c["encoder.layers"] == 8 * layer
        assert c["encoder.input_proj"] == 512 * 512
        assert c["encoder.final_norm"] == 512
        assert counts.encoder == 19_145_216

    def test_decoder_layer_arithmetic(self):
        counts = count_parameters(model_config("ymt3"))
        c = counts.components
        layer = 2 * (4 * 512 * 384) + 3 * 512 * 1024 + 3 * 512
        assert layer == 3_147_264
        assert c["decoder.layers"] == 8 * layer
        assert c["decoder.embedding"] == 595 * 512
        assert c["lm_head"] == 595 * 512
        assert counts.decoder == 25_483_264

    def test_ymt3_total(self):
        counts = count_parameters(model_config("ymt3"))
        assert counts.total == 44_933_120
        assert counts.active_total == counts.total  # no sparse experts

    def test_perceiver_block_arithmetic(self):
        counts = count_parameters(model_config("yptf"))
        c = counts.components
        attn = 4 * 128 * 128
        sca = attn + 2 * 128
        ffn = 512 * 128 + 512  # elementwise form: matrix plus vector
        sublayer = attn + 2 * 128 + ffn
        block = sca + 4 * sublayer
        assert block == 593_152
        assert c["encoder.blocks"] == 3 * block
        assert c["encoder.latent_array"] == 26 * 128
        assert counts.encoder == 1_782_912

    def test_perceiver_fixed_extras(self):
        counts = count_parameters(model_config("yptf"))
        c = counts.components
        # Conv pre-encoder: one 3x3x1x128 conv, five 3x3x128x128 convs,
        # six norms with two vectors of 128 each.
        assert c["pre_encoder"] == 9 * 128 + 5 * 9 * 128 * 128 + 6 * 2 * 128
        assert c["pre_encoder"] == 739_968
        # 13 channels x (2 latents x 128) x decoder width 512.
        assert c["encoder.channel_proj"] == 13 * 256 * 512
        assert c["encoder.channel_proj"] == 1_703_936

    def test_yptf_total(self):
        counts = count_parameters(model_config("yptf"))
        assert counts.total == 30_014_720

    def test_moe_expert_arithmetic(self):
        counts = count_parameters(model_config("yptf_moe"))
        c = counts.components
        expert = 3 * 448 * 128
        ffn = 128 * 8 + 8 * expert
        assert ffn == 1_377_280
        attn = 4 * 128 * 128
        block = (attn + 2 * 128) + 4 * (attn + 2 * 128 + ffn)
        assert c["encoder.blocks"] == 3 * block
        assert counts.encoder == 17_517_696

    def test_moe_totals_and_active(self):
        counts = count_parameters(model_config("yptf_moe"))
        assert counts.total == 45_749_504
        inactive = 3 * 4 * 6 * (3 * 448 * 128)
        assert counts.active_total == counts.total - inactive
        assert counts.active_total == 33_363_200
        assert counts.active_encoder == counts.encoder - inactive

    def test_moe_total_close_to_dense_baseline(self):
        moe = count_parameters(model_config("yptf_moe")).total
        base = count_parameters(model_config("ymt3")).total
        assert 1.015 <= moe / base <= 1.035

    def test_components_sum_to_total(self):
        for name in ("ymt3", "yptf", "yptf_moe"):
            counts = count_parameters(model_config(name))
            assert sum(counts.components.values()) == counts.total

    def test_unknown_model(self):
        with pytest.raises(ValueError):
            model_config("ymt4")


class TestWeightFiles:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(50)
        tensors = {
            "a.w1": rng.normal(size=(3, 4)),
            "b.vec": rng.normal(size=7),
            "c.scalar": np.array(2.5),
        }
        path = tmp_path / "weights.f64"
        save_weights(path, tensors)
        loaded = load_weights(path)
        assert set(loaded) == set(tensors)
        for name in tensors:
            assert loaded[name].shape == np.asarray(tensors[name]).shape
            assert np.array_equal(loaded[name], tensors[name])

    def test_bytes_deterministic(self, tmp_path):
        tensors = {"x": np.arange(6, dtype=np.float64).reshape(2, 3),
                   "y": np.ones(2)}
        p1, p2 = tmp_path / "w1.f64", tmp_path / "w2.f64"
        save_weights(p1, tensors)
        save_weights(p2, dict(reversed(list(tensors.items()))))
        assert p1.read_bytes() == p2.read_bytes()
        assert (tmp_path / "w1.f64.json").read_text() == (
            (tmp_path / "w2.f64.json").read_text().replace("w2", "w1")
        )

    def test_unknown_format_rejected(self, tmp_path):
        path = tmp_path / "w.f64"
        save_weights(path, {"x": np.ones(2)})
        sidecar = path.with_name("w.f64.json")
        sidecar.write_text(
            sidecar.read_text().replace("amtkit-weights-v1", "other"),
            encoding="utf-8",
        )
        with pytest.raises(ValueError):
            load_weights(path)
