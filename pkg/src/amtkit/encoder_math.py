"""Reference math for the encoder stacks: frontend shapes, attention and
feed-forward kernels, mixture-of-experts routing, and closed-form
parameter counts.

Everything here is plain float64 numpy, written for auditability rather
than speed: these functions define the semantics that a trained
implementation must reproduce, and back the parameter accounting that
pins down each architecture variant.

Two encoder families are covered:

  * a dense stack of standard pre-norm transformer blocks over
    spectrogram frames;
  * a perceiver-style stack that cross-attends a small latent array onto
    per-frame spectral channels (spectral cross attention), then applies
    latent and temporal self-attention sub-blocks, optionally with
    mixture-of-experts feed-forwards.

The feed-forward of the perceiver stack is the literal elementwise form
ReLU(h W1^T) * w2 with a vector w2: this is the variant whose parameter
count matches the reference model sizes. The conventional two-matrix
projection form is available behind ``mode="projection"``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from amtkit.codec import Vocabulary

# ---------------------------------------------------------------------------
# Frontend shape contracts


@dataclass(frozen=True)
class FrontendConfig:
    """Spectrogram frontend and optional convolutional pre-encoder."""

    codec: str  # "mel" | "linear"
    hop_length: int
    n_bins: int
    pre_encoder: bool = False
    sample_rate: int = 16000
    n_fft: int = 2048
    input_frames: int = 32767
    pre_channels: int = 128
    pre_blocks: int = 3
    pool: tuple[int, int] = (1, 2)
    kernel: tuple[int, int] = (3, 3)
    convs_per_block: int = 2

    def __post_init__(self) -> None:
        if self.codec not in ("mel", "linear"):
            raise ValueError(f"unknown codec {self.codec!r}")
        if self.hop_length < 1 or self.n_bins < 1 or self.input_frames < 1:
            raise ValueError("hop_length, n_bins, input_frames must be positive")
        if self.pre_encoder:
            shrink = self.pool[1] ** self.pre_blocks
            if self.n_bins % shrink:
                raise ValueError(
                    f"n_bins {self.n_bins} not divisible by pooled factor {shrink}"
                )


def frontend_ymt3() -> FrontendConfig:
    return FrontendConfig(codec="mel", hop_length=128, n_bins=512)


def frontend_yptf() -> FrontendConfig:
    return FrontendConfig(codec="linear", hop_length=300, n_bins=1024, pre_encoder=True)


def frontend_shapes(cfg: FrontendConfig) -> tuple[int, ...]:
    """Feature shape entering the encoder, excluding the batch axis.

    Frames are t = ceil(input_frames / hop_length). Without a
    pre-encoder the shape is (t, n_bins); with one, frequency is pooled
    by pool[1] per block into (t, pre_channels, n_bins / pool_factor).
    """
    t = math.ceil(cfg.input_frames / cfg.hop_length)
    if not cfg.pre_encoder:
        return (t, cfg.n_bins)
    f = cfg.n_bins // (cfg.pool[1] ** cfg.pre_blocks)
    return (t, cfg.pre_channels, f)


# ---------------------------------------------------------------------------
# Kernels


def rms_norm(x: np.ndarray, weight: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Root-mean-square norm over the last axis with a learned scale."""
    x = np.asarray(x, dtype=np.float64)
    scale = np.sqrt(np.mean(np.square(x), axis=-1, keepdims=True) + eps)
    return (x / scale) * np.asarray(weight, dtype=np.float64)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=axis, keepdims=True)


def silu(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x / (1.0 + np.exp(-x))


def sinusoidal_positions(length: int, dim: int, base: float = 10000.0) -> np.ndarray:
    """Classic fixed position encoding: sin on even, cos on odd columns."""
    if dim % 2:
        raise ValueError("dim must be even")
    positions = np.arange(length, dtype=np.float64)[:, None]
    freqs = np.power(base, -np.arange(0, dim, 2, dtype=np.float64) / dim)[None, :]
    angles = positions * freqs
    out = np.zeros((length, dim), dtype=np.float64)
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out


def rope_rotate(
    x: np.ndarray, positions: np.ndarray | None = None, base: float = 10000.0
) -> np.ndarray:
    """Rotary position embedding over the last axis.

    Adjacent feature pairs (2i, 2i+1) rotate by angle pos * base^(-2i/d).
    ``x`` is (..., seq, dim) with even dim; ``positions`` defaults to
    0..seq-1. Rotation preserves the norm of every pair, and the inner
    product of two rotated vectors depends on their positions only
    through the difference.
    """
    x = np.asarray(x, dtype=np.float64)
    dim = x.shape[-1]
    if dim % 2:
        raise ValueError("dim must be even")
    seq = x.shape[-2]
    if positions is None:
        positions = np.arange(seq, dtype=np.float64)
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape != (seq,):
        raise ValueError(f"positions shape {positions.shape} != ({seq},)")
    freqs = np.power(base, -np.arange(dim // 2, dtype=np.float64) * 2.0 / dim)
    angles = positions[:, None] * freqs[None, :]  # (seq, dim/2)
    cos = np.cos(angles)
    sin = np.sin(angles)
    even = x[..., 0::2]
    odd = x[..., 1::2]
    out = np.empty_like(x)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


@dataclass(frozen=True)
class AttentionWeights:
    """Projection matrices of one multi-head attention.

    wq: (d_q_in, H * d_head); wk, wv: (d_kv_in, H * d_head);
    wo: (H * d_head, d_out).
    """

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    n_heads: int

    def __post_init__(self) -> None:
        inner = self.wq.shape[1]
        if inner % self.n_heads:
            raise ValueError(f"inner dim {inner} not divisible by {self.n_heads} heads")
        if self.wk.shape[1] != inner or self.wv.shape[1] != inner:
            raise ValueError("wq/wk/wv inner dims differ")
        if self.wo.shape[0] != inner:
            raise ValueError("wo input dim != attention inner dim")


def attention_forward(
    query_in: np.ndarray,
    key_value_in: np.ndarray,
    weights: AttentionWeights,
    positions_q: np.ndarray | None = None,
    positions_k: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Scaled dot-product multi-head attention.

    ``query_in`` is (sq, d_q_in); ``key_value_in`` is (sk, d_kv_in).
    When positions are given, rotary embedding is applied per head to
    the corresponding projections. Returns the output (sq, d_out) and
    the attention weights (H, sq, sk), each row a convex combination.
    """
    h = weights.n_heads
    d_head = weights.wq.shape[1] // h
    q = np.asarray(query_in, dtype=np.float64) @ weights.wq
    k = np.asarray(key_value_in, dtype=np.float64) @ weights.wk
    v = np.asarray(key_value_in, dtype=np.float64) @ weights.wv
    sq, sk = q.shape[0], k.shape[0]
    q = q.reshape(sq, h, d_head).transpose(1, 0, 2)  # (H, sq, dh)
    k = k.reshape(sk, h, d_head).transpose(1, 0, 2)
    v = v.reshape(sk, h, d_head).transpose(1, 0, 2)
    if positions_q is not None:
        q = rope_rotate(q, positions_q)
    if positions_k is not None:
        k = rope_rotate(k, positions_k)
    scores = q @ k.transpose(0, 2, 1) / math.sqrt(d_head)  # (H, sq, sk)
    attn = softmax(scores, axis=-1)
    context = attn @ v  # (H, sq, dh)
    merged = context.transpose(1, 0, 2).reshape(sq, h * d_head)
    return merged @ weights.wo, attn


def sca_forward(
    latents: np.ndarray,
    features: np.ndarray,
    weights: AttentionWeights,
    positions: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Spectral cross attention: latents attend to per-frame channels.

    ``latents`` is (k, d) and is shared across frames; ``features`` is
    (t, c, f) with f equal to the latent width after projection inputs
    are set up, i.e. wk/wv map f to the attention inner dim. Attention
    runs independently at each frame over the c channels. Returns
    (t, k, d_out) outputs and (t, H, k, c) attention maps.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3:
        raise ValueError(f"features must be (t, c, f), got {features.shape}")
    outs = []
    attns = []
    for frame in features:
        out, attn = attention_forward(latents, frame, weights,
                                      positions_q=positions, positions_k=None)
        outs.append(out)
        attns.append(attn)
    return np.stack(outs), np.stack(attns)


def ffn_forward(
    h: np.ndarray,
    w1: np.ndarray,
    w2: np.ndarray,
    mode: str = "elementwise",
) -> np.ndarray:
    """Feed-forward with ReLU inner activation.

    elementwise: ReLU(h W1^T) * w2 with w2 a (d_ff,) vector; the output
    lives in the hidden width. projection: ReLU(h W1^T) W2^T with W2 a
    (d_out, d_ff) matrix.
    """
    h = np.asarray(h, dtype=np.float64)
    w1 = np.asarray(w1, dtype=np.float64)
    w2 = np.asarray(w2, dtype=np.float64)
    hidden = np.maximum(h @ w1.T, 0.0)
    if mode == "elementwise":
        if w2.ndim != 1 or w2.shape[0] != w1.shape[0]:
            raise ValueError(f"elementwise w2 must be ({w1.shape[0]},), got {w2.shape}")
        return hidden * w2
    if mode == "projection":
        if w2.ndim != 2 or w2.shape[1] != w1.shape[0]:
            raise ValueError(f"projection w2 must be (d_out, {w1.shape[0]})")
        return hidden @ w2.T
    raise ValueError(f"unknown ffn mode {mode!r}")


@dataclass(frozen=True)
class ExpertWeights:
    """One gated-linear expert: w1, v_gate (d_ff, d); w2 (d, d_ff)."""

    w1: np.ndarray
    v_gate: np.ndarray
    w2: np.ndarray

    def __post_init__(self) -> None:
        if self.w1.shape != self.v_gate.shape:
            raise ValueError("w1 and v_gate shapes differ")
        if self.w2.shape != (self.w1.shape[1], self.w1.shape[0]):
            raise ValueError(
                f"w2 shape {self.w2.shape} != ({self.w1.shape[1]}, {self.w1.shape[0]})"
            )


def expert_forward(h: np.ndarray, expert: ExpertWeights) -> np.ndarray:
    """Gated-linear unit expert: (SiLU(h W1^T) * (h V^T)) W2^T."""
    h = np.asarray(h, dtype=np.float64)
    return (silu(h @ expert.w1.T) * (h @ expert.v_gate.T)) @ expert.w2.T


@dataclass(frozen=True)
class RoutingTrace:
    """Per-token expert routing: chosen indices and their gate weights."""

    indices: np.ndarray  # (..., top_k), int64
    gate_weights: np.ndarray  # (..., top_k), sums to 1 over the last axis


def moe_forward(
    h: np.ndarray,
    gate_w: np.ndarray,
    experts: Sequence[ExpertWeights],
    top_k: int = 2,
) -> tuple[np.ndarray, RoutingTrace]:
    """Top-k mixture of experts with softmax over the selected logits.

    Gate logits are h @ gate_w; the top_k experts per token (ties broken
    toward the lower expert index) are combined with weights softmaxed
    over just those k logits. Only selected experts contribute.
    """
    n_experts = len(experts)
    if not 1 <= top_k <= n_experts:
        raise ValueError(f"top_k {top_k} outside [1, {n_experts}]")
    h = np.asarray(h, dtype=np.float64)
    gate_w = np.asarray(gate_w, dtype=np.float64)
    if gate_w.shape != (h.shape[-1], n_experts):
        raise ValueError(
            f"gate shape {gate_w.shape} != ({h.shape[-1]}, {n_experts})"
        )
    lead_shape = h.shape[:-1]
    flat = h.reshape(-1, h.shape[-1])
    logits = flat @ gate_w  # (n_tokens, n)
    order = np.argsort(-logits, axis=-1, kind="stable")
    indices = order[:, :top_k]  # (n_tokens, k)
    selected = np.take_along_axis(logits, indices, axis=-1)
    weights = softmax(selected, axis=-1)

    out = np.zeros((flat.shape[0], experts[0].w2.shape[0]), dtype=np.float64)
    for slot in range(top_k):
        slot_index = indices[:, slot]
        slot_weight = weights[:, slot]
        for e in range(n_experts):
            mask = slot_index == e
            if not np.any(mask):
                continue
            contribution = expert_forward(flat[mask], experts[e])
            out[mask] += slot_weight[mask][:, None] * contribution
    d_out = experts[0].w2.shape[0]
    return (
        out.reshape(*lead_shape, d_out),
        RoutingTrace(
            indices=indices.astype(np.int64).reshape(*lead_shape, top_k),
            gate_weights=weights.reshape(*lead_shape, top_k),
        ),
    )


# ---------------------------------------------------------------------------
# Architecture configs and parameter accounting


@dataclass(frozen=True)
class DenseStackConfig:
    """Standard pre-norm transformer stack dimensions."""

    layers: int = 8
    d_model: int = 512
    n_heads: int = 6
    d_head: int = 64
    d_ff: int = 1024
    gated_ffn: bool = True


@dataclass(frozen=True)
class MoEConfig:
    n_experts: int = 8
    top_k: int = 2
    d_ff_expert: int = 448  # 3.5x the latent width, Mixtral-style


@dataclass(frozen=True)
class PerceiverStackConfig:
    """Perceiver-style encoder dimensions.

    Each block is one spectral cross attention plus ``latent_layers``
    latent and ``temporal_layers`` temporal self-attention sub-blocks.
    The layer count reported for the stack is blocks * (1 + latent +
    temporal) sub-blocks.
    """

    blocks: int = 3
    n_latents: int = 26
    d_latent: int = 128
    n_heads: int = 8
    d_ff: int = 512
    latent_layers: int = 2
    temporal_layers: int = 2
    moe: MoEConfig | None = None


@dataclass(frozen=True)
class ModelConfig:
    """A full encoder-decoder variant for parameter accounting."""

    name: str
    encoder_type: str  # "dense" | "perceiver"
    frontend: FrontendConfig
    decoder: DenseStackConfig
    dense_encoder: DenseStackConfig | None = None
    perceiver_encoder: PerceiverStackConfig | None = None
    vocab_size: int = field(default_factory=lambda: Vocabulary.full_plus().size)
    target_channels: int = 13
    latents_per_channel: int = 2

    def __post_init__(self) -> None:
        if self.encoder_type == "dense" and self.dense_encoder is None:
            raise ValueError("dense encoder config missing")
        if self.encoder_type == "perceiver" and self.perceiver_encoder is None:
            raise ValueError("perceiver encoder config missing")
        if self.encoder_type not in ("dense", "perceiver"):
            raise ValueError(f"unknown encoder type {self.encoder_type!r}")


def model_config(name: str) -> ModelConfig:
    """Preset architecture variants."""
    decoder = DenseStackConfig()
    if name == "ymt3":
        return ModelConfig(
            name=name,
            encoder_type="dense",
            frontend=frontend_ymt3(),
            decoder=decoder,
            dense_encoder=DenseStackConfig(),
        )
    if name == "yptf":
        return ModelConfig(
            name=name,
            encoder_type="perceiver",
            frontend=frontend_yptf(),
            decoder=decoder,
            perceiver_encoder=PerceiverStackConfig(),
        )
    if name == "yptf_moe":
        return ModelConfig(
            name=name,
            encoder_type="perceiver",
            frontend=frontend_yptf(),
            decoder=decoder,
            perceiver_encoder=PerceiverStackConfig(moe=MoEConfig()),
        )
    raise ValueError(f"unknown model {name!r}")


@dataclass(frozen=True)
class ParameterCounts:
    """Exact integer parameter counts by component."""

    total: int
    encoder: int
    decoder: int
    active_total: int
    active_encoder: int
    components: dict[str, int]

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "encoder": self.encoder,
            "decoder": self.decoder,
            "active_total": self.active_total,
            "active_encoder": self.active_encoder,
            "components": dict(sorted(self.components.items())),
        }


def _attention_params(d_q: int, d_kv: int, inner: int, d_out: int) -> int:
    return d_q * inner + 2 * d_kv * inner + inner * d_out


def _dense_encoder_params(cfg: DenseStackConfig, input_dim: int) -> dict[str, int]:
    inner = cfg.n_heads * cfg.d_head
    attn = _attention_params(cfg.d_model, cfg.d_model, inner, cfg.d_model)
    ffn_mats = 3 if cfg.gated_ffn else 2
    ffn = ffn_mats * cfg.d_model * cfg.d_ff
    layer = attn + ffn + 2 * cfg.d_model  # two pre-norms
    return {
        "encoder.input_proj": input_dim * cfg.d_model,
        "encoder.layers": cfg.layers * layer,
        "encoder.final_norm": cfg.d_model,
    }


def _decoder_params(cfg: DenseStackConfig, vocab_size: int) -> dict[str, int]:
    inner = cfg.n_heads * cfg.d_head
    attn = _attention_params(cfg.d_model, cfg.d_model, inner, cfg.d_model)
    ffn_mats = 3 if cfg.gated_ffn else 2
    ffn = ffn_mats * cfg.d_model * cfg.d_ff
    layer = 2 * attn + ffn + 3 * cfg.d_model  # self, cross, three pre-norms
    return {
        "decoder.embedding": vocab_size * cfg.d_model,
        "decoder.layers": cfg.layers * layer,
        "decoder.final_norm": cfg.d_model,
    }


def _perceiver_ffn_params(cfg: PerceiverStackConfig) -> tuple[int, int]:
    """(total params, params in never-selected experts) of one FFN slot."""
    d = cfg.d_latent
    if cfg.moe is None:
        # Literal elementwise form: W1 (d_ff, d) plus vector w2 (d_ff,).
        return cfg.d_ff * d + cfg.d_ff, 0
    expert = 3 * cfg.moe.d_ff_expert * d
    total = d * cfg.moe.n_experts + cfg.moe.n_experts * expert
    inactive = (cfg.moe.n_experts - cfg.moe.top_k) * expert
    return total, inactive


def _perceiver_encoder_params(cfg: PerceiverStackConfig) -> tuple[dict[str, int], int]:
    d = cfg.d_latent
    inner = d  # heads partition the latent width
    attn = _attention_params(d, d, inner, d)
    ffn, ffn_inactive = _perceiver_ffn_params(cfg)
    sublayer = attn + 2 * d + ffn  # attn norm + ffn norm
    sca = attn + 2 * d  # latent norm + feature norm
    per_block_sublayers = cfg.latent_layers + cfg.temporal_layers
    block = sca + per_block_sublayers * sublayer
    inactive = cfg.blocks * per_block_sublayers * ffn_inactive
    components = {
        "encoder.latent_array": cfg.n_latents * d,
        "encoder.blocks": cfg.blocks * block,
        "encoder.final_norm": d,
    }
    return components, inactive


def _pre_encoder_params(cfg: FrontendConfig) -> int:
    """Conv stack: bias-free 3x3 convs, each followed by a norm."""
    kh, kw = cfg.kernel
    c = cfg.pre_channels
    n_convs = cfg.pre_blocks * cfg.convs_per_block
    first = kh * kw * 1 * c
    rest = (n_convs - 1) * kh * kw * c * c
    norms = n_convs * 2 * c
    return first + rest + norms


def count_parameters(model: ModelConfig) -> ParameterCounts:
    """Exact parameter count of one architecture variant.

    All linear maps are bias-free and norms carry a single scale vector,
    matching the conventions the reference totals imply. The decoder
    vocabulary head is untied from the embedding.
    """
    components: dict[str, int] = {}
    inactive = 0
    if model.encoder_type == "dense":
        components.update(
            _dense_encoder_params(model.dense_encoder, model.frontend.n_bins)
        )
    else:
        enc_components, inactive = _perceiver_encoder_params(model.perceiver_encoder)
        components.update(enc_components)
        components["pre_encoder"] = _pre_encoder_params(model.frontend)
        # Group-linear projection: each target channel maps its pair of
        # latents (latents_per_channel * d_latent) into the decoder width.
        d_latent = model.perceiver_encoder.d_latent
        components["encoder.channel_proj"] = (
            model.target_channels
            * (model.latents_per_channel * d_latent)
            * model.decoder.d_model
        )
    components.update(_decoder_params(model.decoder, model.vocab_size))
    components["lm_head"] = model.vocab_size * model.decoder.d_model

    encoder = sum(v for k, v in components.items() if k.startswith("encoder.") and
                  k != "encoder.channel_proj")
    decoder = sum(v for k, v in components.items() if k.startswith("decoder."))
    total = sum(components.values())
    return ParameterCounts(
        total=total,
        encoder=encoder,
        decoder=decoder,
        active_total=total - inactive,
        active_encoder=encoder - inactive,
        components=components,
    )


# ---------------------------------------------------------------------------
# Weight fixture serialization

WEIGHTS_FILE_FORMAT = "amtkit-weights-v1"


def save_weights(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    """Writes named float64 tensors as one flat little-endian binary.

    A sidecar at ``<path>.json`` records per-tensor shapes and element
    offsets in insertion-independent (sorted) order.
    """
    path = Path(path)
    manifest: dict[str, dict] = {}
    payload = bytearray()
    offset = 0
    for name in sorted(tensors):
        array = np.asarray(tensors[name], dtype=np.float64)
        manifest[name] = {"shape": list(array.shape), "offset": offset}
        data = array.astype("<f8").tobytes(order="C")
        payload += data
        offset += array.size
    path.write_bytes(bytes(payload))
    sidecar = {"format": WEIGHTS_FILE_FORMAT, "dtype": "<f8", "tensors": manifest}
    Path(str(path) + ".json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_weights(path: str | Path) -> dict[str, np.ndarray]:
    """Reads a tensor file written by :func:`save_weights`."""
    path = Path(path)
    sidecar = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
    if sidecar.get("format") != WEIGHTS_FILE_FORMAT:
        raise ValueError(f"unknown weights format {sidecar.get('format')!r}")
    flat = np.frombuffer(path.read_bytes(), dtype="<f8")
    out: dict[str, np.ndarray] = {}
    for name, meta in sidecar["tensors"].items():
        shape = tuple(meta["shape"])
        size = int(np.prod(shape)) if shape else 1
        start = int(meta["offset"])
        out[name] = flat[start : start + size].reshape(shape).copy()
    return out
