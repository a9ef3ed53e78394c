"""Encoder-decoder transformer: attention, masks, forward pass, parameter math.

Post-layer-norm blocks, sinusoidal positional encoding, one token
embedding shared by encoder and decoder inputs, untied output
projection. All math runs on the autodiff Tensor type so training can
differentiate through the full forward pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError, EncodingError

MASK_FILL = -1e9  # float32-safe stand-in for -inf on blocked scores


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 256
    num_heads: int = 8
    d_ff: int = 256
    num_encoder_layers: int = 2
    num_decoder_layers: int = 2
    max_len: int = 40
    dropout: float = 0.0

    def __post_init__(self):
        for name in ("vocab_size", "d_model", "num_heads", "d_ff",
                     "num_encoder_layers", "num_decoder_layers", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_model % self.num_heads != 0:
            raise ConfigError(
                f"d_model={self.d_model} not divisible by num_heads={self.num_heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def d_k(self) -> int:
        return self.d_model // self.num_heads

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "d_model": self.d_model,
            "num_heads": self.num_heads,
            "d_ff": self.d_ff,
            "num_encoder_layers": self.num_encoder_layers,
            "num_decoder_layers": self.num_decoder_layers,
            "max_len": self.max_len,
            "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def _attention_shapes(d_model: int) -> list[tuple[str, tuple]]:
    shapes = []
    for which in ("q", "k", "v", "o"):
        shapes.append((f"w_{which}", (d_model, d_model)))
        shapes.append((f"b_{which}", (d_model,)))
    return shapes


def parameter_shapes(config: ModelConfig) -> dict[str, tuple]:
    """Every learnable tensor, in the canonical (checkpoint) order."""
    d, f, v = config.d_model, config.d_ff, config.vocab_size
    shapes: dict[str, tuple] = {"token_embedding": (v, d)}

    def add_block(prefix: str, decoder: bool) -> None:
        attn_prefixes = ["self_attn", "cross_attn"] if decoder else ["attn"]
        for ap in attn_prefixes:
            for name, shape in _attention_shapes(d):
                shapes[f"{prefix}.{ap}.{name}"] = shape
        shapes[f"{prefix}.ff.w1"] = (d, f)
        shapes[f"{prefix}.ff.b1"] = (f,)
        shapes[f"{prefix}.ff.w2"] = (f, d)
        shapes[f"{prefix}.ff.b2"] = (d,)
        n_norms = 3 if decoder else 2
        for i in range(1, n_norms + 1):
            shapes[f"{prefix}.ln{i}.scale"] = (d,)
            shapes[f"{prefix}.ln{i}.shift"] = (d,)

    for i in range(config.num_encoder_layers):
        add_block(f"enc{i}", decoder=False)
    for i in range(config.num_decoder_layers):
        add_block(f"dec{i}", decoder=True)
    shapes["output_projection.weight"] = (d, v)
    shapes["output_projection.bias"] = (v,)
    return shapes


def _scheme_for(name: str) -> str:
    if name.endswith(".scale"):
        return "ones"
    if name.endswith((".shift", ".bias")) or ".b_" in name or name.endswith((".b1", ".b2")):
        return "zeros"
    return "uniform-glorot"


def init_parameters(config: ModelConfig, seed: int, dtype=np.float32) -> dict[str, Tensor]:
    """Freshly initialized ModelParameters; deterministic per (config, seed)."""
    params = {}
    for name, shape in parameter_shapes(config).items():
        t = ad.seeded_init(shape, _scheme_for(name), ad.derive_seed(seed, name), dtype=dtype)
        t.requires_grad = True
        params[name] = t
    return params


def count_parameters(config: ModelConfig) -> int:
    """Closed-form trainable parameter count.

    Marginal cost per vocabulary token is 2*d_model + 1: one embedding
    row, one output-projection column, one bias element.
    """
    d, f, v = config.d_model, config.d_ff, config.vocab_size
    attn = 4 * d * d + 4 * d
    ff = d * f + f + f * d + d
    enc_layer = attn + ff + 2 * (2 * d)
    dec_layer = 2 * attn + ff + 3 * (2 * d)
    return (
        v * d
        + config.num_encoder_layers * enc_layer
        + config.num_decoder_layers * dec_layer
        + d * v
        + v
    )


_PE_CACHE: dict[tuple, np.ndarray] = {}


def positional_encoding(max_len: int, d_model: int, dtype=np.float32) -> Tensor:
    """Sinusoidal table: PE(pos, 2i)=sin(pos/10000^(2i/d)), odd columns cos."""
    if max_len < 1 or d_model < 1:
        raise ConfigError("positional_encoding arguments must be positive")
    key = (max_len, d_model, np.dtype(dtype).name)
    if key not in _PE_CACHE:
        pos = np.arange(max_len, dtype=np.float64)[:, None]
        i = np.arange(d_model, dtype=np.float64)[None, :]
        angle = pos / np.power(10000.0, (2.0 * (i // 2)) / d_model)
        table = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
        _PE_CACHE[key] = table.astype(dtype)
    return Tensor(_PE_CACHE[key].copy())


def make_masks(input_ids: np.ndarray, target_ids: np.ndarray, pad_id: int = 0):
    """Boolean masks, True = blocked.

    Returns (input padding mask [B,1,1,S], decoder self-attention mask
    [B,1,T,T] = look-ahead union target padding). The padding mask also
    serves decoder cross-attention over encoder keys.
    """
    input_ids = np.asarray(input_ids)
    target_ids = np.asarray(target_ids)
    padding = (input_ids == pad_id)[:, None, None, :]
    t = target_ids.shape[-1]
    look_ahead = np.triu(np.ones((t, t), dtype=bool), k=1)
    target_pad = (target_ids == pad_id)[:, None, None, :]
    combined = look_ahead[None, None, :, :] | target_pad
    return padding, combined


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor,
                                 d_k: int | None = None, mask=None):
    """softmax(QK^T / sqrt(d_k) + mask) V.

    Returns (output, attention_weights); weight rows sum to 1 over the
    unblocked keys.
    """
    if q.shape[-1] != k.shape[-1]:
        raise DimensionError(f"query width {q.shape} does not match key width {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"key count {k.shape} does not match value count {v.shape}")
    if d_k is None:
        d_k = q.shape[-1]
    scores = ad.matmul(q, ad.transpose(k)) * (1.0 / math.sqrt(d_k))
    if mask is not None:
        fill = np.where(np.asarray(mask, dtype=bool),
                        np.asarray(MASK_FILL, dtype=scores.dtype),
                        np.asarray(0.0, dtype=scores.dtype))
        scores = scores + Tensor(fill)
    weights = ad.softmax(scores, axis=-1)
    return ad.matmul(weights, v), weights


def _split_heads(x: Tensor, h: int) -> Tensor:
    """[..., n, d_model] -> [..., h, n, d_k]."""
    *lead, n, d = x.shape
    y = ad.reshape(x, (*lead, n, h, d // h))
    axes = list(range(len(lead) + 3))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    return ad.transpose(y, axes)


def _merge_heads(x: Tensor) -> Tensor:
    """[..., h, n, d_k] -> [..., n, h*d_k]."""
    *lead, h, n, dk = x.shape
    axes = list(range(len(lead) + 3))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    return ad.reshape(ad.transpose(x, axes), (*lead, n, h * dk))


def multi_head_attention(x_q: Tensor, x_k: Tensor, x_v: Tensor,
                         params: dict, h: int, mask=None) -> Tensor:
    """Concatenated h-head attention with per-head projected slices."""
    d_model = x_q.shape[-1]
    if d_model % h != 0:
        raise ConfigError(f"num_heads={h} does not divide d_model={d_model}")
    if params["w_q"].shape[0] != d_model:
        raise DimensionError(
            f"input width {d_model} does not match projection {params['w_q'].shape}"
        )
    q = ad.matmul(x_q, params["w_q"]) + params["b_q"]
    k = ad.matmul(x_k, params["w_k"]) + params["b_k"]
    v = ad.matmul(x_v, params["w_v"]) + params["b_v"]
    out, _ = scaled_dot_product_attention(
        _split_heads(q, h), _split_heads(k, h), _split_heads(v, h),
        d_k=d_model // h, mask=mask)
    return ad.matmul(_merge_heads(out), params["w_o"]) + params["b_o"]


def _sub(params: dict, prefix: str) -> dict:
    plen = len(prefix) + 1
    return {name[plen:]: t for name, t in params.items() if name.startswith(prefix + ".")}


def _feed_forward(x: Tensor, p: dict) -> Tensor:
    hidden = ad.relu(ad.matmul(x, p["w1"]) + p["b1"])
    return ad.matmul(hidden, p["w2"]) + p["b2"]


def _maybe_dropout(x: Tensor, rate: float, rng) -> Tensor:
    if rate > 0.0 and rng is not None:
        return ad.dropout(x, rate, rng)
    return x


def _encoder_layer(x: Tensor, p: dict, config: ModelConfig, mask, rng) -> Tensor:
    attn = multi_head_attention(x, x, x, _sub(p, "attn"), config.num_heads, mask)
    x = ad.layer_norm(x + _maybe_dropout(attn, config.dropout, rng),
                      p["ln1.scale"], p["ln1.shift"])
    ff = _feed_forward(x, _sub(p, "ff"))
    return ad.layer_norm(x + _maybe_dropout(ff, config.dropout, rng),
                         p["ln2.scale"], p["ln2.shift"])


def _decoder_layer(y: Tensor, enc_out: Tensor, p: dict, config: ModelConfig,
                   self_mask, cross_mask, rng) -> Tensor:
    self_attn = multi_head_attention(y, y, y, _sub(p, "self_attn"),
                                     config.num_heads, self_mask)
    y = ad.layer_norm(y + _maybe_dropout(self_attn, config.dropout, rng),
                      p["ln1.scale"], p["ln1.shift"])
    cross = multi_head_attention(y, enc_out, enc_out, _sub(p, "cross_attn"),
                                 config.num_heads, cross_mask)
    y = ad.layer_norm(y + _maybe_dropout(cross, config.dropout, rng),
                      p["ln2.scale"], p["ln2.shift"])
    ff = _feed_forward(y, _sub(p, "ff"))
    return ad.layer_norm(y + _maybe_dropout(ff, config.dropout, rng),
                         p["ln3.scale"], p["ln3.shift"])


def _embed(params: dict, config: ModelConfig, ids: np.ndarray, rng) -> Tensor:
    table = params["token_embedding"]
    x = ad.embedding(table, ids) * math.sqrt(config.d_model)
    pe = positional_encoding(ids.shape[-1], config.d_model, dtype=table.dtype)
    return _maybe_dropout(x + pe, config.dropout, rng)


def forward(params: dict, config: ModelConfig, input_ids: np.ndarray,
            target_ids_shifted: np.ndarray, dropout_rng=None) -> Tensor:
    """Teacher-forced pass: logits [batch, target_len, vocab].

    Decoder position t sees only target positions < t plus the full
    input; pass ``dropout_rng`` to enable dropout during training.
    """
    input_ids = np.asarray(input_ids)
    target_ids_shifted = np.asarray(target_ids_shifted)
    for ids in (input_ids, target_ids_shifted):
        if ids.size and (ids.min() < 0 or ids.max() >= config.vocab_size):
            raise EncodingError(
                f"token id outside [0, {config.vocab_size}) in model input"
            )
    padding_mask, combined_mask = make_masks(input_ids, target_ids_shifted)

    x = _embed(params, config, input_ids, dropout_rng)
    for i in range(config.num_encoder_layers):
        x = _encoder_layer(x, _sub(params, f"enc{i}"), config, padding_mask, dropout_rng)

    y = _embed(params, config, target_ids_shifted, dropout_rng)
    for i in range(config.num_decoder_layers):
        y = _decoder_layer(y, x, _sub(params, f"dec{i}"), config,
                           combined_mask, padding_mask, dropout_rng)

    return ad.matmul(y, params["output_projection.weight"]) + params["output_projection.bias"]
