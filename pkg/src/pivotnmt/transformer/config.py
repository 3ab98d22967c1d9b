"""Model configuration, the parameter inventory, and seeded initialization.

The parameter inventory (``parameter_shapes``) is the single source of truth
for which tensors a model of a given configuration owns; initialization,
gradient maps, Adam state and checkpoints all iterate over it in its
(deterministic) insertion order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import ConfigError

Parameters = dict[str, np.ndarray]


@dataclass(frozen=True)
class ModelConfig:
    src_vocab_size: int
    tgt_vocab_size: int
    num_layers: int = 2
    d_model: int = 64
    num_heads: int = 4
    d_ff: int = 128
    max_seq_len: int = 64
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.d_model % self.num_heads != 0:
            raise ConfigError(
                f"d_model={self.d_model} not divisible by num_heads={self.num_heads}"
            )
        if self.max_seq_len < 1:
            raise ConfigError(f"max_seq_len must be >= 1, got {self.max_seq_len}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        for name in ("src_vocab_size", "tgt_vocab_size", "num_layers", "d_model", "num_heads", "d_ff"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")

    @property
    def d_head(self) -> int:
        return self.d_model // self.num_heads


def _attention_shapes(prefix: str, d: int) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for proj in ("q", "k", "v", "o"):
        shapes[f"{prefix}.w{proj}"] = (d, d)
        shapes[f"{prefix}.b{proj}"] = (d,)
    return shapes


def _norm_shapes(prefix: str, d: int) -> dict[str, tuple[int, ...]]:
    return {f"{prefix}.gain": (d,), f"{prefix}.bias": (d,)}


def _ffn_shapes(prefix: str, d: int, d_ff: int) -> dict[str, tuple[int, ...]]:
    return {
        f"{prefix}.w1": (d, d_ff),
        f"{prefix}.b1": (d_ff,),
        f"{prefix}.w2": (d_ff, d),
        f"{prefix}.b2": (d,),
    }


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Complete parameter inventory for ``config``, path -> shape."""
    d, d_ff = config.d_model, config.d_ff
    shapes: dict[str, tuple[int, ...]] = {
        "src_embed.weight": (config.src_vocab_size, d),
        "tgt_embed.weight": (config.tgt_vocab_size, d),
    }
    for i in range(config.num_layers):
        p = f"encoder.layer{i}"
        shapes.update(_attention_shapes(f"{p}.self_attn", d))
        shapes.update(_norm_shapes(f"{p}.norm1", d))
        shapes.update(_ffn_shapes(f"{p}.ffn", d, d_ff))
        shapes.update(_norm_shapes(f"{p}.norm2", d))
    for i in range(config.num_layers):
        p = f"decoder.layer{i}"
        shapes.update(_attention_shapes(f"{p}.self_attn", d))
        shapes.update(_norm_shapes(f"{p}.norm1", d))
        shapes.update(_attention_shapes(f"{p}.cross_attn", d))
        shapes.update(_norm_shapes(f"{p}.norm2", d))
        shapes.update(_ffn_shapes(f"{p}.ffn", d, d_ff))
        shapes.update(_norm_shapes(f"{p}.norm3", d))
    shapes["output.weight"] = (d, config.tgt_vocab_size)
    shapes["output.bias"] = (config.tgt_vocab_size,)
    return shapes


def init_parameters(config: ModelConfig, seed: int) -> Parameters:
    """Seeded scaled-uniform initialization over the full inventory.

    Matrices get Glorot-uniform limits, embeddings uniform(+-sqrt(3/d_model));
    biases start at zero and norm gains at one.
    """
    rng = np.random.default_rng(seed)
    params: Parameters = {}
    for path, shape in parameter_shapes(config).items():
        leaf = path.rsplit(".", 1)[1]
        if leaf == "gain":
            params[path] = np.ones(shape, dtype=np.float64)
        elif leaf.startswith("b") or leaf == "bias":
            params[path] = np.zeros(shape, dtype=np.float64)
        elif "embed" in path:
            limit = np.sqrt(3.0 / config.d_model)
            params[path] = rng.uniform(-limit, limit, size=shape)
        else:
            fan_in, fan_out = shape[0], shape[1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params[path] = rng.uniform(-limit, limit, size=shape)
    return params


@lru_cache(maxsize=8)
def sinusoidal_positions(max_len: int, d_model: int) -> np.ndarray:
    """Fixed sinusoidal positional table, shape (max_len, d_model).

    Cached; callers must treat the returned array as read-only.
    """
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    dim = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, dim / d_model)
    table = np.zeros((max_len, d_model), dtype=np.float64)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle[:, : table[:, 1::2].shape[1]])
    return table
