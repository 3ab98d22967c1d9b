"""Encoder-decoder forward pass, token cross-entropy, and exact
reverse-mode gradients.

Layout follows the post-norm residual scheme: ``x = LN(x + sublayer(x))``.
Positional information is the fixed sinusoidal table. All arithmetic is
float64. ``forward`` computes logits only; ``loss_and_grads`` reruns it with
caches and walks the chain rule backwards by hand, kernel by kernel, which
keeps the whole gradient path explicit and finite-difference checkable.

Attention masks are boolean with True at positions that may be attended to.
Masked scores are replaced by ``-inf`` (never a large negative constant), so
masked weights are exactly zero and decoder outputs at position t are
bit-identical under any change of target inputs after t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..errors import InputError, ShapeError
from .config import ModelConfig, Parameters, parameter_shapes, sinusoidal_positions

LN_EPS = 1e-6
PAD_ID = 0


@dataclass(frozen=True)
class Batch:
    """Teacher-forced batch: ``tgt_out_ids`` is ``tgt_in_ids`` shifted left."""

    src_ids: np.ndarray
    tgt_in_ids: np.ndarray
    tgt_out_ids: np.ndarray
    src_mask: np.ndarray
    tgt_mask: np.ndarray

    def __post_init__(self):
        if self.src_ids.shape != self.src_mask.shape:
            raise ShapeError("src_ids and src_mask shapes differ")
        if not (
            self.tgt_in_ids.shape == self.tgt_out_ids.shape == self.tgt_mask.shape
        ):
            raise ShapeError("tgt_in/tgt_out/tgt_mask shapes differ")
        if self.src_ids.shape[0] != self.tgt_in_ids.shape[0]:
            raise ShapeError("source and target batch sizes differ")


def make_batch(src_seqs: list[list[int]], tgt_seqs: list[list[int]]) -> Batch:
    """Pad framed id sequences into a batch.

    ``tgt_seqs`` must carry BOS/EOS framing; teacher forcing drops the last
    id for the decoder input and the first for the prediction targets.
    """
    if len(src_seqs) != len(tgt_seqs) or not src_seqs:
        raise InputError("need equal, nonzero numbers of source and target sequences")
    if any(len(t) < 2 for t in tgt_seqs):
        raise InputError("framed target sequences need at least BOS and EOS")
    b = len(src_seqs)
    ts = max(len(s) for s in src_seqs)
    tt = max(len(t) for t in tgt_seqs) - 1
    src = np.full((b, ts), PAD_ID, dtype=np.int64)
    tgt_in = np.full((b, tt), PAD_ID, dtype=np.int64)
    tgt_out = np.full((b, tt), PAD_ID, dtype=np.int64)
    src_mask = np.zeros((b, ts), dtype=np.bool_)
    tgt_mask = np.zeros((b, tt), dtype=np.bool_)
    for i, (s, t) in enumerate(zip(src_seqs, tgt_seqs)):
        src[i, : len(s)] = s
        src_mask[i, : len(s)] = True
        n = len(t) - 1
        tgt_in[i, :n] = t[:-1]
        tgt_out[i, :n] = t[1:]
        tgt_mask[i, :n] = True
    return Batch(src, tgt_in, tgt_out, src_mask, tgt_mask)


# --------------------------------------------------------------------------
# attention
# --------------------------------------------------------------------------


def _rows(mask4: np.ndarray, b: int, h: int, tq: int, tk: int) -> np.ndarray:
    """Expand a broadcastable (B,1,*,Tk) mask to kernel rows (B*H*Tq, Tk)."""
    return np.ascontiguousarray(
        np.broadcast_to(mask4, (b, h, tq, tk)).reshape(b * h * tq, tk)
    )


def scaled_dot_attention(
    q: np.ndarray, k: np.ndarray, v: np.ndarray, mask: np.ndarray | None = None
) -> np.ndarray:
    """softmax(q k^T / sqrt(d_k)) v with optional boolean attend-mask."""
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"key dims differ: q {q.shape} vs k {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"time dims differ: k {k.shape} vs v {v.shape}")
    dk = q.shape[-1]
    scores = (q @ np.swapaxes(k, -1, -2)) / np.sqrt(dk)
    tq, tk = scores.shape[-2], scores.shape[-1]
    if mask is None:
        mask_rows = np.ones((scores.size // tk, tk), dtype=np.bool_)
    else:
        mask_rows = np.ascontiguousarray(
            np.broadcast_to(mask, scores.shape).reshape(-1, tk)
        )
    probs = kernels.masked_softmax(
        np.ascontiguousarray(scores.reshape(-1, tk)), mask_rows
    )
    return probs.reshape(scores.shape) @ v


def _split_heads(x: np.ndarray, h: int) -> np.ndarray:
    b, t, d = x.shape
    return np.ascontiguousarray(x.reshape(b, t, h, d // h).transpose(0, 2, 1, 3))


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, t, dk = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 1, 3)).reshape(b, t, h * dk)


def _mha_fwd(xq, xkv, p: Parameters, prefix: str, h: int, mask_rows):
    wq, bq = p[f"{prefix}.wq"], p[f"{prefix}.bq"]
    wk, bk = p[f"{prefix}.wk"], p[f"{prefix}.bk"]
    wv, bv = p[f"{prefix}.wv"], p[f"{prefix}.bv"]
    wo, bo = p[f"{prefix}.wo"], p[f"{prefix}.bo"]
    b, tq, d = xq.shape
    tk = xkv.shape[1]
    qh = _split_heads(xq @ wq + bq, h)
    kh = _split_heads(xkv @ wk + bk, h)
    vh = _split_heads(xkv @ wv + bv, h)
    inv = 1.0 / np.sqrt(d // h)
    scores = (qh @ kh.transpose(0, 1, 3, 2)) * inv
    probs = kernels.masked_softmax(scores.reshape(-1, tk), mask_rows).reshape(
        b, h, tq, tk
    )
    cat = _merge_heads(probs @ vh)
    out = cat @ wo + bo
    return out, (xq, xkv, qh, kh, vh, probs, cat)


def _mha_bwd(dout, cache, p: Parameters, prefix: str, grads: Parameters):
    xq, xkv, qh, kh, vh, probs, cat = cache
    b, h, tq, dk = qh.shape
    tk = kh.shape[2]
    d = h * dk
    wo = p[f"{prefix}.wo"]

    dout2 = dout.reshape(-1, d)
    grads[f"{prefix}.wo"] += cat.reshape(-1, d).T @ dout2
    grads[f"{prefix}.bo"] += dout2.sum(axis=0)
    dctx = _split_heads(dout @ wo.T, h)
    dprobs = dctx @ vh.transpose(0, 1, 3, 2)
    dvh = probs.transpose(0, 1, 3, 2) @ dctx
    dscores = kernels.masked_softmax_backward(
        probs.reshape(-1, tk), np.ascontiguousarray(dprobs.reshape(-1, tk))
    ).reshape(b, h, tq, tk)
    inv = 1.0 / np.sqrt(dk)
    dqh = (dscores @ kh) * inv
    dkh = (dscores.transpose(0, 1, 3, 2) @ qh) * inv
    dq, dk_, dv = _merge_heads(dqh), _merge_heads(dkh), _merge_heads(dvh)

    xq2, xkv2 = xq.reshape(-1, d), xkv.reshape(-1, d)
    grads[f"{prefix}.wq"] += xq2.T @ dq.reshape(-1, d)
    grads[f"{prefix}.bq"] += dq.reshape(-1, d).sum(axis=0)
    grads[f"{prefix}.wk"] += xkv2.T @ dk_.reshape(-1, d)
    grads[f"{prefix}.bk"] += dk_.reshape(-1, d).sum(axis=0)
    grads[f"{prefix}.wv"] += xkv2.T @ dv.reshape(-1, d)
    grads[f"{prefix}.bv"] += dv.reshape(-1, d).sum(axis=0)
    dxq = dq @ p[f"{prefix}.wq"].T
    dxkv = dk_ @ p[f"{prefix}.wk"].T + dv @ p[f"{prefix}.wv"].T
    return dxq, dxkv


def multi_head_attention(
    x_q: np.ndarray,
    x_kv: np.ndarray,
    params: Parameters,
    num_heads: int,
    mask: np.ndarray | None = None,
    prefix: str = "attn",
) -> np.ndarray:
    """Standalone multi-head attention over ``params[f"{prefix}.w*"]``.

    Self-attention is the ``x_q is x_kv`` case.
    """
    b, tq, d = x_q.shape
    if d % num_heads != 0:
        raise ShapeError(f"d_model {d} not divisible by num_heads {num_heads}")
    tk = x_kv.shape[1]
    if mask is None:
        mask4 = np.ones((1, 1, 1, tk), dtype=np.bool_)
    else:
        mask4 = mask
    rows = _rows(mask4, b, num_heads, tq, tk)
    out, _ = _mha_fwd(x_q, x_kv, params, prefix, num_heads, rows)
    return out


# --------------------------------------------------------------------------
# layer norm / feed-forward helpers
# --------------------------------------------------------------------------


def _ln_fwd(x, p: Parameters, prefix: str):
    b, t, d = x.shape
    x2 = np.ascontiguousarray(x.reshape(-1, d))
    y2, mean, rstd = kernels.layer_norm(x2, p[f"{prefix}.gain"], p[f"{prefix}.bias"], LN_EPS)
    return y2.reshape(b, t, d), (x2, mean, rstd, (b, t, d))


def _ln_bwd(dy, cache, p: Parameters, prefix: str, grads: Parameters):
    x2, mean, rstd, shape = cache
    d = shape[2]
    dx2, dgain, dbias = kernels.layer_norm_backward(
        np.ascontiguousarray(dy.reshape(-1, d)), x2, mean, rstd, p[f"{prefix}.gain"]
    )
    grads[f"{prefix}.gain"] += dgain
    grads[f"{prefix}.bias"] += dbias
    return dx2.reshape(shape)


def _ffn_fwd(x, p: Parameters, prefix: str):
    a = x @ p[f"{prefix}.w1"] + p[f"{prefix}.b1"]
    hid = np.maximum(a, 0.0)
    out = hid @ p[f"{prefix}.w2"] + p[f"{prefix}.b2"]
    return out, (x, a, hid)


def _ffn_bwd(dout, cache, p: Parameters, prefix: str, grads: Parameters):
    x, a, hid = cache
    d_in = x.shape[-1]
    d_ff = hid.shape[-1]
    d_out = dout.shape[-1]
    dout2 = dout.reshape(-1, d_out)
    grads[f"{prefix}.w2"] += hid.reshape(-1, d_ff).T @ dout2
    grads[f"{prefix}.b2"] += dout2.sum(axis=0)
    da = (dout @ p[f"{prefix}.w2"].T) * (a > 0.0)
    grads[f"{prefix}.w1"] += x.reshape(-1, d_in).T @ da.reshape(-1, d_ff)
    grads[f"{prefix}.b1"] += da.reshape(-1, d_ff).sum(axis=0)
    return da @ p[f"{prefix}.w1"].T


def _dropout_fwd(x, rate: float, train: bool, rng):
    if not train or rate == 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    return x * keep * scale, (keep, scale)

def _dropout_bwd(dy, cache):
    if cache is None:
        return dy
    keep, scale = cache
    return dy * keep * scale


# --------------------------------------------------------------------------
# full model
# --------------------------------------------------------------------------


def _validate_batch(batch: Batch, config: ModelConfig) -> None:
    for name, ids, bound in (
        ("src", batch.src_ids, config.src_vocab_size),
        ("tgt_in", batch.tgt_in_ids, config.tgt_vocab_size),
        ("tgt_out", batch.tgt_out_ids, config.tgt_vocab_size),
    ):
        if ids.size and (ids.min() < 0 or ids.max() >= bound):
            raise InputError(f"{name} ids out of range [0, {bound})")
    if batch.src_ids.shape[1] > config.max_seq_len:
        raise InputError(
            f"source length {batch.src_ids.shape[1]} exceeds max_seq_len {config.max_seq_len}"
        )
    if batch.tgt_in_ids.shape[1] > config.max_seq_len:
        raise InputError(
            f"target length {batch.tgt_in_ids.shape[1]} exceeds max_seq_len {config.max_seq_len}"
        )


def _encode(src_ids, src_mask, params, config, train, rng, cache):
    b, ts = src_ids.shape
    h = config.num_heads
    pos = sinusoidal_positions(config.max_seq_len, config.d_model)
    scale = np.sqrt(config.d_model)
    x = params["src_embed.weight"][src_ids] * scale + pos[:ts]
    x, cache["enc_drop"] = _dropout_fwd(x, config.dropout_rate, train, rng)
    key_rows = _rows(src_mask[:, None, None, :], b, h, ts, ts)
    cache["enc_layers"] = []
    for i in range(config.num_layers):
        p = f"encoder.layer{i}"
        lc = {}
        attn, lc["attn"] = _mha_fwd(x, x, params, f"{p}.self_attn", h, key_rows)
        attn, lc["drop1"] = _dropout_fwd(attn, config.dropout_rate, train, rng)
        x, lc["norm1"] = _ln_fwd(x + attn, params, f"{p}.norm1")
        ff, lc["ffn"] = _ffn_fwd(x, params, f"{p}.ffn")
        ff, lc["drop2"] = _dropout_fwd(ff, config.dropout_rate, train, rng)
        x, lc["norm2"] = _ln_fwd(x + ff, params, f"{p}.norm2")
        cache["enc_layers"].append(lc)
    return x


def _decode_over_memory(
    tgt_in_ids, tgt_mask, memory, src_mask, params, config, train, rng, cache
):
    b, tt = tgt_in_ids.shape
    ts = memory.shape[1]
    h = config.num_heads
    pos = sinusoidal_positions(config.max_seq_len, config.d_model)
    scale = np.sqrt(config.d_model)
    y = params["tgt_embed.weight"][tgt_in_ids] * scale + pos[:tt]
    y, cache["dec_drop"] = _dropout_fwd(y, config.dropout_rate, train, rng)
    causal = np.tril(np.ones((tt, tt), dtype=np.bool_))
    self_rows = _rows(
        causal[None, None, :, :] & tgt_mask[:, None, None, :], b, h, tt, tt
    )
    cross_rows = _rows(src_mask[:, None, None, :], b, h, tt, ts)
    cache["dec_layers"] = []
    for i in range(config.num_layers):
        p = f"decoder.layer{i}"
        lc = {}
        attn, lc["self"] = _mha_fwd(y, y, params, f"{p}.self_attn", h, self_rows)
        attn, lc["drop1"] = _dropout_fwd(attn, config.dropout_rate, train, rng)
        y, lc["norm1"] = _ln_fwd(y + attn, params, f"{p}.norm1")
        cross, lc["cross"] = _mha_fwd(y, memory, params, f"{p}.cross_attn", h, cross_rows)
        cross, lc["drop2"] = _dropout_fwd(cross, config.dropout_rate, train, rng)
        y, lc["norm2"] = _ln_fwd(y + cross, params, f"{p}.norm2")
        ff, lc["ffn"] = _ffn_fwd(y, params, f"{p}.ffn")
        ff, lc["drop3"] = _dropout_fwd(ff, config.dropout_rate, train, rng)
        y, lc["norm3"] = _ln_fwd(y + ff, params, f"{p}.norm3")
        cache["dec_layers"].append(lc)
    logits = y @ params["output.weight"] + params["output.bias"]
    cache["dec_out"] = y
    return logits


def _forward_cached(batch, params, config, train=False, rng=None):
    _validate_batch(batch, config)
    cache: dict = {}
    memory = _encode(batch.src_ids, batch.src_mask, params, config, train, rng, cache)
    cache["memory"] = memory
    logits = _decode_over_memory(
        batch.tgt_in_ids,
        batch.tgt_mask,
        memory,
        batch.src_mask,
        params,
        config,
        train,
        rng,
        cache,
    )
    return logits, cache


def forward(
    batch: Batch,
    params: Parameters,
    config: ModelConfig,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Logits over target vocabulary, shape (batch, tgt_time, tgt_vocab)."""
    logits, _ = _forward_cached(batch, params, config, train_mode, rng)
    return logits


def loss(logits: np.ndarray, tgt_out_ids: np.ndarray, pad_mask: np.ndarray) -> float:
    """Mean token negative log-likelihood over non-pad positions."""
    mask = np.ascontiguousarray(pad_mask.reshape(-1))
    if int(mask.sum()) == 0:
        raise InputError("loss undefined: every target position is padding")
    v = logits.shape[-1]
    return float(
        kernels.cross_entropy_loss(
            np.ascontiguousarray(logits.reshape(-1, v)),
            np.ascontiguousarray(tgt_out_ids.reshape(-1)),
            mask,
        )
    )


def loss_and_grads(
    batch: Batch,
    params: Parameters,
    config: ModelConfig,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    loss_scale: float = 1.0,
) -> tuple[float, Parameters]:
    """Loss and exact gradients for every parameter in the inventory."""
    logits, cache = _forward_cached(batch, params, config, train_mode, rng)
    b, tt, v = logits.shape
    mask = np.ascontiguousarray(batch.tgt_mask.reshape(-1))
    if int(mask.sum()) == 0:
        raise InputError("loss undefined: every target position is padding")
    loss_val, dlogits = kernels.cross_entropy_grad(
        np.ascontiguousarray(logits.reshape(-1, v)),
        np.ascontiguousarray(batch.tgt_out_ids.reshape(-1)),
        mask,
    )
    loss_val *= loss_scale
    dlogits = dlogits.reshape(b, tt, v) * loss_scale

    grads: Parameters = {
        path: np.zeros(shape, dtype=np.float64)
        for path, shape in parameter_shapes(config).items()
    }
    h = config.num_heads
    scale = np.sqrt(config.d_model)

    # output projection
    y = cache["dec_out"]
    d = y.shape[-1]
    grads["output.weight"] += y.reshape(-1, d).T @ dlogits.reshape(-1, v)
    grads["output.bias"] += dlogits.reshape(-1, v).sum(axis=0)
    dy = dlogits @ params["output.weight"].T

    # decoder stack
    dmemory = np.zeros_like(cache["memory"])
    for i in reversed(range(config.num_layers)):
        p = f"decoder.layer{i}"
        lc = cache["dec_layers"][i]
        dres = _ln_bwd(dy, lc["norm3"], params, f"{p}.norm3", grads)
        dff = _dropout_bwd(dres, lc["drop3"])
        dy = dres + _ffn_bwd(dff, lc["ffn"], params, f"{p}.ffn", grads)
        dres = _ln_bwd(dy, lc["norm2"], params, f"{p}.norm2", grads)
        dcross = _dropout_bwd(dres, lc["drop2"])
        dxq, dxkv = _mha_bwd(dcross, lc["cross"], params, f"{p}.cross_attn", grads)
        dy = dres + dxq
        dmemory += dxkv
        dres = _ln_bwd(dy, lc["norm1"], params, f"{p}.norm1", grads)
        dself = _dropout_bwd(dres, lc["drop1"])
        dxq, dxkv = _mha_bwd(dself, lc["self"], params, f"{p}.self_attn", grads)
        dy = dres + dxq + dxkv
    dy = _dropout_bwd(dy, cache["dec_drop"])
    kernels.embedding_grad(
        np.ascontiguousarray(batch.tgt_in_ids.reshape(-1)),
        np.ascontiguousarray(dy.reshape(-1, d) * scale),
        grads["tgt_embed.weight"],
    )

    # encoder stack
    dx = dmemory
    for i in reversed(range(config.num_layers)):
        p = f"encoder.layer{i}"
        lc = cache["enc_layers"][i]
        dres = _ln_bwd(dx, lc["norm2"], params, f"{p}.norm2", grads)
        dff = _dropout_bwd(dres, lc["drop2"])
        dx = dres + _ffn_bwd(dff, lc["ffn"], params, f"{p}.ffn", grads)
        dres = _ln_bwd(dx, lc["norm1"], params, f"{p}.norm1", grads)
        dattn = _dropout_bwd(dres, lc["drop1"])
        dxq, dxkv = _mha_bwd(dattn, lc["attn"], params, f"{p}.self_attn", grads)
        dx = dres + dxq + dxkv
    dx = _dropout_bwd(dx, cache["enc_drop"])
    kernels.embedding_grad(
        np.ascontiguousarray(batch.src_ids.reshape(-1)),
        np.ascontiguousarray(dx.reshape(-1, d) * scale),
        grads["src_embed.weight"],
    )
    return loss_val, grads


def backward(batch: Batch, params: Parameters, config: ModelConfig) -> Parameters:
    """Gradients of the mean token NLL w.r.t. every parameter."""
    _, grads = loss_and_grads(batch, params, config)
    return grads
