"""Greedy and beam-search decoding.

Both decoders return the framed id sequence ``[BOS, t1, ..., (EOS)]``; EOS is
present only when produced within the step limit. PAD and BOS are never
candidate continuations. Beam search ranks finished hypotheses by
``log_prob / len**alpha`` (len counts generated ids, EOS included) and breaks
exact ties by the lexicographically lower id sequence, making decoding fully
deterministic.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .config import ModelConfig, Parameters
from .model import _decode_over_memory, _encode

PAD_ID, BOS_ID, EOS_ID = 0, 1, 2


def _encode_source(src_ids: list[int], params, config):
    src = np.asarray([src_ids], dtype=np.int64)
    mask = np.ones_like(src, dtype=np.bool_)
    memory = _encode(src, mask, params, config, False, None, {})
    return memory, mask


def _next_log_probs(prefixes, memory, src_mask, params, config) -> np.ndarray:
    """Log-probabilities of the next token for each row of ``prefixes``."""
    n, t = prefixes.shape
    tgt_mask = np.ones((n, t), dtype=np.bool_)
    mem = np.broadcast_to(memory, (n,) + memory.shape[1:])
    smask = np.broadcast_to(src_mask, (n, src_mask.shape[1]))
    logits = _decode_over_memory(
        prefixes, tgt_mask, np.ascontiguousarray(mem),
        np.ascontiguousarray(smask), params, config, False, None, {},
    )
    last = logits[:, -1, :]
    row_max = last.max(axis=1, keepdims=True)
    lse = row_max + np.log(np.exp(last - row_max).sum(axis=1, keepdims=True))
    logp = last - lse
    logp[:, PAD_ID] = -np.inf
    logp[:, BOS_ID] = -np.inf
    return logp


def _effective_max_len(max_len: int, config: ModelConfig) -> int:
    # BOS occupies one decoder position
    return max(0, min(max_len, config.max_seq_len - 1))


def greedy_decode(
    src_ids: list[int], params: Parameters, config: ModelConfig, max_len: int
) -> list[int]:
    """Append the argmax token until EOS or ``max_len`` generated tokens."""
    memory, smask = _encode_source(src_ids, params, config)
    prefix = [BOS_ID]
    for _ in range(_effective_max_len(max_len, config)):
        logp = _next_log_probs(
            np.asarray([prefix], dtype=np.int64), memory, smask, params, config
        )
        nxt = int(np.argmax(logp[0]))
        prefix.append(nxt)
        if nxt == EOS_ID:
            break
    return prefix


def sequence_log_prob(
    src_ids: list[int],
    generated_ids: list[int],
    params: Parameters,
    config: ModelConfig,
) -> float:
    """Sum of next-token log-probabilities of ``generated_ids`` given the
    source, under the same candidate restrictions as the decoders."""
    memory, smask = _encode_source(src_ids, params, config)
    total = 0.0
    prefix = [BOS_ID]
    for tok in generated_ids:
        logp = _next_log_probs(
            np.asarray([prefix], dtype=np.int64), memory, smask, params, config
        )
        total += float(logp[0, tok])
        prefix.append(tok)
    return total


def _normalized(log_prob: float, ids: tuple[int, ...], alpha: float) -> float:
    return log_prob / (max(1, len(ids)) ** alpha)


def beam_decode(
    src_ids: list[int],
    params: Parameters,
    config: ModelConfig,
    beam_size: int,
    max_len: int,
    length_norm_alpha: float = 0.0,
) -> list[int]:
    """Beam search; returns the best finished hypothesis (framed)."""
    if beam_size < 1:
        raise ConfigError(f"beam_size must be >= 1, got {beam_size}")
    memory, smask = _encode_source(src_ids, params, config)

    # beam entries: (ids, log_prob, done); archive keeps every finished
    # hypothesis that ever won a beam slot
    beam: list[tuple[tuple[int, ...], float, bool]] = [((), 0.0, False)]
    archive: dict[tuple[int, ...], float] = {}

    for _ in range(_effective_max_len(max_len, config)):
        open_entries = [e for e in beam if not e[2]]
        if not open_entries:
            break
        prefixes = np.asarray(
            [[BOS_ID, *ids] for ids, _, _ in open_entries], dtype=np.int64
        )
        logp = _next_log_probs(prefixes, memory, smask, params, config)
        candidates: list[tuple[tuple[int, ...], float, bool]] = [
            e for e in beam if e[2]
        ]
        for row, (ids, lp, _) in enumerate(open_entries):
            for tok in range(logp.shape[1]):
                p = logp[row, tok]
                if p == -np.inf:
                    continue
                candidates.append((ids + (tok,), lp + float(p), tok == EOS_ID))
        candidates.sort(key=lambda c: (-c[1], c[0]))
        beam = candidates[:beam_size]
        for ids, lp, done in beam:
            if done:
                archive[ids] = lp

    pool = dict(archive)
    for ids, lp, done in beam:
        if not done:
            pool.setdefault(ids, lp)  # forced finish at the step limit
    best = min(
        pool.items(),
        key=lambda item: (-_normalized(item[1], item[0], length_norm_alpha), item[0]),
    )
    return [BOS_ID, *best[0]]
