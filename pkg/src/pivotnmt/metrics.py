"""Case-sensitive corpus BLEU.

Corpus-level modified n-gram precision with per-segment clipping against the
single reference, geometric mean of p1..p_max_n, and the brevity penalty
``exp(1 - ref_len/hyp_len)`` applied when the hypotheses are shorter than the
references. No smoothing: any zero precision makes the corpus score 0, which
matches the behavior of the classic evaluation scripts on degenerate corpora.

Scores are computed on the tokens exactly as given; the scorer never
re-tokenizes or changes case.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .errors import InputError
from .text_pipeline import Sentence


@dataclass(frozen=True)
class BleuReport:
    bleu: float
    precisions: tuple[float, ...]
    brevity_penalty: float
    hyp_len: int
    ref_len: int

    def format_line(self) -> str:
        precs = "/".join(f"{p:.4f}" for p in self.precisions)
        names = "/".join(f"p{i}" for i in range(1, len(self.precisions) + 1))
        return (
            f"BLEU = {self.bleu:.2f}, {names} = {precs}, "
            f"BP = {self.brevity_penalty:.4f}, "
            f"hyp_len = {self.hyp_len}, ref_len = {self.ref_len}"
        )

    def format_block(self) -> str:
        lines = [f"bleu={self.bleu:.4f}"]
        lines += [
            f"p{i}={p:.6f}" for i, p in enumerate(self.precisions, start=1)
        ]
        lines += [
            f"brevity_penalty={self.brevity_penalty:.6f}",
            f"hyp_len={self.hyp_len}",
            f"ref_len={self.ref_len}",
        ]
        return "\n".join(lines)


def ngram_counts(sentence: Sentence, n: int) -> Counter:
    """Multiset of contiguous n-token windows; empty when the sentence is
    shorter than n."""
    if n < 1:
        raise InputError(f"n-gram order must be >= 1, got {n}")
    toks = sentence.tokens
    return Counter(toks[i : i + n] for i in range(len(toks) - n + 1))


def bleu(
    hypotheses: Sequence[Sentence], references: Sequence[Sentence], max_n: int = 4
) -> BleuReport:
    """Corpus BLEU of ``hypotheses`` against line-aligned ``references``."""
    if max_n < 1:
        raise InputError(f"max_n must be >= 1, got {max_n}")
    if len(hypotheses) != len(references):
        raise InputError(
            f"hypothesis/reference counts differ: {len(hypotheses)} vs {len(references)}"
        )
    if not hypotheses:
        raise InputError("cannot score an empty hypothesis set")

    matched = [0] * max_n
    total = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            hyp_counts = ngram_counts(hyp, n)
            if not hyp_counts:
                continue
            ref_counts = ngram_counts(ref, n)
            total[n - 1] += sum(hyp_counts.values())
            matched[n - 1] += sum(
                min(c, ref_counts[g]) for g, c in hyp_counts.items()
            )

    precisions = tuple(
        m / t if t > 0 else 0.0 for m, t in zip(matched, total)
    )
    if hyp_len == 0:
        bp = 1.0
    elif hyp_len < ref_len:
        bp = math.exp(1.0 - ref_len / hyp_len)
    else:
        bp = 1.0

    if any(p == 0.0 for p in precisions) or hyp_len == 0:
        score = 0.0
    else:
        score = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    return BleuReport(
        bleu=score,
        precisions=precisions,
        brevity_penalty=bp,
        hyp_len=hyp_len,
        ref_len=ref_len,
    )
