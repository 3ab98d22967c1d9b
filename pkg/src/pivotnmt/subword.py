"""Byte-pair-encoding subword vocabularies.

Classic BPE: every word starts as a character sequence whose final character
carries an end-of-word marker; the most frequent adjacent symbol pair is
merged repeatedly until the vocabulary reaches its target size or no pair
occurs at least twice. Ties break lexicographically on (left, right), so
learning is fully deterministic.

The initial alphabet contains both the plain and the word-final form of every
character seen in the corpus, which makes ``decode(encode(x)) == x`` hold for
any sentence over the learned character set, not just for attested positions.

A vocabulary is either ``separate`` (learned from one language's side) or
``shared`` (learned from the pooled text of both sides).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

from .errors import ConfigError, DecodingError, InputError, VocabError
from .text_pipeline import Sentence

PAD, BOS, EOS, UNK = "<pad>", "<s>", "</s>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3

EOW = "</w>"

MODES = ("separate", "shared")

_MAGIC = "pivotnmt-vocab 1"


@dataclass(frozen=True)
class SubwordVocab:
    mode: str
    target_size: int
    merges: tuple[tuple[str, str], ...]
    id_to_token: tuple[str, ...]

    @cached_property
    def token_to_id(self) -> dict[str, int]:
        return {tok: i for i, tok in enumerate(self.id_to_token)}

    @property
    def size(self) -> int:
        return len(self.id_to_token)


def _word_symbols(word: str) -> list[str]:
    return [*word[:-1], word[-1] + EOW]


def _merge_pass(symbols: list[str], left: str, right: str) -> list[str]:
    """Greedy left-to-right application of one merge rule."""
    out: list[str] = []
    i = 0
    n = len(symbols)
    while i < n:
        if i + 1 < n and symbols[i] == left and symbols[i + 1] == right:
            out.append(left + right)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def learn(
    sentences: Iterable[Sentence], target_size: int, mode: str = "shared"
) -> SubwordVocab:
    """Learn one BPE vocabulary from the pooled token stream."""
    if mode not in MODES:
        raise ConfigError(f"unknown vocab mode {mode!r}; expected one of {MODES}")

    word_freq: dict[str, int] = {}
    for sent in sentences:
        for tok in sent.tokens:
            word_freq[tok] = word_freq.get(tok, 0) + 1
    if not word_freq:
        raise VocabError("cannot learn a vocabulary from an empty corpus")

    chars = sorted({c for word in word_freq for c in word})
    alphabet = sorted(chars) + sorted(c + EOW for c in chars)
    min_size = len(SPECIALS) + len(alphabet)
    if target_size <= min_size:
        raise ConfigError(
            f"target_size {target_size} too small: need > {min_size} "
            f"(specials + character alphabet)"
        )

    tokens: list[str] = list(SPECIALS) + alphabet
    known = set(tokens)
    words = {w: _word_symbols(w) for w in word_freq}
    merges: list[tuple[str, str]] = []

    while len(tokens) < target_size:
        pair_counts: dict[tuple[str, str], int] = {}
        for w, syms in words.items():
            f = word_freq[w]
            for a, b in zip(syms, syms[1:]):
                pair_counts[(a, b)] = pair_counts.get((a, b), 0) + f
        if not pair_counts:
            break
        best_count = max(pair_counts.values())
        if best_count < 2:
            break
        best = min(p for p, c in pair_counts.items() if c == best_count)
        merges.append(best)
        left, right = best
        new_symbol = left + right
        for w, syms in words.items():
            if left in syms and right in syms:
                words[w] = _merge_pass(syms, left, right)
        if new_symbol not in known:
            tokens.append(new_symbol)
            known.add(new_symbol)

    return SubwordVocab(
        mode=mode,
        target_size=target_size,
        merges=tuple(merges),
        id_to_token=tuple(tokens),
    )


def learn_separate(
    sentences: Iterable[Sentence], target_size: int
) -> dict[str, SubwordVocab]:
    """Learn one vocabulary per language tag found in the stream."""
    by_lang: dict[str, list[Sentence]] = {}
    for sent in sentences:
        by_lang.setdefault(sent.lang, []).append(sent)
    if not by_lang:
        raise VocabError("cannot learn a vocabulary from an empty corpus")
    return {
        lang: learn(group, target_size, mode="separate")
        for lang, group in sorted(by_lang.items())
    }


def encode_word(word: str, vocab: SubwordVocab) -> list[int]:
    symbols = _word_symbols(word)
    for left, right in vocab.merges:
        if len(symbols) == 1:
            break
        if left in symbols and right in symbols:
            symbols = _merge_pass(symbols, left, right)
    t2i = vocab.token_to_id
    return [t2i.get(sym, UNK_ID) for sym in symbols]


def encode(sentence: Sentence, vocab: SubwordVocab, frame: bool = False) -> list[int]:
    """Map a tokenized sentence to subword ids; unknown characters become UNK."""
    ids: list[int] = []
    for tok in sentence.tokens:
        ids.extend(encode_word(tok, vocab))
    if frame:
        return [BOS_ID, *ids, EOS_ID]
    return ids


def decode(ids: Iterable[int], vocab: SubwordVocab, lang: str = "und") -> Sentence:
    """Invert :func:`encode`: strip specials, join symbols, split at markers."""
    tokens: list[str] = []
    buf: list[str] = []
    for i in ids:
        if not 0 <= i < vocab.size:
            raise DecodingError(f"id {i} out of range for vocabulary of size {vocab.size}")
        if i in (PAD_ID, BOS_ID, EOS_ID):
            continue
        sym = vocab.id_to_token[i]
        if i == UNK_ID:
            buf.append(UNK)
        elif sym.endswith(EOW):
            buf.append(sym[: -len(EOW)])
            tokens.append("".join(buf))
            buf = []
        else:
            buf.append(sym)
    if buf:
        tokens.append("".join(buf))
    return Sentence(tuple(tokens), lang)


# --------------------------------------------------------------------------
# vocabulary files
# --------------------------------------------------------------------------


def dumps(vocab: SubwordVocab) -> str:
    buf = io.StringIO()
    buf.write(f"{_MAGIC}\n")
    buf.write(f"mode={vocab.mode}\n")
    buf.write(f"target_size={vocab.target_size}\n")
    buf.write(f"merges={len(vocab.merges)}\n")
    for left, right in vocab.merges:
        buf.write(f"{left}\t{right}\n")
    buf.write(f"tokens={vocab.size}\n")
    for tok in vocab.id_to_token:
        buf.write(f"{tok}\n")
    return buf.getvalue()


def save_vocab(vocab: SubwordVocab, path) -> None:
    from .fileio import atomic_write_text

    atomic_write_text(path, dumps(vocab))


def loads(text: str) -> SubwordVocab:
    lines = text.split("\n")
    pos = 0

    def next_line() -> str:
        nonlocal pos
        if pos >= len(lines):
            raise VocabError("truncated vocabulary file")
        line = lines[pos]
        pos += 1
        return line

    def expect_kv(key: str) -> str:
        line = next_line()
        if not line.startswith(key + "="):
            raise VocabError(f"expected {key}=..., got {line!r}")
        return line[len(key) + 1 :]

    if next_line() != _MAGIC:
        raise VocabError(f"not a vocabulary file (missing {_MAGIC!r} header)")
    mode = expect_kv("mode")
    if mode not in MODES:
        raise VocabError(f"unknown vocab mode {mode!r}")
    target_size = int(expect_kv("target_size"))
    n_merges = int(expect_kv("merges"))
    merges = []
    for _ in range(n_merges):
        parts = next_line().split("\t")
        if len(parts) != 2:
            raise VocabError("malformed merge rule line")
        merges.append((parts[0], parts[1]))
    n_tokens = int(expect_kv("tokens"))
    id_to_token = tuple(next_line() for _ in range(n_tokens))
    if id_to_token[: len(SPECIALS)] != SPECIALS:
        raise VocabError("vocabulary file does not reserve the special ids")
    return SubwordVocab(
        mode=mode,
        target_size=target_size,
        merges=tuple(merges),
        id_to_token=id_to_token,
    )


def load_vocab(path) -> SubwordVocab:
    with open(path, encoding="utf-8") as f:
        return loads(f.read())


def encode_corpus(
    sentences: Iterable[Sentence], vocab: SubwordVocab, frame: bool = False
) -> list[list[int]]:
    """Encode many sentences with a per-word cache."""
    cache: dict[str, list[int]] = {}
    out = []
    for sent in sentences:
        ids: list[int] = []
        for tok in sent.tokens:
            hit = cache.get(tok)
            if hit is None:
                hit = encode_word(tok, vocab)
                cache[tok] = hit
            ids.extend(hit)
        if frame:
            ids = [BOS_ID, *ids, EOS_ID]
        out.append(ids)
    return out
