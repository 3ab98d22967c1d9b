"""Rule-based corpus preprocessing.

Tokenization is whitespace splitting followed by punctuation detachment
(every Unicode punctuation character becomes its own token), optionally
followed by Spanish-style splitting rules:

* contractions: ``del -> de el``, ``al -> a el`` (exact, case-sensitive);
* enclitic pronouns: a token splits into ``stem + pronoun`` when it ends
  with one of the clitic pronouns and the stem, after stripping acute
  accents, ends in a gerund (``-ndo``) or infinitive (``-ar/-er/-ir``),
  e.g. ``preguntandose -> preguntando se`` (with or without the accent).

Which rules fire is a per-corpus-side configuration (:class:`RuleSet`),
never hardwired to a language tag. Case is never altered anywhere.
"""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass, field

from .errors import ConfigError, InputError

CONTRACTIONS = {"del": ("de", "el"), "al": ("a", "el")}

# longest first so e.g. "los" wins over "os"
CLITIC_PRONOUNS = ("las", "les", "los", "nos", "la", "le", "lo", "me", "os", "se", "te")

VERB_STEM_SUFFIXES = ("ndo", "ar", "er", "ir")

_ACCENT_MAP = str.maketrans("áéíóúÁÉÍÓÚ", "aeiouAEIOU")


@dataclass(frozen=True)
class RuleSet:
    """Active splitting rules for one corpus side."""

    split_contractions: bool = False
    split_enclitics: bool = False


SPLITTING_RULES = RuleSet(split_contractions=True, split_enclitics=True)
NO_RULES = RuleSet()


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    lang: str

    def __post_init__(self):
        for tok in self.tokens:
            if not tok or any(c.isspace() for c in tok):
                raise InputError(f"invalid token {tok!r}: empty or contains whitespace")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class ParallelCorpus:
    src_lang: str
    tgt_lang: str
    pairs: tuple[tuple[Sentence, Sentence], ...]

    def __post_init__(self):
        for src, tgt in self.pairs:
            if src.lang != self.src_lang or tgt.lang != self.tgt_lang:
                raise InputError(
                    f"pair language tags ({src.lang}, {tgt.lang}) do not match "
                    f"corpus ({self.src_lang}, {self.tgt_lang})"
                )

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class CorpusStats:
    segments: int
    words_src: int
    words_tgt: int
    vocab_src: int
    vocab_tgt: int


def _is_punct(c: str) -> bool:
    return unicodedata.category(c).startswith("P")


def _detach_punctuation(chunk: str) -> list[str]:
    out: list[str] = []
    buf: list[str] = []
    for c in chunk:
        if _is_punct(c):
            if buf:
                out.append("".join(buf))
                buf = []
            out.append(c)
        else:
            buf.append(c)
    if buf:
        out.append("".join(buf))
    return out


def _split_enclitic(token: str) -> tuple[str, str] | None:
    if not token.isalpha():
        return None
    for pron in CLITIC_PRONOUNS:
        if len(token) > len(pron) and token.endswith(pron):
            stem = token[: -len(pron)].translate(_ACCENT_MAP)
            if len(stem) >= 2 and stem.endswith(VERB_STEM_SUFFIXES):
                return stem, pron
    return None


def _apply_rules(token: str, rules: RuleSet) -> list[str]:
    if rules.split_contractions and token in CONTRACTIONS:
        return list(CONTRACTIONS[token])
    if rules.split_enclitics:
        split = _split_enclitic(token)
        if split is not None:
            return list(split)
    return [token]


def tokenize(raw: str, lang: str, rules: RuleSet = NO_RULES) -> Sentence:
    """Tokenize one segment. Deterministic; idempotent on re-joined output."""
    tokens: list[str] = []
    for chunk in raw.split():
        for piece in _detach_punctuation(chunk):
            tokens.extend(_apply_rules(piece, rules))
    return Sentence(tuple(tokens), lang)


def detokenize(sentence: Sentence) -> str:
    """Join tokens with single spaces. Splits are not inverted."""
    return " ".join(sentence.tokens)


def length_filter(
    corpus: ParallelCorpus, min_len: int = 1, max_len: int = 50
) -> ParallelCorpus:
    """Keep pairs where both sides have a token count in [min_len, max_len]."""
    if min_len < 1 or max_len < min_len:
        raise ConfigError(f"invalid length bounds [{min_len}, {max_len}]")
    kept = tuple(
        (src, tgt)
        for src, tgt in corpus.pairs
        if min_len <= len(src) <= max_len and min_len <= len(tgt) <= max_len
    )
    return ParallelCorpus(corpus.src_lang, corpus.tgt_lang, kept)


def corpus_stats(corpus: ParallelCorpus) -> CorpusStats:
    words_src = sum(len(src) for src, _ in corpus.pairs)
    words_tgt = sum(len(tgt) for _, tgt in corpus.pairs)
    vocab_src = Counter(tok for src, _ in corpus.pairs for tok in src.tokens)
    vocab_tgt = Counter(tok for _, tgt in corpus.pairs for tok in tgt.tokens)
    return CorpusStats(
        segments=len(corpus.pairs),
        words_src=words_src,
        words_tgt=words_tgt,
        vocab_src=len(vocab_src),
        vocab_tgt=len(vocab_tgt),
    )


# --------------------------------------------------------------------------
# file interfaces
# --------------------------------------------------------------------------


def read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


def load_parallel_corpus(
    src_path,
    tgt_path,
    src_lang: str,
    tgt_lang: str,
    src_rules: RuleSet = NO_RULES,
    tgt_rules: RuleSet = NO_RULES,
) -> ParallelCorpus:
    """Read two line-aligned UTF-8 files and tokenize each side."""
    src_lines = read_lines(src_path)
    tgt_lines = read_lines(tgt_path)
    if len(src_lines) != len(tgt_lines):
        raise InputError(
            f"line counts differ: {src_path} has {len(src_lines)}, "
            f"{tgt_path} has {len(tgt_lines)}"
        )
    pairs = tuple(
        (tokenize(s, src_lang, src_rules), tokenize(t, tgt_lang, tgt_rules))
        for s, t in zip(src_lines, tgt_lines)
    )
    return ParallelCorpus(src_lang, tgt_lang, pairs)


_RULE_KEYS = ("split_contractions", "split_enclitics")
_RULE_SIDES = ("src", "tgt")


def _parse_bool(value: str, key: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes"):
        return True
    if v in ("0", "false", "no"):
        return False
    raise ConfigError(f"invalid boolean {value!r} for rule key {key!r}")


def load_rule_file(path) -> dict[str, RuleSet]:
    """Parse a line-oriented ``side.rule=bool`` file into per-side RuleSets.

    Missing keys default to False; unknown keys are rejected.
    """
    flags = {side: dict.fromkeys(_RULE_KEYS, False) for side in _RULE_SIDES}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            if "." not in key:
                raise ConfigError(f"{path}:{lineno}: rule key {key!r} lacks a side prefix")
            side, rule = key.split(".", 1)
            if side not in _RULE_SIDES or rule not in _RULE_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown rule key {key!r}")
            flags[side][rule] = _parse_bool(value, key)
    return {side: RuleSet(**flags[side]) for side in _RULE_SIDES}
