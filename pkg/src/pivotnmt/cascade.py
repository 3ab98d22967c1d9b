"""Two-stage pivot translation: train source->pivot and pivot->target
systems independently, chain them at inference time.

The pivot hypothesis crosses the stage boundary as plain detokenized text
and is re-tokenized and re-encoded with the second stage's own preprocessing
and vocabulary; the two systems stay fully independent. The intermediate
text is retained so per-stage outputs can be inspected and scored.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np

from . import subword
from .errors import CascadeStageError, ConfigError, TrainingError
from .metrics import BleuReport, bleu
from .subword import SubwordVocab
from .text_pipeline import (
    NO_RULES,
    ParallelCorpus,
    RuleSet,
    Sentence,
    detokenize,
    tokenize,
)
from .transformer import (
    AdamHyper,
    ModelConfig,
    beam_decode,
    greedy_decode,
    init_adam,
    init_parameters,
    make_batch,
)
from .transformer.config import Parameters
from .transformer.model import forward, loss
from .transformer.optimizer import train_step


@dataclass(frozen=True)
class VocabSpec:
    mode: str = "shared"
    target_size: int = 512


@dataclass(frozen=True)
class Arch:
    """Architecture dimensions; vocabulary sizes come from the learned vocabs."""

    num_layers: int = 2
    d_model: int = 64
    num_heads: int = 4
    d_ff: int = 128
    max_seq_len: int = 64
    dropout_rate: float = 0.0


@dataclass(frozen=True)
class TrainSettings:
    max_steps: int = 1000
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    val_fraction: float = 0.0
    eval_every: int = 50
    patience: int = 0  # early-stop after this many evals without improvement; 0 = off


@dataclass(frozen=True)
class DecodeSettings:
    beam_size: int = 4
    max_len: int = 64
    length_norm_alpha: float = 0.6


@dataclass
class TranslationSystem:
    params: Parameters
    config: ModelConfig
    src_vocab: SubwordVocab
    tgt_vocab: SubwordVocab
    src_lang: str
    tgt_lang: str
    rules: RuleSet = NO_RULES  # applied to raw stage input at inference

    def __post_init__(self):
        if self.src_vocab.size != self.config.src_vocab_size:
            raise ConfigError(
                f"source vocab size {self.src_vocab.size} does not match "
                f"config {self.config.src_vocab_size}"
            )
        if self.tgt_vocab.size != self.config.tgt_vocab_size:
            raise ConfigError(
                f"target vocab size {self.tgt_vocab.size} does not match "
                f"config {self.config.tgt_vocab_size}"
            )
        if self.src_lang == self.tgt_lang:
            raise ConfigError(f"source and target language tags are both {self.src_lang!r}")


@dataclass
class CascadePipeline:
    stage1: TranslationSystem
    stage2: TranslationSystem
    decode_settings: DecodeSettings = field(default_factory=DecodeSettings)

    def __post_init__(self):
        if self.stage1.tgt_lang != self.stage2.src_lang:
            raise ConfigError(
                f"pivot mismatch: stage1 targets {self.stage1.tgt_lang!r} but "
                f"stage2 expects {self.stage2.src_lang!r}"
            )


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


def _learn_vocabs(
    corpus: ParallelCorpus, spec: VocabSpec
) -> tuple[SubwordVocab, SubwordVocab]:
    sentences = [s for pair in corpus.pairs for s in pair]
    if spec.mode == "shared":
        v = subword.learn(sentences, spec.target_size, mode="shared")
        return v, v
    vocabs = subword.learn_separate(sentences, spec.target_size)
    return vocabs[corpus.src_lang], vocabs[corpus.tgt_lang]


def _encode_pairs(corpus, src_vocab, tgt_vocab, max_seq_len):
    src_seqs = subword.encode_corpus((s for s, _ in corpus.pairs), src_vocab, frame=True)
    tgt_seqs = subword.encode_corpus((t for _, t in corpus.pairs), tgt_vocab, frame=True)
    kept_src, kept_tgt, skipped = [], [], 0
    for s, t in zip(src_seqs, tgt_seqs):
        if len(s) <= max_seq_len and len(t) - 1 <= max_seq_len:
            kept_src.append(s)
            kept_tgt.append(t)
        else:
            skipped += 1
    return kept_src, kept_tgt, skipped


def _mean_loss(src_seqs, tgt_seqs, params, config, batch_size) -> float:
    total, weight = 0.0, 0
    for i in range(0, len(src_seqs), batch_size):
        batch = make_batch(src_seqs[i : i + batch_size], tgt_seqs[i : i + batch_size])
        n = int(batch.tgt_mask.sum())
        total += loss(forward(batch, params, config), batch.tgt_out_ids, batch.tgt_mask) * n
        weight += n
    return total / weight


def train_system(
    corpus: ParallelCorpus,
    vocab_spec: VocabSpec,
    arch: Arch = Arch(),
    settings: TrainSettings = TrainSettings(),
    rules: RuleSet = NO_RULES,
    log: TextIO | None = None,
    on_checkpoint: Callable[[int, Parameters], None] | None = None,
    checkpoint_every: int = 0,
) -> TranslationSystem:
    """Learn vocabularies and train one translation system on ``corpus``.

    Runs up to ``settings.max_steps`` optimizer steps, optionally stopping
    early when the validation loss stops improving. Fully deterministic for
    a fixed seed.
    """
    if len(corpus) == 0:
        raise TrainingError("cannot train on an empty corpus")
    src_vocab, tgt_vocab = _learn_vocabs(corpus, vocab_spec)
    config = ModelConfig(
        src_vocab_size=src_vocab.size,
        tgt_vocab_size=tgt_vocab.size,
        num_layers=arch.num_layers,
        d_model=arch.d_model,
        num_heads=arch.num_heads,
        d_ff=arch.d_ff,
        max_seq_len=arch.max_seq_len,
        dropout_rate=arch.dropout_rate,
    )
    src_seqs, tgt_seqs, skipped = _encode_pairs(corpus, src_vocab, tgt_vocab, arch.max_seq_len)
    if not src_seqs:
        raise TrainingError(
            f"no training pairs fit within max_seq_len={arch.max_seq_len} "
            f"({skipped} skipped)"
        )
    if log and skipped:
        log.write(f"skipped={skipped} reason=max_seq_len\n")

    params = init_parameters(config, settings.seed)
    state = init_adam(params)
    hyper = AdamHyper(settings.lr, settings.beta1, settings.beta2, settings.eps)
    rng = np.random.default_rng(settings.seed)

    n = len(src_seqs)
    n_val = int(round(n * settings.val_fraction))
    perm = rng.permutation(n)
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]
    if len(train_idx) == 0:
        raise TrainingError("validation split leaves no training pairs")
    val_src = [src_seqs[i] for i in val_idx]
    val_tgt = [tgt_seqs[i] for i in val_idx]

    best_val = np.inf
    bad_evals = 0
    step = 0
    start = time.perf_counter()
    while step < settings.max_steps:
        epoch = rng.permutation(train_idx)
        for lo in range(0, len(epoch), settings.batch_size):
            if step >= settings.max_steps:
                break
            idx = epoch[lo : lo + settings.batch_size]
            batch = make_batch([src_seqs[i] for i in idx], [tgt_seqs[i] for i in idx])
            loss_val = train_step(batch, params, state, config, hyper, rng=rng)
            step += 1
            if log:
                log.write(
                    f"step={step} loss={loss_val:.6f} "
                    f"wall={time.perf_counter() - start:.3f}\n"
                )
            if checkpoint_every and on_checkpoint and step % checkpoint_every == 0:
                on_checkpoint(step, params)
            if n_val and step % settings.eval_every == 0:
                val_loss = _mean_loss(val_src, val_tgt, params, config, settings.batch_size)
                if log:
                    log.write(f"step={step} val_loss={val_loss:.6f}\n")
                if val_loss < best_val:
                    best_val = val_loss
                    bad_evals = 0
                elif settings.patience:
                    bad_evals += 1
                    if bad_evals >= settings.patience:
                        if log:
                            log.write(f"step={step} early_stop=plateau\n")
                        step = settings.max_steps
                        break
    return TranslationSystem(
        params=params,
        config=config,
        src_vocab=src_vocab,
        tgt_vocab=tgt_vocab,
        src_lang=corpus.src_lang,
        tgt_lang=corpus.tgt_lang,
        rules=rules,
    )


# --------------------------------------------------------------------------
# inference
# --------------------------------------------------------------------------


def translate_sentence(
    system: TranslationSystem, sentence: Sentence, settings: DecodeSettings
) -> Sentence:
    """Translate one tokenized sentence through a single system."""
    ids = subword.encode(sentence, system.src_vocab, frame=True)
    limit = system.config.max_seq_len
    if len(ids) > limit:  # keep the EOS frame when truncating over-long input
        ids = ids[: limit - 1] + [subword.EOS_ID]
    if settings.beam_size == 1:
        out = greedy_decode(ids, system.params, system.config, settings.max_len)
    else:
        out = beam_decode(
            ids,
            system.params,
            system.config,
            settings.beam_size,
            settings.max_len,
            settings.length_norm_alpha,
        )
    return subword.decode(out, system.tgt_vocab, lang=system.tgt_lang)


def translate_text(
    system: TranslationSystem, raw: str, settings: DecodeSettings
) -> str:
    sent = tokenize(raw, system.src_lang, system.rules)
    return detokenize(translate_sentence(system, sent, settings))


@dataclass(frozen=True)
class CascadeResult:
    text: str
    pivot_text: str


def cascade_translate_detailed(raw_src: str, pipeline: CascadePipeline) -> CascadeResult:
    """Source -> pivot -> target, keeping the intermediate pivot text."""
    try:
        pivot = translate_text(pipeline.stage1, raw_src, pipeline.decode_settings)
    except Exception as e:  # noqa: BLE001 - stage identity must be attached
        raise CascadeStageError("stage1", str(e)) from e
    try:
        final = translate_text(pipeline.stage2, pivot, pipeline.decode_settings)
    except Exception as e:  # noqa: BLE001
        raise CascadeStageError("stage2", str(e)) from e
    return CascadeResult(text=final, pivot_text=pivot)


def cascade_translate(raw_src: str, pipeline: CascadePipeline) -> str:
    return cascade_translate_detailed(raw_src, pipeline).text


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CascadeEvaluation:
    cascade: BleuReport
    stage1: BleuReport | None = None
    stage2: BleuReport | None = None


def _as_sentence(text: str, lang: str) -> Sentence:
    return Sentence(tuple(text.split()), lang)


def evaluate_cascade(
    test: ParallelCorpus,
    pipeline: CascadePipeline,
    pivot_references: list[Sentence] | None = None,
) -> CascadeEvaluation:
    """Score the cascade on a (source, gold target) corpus, case-sensitive.

    When gold pivot sentences are supplied, each stage is additionally
    scored in isolation: stage1 against the pivot references, stage2 on the
    gold pivot text against the target references.
    """
    if len(test) == 0:
        raise TrainingError("cannot evaluate on an empty test corpus")
    hyps: list[Sentence] = []
    pivots: list[Sentence] = []
    tgt_lang = pipeline.stage2.tgt_lang
    pivot_lang = pipeline.stage1.tgt_lang
    for src, _ in test.pairs:
        result = cascade_translate_detailed(detokenize(src), pipeline)
        hyps.append(_as_sentence(result.text, tgt_lang))
        pivots.append(_as_sentence(result.pivot_text, pivot_lang))
    refs = [tgt for _, tgt in test.pairs]
    report = bleu(hyps, refs)
    stage1_report = None
    stage2_report = None
    if pivot_references is not None:
        stage1_report = bleu(pivots, pivot_references)
        stage2_hyps = [
            _as_sentence(
                translate_text(pipeline.stage2, detokenize(p), pipeline.decode_settings),
                tgt_lang,
            )
            for p in pivot_references
        ]
        stage2_report = bleu(stage2_hyps, refs)
    return CascadeEvaluation(cascade=report, stage1=stage1_report, stage2=stage2_report)
