"""Neural text-generation augmentation of back-off models.

The pipeline: train the LSTM on the in-domain corpus, sample a large text
corpus from it, estimate an n-gram model on the generated text (the
RNN-BNLM), optionally prune it to a size budget, optimize the interpolation
weight on the dev set, merge with the baseline BNLM, and evaluate all three
models.  Every stage seed derives from the single plan seed by a fixed
offset, so runs are reproducible and stages can be re-run in isolation.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arpa import write_arpa
from .corpus import build_vocabulary, corpus_stats, subsample, write_corpus
from .neural import StatefulLstmLm
from .ngram import (
    BackoffModel,
    LOG10_ZERO,
    _Level,
    count_ngrams,
    estimate_mkn,
    interpolate,
    optimize_lambda,
    perplexity,
    prune,
)

log = logging.getLogger(__name__)

# Per-stage seed offsets applied to the plan's global seed.
SEED_OFFSET_LSTM = 11
SEED_OFFSET_GENERATE = 23
SEED_OFFSET_SUBSAMPLE = 37


@dataclass
class AugmentationPlan:
    token_type: str = "morph"  # "word" or "morph"; inputs arrive pre-segmented
    gen_tokens: int = 5_000_000
    ngram_order: int = 4
    size_budget: int | None = None
    vocab_size: int = 50_000
    temperature: float = 1.0
    gen_streams: int = 64
    seed: int = 0
    lstm: dict = field(default_factory=dict)  # StatefulLstmLm overrides
    out_dir: str | None = None
    reuse_lstm: str | None = None  # checkpoint path; skips LSTM training

    def __post_init__(self):
        if self.token_type not in ("word", "morph"):
            raise ValueError(f"token_type must be word or morph, got {self.token_type}")
        if self.gen_tokens < 0:
            raise ValueError("gen_tokens must be >= 0")
        if self.ngram_order < 1:
            raise ValueError("ngram_order must be >= 1")


@dataclass
class AugmentationReport:
    token_type: str
    gen_tokens: int
    train_tokens: int
    lambda_: float
    baseline_ngrams: int
    rnn_ngrams: int
    merged_ngrams: int
    dev_ppl_baseline: float
    dev_ppl_rnn: float
    dev_ppl_merged: float
    eval_ppl_baseline: float
    eval_ppl_rnn: float
    eval_ppl_merged: float
    generation_seconds: float

    @property
    def eval_reduction_percent(self):
        return 100.0 * (1.0 - self.eval_ppl_merged / self.eval_ppl_baseline)

    def as_table(self):
        rows = [
            ("BNLM", self.baseline_ngrams, self.dev_ppl_baseline,
             self.eval_ppl_baseline, ""),
            (f"RNN-BNLM {self.gen_tokens}", self.rnn_ngrams, self.dev_ppl_rnn,
             self.eval_ppl_rnn, ""),
            (f"BNLM + RNN-BNLM {self.gen_tokens}", self.merged_ngrams,
             self.dev_ppl_merged, self.eval_ppl_merged,
             f"{self.eval_reduction_percent:.2f}"),
        ]
        lines = [
            f"token type: {self.token_type}   train tokens: {self.train_tokens}"
            f"   lambda: {self.lambda_:.4f}",
            f"{'model':<28}{'ngrams':>10}{'dev PPL':>12}{'eval PPL':>12}"
            f"{'eval red %':>12}",
        ]
        for name, n, dev, ev, red in rows:
            lines.append(f"{name:<28}{n:>10}{dev:>12.4f}{ev:>12.4f}{red:>12}")
        return "\n".join(lines) + "\n"

    def as_records(self):
        """Tab-delimited machine-readable rows (deterministic; timings are
        reported separately so reruns are byte-identical)."""
        header = (
            "token_type\tmodel\tgen_tokens\ttrain_tokens\tlambda"
            "\tngrams\tdev_ppl\teval_ppl\n"
        )
        rows = [
            ("BNLM", self.baseline_ngrams, self.dev_ppl_baseline,
             self.eval_ppl_baseline),
            ("RNN-BNLM", self.rnn_ngrams, self.dev_ppl_rnn, self.eval_ppl_rnn),
            ("BNLM+RNN-BNLM", self.merged_ngrams, self.dev_ppl_merged,
             self.eval_ppl_merged),
        ]
        body = "".join(
            f"{self.token_type}\t{name}\t{self.gen_tokens}\t{self.train_tokens}"
            f"\t{self.lambda_:.6f}\t{n}\t{dev:.8f}\t{ev:.8f}\n"
            for name, n, dev, ev in rows
        )
        return header + body


def uniform_unigram_model(vocab):
    """Order-1 model assigning 1/|V| to every predictable token; stands in
    for an n-gram model when there is no text to estimate one from."""
    V = len(vocab)
    codes = np.arange(V, dtype=np.uint64)
    logp = np.full(V, -np.log10(V - 1), dtype=np.float64)
    logp[vocab.sos_id_] = LOG10_ZERO
    return BackoffModel(vocab, 1, [_Level(codes, logp, np.zeros(V))])


def size_match(model, reference_model):
    """Prune ``model`` so its n-gram count does not exceed the reference's."""
    budget = reference_model.ngram_count()
    if model.ngram_count() <= budget:
        return model.copy()
    return prune(model, max_ngrams=budget)


def run_augmentation(plan, train_sentences, dev_sentences, eval_sentences,
                     vocab=None):
    """Run the full augmentation pipeline and report dev/eval perplexities.

    Corpora must already be tokenized (and morph-segmented for the morph
    token type).  When ``plan.out_dir`` is set, every intermediate artifact
    is persisted there; report files are byte-stable across reruns.
    """
    out_dir = Path(plan.out_dir) if plan.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    def persist(name, writer):
        if out_dir:
            writer(out_dir / name)

    stage = "vocabulary"
    try:
        if vocab is None:
            vocab = build_vocabulary(train_sentences, plan.vocab_size)
        train_v = vocab.transform(train_sentences)
        dev_v = vocab.transform(dev_sentences)
        eval_v = vocab.transform(eval_sentences)
        persist("vocab.txt", vocab.save)
        train_tokens = corpus_stats(train_v).token_count

        stage = "baseline-estimation"
        baseline = estimate_mkn(count_ngrams(train_v, plan.ngram_order, vocab))
        persist("baseline.arpa", lambda p: write_arpa(baseline, p))

        generation_seconds = 0.0
        if plan.gen_tokens > 0:
            stage = "lstm-training"
            if plan.reuse_lstm:
                rnnlm = StatefulLstmLm.load(plan.reuse_lstm)
                if rnnlm.vocabulary.tokens_ != vocab.tokens_:
                    raise ValueError("reused checkpoint vocabulary mismatch")
            else:
                rnnlm = StatefulLstmLm(
                    vocabulary=vocab,
                    random_state=plan.seed + SEED_OFFSET_LSTM,
                    **plan.lstm,
                )
                rnnlm.fit(train_v, validation=dev_v)
                persist("rnnlm", rnnlm.save)
                if out_dir:
                    rnnlm.log_.dump(out_dir / "rnnlm_train_log.jsonl")
            stage = "generation"
            started = time.perf_counter()
            generated = rnnlm.generate(
                plan.gen_tokens,
                temperature=plan.temperature,
                random_state=plan.seed + SEED_OFFSET_GENERATE,
                streams=plan.gen_streams,
            )
            generation_seconds = time.perf_counter() - started
            log.info("generated %d sentences in %.1fs",
                     len(generated), generation_seconds)
            persist("generated.txt", lambda p: write_corpus(generated, p))
            stage = "rnn-bnlm-estimation"
            rnn_model = estimate_mkn(count_ngrams(generated, plan.ngram_order, vocab))
            del generated
        else:
            stage = "rnn-bnlm-estimation"
            rnn_model = uniform_unigram_model(vocab)

        if plan.size_budget is not None:
            stage = "size-matching"
            rnn_model = prune(rnn_model, max_ngrams=plan.size_budget)
        persist("rnn_bnlm.arpa", lambda p: write_arpa(rnn_model, p))

        stage = "interpolation"
        spec = optimize_lambda(baseline, rnn_model, dev_v)
        merged = interpolate(baseline, rnn_model, spec.lambda_)
        persist("merged.arpa", lambda p: write_arpa(merged, p))

        stage = "evaluation"
        report = AugmentationReport(
            token_type=plan.token_type,
            gen_tokens=plan.gen_tokens,
            train_tokens=train_tokens,
            lambda_=spec.lambda_,
            baseline_ngrams=baseline.ngram_count(),
            rnn_ngrams=rnn_model.ngram_count(),
            merged_ngrams=merged.ngram_count(),
            dev_ppl_baseline=perplexity(baseline, dev_v).ppl,
            dev_ppl_rnn=perplexity(rnn_model, dev_v).ppl,
            dev_ppl_merged=perplexity(merged, dev_v).ppl,
            eval_ppl_baseline=perplexity(baseline, eval_v).ppl,
            eval_ppl_rnn=perplexity(rnn_model, eval_v).ppl,
            eval_ppl_merged=perplexity(merged, eval_v).ppl,
            generation_seconds=generation_seconds,
        )
    except Exception as exc:
        raise RuntimeError(f"augmentation failed at stage {stage!r}: {exc}") from exc
    if out_dir:
        (out_dir / "report.txt").write_text(report.as_table(), encoding="utf-8")
        (out_dir / "report.tsv").write_text(report.as_records(), encoding="utf-8")
        (out_dir / "timings.log").write_text(
            f"generation_seconds={report.generation_seconds:.3f}\n",
            encoding="utf-8",
        )
    return report


def ablate_corpus_size(plan, sizes, train_sentences, dev_sentences,
                       eval_sentences):
    """Re-run the pipeline on nested train subsamples of the given sizes.

    ``sizes`` are token targets in descending order, each at most the corpus
    size; the vocabulary is rebuilt per size.  Returns ``[(size, report)]``.
    """
    sizes = list(sizes)
    if sizes != sorted(sizes, reverse=True):
        raise ValueError("sizes must be descending")
    total = corpus_stats(train_sentences).token_count
    if any(s > total for s in sizes):
        raise ValueError(f"a size target exceeds the corpus ({total} tokens)")
    results = []
    for i, size in enumerate(sizes):
        sub = (
            list(train_sentences)
            if size == total
            else subsample(train_sentences, size,
                           plan.seed + SEED_OFFSET_SUBSAMPLE + i)
        )
        sub_plan = dataclasses.replace(
            plan,
            out_dir=(str(Path(plan.out_dir) / f"size_{size}") if plan.out_dir else None),
        )
        log.info("ablation: %d-token subsample (%d sentences)", size, len(sub))
        results.append((size, run_augmentation(sub_plan, sub, dev_sentences,
                                               eval_sentences)))
    return results


def ablation_table(results):
    lines = [
        f"{'train_tokens':>14}{'base eval PPL':>16}{'merged eval PPL':>17}"
        f"{'reduction %':>13}"
    ]
    for size, report in results:
        lines.append(
            f"{size:>14}{report.eval_ppl_baseline:>16.4f}"
            f"{report.eval_ppl_merged:>17.4f}"
            f"{report.eval_reduction_percent:>13.2f}"
        )
    return "\n".join(lines) + "\n"
