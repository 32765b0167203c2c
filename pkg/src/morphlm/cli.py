"""Command-line surface for the full pipeline.

Every subcommand is a thin wrapper over the library.  Exit codes: 0 on
success, 1 on usage errors, 2 on data or validation errors.  Progress goes
to stderr; stdout carries results only.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .arpa import read_arpa, write_arpa
from .augment import (
    ablate_corpus_size,
    ablation_table,
    run_augmentation,
)
from .config import PipelineConfig, dump_config, load_config
from .corpus import (
    Vocabulary,
    build_vocabulary,
    corpus_stats,
    read_corpus,
    subsample,
    write_corpus,
)
from .metrics import (
    optimize_rescore_weights,
    read_nbest,
    read_refs,
    rescore_nbest,
    wer,
    wilcoxon_signed_rank,
    write_refs,
)
from .neural import StatefulLstmLm, gradient_check
from .ngram import (
    count_ngrams,
    estimate_mkn,
    interpolate,
    optimize_lambda,
    perplexity,
    prune,
)
from .segmentation import MorphSegmenter, desegment

log = logging.getLogger("morphlm")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors exit 1; argparse's default of 2 is reserved for data
        # errors here
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser():
    parser = _Parser(
        prog="morphlm",
        description="Back-off n-gram language modeling with neural "
                    "text-generation augmentation.",
    )
    parser.add_argument("--version", action="version",
                        version=f"morphlm {__version__} (arpa 1, config 1)")
    parser.add_argument("--threads", type=int, default=1,
                        help="reserved concurrency bound; all built-in "
                             "computation is single-threaded (default 1)")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("corpus-stats", parents=[], help="count sentences, "
                       "tokens, types and optionally the OOV rate")
    p.add_argument("--text", required=True, help="corpus file")
    p.add_argument("--vocab", help="vocabulary file for the OOV rate")

    p = sub.add_parser("vocab-build", help="build a frequency-cutoff vocabulary")
    p.add_argument("--text", required=True)
    p.add_argument("--max-size", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("subsample", help="token-budget random sentence subsample")
    p.add_argument("--text", required=True)
    p.add_argument("--target-tokens", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("seg-train", help="train the morph segmenter")
    p.add_argument("--text", required=True)
    p.add_argument("--out", required=True, help="segmenter model file")
    p.add_argument("--corpus-weight", type=float, default=1.0)
    p.add_argument("--convergence", type=float, default=0.001)
    p.add_argument("--max-epochs", type=int, default=15)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("seg-apply", help="segment a corpus into tagged morphs")
    p.add_argument("--model", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("deseg", help="merge tagged morphs back into words")
    p.add_argument("--text", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ngram-train", help="count n-grams and estimate a "
                       "modified Kneser-Ney model")
    p.add_argument("--text", required=True)
    p.add_argument("--out", required=True, help="output ARPA file")
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--vocab", help="vocabulary file (default: corpus types)")

    p = sub.add_parser("ngram-prune", help="relative-entropy pruning")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--threshold", type=float)
    group.add_argument("--max-ngrams", type=int)

    p = sub.add_parser("ngram-interp", help="merge two models statically")
    p.add_argument("--model-a", required=True)
    p.add_argument("--model-b", required=True)
    p.add_argument("--out", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--lam", type=float, help="weight of model A")
    group.add_argument("--dev", help="optimize the weight on this corpus")

    p = sub.add_parser("ppl", help="perplexity of a corpus under an ARPA model")
    p.add_argument("--model", required=True)
    p.add_argument("--text", required=True)

    p = sub.add_parser("rnn-train", help="train the LSTM language model")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--config", help="pipeline config for neural.* settings")
    p.add_argument("--vocab", help="vocabulary file (default: built from train)")
    p.add_argument("--seed", type=int, help="override the derived seed")

    p = sub.add_parser("rnn-generate", help="sample a corpus from a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--tokens", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--streams", type=int, default=64)

    p = sub.add_parser("gradcheck", help="LSTM analytic gradients vs central "
                       "finite differences on a tiny configuration")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("augment", help="full neural augmentation pipeline")
    p.add_argument("--config", required=True)

    p = sub.add_parser("ablate", help="augmentation across train-size subsamples")
    p.add_argument("--config", required=True)
    p.add_argument("--sizes", help="comma-separated descending token targets "
                   "(default: augment.sizes from the config)")

    p = sub.add_parser("wer", help="word error rate of hypothesis transcripts")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps", required=True)
    p.add_argument("--desegment", action="store_true",
                   help="merge +-tagged morphs before scoring")

    p = sub.add_parser("rescore", help="second-pass n-best rescoring")
    p.add_argument("--nbest", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--arpa", help="back-off model for rescoring")
    group.add_argument("--checkpoint", help="LSTM checkpoint for rescoring")
    p.add_argument("--lm-scale", type=float, default=1.0)
    p.add_argument("--interpolation", type=float,
                   help="mix weight of the new LM against the stored lm_score")
    p.add_argument("--optimize", action="store_true",
                   help="grid-search lm-scale (and the mix weight) on --refs")
    p.add_argument("--refs", help="references for --optimize")
    p.add_argument("--out", required=True, help="selected hypotheses file")

    p = sub.add_parser("wilcoxon", help="paired Wilcoxon signed-rank test")
    p.add_argument("--errors-a", required=True, help="one count per line")
    p.add_argument("--errors-b", required=True)

    return parser


def _read_counts_file(path):
    with open(path, encoding="utf-8") as fh:
        return [float(line.strip()) for line in fh if line.strip()]


def _load_lm(args):
    if args.arpa:
        return read_arpa(args.arpa)
    return StatefulLstmLm.load(args.checkpoint)


def _cmd_corpus_stats(args):
    sentences = read_corpus(args.text)
    vocab = Vocabulary.load(args.vocab) if args.vocab else None
    stats = corpus_stats(sentences, vocab)
    print(f"sentences={stats.sentence_count} tokens={stats.token_count} "
          f"types={stats.type_count} oov_rate={stats.oov_rate:.6f}")


def _cmd_vocab_build(args):
    vocab = build_vocabulary(read_corpus(args.text), args.max_size)
    vocab.save(args.out)
    print(f"entries={len(vocab)}")


def _cmd_subsample(args):
    sentences = subsample(read_corpus(args.text), args.target_tokens, args.seed)
    write_corpus(sentences, args.out)
    print(f"sentences={len(sentences)} "
          f"tokens={sum(len(s) for s in sentences)}")


def _cmd_seg_train(args):
    seg = MorphSegmenter(
        corpus_weight=args.corpus_weight,
        convergence=args.convergence,
        max_epochs=args.max_epochs,
        random_state=args.seed,
    ).fit(read_corpus(args.text))
    seg.save(args.out)
    lex_bits, corpus_bits = seg.cost
    print(f"morphs={len(seg.lexicon_)} lexicon_bits={lex_bits:.1f} "
          f"corpus_bits={corpus_bits:.1f}")


def _cmd_seg_apply(args):
    seg = MorphSegmenter.load(args.model)
    segmented = seg.transform(read_corpus(args.text))
    write_corpus(segmented, args.out)
    print(f"tokens={sum(len(s) for s in segmented)}")


def _cmd_deseg(args):
    words = [desegment(sent) for sent in read_corpus(args.text)]
    write_corpus(words, args.out)
    print(f"tokens={sum(len(s) for s in words)}")


def _cmd_ngram_train(args):
    sentences = read_corpus(args.text)
    vocab = Vocabulary.load(args.vocab) if args.vocab else None
    model = estimate_mkn(count_ngrams(sentences, args.order, vocab))
    write_arpa(model, args.out)
    print("ngrams=" + " ".join(
        f"{k + 1}:{n}" for k, n in enumerate(model.counts_by_order())))


def _cmd_ngram_prune(args):
    model = read_arpa(args.model)
    pruned = prune(model, threshold=args.threshold, max_ngrams=args.max_ngrams)
    write_arpa(pruned, args.out)
    print(f"ngrams_before={model.ngram_count()} "
          f"ngrams_after={pruned.ngram_count()}")


def _cmd_ngram_interp(args):
    model_a = read_arpa(args.model_a)
    model_b = read_arpa(args.model_b)
    if args.dev:
        spec = optimize_lambda(model_a, model_b, read_corpus(args.dev))
        lam = spec.lambda_
        print(f"lambda={lam:.6f} dev_ppl={spec.dev_ppl_at_lambda:.6f}")
    else:
        lam = args.lam
        print(f"lambda={lam:.6f}")
    write_arpa(interpolate(model_a, model_b, lam), args.out)


def _cmd_ppl(args):
    report = perplexity(read_arpa(args.model), read_corpus(args.text))
    print(f"ppl={report.ppl:.6f} tokens={report.token_count} "
          f"logprob={report.logprob_total:.6f}")


def _cmd_rnn_train(args):
    config = load_config(args.config) if args.config else PipelineConfig()
    train = read_corpus(args.train)
    dev = read_corpus(args.dev)
    if args.vocab:
        vocab = Vocabulary.load(args.vocab)
    else:
        vocab = build_vocabulary(train, config["corpus.vocab_size"])
    seed = args.seed if args.seed is not None else config["global.seed"]
    lm = StatefulLstmLm(vocabulary=vocab, random_state=seed,
                        **config.lstm_overrides())
    lm.fit(vocab.transform(train), validation=vocab.transform(dev))
    lm.save(args.out)
    best = min(r.dev_loss for r in lm.log_.epochs)
    print(f"epochs={len(lm.log_.epochs)} best_dev_ce={best:.6f} "
          f"stop={lm.log_.stop_reason}")


def _cmd_rnn_generate(args):
    lm = StatefulLstmLm.load(args.model)
    sentences = lm.generate(args.tokens, temperature=args.temperature,
                            random_state=args.seed, streams=args.streams)
    write_corpus(sentences, args.out)
    print(f"sentences={len(sentences)} "
          f"tokens={sum(len(s) for s in sentences)}")


def _cmd_gradcheck(args):
    err = gradient_check(seed=args.seed)
    print(f"max_relative_error={err:.3e}")
    return 0 if err < 1e-4 else 2


def _cmd_augment(args):
    config = load_config(args.config)
    plan = config.to_plan()
    for key in ("augment.train", "augment.dev", "augment.eval"):
        if not config[key]:
            raise ValueError(f"{key} must be set in the configuration")
    if plan.out_dir:
        Path(plan.out_dir).mkdir(parents=True, exist_ok=True)
        dump_config(config, Path(plan.out_dir) / "config.resolved.cfg")
    report = run_augmentation(
        plan,
        read_corpus(config["augment.train"]),
        read_corpus(config["augment.dev"]),
        read_corpus(config["augment.eval"]),
    )
    sys.stdout.write(report.as_table())


def _cmd_ablate(args):
    config = load_config(args.config)
    plan = config.to_plan()
    if args.sizes:
        sizes = [int(x) for x in args.sizes.split(",") if x.strip()]
    else:
        sizes = config.ablation_sizes()
    if not sizes:
        raise ValueError("no ablation sizes given (flag --sizes or augment.sizes)")
    for key in ("augment.train", "augment.dev", "augment.eval"):
        if not config[key]:
            raise ValueError(f"{key} must be set in the configuration")
    if plan.out_dir:
        Path(plan.out_dir).mkdir(parents=True, exist_ok=True)
        dump_config(config, Path(plan.out_dir) / "config.resolved.cfg")
    results = ablate_corpus_size(
        plan,
        sizes,
        read_corpus(config["augment.train"]),
        read_corpus(config["augment.dev"]),
        read_corpus(config["augment.eval"]),
    )
    table = ablation_table(results)
    if plan.out_dir:
        (Path(plan.out_dir) / "ablation.txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)


def _cmd_wer(args):
    refs = read_refs(args.refs)
    hyps = read_refs(args.hyps)
    if args.desegment:
        hyps = {utt: desegment(toks) for utt, toks in hyps.items()}
    report = wer(refs, hyps)
    errors = sum(e.total for e in report.per_utterance.values())
    ref_len = sum(e.ref_len for e in report.per_utterance.values())
    print(f"wer={report.wer:.4f} errors={errors} ref_tokens={ref_len} "
          f"utterances={len(report.per_utterance)}")


def _cmd_rescore(args):
    nbest = read_nbest(args.nbest)
    lm = _load_lm(args)
    lm_scale = args.lm_scale
    lam = args.interpolation
    if args.optimize:
        if not args.refs:
            raise ValueError("--optimize requires --refs")
        refs = read_refs(args.refs)
        lam_grid = None
        if lam is not None:
            lam_grid = [round(0.05 * i, 10) for i in range(21)]
        weights = optimize_rescore_weights(nbest, lm, refs,
                                           interpolations=lam_grid)
        lm_scale, lam = weights.lm_scale, weights.interpolation
        print(f"lm_scale={lm_scale:.2f} "
              f"interpolation={'none' if lam is None else f'{lam:.2f}'} "
              f"dev_wer={weights.dev_wer:.4f}")
    selected = rescore_nbest(nbest, lm, lm_scale, interpolation=lam)
    write_refs(selected, args.out)
    print(f"utterances={len(selected)}")


def _cmd_wilcoxon(args):
    res = wilcoxon_signed_rank(_read_counts_file(args.errors_a),
                               _read_counts_file(args.errors_b))
    print(f"W={res.statistic:.1f} p={res.p_value:.8f} n={res.n_effective}")


_HANDLERS = {
    "corpus-stats": _cmd_corpus_stats,
    "vocab-build": _cmd_vocab_build,
    "subsample": _cmd_subsample,
    "seg-train": _cmd_seg_train,
    "seg-apply": _cmd_seg_apply,
    "deseg": _cmd_deseg,
    "ngram-train": _cmd_ngram_train,
    "ngram-prune": _cmd_ngram_prune,
    "ngram-interp": _cmd_ngram_interp,
    "ppl": _cmd_ppl,
    "rnn-train": _cmd_rnn_train,
    "rnn-generate": _cmd_rnn_generate,
    "gradcheck": _cmd_gradcheck,
    "augment": _cmd_augment,
    "ablate": _cmd_ablate,
    "wer": _cmd_wer,
    "rescore": _cmd_rescore,
    "wilcoxon": _cmd_wilcoxon,
}


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _HANDLERS[args.command](args) or 0
    except (ValueError, OSError, RuntimeError, KeyError, FloatingPointError) as exc:
        print(f"morphlm {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
