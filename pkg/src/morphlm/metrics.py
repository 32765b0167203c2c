"""WER scoring, n-best rescoring and the Wilcoxon signed-rank test.

References and hypotheses are keyed by utterance id.  Reference files hold
``utterance_id<TAB>token token ...``; n-best files hold one hypothesis per
line as ``utterance_id<TAB>rank<TAB>acoustic_score<TAB>lm_score<TAB>token
token ...`` with ranks contiguous from 1.  LM scores are log10 (neural
scores are converted from nats by the language models themselves).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class UtteranceErrors:
    substitutions: int
    deletions: int
    insertions: int
    ref_len: int

    @property
    def total(self):
        return self.substitutions + self.deletions + self.insertions


@dataclass
class WerReport:
    per_utterance: dict
    wer: float

    def error_counts(self, ids=None):
        """Per-utterance total error counts, in sorted id order by default
        (the pairing unit for significance testing)."""
        ids = sorted(self.per_utterance) if ids is None else ids
        return [self.per_utterance[u].total for u in ids]


def align_counts(ref, hyp):
    """Levenshtein alignment with unit costs.

    Ties between minimal alignments are resolved by preferring
    substitutions (cost, then fewest substitutions lost — i.e. the
    max-substitution minimal alignment), which pins down the whole
    (S, D, I) decomposition since D - I is fixed by the length difference.
    """
    n, m = len(ref), len(hyp)
    # DP over (cost, -substitutions), lexicographic minimum.
    prev = [(j, 0) for j in range(m + 1)]
    for i in range(1, n + 1):
        cur = [(i, 0)]
        for j in range(1, m + 1):
            if ref[i - 1] == hyp[j - 1]:
                diag = (prev[j - 1][0], prev[j - 1][1])
            else:
                diag = (prev[j - 1][0] + 1, prev[j - 1][1] - 1)
            ins = (cur[j - 1][0] + 1, cur[j - 1][1])
            dele = (prev[j][0] + 1, prev[j][1])
            cur.append(min(diag, ins, dele))
        prev = cur
    cost, neg_subs = prev[m]
    subs = -neg_subs
    # D - I equals the length difference; totals pin the rest.
    dels = (cost - subs + (n - m)) // 2
    ins = cost - subs - dels
    return UtteranceErrors(substitutions=subs, deletions=dels, insertions=ins,
                           ref_len=n)


def wer(refs, hyps):
    """Corpus WER percent over the hypothesis ids.

    Every hypothesis id must have a reference (morph hypotheses should be
    desegmented to words first).
    """
    per_utt = {}
    for utt_id in sorted(hyps):
        if utt_id not in refs:
            raise ValueError(f"missing reference for utterance {utt_id!r}")
        per_utt[utt_id] = align_counts(refs[utt_id], hyps[utt_id])
    total_ref = sum(e.ref_len for e in per_utt.values())
    if total_ref == 0:
        raise ValueError("empty references")
    total_err = sum(e.total for e in per_utt.values())
    return WerReport(per_utterance=per_utt, wer=100.0 * total_err / total_ref)


def werr(base_wer, new_wer):
    """Relative WER reduction percent; negative when the new system is
    worse."""
    if base_wer <= 0:
        raise ValueError("base WER must be positive")
    return 100.0 * (base_wer - new_wer) / base_wer


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple
    acoustic_score: float
    lm_score: float


@dataclass
class NBestList:
    utterance_id: str
    hypotheses: list

    def __post_init__(self):
        if not self.hypotheses:
            raise ValueError(
                f"utterance {self.utterance_id!r} has an empty hypothesis list"
            )
        for h in self.hypotheses:
            if not (math.isfinite(h.acoustic_score) and math.isfinite(h.lm_score)):
                raise ValueError(
                    f"utterance {self.utterance_id!r} has a non-finite score"
                )


def read_nbest(path):
    """Parse an n-best file; ranks must be contiguous from 1 per utterance."""
    by_utt = {}
    order = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 5:
                raise ValueError(f"line {line_no}: expected 5 tab-separated fields")
            utt_id, rank_s, ac_s, lm_s, text = fields
            try:
                rank = int(rank_s)
                hyp = Hypothesis(tuple(text.split()), float(ac_s), float(lm_s))
            except ValueError:
                raise ValueError(f"line {line_no}: bad numeric field") from None
            if utt_id not in by_utt:
                by_utt[utt_id] = []
                order.append(utt_id)
            if rank != len(by_utt[utt_id]) + 1:
                raise ValueError(
                    f"line {line_no}: rank {rank} breaks the contiguous order "
                    f"for utterance {utt_id!r}"
                )
            by_utt[utt_id].append(hyp)
    return [NBestList(utt_id, by_utt[utt_id]) for utt_id in order]


def write_nbest(nbest_lists, path):
    with open(path, "w", encoding="utf-8") as fh:
        for nb in nbest_lists:
            for rank, h in enumerate(nb.hypotheses, 1):
                text = " ".join(h.tokens)
                fh.write(
                    f"{nb.utterance_id}\t{rank}\t{h.acoustic_score:.6f}"
                    f"\t{h.lm_score:.6f}\t{text}\n"
                )


def read_refs(path):
    refs = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            utt_id, _, text = line.partition("\t")
            if not _:
                raise ValueError(f"line {line_no}: expected utterance_id<TAB>text")
            refs[utt_id] = text.split()
    return refs


def write_refs(refs, path):
    with open(path, "w", encoding="utf-8") as fh:
        for utt_id in sorted(refs):
            fh.write(f"{utt_id}\t{' '.join(refs[utt_id])}\n")


def _mix_log10(lam, log_a, log_b):
    """log10(lam*10^a + (1-lam)*10^b) without underflow."""
    if lam >= 1.0:
        return log_a
    if lam <= 0.0:
        return log_b
    top = max(log_a, log_b)
    return top + math.log10(
        lam * 10.0 ** (log_a - top) + (1.0 - lam) * 10.0 ** (log_b - top)
    )


def rescore_nbest(nbest_lists, lm, lm_scale, interpolation=None, lm_cache=None):
    """Second-pass selection: argmax of acoustic + lm_scale * LM score.

    ``lm`` needs ``sentence_logprob(tokens) -> log10``; ``interpolation``
    optionally mixes the new LM with the stored first-pass ``lm_score`` in
    probability space (weight on the new LM).  Ties keep the earlier rank.
    ``lm_cache`` maps token tuples to precomputed new-LM scores.
    """
    selected = {}
    for nb in nbest_lists:
        best_total = -math.inf
        best_tokens = None
        for h in nb.hypotheses:
            if lm_cache is not None and h.tokens in lm_cache:
                new_score = lm_cache[h.tokens]
            else:
                new_score = lm.sentence_logprob(list(h.tokens))
                if lm_cache is not None:
                    lm_cache[h.tokens] = new_score
            if interpolation is not None:
                new_score = _mix_log10(interpolation, new_score, h.lm_score)
            total = h.acoustic_score + lm_scale * new_score
            if total > best_total:
                best_total = total
                best_tokens = list(h.tokens)
        selected[nb.utterance_id] = best_tokens
    return selected


@dataclass(frozen=True)
class RescoreWeights:
    lm_scale: float
    interpolation: float | None
    dev_wer: float


def optimize_rescore_weights(nbest_dev, lm, refs, lm_scales=None,
                             interpolations=None):
    """Grid search over lm_scale (and optionally the mixing weight)
    minimizing dev WER; ties go to the smallest lm_scale, then the smallest
    interpolation weight."""
    if lm_scales is None:
        lm_scales = [round(0.1 * i, 10) for i in range(21)]
    lam_grid = [None]
    if interpolations is not None:
        lam_grid = list(interpolations)
    cache = {}
    best = None
    for lam in lam_grid:
        for scale in lm_scales:
            hyps = rescore_nbest(nbest_dev, lm, scale, interpolation=lam,
                                 lm_cache=cache)
            report = wer(refs, hyps)
            key = (report.wer, scale, -1.0 if lam is None else lam)
            if best is None or key < best[0]:
                best = (key, RescoreWeights(lm_scale=scale, interpolation=lam,
                                            dev_wer=report.wer))
    return best[1]


@dataclass(frozen=True)
class SignificanceResult:
    statistic: float
    p_value: float
    n_effective: int


def wilcoxon_signed_rank(errors_a, errors_b, exact_limit=20):
    """Two-sided Wilcoxon signed-rank test on paired per-utterance counts.

    Zero differences are dropped; tied |d| get average ranks;
    W = min(W+, W-).  Up to ``exact_limit`` pairs the p-value enumerates all
    2^n sign patterns exactly; beyond that a normal approximation with tie
    and continuity corrections is used.  All-zero differences give p = 1.
    """
    a = np.asarray(list(errors_a), dtype=np.float64)
    b = np.asarray(list(errors_b), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return SignificanceResult(statistic=0.0, p_value=1.0, n_effective=0)
    absd = np.abs(d)
    order = np.argsort(absd, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    sorted_abs = absd[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_abs[j + 1] == sorted_abs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    if n <= exact_limit:
        # all 2^n sign patterns; W+ distribution is symmetric, so the
        # two-sided p doubles the lower tail of one side
        patterns = np.arange(2 ** n, dtype=np.uint64)
        bits = (patterns[:, None] >> np.arange(n, dtype=np.uint64)) & np.uint64(1)
        w_all = bits.astype(np.float64) @ ranks
        p = 2.0 * float((w_all <= w + 1e-9).mean())
        return SignificanceResult(statistic=w, p_value=min(p, 1.0), n_effective=n)
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(absd, return_counts=True)
    tie_term = float((tie_counts.astype(np.float64) ** 3 - tie_counts).sum()) / 48.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    z = (w - mean + 0.5) / math.sqrt(var)
    p = 2.0 * 0.5 * math.erfc(-z / math.sqrt(2.0))
    return SignificanceResult(statistic=w, p_value=min(p, 1.0), n_effective=n)
