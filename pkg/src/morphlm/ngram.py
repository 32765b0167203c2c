"""Back-off n-gram language models with modified Kneser-Ney smoothing.

N-grams are packed into uint64 codes (``bits`` bits per token id, oldest
token in the highest bits), so counting and estimation run as sorted-array
operations.  The packing bounds ``order * bits`` by 64: order 4 is fine up
to 65K vocabulary entries, higher orders need smaller vocabularies.

All stored probabilities and back-off weights are log10, matching the ARPA
convention.  ``<s>`` is context-only: it is never predicted and its unigram
log-probability is pinned to -99.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import EOS, SOS, UNK, Vocabulary
from .validation import check_sentences

LOG10_ZERO = -99.0
# Floor for discount mass so back-off weights stay finite; inflates a
# context sum by at most 1e-10, far inside the 1e-6 normalization band.
MIN_BACKOFF_MASS = 1e-10


def _bits_for(vocab_size):
    return max(4, int(vocab_size - 1).bit_length())


def _mask(nbits):
    if nbits >= 64:
        return np.uint64(0xFFFFFFFFFFFFFFFF)
    return np.uint64((1 << nbits) - 1)


def _lookup(sorted_codes, queries):
    """Positions and membership of ``queries`` in ``sorted_codes``."""
    pos = np.searchsorted(sorted_codes, queries)
    pos = np.minimum(pos, max(len(sorted_codes) - 1, 0))
    if len(sorted_codes) == 0:
        return pos, np.zeros(len(queries), dtype=bool)
    return pos, sorted_codes[pos] == queries


@dataclass
class OrderDiscounts:
    """Modified Kneser-Ney discounts for one n-gram order."""

    d1: float
    d2: float
    d3plus: float
    degenerate: bool = False
    clamped: bool = False

    def for_count(self, counts):
        counts = np.asarray(counts)
        return np.where(
            counts >= 3, self.d3plus, np.where(counts == 2, self.d2, self.d1)
        )


def compute_discounts(n1, n2, n3, n4):
    """Count-of-count discount estimates, clamped to their valid ranges.

    Degenerate statistics (``n1`` or ``n2`` zero) fall back to an absolute
    discount of 0.5 at every level and set the ``degenerate`` flag.
    """
    if n1 == 0 or n2 == 0:
        return OrderDiscounts(0.5, 0.5, 0.5, degenerate=True)
    y = n1 / (n1 + 2.0 * n2)
    d1 = 1.0 - 2.0 * y * n2 / n1
    d2 = 2.0 - 3.0 * y * n3 / n2
    d3 = d2 if n3 == 0 else 3.0 - 4.0 * y * n4 / n3
    c1, c2, c3 = min(max(d1, 0.0), 1.0), min(max(d2, 0.0), 2.0), min(max(d3, 0.0), 3.0)
    return OrderDiscounts(c1, c2, c3, clamped=(c1, c2, c3) != (d1, d2, d3))


class NGramCounts:
    """Raw and continuation n-gram counts up to ``order``.

    ``raw[k-1]`` holds ``(codes, counts)`` for order ``k``; ``adjusted[k-1]``
    holds the counts used by Kneser-Ney estimation at that order: raw at the
    top order, distinct-left-context (continuation) counts below, except
    that ``<s>``-initial n-grams keep raw counts since nothing can precede
    them.  ``counts_of_counts[k-1]`` is ``(n1, n2, n3, n4)`` over the
    adjusted counts, the bare ``<s>`` unigram excluded.
    """

    def __init__(self, vocab, order, raw):
        self.vocab = vocab
        self.order = order
        self.bits = _bits_for(len(vocab))
        self.raw = raw
        self._derive()

    def _derive(self):
        bits = np.uint64(self.bits)
        sos = self.vocab.sos_id_
        self.adjusted = []
        for k in range(1, self.order + 1):
            codes, counts = self.raw[k - 1]
            if k == self.order:
                self.adjusted.append(counts.astype(np.int64))
                continue
            hi_codes = self.raw[k][0]
            stripped = hi_codes & _mask(k * self.bits)
            uniq, cont = np.unique(stripped, return_counts=True)
            pos, found = _lookup(uniq, codes)
            cont_counts = np.zeros(len(codes), dtype=np.int64)
            if len(uniq):
                cont_counts[found] = cont[pos[found]]
            first = codes >> np.uint64((k - 1) * self.bits) if k > 1 else codes
            sos_initial = first == np.uint64(sos)
            self.adjusted.append(np.where(sos_initial, counts, cont_counts))
        del bits
        self.counts_of_counts = []
        for k in range(1, self.order + 1):
            codes, _ = self.raw[k - 1]
            used = self.adjusted[k - 1]
            if k == 1:
                used = used[codes != np.uint64(sos)]
            self.counts_of_counts.append(
                tuple(int(np.count_nonzero(used == i)) for i in (1, 2, 3, 4))
            )

    def ngram_count(self, k=None):
        if k is not None:
            return len(self.raw[k - 1][0])
        return sum(len(codes) for codes, _ in self.raw)


def count_ngrams(sentences, order, vocab=None):
    """Exact n-gram counts of all orders up to ``order``.

    Sentences are padded with a single ``<s>``/``</s>``; ``<s>`` receives no
    probability of its own downstream.  When ``vocab`` is omitted a
    vocabulary is built from the sentence tokens (sorted, deterministic).
    Tokens outside the vocabulary count as ``<unk>``.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    sentences = check_sentences(sentences)
    if vocab is None:
        types = sorted({tok for sent in sentences for tok in sent})
        vocab = Vocabulary.from_tokens(types)
    bits = _bits_for(len(vocab))
    if order * bits > 64:
        raise ValueError(
            f"order {order} with a {len(vocab)}-entry vocabulary does not fit "
            f"the 64-bit n-gram packing ({order}*{bits} bits)"
        )
    sos, eos = vocab.sos_id_, vocab.eos_id_
    flat = []
    sent_of = []
    for i, sent in enumerate(sentences):
        ids = [sos] + vocab.encode(sent) + [eos]
        flat.extend(ids)
        sent_of.extend([i] * len(ids))
    flat = np.asarray(flat, dtype=np.uint64)
    sent_of = np.asarray(sent_of, dtype=np.int64)
    raw = []
    shift = np.uint64(bits)
    for k in range(1, order + 1):
        if len(flat) < k:
            raw.append((np.zeros(0, dtype=np.uint64), np.zeros(0, dtype=np.int64)))
            continue
        valid = sent_of[: len(flat) - k + 1] == sent_of[k - 1 :]
        codes = flat[: len(flat) - k + 1].copy()
        for j in range(1, k):
            codes = (codes << shift) | flat[j : len(flat) - k + 1 + j]
        codes = codes[valid]
        uniq, counts = np.unique(codes, return_counts=True)
        raw.append((uniq, counts.astype(np.int64)))
    return NGramCounts(vocab, order, raw)


def merge_counts(parts):
    """Merge per-shard ``NGramCounts`` (associative, order-independent)."""
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to merge")
    first = parts[0]
    for other in parts[1:]:
        if other.vocab.tokens_ != first.vocab.tokens_:
            raise ValueError("cannot merge counts over different vocabularies")
        if other.order != first.order:
            raise ValueError("cannot merge counts of different orders")
    raw = []
    for k in range(1, first.order + 1):
        codes = np.concatenate([p.raw[k - 1][0] for p in parts])
        counts = np.concatenate([p.raw[k - 1][1] for p in parts])
        uniq, inverse = np.unique(codes, return_inverse=True)
        summed = np.bincount(inverse, weights=counts.astype(np.float64))
        raw.append((uniq, summed.astype(np.int64)))
    return NGramCounts(first.vocab, first.order, raw)


class _Level:
    """One order of a back-off model: sorted codes, log10 probs, log10 bows."""

    __slots__ = ("codes", "logp", "bow")

    def __init__(self, codes, logp, bow):
        self.codes = codes
        self.logp = logp
        self.bow = bow

    def copy(self):
        return _Level(self.codes.copy(), self.logp.copy(), self.bow.copy())


class BackoffModel:
    """Back-off n-gram model over a fixed vocabulary.

    The unigram table covers the whole vocabulary, so ``logprob`` is finite
    for every token (unknown strings map to ``<unk>``).  Queries follow the
    ARPA back-off rule: a stored n-gram wins, otherwise the context's
    back-off weight is added and the context shortens by its oldest token.
    """

    def __init__(self, vocab, order, levels, discounts=None):
        self.vocab = vocab
        self.order = order
        self.bits = _bits_for(len(vocab))
        self.levels = levels
        self.discounts = discounts

    def copy(self):
        return BackoffModel(
            self.vocab, self.order, [lv.copy() for lv in self.levels], self.discounts
        )

    def ngram_count(self, k=None):
        if k is not None:
            return len(self.levels[k - 1].codes)
        return sum(len(lv.codes) for lv in self.levels)

    def counts_by_order(self):
        return [len(lv.codes) for lv in self.levels]

    def prediction_ids(self):
        """All ids that carry probability mass (everything but ``<s>``)."""
        ids = np.arange(len(self.vocab), dtype=np.uint64)
        return ids[ids != np.uint64(self.vocab.sos_id_)]

    # -- querying ---------------------------------------------------------

    def _pack(self, ids):
        code = 0
        for i in ids:
            code = (code << self.bits) | int(i)
        return code

    def batch_logprob(self, codes, lengths):
        """Vectorized back-off lookup for packed n-grams.

        ``codes[i]`` packs the last ``lengths[i]`` tokens of an event (the
        predicted token in the lowest bits).  Grams longer than the model
        order are truncated to their most recent ``order`` tokens.
        """
        codes = np.asarray(codes, dtype=np.uint64).copy()
        lengths = np.asarray(lengths, dtype=np.int64).copy()
        over = lengths > self.order
        if over.any():
            codes[over] &= _mask(self.order * self.bits)
            lengths[over] = self.order
        out = np.zeros(len(codes), dtype=np.float64)
        done = np.zeros(len(codes), dtype=bool)
        shift = np.uint64(self.bits)
        for k in range(self.order, 0, -1):
            active = ~done & (lengths == k)
            if not active.any():
                continue
            level = self.levels[k - 1]
            idx = np.flatnonzero(active)
            pos, found = _lookup(level.codes, codes[idx])
            hit = idx[found]
            out[hit] += level.logp[pos[found]]
            done[hit] = True
            miss = idx[~found]
            if len(miss) and k > 1:
                ctx = codes[miss] >> shift
                cpos, cfound = _lookup(self.levels[k - 2].codes, ctx)
                out[miss[cfound]] += self.levels[k - 2].bow[cpos[cfound]]
                codes[miss] &= _mask((k - 1) * self.bits)
                lengths[miss] = k - 1
            elif len(miss):
                raise ValueError(
                    "token id absent from the unigram table; the model has no "
                    "<unk> entry to absorb it"
                )
        return out

    def logprob(self, token, context=()):
        """log10 p(token | context); unknown tokens map to ``<unk>``."""
        ids = [self.vocab.id(t) for t in context] + [self.vocab.id(token)]
        ids = ids[-self.order :]
        code = np.asarray([self._pack(ids)], dtype=np.uint64)
        return float(self.batch_logprob(code, np.asarray([len(ids)]))[0])

    def _event_codes(self, sentences):
        """Packed (code, length) for every prediction event.

        Each sentence contributes one event per token plus one for ``</s>``,
        each conditioned on up to ``order - 1`` preceding tokens with ``<s>``
        at the head.
        """
        bits = self.bits
        hist_mask = int(_mask((self.order - 1) * bits)) if self.order > 1 else 0
        vocab = self.vocab
        codes = []
        lengths = []
        for sent in sentences:
            ids = vocab.encode(sent) + [vocab.eos_id_]
            ctx = vocab.sos_id_
            ctx_len = 1
            for tok in ids:
                codes.append(((ctx << bits) | tok) if self.order > 1 else tok)
                lengths.append(min(ctx_len, self.order - 1) + 1 if self.order > 1 else 1)
                if self.order > 1:
                    ctx = ((ctx << bits) | tok) & hist_mask
                    ctx_len += 1
        return (
            np.asarray(codes, dtype=np.uint64),
            np.asarray(lengths, dtype=np.int64),
        )

    def event_logprobs(self, sentences):
        """log10 probability of every token and ``</s>`` event, in order."""
        sentences = check_sentences(sentences)
        codes, lengths = self._event_codes(sentences)
        return self.batch_logprob(codes, lengths)

    def sentence_logprob(self, tokens):
        """Total log10 probability of one sentence including ``</s>``."""
        return float(self.event_logprobs([list(tokens)]).sum())


@dataclass(frozen=True)
class PerplexityReport:
    ppl: float
    logprob_total: float
    token_count: int


def perplexity(model, sentences):
    """Corpus perplexity: events are all tokens plus one ``</s>`` per
    sentence, ``<unk>`` included."""
    sentences = check_sentences(sentences)
    if not sentences:
        raise ValueError("perplexity needs a non-empty corpus")
    logprobs = model.event_logprobs(sentences)
    total = float(logprobs.sum())
    n = len(logprobs)
    return PerplexityReport(ppl=10.0 ** (-total / n), logprob_total=total, token_count=n)


# -- estimation -------------------------------------------------------------


def estimate_mkn(counts):
    """Interpolated modified Kneser-Ney estimate in back-off (ARPA) form.

    Discounts come from counts-of-counts per order (continuation counts
    below the top order); every order interpolates with the one below it,
    grounding at the uniform distribution over the prediction vocabulary.
    The interpolated probabilities are stored directly and each context's
    left-over discount mass becomes its back-off weight, which keeps every
    context normalized by construction.
    """
    vocab = counts.vocab
    order = counts.order
    bits = counts.bits
    sos = vocab.sos_id_
    V = len(vocab)
    pred_ids = np.arange(V, dtype=np.uint64)
    pred_ids = pred_ids[pred_ids != np.uint64(sos)]
    n_pred = len(pred_ids)

    discounts = []
    levels = []

    # Unigram level: adjusted counts over the prediction vocabulary,
    # zero-count entries included so the table is total.
    uni_codes, _ = counts.raw[0]
    uni_used = counts.adjusted[0]
    pos, found = _lookup(uni_codes, pred_ids)
    c = np.where(found, uni_used[pos], 0).astype(np.float64)
    total = c.sum()
    if total <= 0:
        raise ValueError("cannot estimate a model from an empty corpus")
    disc = compute_discounts(*counts.counts_of_counts[0])
    discounts.append(disc)
    d = np.where(c > 0, disc.for_count(c), 0.0)
    gamma = max(float(d.sum()) / total, MIN_BACKOFF_MASS)
    p = np.maximum(c - d, 0.0) / total + gamma / n_pred
    uni_level_codes = np.arange(V, dtype=np.uint64)
    uni_logp = np.empty(V, dtype=np.float64)
    uni_logp[pred_ids.astype(np.int64)] = np.log10(p)
    uni_logp[sos] = LOG10_ZERO
    levels.append(_Level(uni_level_codes, uni_logp, np.zeros(V, dtype=np.float64)))

    prob_cache = np.empty(V, dtype=np.float64)
    prob_cache[pred_ids.astype(np.int64)] = p
    prob_cache[sos] = 10.0 ** LOG10_ZERO
    lower_codes = uni_level_codes
    lower_prob = prob_cache

    for k in range(2, order + 1):
        codes, _ = counts.raw[k - 1]
        used = counts.adjusted[k - 1].astype(np.float64)
        disc = compute_discounts(*counts.counts_of_counts[k - 1])
        discounts.append(disc)
        if len(codes) == 0:
            levels.append(
                _Level(
                    np.zeros(0, dtype=np.uint64),
                    np.zeros(0, dtype=np.float64),
                    np.zeros(0, dtype=np.float64),
                )
            )
            lower_codes = np.zeros(0, dtype=np.uint64)
            lower_prob = np.zeros(0, dtype=np.float64)
            continue
        ctx = codes >> np.uint64(bits)
        starts = np.flatnonzero(np.r_[True, ctx[1:] != ctx[:-1]])
        group_of = np.cumsum(np.r_[True, ctx[1:] != ctx[:-1]]) - 1
        ctot = np.add.reduceat(used, starts)
        d = disc.for_count(used)
        n1 = np.add.reduceat((used == 1).astype(np.float64), starts)
        n2 = np.add.reduceat((used == 2).astype(np.float64), starts)
        n3p = np.add.reduceat((used >= 3).astype(np.float64), starts)
        gamma = (disc.d1 * n1 + disc.d2 * n2 + disc.d3plus * n3p) / ctot
        gamma = np.maximum(gamma, MIN_BACKOFF_MASS)
        suffix = codes & _mask((k - 1) * bits)
        spos, sfound = _lookup(lower_codes, suffix)
        if not sfound.all():
            raise AssertionError("lower-order n-gram missing for a stored suffix")
        p = np.maximum(used - d, 0.0) / ctot[group_of] + gamma[group_of] * lower_prob[spos]
        # The per-context discount mass is exactly the back-off weight of
        # the interpolated model written in back-off form.
        ctx_pos, ctx_found = _lookup(levels[k - 2].codes, ctx[starts])
        if not ctx_found.all():
            raise AssertionError("context n-gram missing at the lower order")
        levels[k - 2].bow[ctx_pos] = np.log10(gamma)
        levels.append(_Level(codes, np.log10(p), np.zeros(len(codes), dtype=np.float64)))
        lower_codes = codes
        lower_prob = p

    return BackoffModel(vocab, order, levels, discounts=discounts)


# -- normalization diagnostics -----------------------------------------------


def context_normalization_error(model):
    """Max |1 - sum_w p(w|h)| over every stored context, computed exactly.

    The sum over the full vocabulary is evaluated recursively: stored
    probabilities are added directly and the remaining mass is the context's
    back-off weight times the lower-order tail.  This is algebraically the
    full per-token summation, without the |V| factor.
    """
    sums = {}  # (k, code) -> full-vocab probability sum of context
    uni = model.levels[0]
    pred = uni.codes != np.uint64(model.vocab.sos_id_)
    s0 = float((10.0 ** uni.logp[pred]).sum())
    sums[(0, 0)] = s0
    worst = abs(1.0 - s0) if model.order == 1 else 0.0
    for k in range(2, model.order + 1):
        level = model.levels[k - 1]
        if len(level.codes) == 0:
            continue
        ctx = level.codes >> np.uint64(model.bits)
        starts = np.flatnonzero(np.r_[True, ctx[1:] != ctx[:-1]])
        ends = np.r_[starts[1:], len(ctx)]
        suffix = level.codes & _mask((k - 1) * model.bits)
        p_lower = 10.0 ** model.batch_logprob(suffix, np.full(len(suffix), k - 1))
        p_hi = 10.0 ** level.logp
        ctx_pos, ctx_found = _lookup(model.levels[k - 2].codes, ctx[starts])
        for g, (a, b) in enumerate(zip(starts, ends)):
            code = int(ctx[a])
            bow = 10.0 ** model.levels[k - 2].bow[ctx_pos[g]] if ctx_found[g] else 1.0
            tail = _context_sum(model, k - 2, code & int(_mask((k - 2) * model.bits)), sums)
            s = float(p_hi[a:b].sum()) + bow * (tail - float(p_lower[a:b].sum()))
            worst = max(worst, abs(1.0 - s))
    return worst


def _context_sum(model, k, code, sums):
    """Full-vocabulary probability sum under a context of length ``k``."""
    if k == 0:
        return sums[(0, 0)]
    key = (k, code)
    if key in sums:
        return sums[key]
    level = model.levels[k]  # extensions of the context live at order k+1
    base = np.uint64(code << model.bits)
    lo = np.searchsorted(level.codes, base)
    hi = np.searchsorted(level.codes, base | _mask(model.bits), side="right")
    cpos, cfound = _lookup(model.levels[k - 1].codes, np.asarray([code], dtype=np.uint64))
    bow = 10.0 ** model.levels[k - 1].bow[cpos[0]] if cfound[0] else 1.0
    tail = _context_sum(model, k - 1, code & int(_mask((k - 1) * model.bits)), sums)
    if hi > lo:
        stored = 10.0 ** level.logp[lo:hi]
        suffix = level.codes[lo:hi] & _mask(k * model.bits)
        p_lower = 10.0 ** model.batch_logprob(suffix, np.full(hi - lo, k))
        s = float(stored.sum()) + bow * (tail - float(p_lower.sum()))
    else:
        s = bow * tail
    sums[key] = s
    return s


# -- pruning ------------------------------------------------------------------

LN10 = math.log(10.0)


def _context_marginals(model, ctx_codes, k):
    """log10 model probability of each length-``k`` context sequence.

    The chain starts at the unigram; a leading ``<s>`` is looked up as
    ``</s>`` since sentence starts occur exactly as often as sentence ends.
    """
    out = np.zeros(len(ctx_codes), dtype=np.float64)
    shift = np.uint64(model.bits)
    for j in range(1, k + 1):
        grams = ctx_codes >> np.uint64((k - j) * model.bits)
        grams = grams & _mask(j * model.bits)
        if j == 1:
            is_sos = grams == np.uint64(model.vocab.sos_id_)
            grams = np.where(is_sos, np.uint64(model.vocab.eos_id_), grams)
        out += model.batch_logprob(grams.astype(np.uint64), np.full(len(grams), j))
    del shift
    return out


def prune(model, threshold=None, max_ngrams=None):
    """Relative-entropy (Stolcke) pruning.

    With ``threshold``, an n-gram of order >= 2 is dropped when removing it
    (renormalizing its context's back-off weight) changes the model's
    perplexity by less than ``threshold`` relative; threshold 0 prunes
    nothing.  N-grams that are the context of surviving higher-order entries
    are kept; unigrams are never pruned.  With ``max_ngrams``, the threshold
    is binary-searched (20 iterations over log-threshold in [1e-12, 1e-2])
    for the largest model within the budget.
    """
    if (threshold is None) == (max_ngrams is None):
        raise ValueError("give exactly one of threshold or max_ngrams")
    if threshold is not None:
        if threshold < 0:
            raise ValueError("threshold must be >= 0")
        return _prune_threshold(model, threshold)
    uni = model.ngram_count(1)
    if max_ngrams < uni:
        raise ValueError(
            f"budget {max_ngrams} is below the unigram count {uni}; "
            "unigrams are never pruned"
        )
    if model.ngram_count() <= max_ngrams:
        return model.copy()
    lo, hi = 1e-12, 1e-2
    while _prune_threshold(model, hi).ngram_count() > max_ngrams and hi < 1e6:
        hi *= 10.0
    best = None
    best_count = -1
    llo, lhi = math.log(lo), math.log(hi)
    for _ in range(20):
        mid = math.exp(0.5 * (llo + lhi))
        candidate = _prune_threshold(model, mid)
        count = candidate.ngram_count()
        if count <= max_ngrams:
            if count > best_count:
                best, best_count = candidate, count
            lhi = math.log(mid)
        else:
            llo = math.log(mid)
    if best is None:
        best = _prune_threshold(model, hi)
    return best


def _seen_sums(model, level_k):
    """Per-context sums over stored entries at order ``level_k``.

    Returns (starts, ends, ctx codes, sum of stored probs, sum of the
    lower-order probabilities of the same words).
    """
    level = model.levels[level_k - 1]
    ctx = level.codes >> np.uint64(model.bits)
    starts = np.flatnonzero(np.r_[True, ctx[1:] != ctx[:-1]])
    ends = np.r_[starts[1:], len(ctx)]
    suffix = level.codes & _mask((level_k - 1) * model.bits)
    p_lower = 10.0 ** model.batch_logprob(suffix, np.full(len(suffix), level_k - 1))
    p_hi = 10.0 ** level.logp
    sum_hi = np.add.reduceat(p_hi, starts)
    sum_lo = np.add.reduceat(p_lower, starts)
    return starts, ends, ctx, p_hi, p_lower, sum_hi, sum_lo


def prune_candidate_stats(model, k):
    """Per-entry pruning statistics at order ``k`` against ``model``.

    Returns (delta_entropy_log10, perp_change, protected) aligned with the
    level's entries; this is the quantity the threshold is compared to.
    """
    level = model.levels[k - 1]
    starts, ends, ctx, p_hi, p_lower, sum_hi, sum_lo = _seen_sums(model, k)
    group_of = np.zeros(len(ctx), dtype=np.int64)
    group_of[starts] = 1
    group_of = np.cumsum(group_of) - 1
    numerator = 1.0 - sum_hi
    denominator = 1.0 - sum_lo
    ctx_pos, ctx_found = _lookup(model.levels[k - 2].codes, ctx[starts])
    old_bow = np.where(ctx_found, model.levels[k - 2].bow[ctx_pos], 0.0)
    ctx_logp = _context_marginals(model, ctx[starts].astype(np.uint64), k - 1)
    new_bow = np.log10(np.maximum(numerator[group_of] + p_hi, 1e-30)) - np.log10(
        np.maximum(denominator[group_of] + p_lower, 1e-30)
    )
    delta_logp = np.log10(p_lower) + new_bow - level.logp
    delta_entropy = -(10.0 ** ctx_logp[group_of]) * (
        p_hi * delta_logp + numerator[group_of] * (new_bow - old_bow[group_of])
    )
    perp_change = 10.0 ** delta_entropy - 1.0
    protected = np.zeros(len(level.codes), dtype=bool)
    if k < model.order:
        survivors_ctx = np.unique(model.levels[k].codes >> np.uint64(model.bits))
        _, protected = _lookup(survivors_ctx, level.codes)
    return delta_entropy, perp_change, protected


def _prune_threshold(model, threshold):
    out = model.copy()
    pruned_any = False
    for k in range(out.order, 1, -1):
        if len(out.levels[k - 1].codes) == 0:
            continue
        _, perp_change, protected = prune_candidate_stats(out, k)
        drop = (threshold > 0) & (perp_change < threshold) & ~protected
        if drop.any():
            pruned_any = True
            keep = ~drop
            level = out.levels[k - 1]
            out.levels[k - 1] = _Level(
                level.codes[keep], level.logp[keep], level.bow[keep]
            )
    if not pruned_any:
        return out
    # Recompute back-off weights bottom-up from the surviving entries.
    for k in range(2, out.order + 1):
        out.levels[k - 2].bow[:] = 0.0
        if len(out.levels[k - 1].codes) == 0:
            continue
        starts, _, ctx, _, _, sum_hi, sum_lo = _seen_sums(out, k)
        numerator = np.maximum(1.0 - sum_hi, MIN_BACKOFF_MASS)
        denominator = np.maximum(1.0 - sum_lo, MIN_BACKOFF_MASS)
        ctx_pos, ctx_found = _lookup(out.levels[k - 2].codes, ctx[starts])
        if not ctx_found.all():
            raise AssertionError("pruned model lost a context entry")
        out.levels[k - 2].bow[ctx_pos] = np.log10(numerator) - np.log10(denominator)
    return out


# -- interpolation -------------------------------------------------------------


@dataclass(frozen=True)
class InterpolationSpec:
    lambda_: float
    dev_ppl_at_lambda: float


def interpolate(model_a, model_b, lambda_):
    """Static interpolation into a single back-off model.

    The n-gram sets are unioned; every stored entry gets
    ``lambda * pA + (1 - lambda) * pB`` with each side evaluated through its
    own back-off recursion, and back-off weights are recomputed bottom-up to
    restore normalization.
    """
    if not 0.0 <= lambda_ <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lambda_}")
    if model_a.vocab.tokens_ != model_b.vocab.tokens_:
        raise ValueError("models must share one vocabulary (beyond <unk> mapping)")
    vocab = model_a.vocab
    order = max(model_a.order, model_b.order)
    levels = []
    for k in range(1, order + 1):
        codes_a = model_a.levels[k - 1].codes if k <= model_a.order else np.zeros(0, np.uint64)
        codes_b = model_b.levels[k - 1].codes if k <= model_b.order else np.zeros(0, np.uint64)
        codes = np.union1d(codes_a, codes_b)
        if len(codes) == 0:
            levels.append(_Level(codes, np.zeros(0), np.zeros(0)))
            continue
        ks = np.full(len(codes), k)
        pa = 10.0 ** model_a.batch_logprob(codes, ks)
        pb = 10.0 ** model_b.batch_logprob(codes, ks)
        p = lambda_ * pa + (1.0 - lambda_) * pb
        levels.append(_Level(codes, np.log10(p), np.zeros(len(codes), dtype=np.float64)))
    merged = BackoffModel(vocab, order, levels)
    for k in range(2, order + 1):
        if len(merged.levels[k - 1].codes) == 0:
            continue
        starts, _, ctx, _, _, sum_hi, sum_lo = _seen_sums(merged, k)
        numerator = np.maximum(1.0 - sum_hi, MIN_BACKOFF_MASS)
        denominator = np.maximum(1.0 - sum_lo, MIN_BACKOFF_MASS)
        ctx_pos, ctx_found = _lookup(merged.levels[k - 2].codes, ctx[starts])
        if not ctx_found.all():
            raise AssertionError("merged model lost a context entry")
        merged.levels[k - 2].bow[ctx_pos] = np.log10(numerator) - np.log10(denominator)
    return merged


def optimize_lambda(model_a, model_b, dev_sentences, tol=1e-3):
    """Golden-section search for the dev-perplexity-minimizing mixture weight.

    The mixture is evaluated per event as ``lambda*pA + (1-lambda)*pB`` (no
    model merge); endpoints 0 and 1 are always candidates.
    """
    dev_sentences = check_sentences(dev_sentences)
    if not dev_sentences:
        raise ValueError("dev corpus is empty")
    pa = 10.0 ** model_a.event_logprobs(dev_sentences)
    pb = 10.0 ** model_b.event_logprobs(dev_sentences)
    n = len(pa)

    def ppl(lam):
        return 10.0 ** (-np.log10(lam * pa + (1.0 - lam) * pb).sum() / n)

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, 1.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = ppl(c), ppl(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = ppl(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = ppl(d)
    candidates = [0.0, 1.0, 0.5 * (a + b)]
    values = [ppl(x) for x in candidates]
    best = int(np.argmin(values))
    return InterpolationSpec(lambda_=candidates[best], dev_ppl_at_lambda=values[best])
