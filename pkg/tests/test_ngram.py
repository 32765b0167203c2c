"""Counting and modified Kneser-Ney estimation, against exact oracles."""

from fractions import Fraction as F

import numpy as np
import pytest

from morphlm import (
    EOS,
    SOS,
    UNK,
    build_vocabulary,
    context_normalization_error,
    count_ngrams,
    estimate_mkn,
    merge_counts,
    perplexity,
)
from morphlm.ngram import BackoffModel, _Level, compute_discounts

TOY = [["a", "b"], ["a", "c"], ["b", "a"]]


def toy_model():
    return estimate_mkn(count_ngrams(TOY, 2))


def decode_counts(counts, k):
    """(token tuple) -> count mapping for order k."""
    vocab = counts.vocab
    codes, values = counts.raw[k - 1]
    out = {}
    mask = (1 << counts.bits) - 1
    for code, v in zip(codes.tolist(), values.tolist()):
        ids = [(code >> (counts.bits * (k - 1 - j))) & mask for j in range(k)]
        out[tuple(vocab.tokens_[i] for i in ids)] = v
    return out


class TestCounting:
    def test_bigram_example(self):
        counts = count_ngrams([["a", "b"]], 2)
        assert decode_counts(counts, 2) == {
            (SOS, "a"): 1,
            ("a", "b"): 1,
            ("b", EOS): 1,
        }

    def test_sos_only_context(self):
        counts = count_ngrams([["a", "b"]], 2)
        unigrams = decode_counts(counts, 1)
        assert unigrams[(SOS,)] == 1  # raw count kept, never a predicted event

    def test_order_exceeding_sentences(self):
        counts = count_ngrams([["a"]], 4)
        assert len(counts.raw[3][0]) == 0  # no 4-grams in <s> a </s>

    def test_exact_counts_vs_python_oracle(self, small_corpus):
        sentences = small_corpus[:500]
        counts = count_ngrams(sentences, 3)
        from collections import Counter

        oracle = Counter()
        for sent in sentences:
            padded = [SOS] + sent + [EOS]
            for k in (1, 2, 3):
                for i in range(len(padded) - k + 1):
                    oracle[tuple(padded[i : i + k])] += 1
        mine = {}
        for k in (1, 2, 3):
            mine.update(decode_counts(counts, k))
        assert mine == dict(oracle)

    def test_shard_merge_equals_single_pass(self, small_corpus):
        sentences = small_corpus[:2000]
        vocab = build_vocabulary(sentences, 5000)
        whole = count_ngrams(sentences, 4, vocab)
        shards = [
            count_ngrams(sentences[i::3], 4, vocab) for i in range(3)
        ]
        merged = merge_counts(shards)
        for k in range(1, 5):
            assert np.array_equal(merged.raw[k - 1][0], whole.raw[k - 1][0])
            assert np.array_equal(merged.raw[k - 1][1], whole.raw[k - 1][1])
            assert np.array_equal(merged.adjusted[k - 1], whole.adjusted[k - 1])

    def test_merge_order_independent(self, small_corpus):
        sentences = small_corpus[:600]
        vocab = build_vocabulary(sentences, 5000)
        shards = [count_ngrams(sentences[i::2], 3, vocab) for i in range(2)]
        a = merge_counts(shards)
        b = merge_counts(shards[::-1])
        for k in range(1, 4):
            assert np.array_equal(a.raw[k - 1][1], b.raw[k - 1][1])

    def test_continuation_counts(self):
        counts = count_ngrams(TOY, 2)
        uni = dict(
            zip(
                (counts.vocab.tokens_[c] for c in counts.raw[0][0].tolist()),
                counts.adjusted[0].tolist(),
            )
        )
        # distinct left contexts: a <- {<s>, b}; b <- {<s>, a}; c <- {a};
        # </s> <- {a, b, c}; <s> keeps its raw count
        assert uni == {"a": 2, "b": 2, "c": 1, SOS: 3, EOS: 3}


class TestDiscounts:
    def test_chen_goodman_formulas(self):
        d = compute_discounts(7, 1, 0, 0)
        y = 7 / 9
        assert d.d1 == pytest.approx(1 - 2 * y * 1 / 7)
        assert d.d2 == pytest.approx(2.0)  # n3 = 0
        assert d.d3plus == pytest.approx(2.0)  # falls back to d2 when n3 = 0
        assert not d.degenerate

    def test_degenerate_fallback(self):
        for n1, n2 in [(0, 5), (5, 0), (0, 0)]:
            d = compute_discounts(n1, n2, 1, 1)
            assert (d.d1, d.d2, d.d3plus) == (0.5, 0.5, 0.5)
            assert d.degenerate

    def test_clamping(self):
        # large n2/n1 drives d1 negative before the clamp
        d = compute_discounts(1, 100, 1, 1)
        assert 0.0 <= d.d1 <= 1.0 and 0.0 <= d.d2 <= 2.0 and 0.0 <= d.d3plus <= 3.0


def spreadsheet_oracle():
    """Exact-fraction Chen-Goodman computation for the 3-sentence corpus.

    Straight-line arithmetic, independent of the library: raw bigram counts
    and unigram continuation counts are read off the corpus by hand.
    """
    # unigram level: continuation counts a=2 b=2 c=1 </s>=3, <unk>=0; T=8
    T = F(8)
    n1, n2, n3 = F(1), F(2), F(1)  # over {c}, {a,b}, {</s>}
    y = n1 / (n1 + 2 * n2)  # 1/5
    d1 = 1 - 2 * y * n2 / n1  # 1/5
    d2 = 2 - 3 * y * n3 / n2  # 17/10
    d3 = F(3)  # n4 = 0
    gamma1 = (d1 * 1 + d2 * 2 + d3 * 1) / T  # 33/40
    vpred = F(5)  # a b c <unk> </s>
    p_a = (2 - d2) / T + gamma1 / vpred
    p_b = (2 - d2) / T + gamma1 / vpred
    p_c = (1 - d1) / T + gamma1 / vpred
    p_unk = gamma1 / vpred
    p_eos = (3 - d3) / T + gamma1 / vpred
    # bigram level: raw counts, n1=7 n2=1 n3=n4=0
    yb = F(7, 9)
    b1 = 1 - 2 * yb * F(1, 7)  # 7/9
    b2 = F(2)
    unigrams = {"a": p_a, "b": p_b, "c": p_c, UNK: p_unk, EOS: p_eos}
    bigrams = {}
    bows = {}
    # context a: extensions b, c, </s> each count 1
    g_a = b1 * 3 / F(3)
    bows["a"] = g_a
    bigrams[("a", "b")] = (1 - b1) / 3 + g_a * p_b
    bigrams[("a", "c")] = (1 - b1) / 3 + g_a * p_c
    bigrams[("a", EOS)] = (1 - b1) / 3 + g_a * p_eos
    # context b: extensions a, </s>
    g_b = b1 * 2 / F(2)
    bows["b"] = g_b
    bigrams[("b", "a")] = (1 - b1) / 2 + g_b * p_a
    bigrams[("b", EOS)] = (1 - b1) / 2 + g_b * p_eos
    # context c: extension </s> with count 1
    g_c = b1 * 1 / F(1)
    bows["c"] = g_c
    bigrams[("c", EOS)] = (1 - b1) / 1 + g_c * p_eos
    # context <s>: extensions a (count 2), b (count 1)
    g_s = (b1 * 1 + b2 * 1) / F(3)
    bows[SOS] = g_s
    bigrams[(SOS, "a")] = (2 - b2) / 3 + g_s * p_a
    bigrams[(SOS, "b")] = (1 - b1) / 3 + g_s * p_b
    return unigrams, bigrams, bows


class TestMknOracle:
    def test_unigrams_match_exact_fractions(self):
        model = toy_model()
        unigrams, _, _ = spreadsheet_oracle()
        for tok, expected in unigrams.items():
            got = 10.0 ** model.logprob(tok)
            assert got == pytest.approx(float(expected), abs=1e-9), tok

    def test_bigrams_match_exact_fractions(self):
        model = toy_model()
        _, bigrams, _ = spreadsheet_oracle()
        for (ctx, tok), expected in bigrams.items():
            got = 10.0 ** model.logprob(tok, [ctx])
            assert got == pytest.approx(float(expected), abs=1e-9), (ctx, tok)

    def test_backoff_weights_match(self):
        model = toy_model()
        _, _, bows = spreadsheet_oracle()
        level = model.levels[0]
        for ctx, expected in bows.items():
            pos = model.vocab.index_[ctx]
            got = 10.0 ** level.bow[np.searchsorted(level.codes, pos)]
            assert got == pytest.approx(float(expected), abs=1e-9), ctx

    def test_frozen_values(self):
        # spot values, frozen from the fraction oracle
        model = toy_model()
        assert 10.0 ** model.logprob("b", ["a"]) == pytest.approx(
            0.23157407407407407, abs=1e-9
        )
        assert 10.0 ** model.logprob("a", [SOS]) == pytest.approx(0.1875, abs=1e-9)
        assert 10.0 ** model.logprob(UNK) == pytest.approx(0.165, abs=1e-9)

    def test_backoff_path_uses_bow(self):
        model = toy_model()
        _, _, bows = spreadsheet_oracle()
        unigrams, _, _ = spreadsheet_oracle()
        # (c, a) is unseen: p = bow(c) * p1(a)
        expected = float(bows["c"] * unigrams["a"])
        assert 10.0 ** model.logprob("a", ["c"]) == pytest.approx(expected, abs=1e-9)

    def test_uniform_symmetry(self):
        # every type with identical counts and contexts: conditionals equal
        model = estimate_mkn(count_ngrams([["x"], ["y"], ["z"]], 2))
        ps = [10.0 ** model.logprob(t, [SOS]) for t in ("x", "y", "z")]
        assert max(ps) - min(ps) < 1e-12


class TestNormalization:
    def exhaustive_sums(self, model, contexts):
        """Literal per-token summation over the vocabulary (the slow oracle)."""
        tokens = [t for t in model.vocab.tokens_ if t != SOS]
        return {
            ctx: sum(10.0 ** model.logprob(t, list(ctx)) for t in tokens)
            for ctx in contexts
        }

    def test_toy_contexts_sum_to_one_exhaustively(self):
        model = toy_model()
        sums = self.exhaustive_sums(
            model, [(), ("a",), ("b",), ("c",), (SOS,), (UNK,), ("a", "b")]
        )
        for ctx, total in sums.items():
            assert total == pytest.approx(1.0, abs=1e-6), ctx

    def test_recursive_checker_matches_exhaustive(self):
        model = toy_model()
        assert context_normalization_error(model) < 1e-9

    def test_small_corpus_model_normalized(self, small_corpus):
        vocab = build_vocabulary(small_corpus, 2000)
        model = estimate_mkn(count_ngrams(vocab.transform(small_corpus), 3, vocab))
        assert context_normalization_error(model) < 1e-6

    def test_unigram_only_model(self):
        model = estimate_mkn(count_ngrams(TOY, 1))
        assert context_normalization_error(model) < 1e-9


class TestQueries:
    def test_uniform_unigram_value(self):
        # hand-constructed uniform model over 4 types
        from morphlm import Vocabulary

        vocab = Vocabulary.from_tokens(["a", "b", "c", "d"])
        V = len(vocab)
        codes = np.arange(V, dtype=np.uint64)
        logp = np.full(V, -np.log10(V - 1.0))
        logp[vocab.sos_id_] = -99.0
        model = BackoffModel(vocab, 1, [_Level(codes, logp, np.zeros(V))])
        for tok in ("a", "d", UNK):
            assert model.logprob(tok) == pytest.approx(-np.log10(V - 1.0))

    def test_stored_value_returned_without_backoff(self):
        model = toy_model()
        level = model.levels[1]
        code = (model.vocab.index_["a"] << model.bits) | model.vocab.index_["b"]
        stored = level.logp[np.searchsorted(level.codes, code)]
        assert model.logprob("b", ["a"]) == stored

    def test_total_over_unknown_tokens(self):
        model = toy_model()
        assert np.isfinite(model.logprob("never-seen", ["also-new", "x"]))

    def test_long_context_truncated(self):
        model = toy_model()
        assert model.logprob("b", ["c", "c", "c", "a"]) == model.logprob("b", ["a"])

    def test_scalar_matches_batch(self, small_corpus):
        vocab = build_vocabulary(small_corpus, 1000)
        mapped = vocab.transform(small_corpus[:300])
        model = estimate_mkn(count_ngrams(mapped, 3, vocab))
        probs = model.event_logprobs(mapped[:20])
        scalar = []
        for sent in mapped[:20]:
            ctx = [SOS]
            for tok in sent + [EOS]:
                scalar.append(model.logprob(tok, ctx))
                ctx.append(tok)
        assert np.allclose(probs, scalar, atol=1e-12)


class TestPerplexity:
    def test_quarter_probability(self):
        from morphlm import Vocabulary

        vocab = Vocabulary.from_tokens(["a", "b", "c"])
        V = len(vocab)
        codes = np.arange(V, dtype=np.uint64)
        logp = np.full(V, np.log10(0.25))
        logp[vocab.sos_id_] = -99.0
        model = BackoffModel(vocab, 1, [_Level(codes, logp, np.zeros(V))])
        report = perplexity(model, [["a", "b", "c"]])
        assert report.ppl == pytest.approx(4.0)
        assert report.token_count == 4  # three tokens plus </s>

    def test_single_sentence_geometric_mean(self):
        model = toy_model()
        report = perplexity(model, [["a", "b"]])
        probs = [
            10.0 ** model.logprob("a", [SOS]),
            10.0 ** model.logprob("b", [SOS, "a"]),
            10.0 ** model.logprob(EOS, [SOS, "a", "b"]),
        ]
        expected = float(np.prod(probs)) ** (-1.0 / 3.0)
        assert report.ppl == pytest.approx(expected, rel=1e-12)

    def test_train_ppl_below_heldout(self, small_corpus, small_heldout):
        vocab = build_vocabulary(small_corpus, 3000)
        model = estimate_mkn(count_ngrams(vocab.transform(small_corpus), 3, vocab))
        train_ppl = perplexity(model, vocab.transform(small_corpus)).ppl
        held_ppl = perplexity(model, vocab.transform(small_heldout)).ppl
        assert train_ppl < held_ppl

    def test_unk_counted_in_events(self):
        model = toy_model()
        report = perplexity(model, [["zzz"]])
        assert report.token_count == 2
