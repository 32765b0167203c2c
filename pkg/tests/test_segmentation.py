import itertools
import math

import numpy as np
import pytest

from morphlm import MorphSegmenter, desegment


def brute_force_best_cost(word_counts, corpus_weight=1.0):
    """Exhaustive minimum MDL cost over all per-word split combinations.

    Only feasible for a couple of short words; segmentations are all ways
    of cutting each word at any subset of its internal boundaries.
    """
    words = sorted(word_counts)

    def cuts(word):
        n = len(word)
        for bits in itertools.product([0, 1], repeat=n - 1):
            parts, start = [], 0
            for i, b in enumerate(bits, 1):
                if b:
                    parts.append(word[start:i])
                    start = i
            parts.append(word[start:])
            yield parts

    alphabet = {ch for w in words for ch in w}
    char_bits = math.log2(len(alphabet) + 1)
    best = math.inf
    best_assignment = None
    for assignment in itertools.product(*(list(cuts(w)) for w in words)):
        counts = {}
        for word, parts in zip(words, assignment):
            for p in parts:
                counts[p] = counts.get(p, 0) + word_counts[word]
        total = sum(counts.values())
        corpus_cost = total * math.log2(total) - sum(
            c * math.log2(c) for c in counts.values()
        )
        lexicon_cost = sum(len(m) + 1 for m in counts) * char_bits
        cost = lexicon_cost + corpus_weight * corpus_cost
        if cost < best:
            best = cost
            best_assignment = assignment
    return best, dict(zip(words, best_assignment))


class TestTraining:
    def test_shared_substring_enters_lexicon(self):
        seg = MorphSegmenter(random_state=0).fit({"abab": 10, "ab": 10})
        assert "ab" in seg.lexicon_
        assert seg.segment_word("abab") == ["ab", "ab"]

    def test_matches_exhaustive_mdl_on_two_words(self):
        counts = {"abab": 10, "ab": 10}
        best_cost, _ = brute_force_best_cost(counts)
        seg = MorphSegmenter(random_state=0).fit(counts)
        assert sum(seg.cost) == pytest.approx(best_cost, rel=1e-12)

    def test_single_word_stays_whole(self):
        seg = MorphSegmenter().fit({"xyz": 1})
        assert seg.lexicon_ == {"xyz": 1}
        assert seg.segment_word("xyz") == ["xyz"]

    def test_cost_no_worse_than_unsplit(self, small_corpus):
        seg = MorphSegmenter(random_state=0, max_epochs=3).fit(small_corpus[:400])
        first = sum(seg.cost_history_[0])
        assert sum(seg.cost) <= first + 1e-9

    def test_cost_monotone_per_epoch(self, small_corpus):
        seg = MorphSegmenter(random_state=0).fit(small_corpus[:800])
        totals = [a + b for a, b in seg.cost_history_]
        assert all(b <= a + 1e-9 for a, b in zip(totals, totals[1:]))

    def test_deterministic_for_seed(self, small_corpus):
        a = MorphSegmenter(random_state=5, max_epochs=3).fit(small_corpus[:300])
        b = MorphSegmenter(random_state=5, max_epochs=3).fit(small_corpus[:300])
        assert a.lexicon_ == b.lexicon_

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            MorphSegmenter().fit({})
        with pytest.raises(ValueError):
            MorphSegmenter().fit({"a": 0})
        with pytest.raises(ValueError):
            MorphSegmenter().fit({"+bad": 2})


class TestSegmentWord:
    @pytest.fixture(scope="class")
    def trained(self, small_corpus):
        return MorphSegmenter(corpus_weight=0.3, random_state=0).fit(small_corpus)

    def test_empty_word_error(self, trained):
        with pytest.raises(ValueError):
            trained.segment_word("")

    def test_dominant_whole_word(self, small_corpus):
        seg = MorphSegmenter(random_state=0).fit(small_corpus[:500])
        word = max(seg.lexicon_, key=seg.lexicon_.get)
        assert seg.segment_word(word) == [word]

    def test_concatenation_invariant(self, trained, small_heldout):
        for sent in small_heldout[:200]:
            for word in sent:
                assert "".join(trained.segment_word(word)) == word

    def test_viterbi_matches_exhaustive(self, trained):
        rng = np.random.default_rng(0)
        words = [w for s in trained.analyses_ for w in [s] if 3 <= len(w) <= 7]
        costs = trained._morph_cost
        fallback = trained._char_fallback

        def seq_cost(parts):
            total = 0.0
            for p in parts:
                if p in costs:
                    total += costs[p]
                elif len(p) == 1:
                    total += fallback
                else:
                    return math.inf
            return total

        for word in rng.choice(words, size=5, replace=False):
            best = math.inf
            for bits in itertools.product([0, 1], repeat=len(word) - 1):
                parts, start = [], 0
                for i, b in enumerate(bits, 1):
                    if b:
                        parts.append(word[start:i])
                        start = i
                parts.append(word[start:])
                best = min(best, seq_cost(parts))
            got = seq_cost(trained.segment_word(word))
            assert got == pytest.approx(best, rel=1e-12)

    def test_unseen_characters_fall_back(self, trained):
        parts = trained.segment_word("x#y")
        assert "".join(parts) == "x#y"


class TestTaggingRoundTrip:
    @pytest.fixture(scope="class")
    def trained(self, small_corpus):
        return MorphSegmenter(corpus_weight=0.3, random_state=0).fit(small_corpus)

    def test_tagging_convention(self, trained):
        out = trained.transform([["abc"]])[0]
        assert not out[0].startswith("+")
        assert all(m.startswith("+") for m in out[1:])

    def test_monomorphemic_sentence_unchanged(self, small_corpus):
        seg = MorphSegmenter(random_state=0).fit(small_corpus[:500])
        word = max(seg.lexicon_, key=seg.lexicon_.get)
        assert seg.transform([[word, word]]) == [[word, word]]

    def test_roundtrip_exact(self, trained, small_corpus, small_heldout):
        for corpus in (small_corpus[:1000], small_heldout):
            assert trained.inverse_transform(trained.transform(corpus)) == corpus

    def test_desegment_examples(self):
        assert desegment(["hát", "meg", "+beszél", "+em", "a", "nejem", "+mel"]) == [
            "hát", "megbeszélem", "a", "nejemmel",
        ]
        assert desegment(["a", "b"]) == ["a", "b"]

    def test_sentence_initial_tag_error(self):
        with pytest.raises(ValueError, match="position 0"):
            desegment(["+bad", "x"])


def test_model_file_roundtrip(tmp_path, small_corpus):
    seg = MorphSegmenter(corpus_weight=0.3, random_state=0).fit(small_corpus[:800])
    seg.save(tmp_path / "seg.tsv")
    loaded = MorphSegmenter.load(tmp_path / "seg.tsv")
    assert loaded.lexicon_ == seg.lexicon_
    assert loaded.total_morphs_ == seg.total_morphs_
    for word in list(seg.analyses_)[:50]:
        assert loaded.segment_word(word) == seg.segment_word(word)
