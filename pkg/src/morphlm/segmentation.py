"""Unsupervised MDL morph segmentation with ``+``-tagged subwords.

Training greedily re-splits each word (recursive binary splitting) to
minimize a two-part code length: the lexicon cost (character code length of
every distinct morph) plus the corpus cost (unigram code of the morph
sequence), the latter scaled by ``corpus_weight``.  Words are revisited in
a seeded random order, epoch by epoch, until the relative cost improvement
drops below ``convergence``; a refit never keeps a worse analysis than the
word's previous one, so the total cost is non-increasing.

In segmented text every morph in non-word-initial position carries a
leading ``+``, which makes desegmentation lossless.
"""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Mapping

from sklearn.base import BaseEstimator, TransformerMixin

from .validation import check_fitted, check_random_state, check_sentences

JOIN_TAG = "+"


def desegment(morph_sentence):
    """Merge ``+``-tagged morph runs back into words (exact inverse of
    ``MorphSegmenter.transform``).  A sentence-initial ``+`` morph is an
    error naming the position."""
    words = []
    for i, morph in enumerate(morph_sentence):
        if morph.startswith(JOIN_TAG):
            if not words:
                raise ValueError(
                    f"morph {morph!r} at sentence position {i} continues no word"
                )
            words[-1] += morph[len(JOIN_TAG) :]
        else:
            words.append(morph)
    return words


class _CostModel:
    """Incremental MDL cost bookkeeping over the morph count table."""

    def __init__(self, alphabet_size, corpus_weight):
        self.char_bits = math.log2(alphabet_size + 1)
        self.corpus_weight = corpus_weight
        self.counts = {}
        self.total = 0
        self.sum_clog = 0.0  # sum over morphs of count * log2(count)
        self.lex_units = 0  # sum over distinct morphs of len(morph) + 1

    def add(self, morph, delta):
        old = self.counts.get(morph, 0)
        new = old + delta
        if new < 0:
            raise AssertionError(f"negative count for morph {morph!r}")
        if old > 1:
            self.sum_clog -= old * math.log2(old)
        if new > 1:
            self.sum_clog += new * math.log2(new)
        if old == 0 and new > 0:
            self.lex_units += len(morph) + 1
        elif old > 0 and new == 0:
            self.lex_units -= len(morph) + 1
            del self.counts[morph]
        if new > 0:
            self.counts[morph] = new
        self.total += delta

    def lexicon_cost(self):
        return self.lex_units * self.char_bits

    def corpus_cost(self):
        if self.total == 0:
            return 0.0
        return self.total * math.log2(self.total) - self.sum_clog

    def cost(self):
        return self.lexicon_cost() + self.corpus_weight * self.corpus_cost()


class MorphSegmenter(TransformerMixin, BaseEstimator):
    """Morph segmentation estimator.

    ``fit`` accepts either a corpus (list of token sentences) or a mapping
    ``word -> count``.  ``transform`` replaces each word by its morphs with
    non-initial morphs ``+``-tagged; ``inverse_transform`` undoes it.
    """

    def __init__(self, corpus_weight=1.0, convergence=0.001, max_epochs=15,
                 random_state=0):
        self.corpus_weight = corpus_weight
        self.convergence = convergence
        self.max_epochs = max_epochs
        self.random_state = random_state

    def fit(self, X, y=None):
        if self.corpus_weight <= 0:
            raise ValueError("corpus_weight must be positive")
        if isinstance(X, Mapping):
            word_counts = dict(X)
        else:
            word_counts = Counter()
            for sent in check_sentences(X):
                word_counts.update(sent)
        if not word_counts:
            raise ValueError("cannot fit a segmenter on an empty corpus")
        for word, count in word_counts.items():
            if count < 1:
                raise ValueError(f"count for {word!r} must be >= 1")
            if word.startswith(JOIN_TAG):
                raise ValueError(
                    f"word {word!r} starts with the reserved {JOIN_TAG!r} tag"
                )
        alphabet = {ch for word in word_counts for ch in word}
        model = _CostModel(len(alphabet), self.corpus_weight)
        analyses = {}
        for word, count in word_counts.items():
            model.add(word, count)
            analyses[word] = (word,)
        rng = check_random_state(self.random_state)
        words = sorted(word_counts)
        self.cost_history_ = [
            (model.lexicon_cost(), model.corpus_weight * model.corpus_cost())
        ]
        previous = model.cost()
        for _ in range(self.max_epochs):
            for idx in rng.permutation(len(words)):
                word = words[idx]
                count = word_counts[word]
                old = analyses[word]
                for m in old:
                    model.add(m, -count)
                old_cost = self._cost_with(model, old, count)
                new = self._resplit(model, word, count)
                if self._cost_with(model, new, count) > old_cost:
                    # never keep a worse analysis than the word already had,
                    # so the total cost cannot increase
                    new = old
                for m in new:
                    model.add(m, count)
                analyses[word] = new
            current = model.cost()
            self.cost_history_.append(
                (model.lexicon_cost(), model.corpus_weight * model.corpus_cost())
            )
            if previous > 0 and (previous - current) / previous < self.convergence:
                break
            previous = current
        self.lexicon_ = dict(model.counts)
        self.total_morphs_ = model.total
        self.analyses_ = analyses
        self._prepare_lookup()
        return self

    @staticmethod
    def _cost_with(model, morphs, count):
        for m in morphs:
            model.add(m, count)
        cost = model.cost()
        for m in morphs:
            model.add(m, -count)
        return cost

    def _resplit(self, model, word, count):
        """Greedy recursive binary split of ``word`` (counts not applied)."""
        best_cost = self._cost_with(model, (word,), count)
        best_split = 0
        for i in range(1, len(word)):
            cand = self._cost_with(model, (word[:i], word[i:]), count)
            if cand < best_cost - 1e-9:
                best_cost = cand
                best_split = i
        if best_split == 0:
            return (word,)
        left, right = word[:best_split], word[best_split:]
        # optimize each half with the sibling's counts present
        model.add(right, count)
        left_m = self._resplit(model, left, count)
        for m in left_m:
            model.add(m, count)
        model.add(right, -count)
        right_m = self._resplit(model, right, count)
        for m in left_m:
            model.add(m, -count)
        return left_m + right_m

    def _prepare_lookup(self):
        self._max_morph_len = max(len(m) for m in self.lexicon_)
        total = self.total_morphs_
        self._morph_cost = {
            m: -math.log(c / total) for m, c in self.lexicon_.items()
        }
        self._char_fallback = math.log(total + 1)

    @property
    def cost(self):
        """(lexicon_bits, weighted_corpus_bits) after training."""
        check_fitted(self, "cost_history_")
        return self.cost_history_[-1]

    def segment_word(self, word):
        """Viterbi decomposition under unigram morph costs.

        Characters not covered by any lexicon morph fall back to
        single-character morphs at a large fixed cost, so every word over
        the training alphabet (and beyond) segments.
        """
        check_fitted(self, "lexicon_")
        if not word:
            raise ValueError("cannot segment an empty word")
        n = len(word)
        INF = math.inf
        best = [INF] * (n + 1)
        back = [0] * (n + 1)
        best[0] = 0.0
        for j in range(1, n + 1):
            for i in range(max(0, j - self._max_morph_len), j):
                if best[i] == INF:
                    continue
                piece = word[i:j]
                cost = self._morph_cost.get(piece)
                if cost is None:
                    if j - i > 1:
                        continue
                    cost = self._char_fallback
                if best[i] + cost < best[j] - 1e-12:
                    best[j] = best[i] + cost
                    back[j] = i
        morphs = []
        j = n
        while j > 0:
            i = back[j]
            morphs.append(word[i:j])
            j = i
        return morphs[::-1]

    def transform(self, X):
        """Segment a corpus; non-word-initial morphs get a ``+`` prefix."""
        check_fitted(self, "lexicon_")
        out = []
        for sent in check_sentences(X):
            morphs = []
            for word in sent:
                pieces = self.segment_word(word)
                morphs.append(pieces[0])
                morphs.extend(JOIN_TAG + p for p in pieces[1:])
            out.append(morphs)
        return out

    def inverse_transform(self, X):
        return [desegment(sent) for sent in X]

    def save(self, path):
        """Header line with the total morph count, then morph<TAB>count."""
        check_fitted(self, "lexicon_")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{self.total_morphs_}\n")
            for morph in sorted(self.lexicon_):
                fh.write(f"{morph}\t{self.lexicon_[morph]}\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            try:
                total = int(header)
            except ValueError:
                raise ValueError(f"bad segmenter model header {header!r}") from None
            lexicon = {}
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                morph, _, count = line.partition("\t")
                lexicon[morph] = int(count)
        model = cls()
        model.lexicon_ = lexicon
        model.total_morphs_ = total
        model.cost_history_ = []
        model.analyses_ = {}
        model._prepare_lookup()
        return model
