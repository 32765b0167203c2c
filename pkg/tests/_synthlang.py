"""Deterministic synthetic agglutinative language for desk-scale tests.

Words are stem + suffix chains (nouns decline, verbs conjugate, adjectives
grade); stems draw from Zipfian distributions, so the word-form vocabulary
is large and sparse while the morph inventory is small.  Verb suffixes
agree with the subject's number, giving sentences a dependency that spans
several tokens.  Everything is seeded, so corpora are reproducible.
"""

from __future__ import annotations

import numpy as np

_CONSONANTS = list("ptkbdgmnszlrvjf")
_VOWELS = list("aeiou")


def _make_stems(rng, count, min_syllables, max_syllables):
    stems = []
    seen = set()
    while len(stems) < count:
        n = rng.integers(min_syllables, max_syllables + 1)
        syls = []
        for _ in range(n):
            c = _CONSONANTS[rng.integers(len(_CONSONANTS))]
            v = _VOWELS[rng.integers(len(_VOWELS))]
            syls.append(c + v)
        if rng.random() < 0.4:
            syls.append(_CONSONANTS[rng.integers(len(_CONSONANTS))])
        stem = "".join(syls)
        if stem not in seen:
            seen.add(stem)
            stems.append(stem)
    return stems


def _zipf_weights(n, alpha):
    w = 1.0 / np.arange(2, n + 2) ** alpha
    return w / w.sum()


class SyntheticLanguage:
    """Sentence sampler over an agglutinative vocabulary."""

    NOUN_CASES = ["", "ban", "nak", "val", "ra", "bol", "hoz", "ig"]
    CASE_W = np.array([0.42, 0.14, 0.12, 0.09, 0.08, 0.06, 0.05, 0.04])
    PLURAL = ["", "ek"]
    VERB_TENSE = ["", "ott"]
    PERSON_SG = ["", "ok", "sz"]
    PERSON_PL = ["unk", "tok", "nak"]
    ADJ_DEGREE = ["", "abb"]

    def __init__(self, seed=12345, noun_stems=600, verb_stems=350,
                 adj_stems=220, func_words=25):
        rng = np.random.default_rng(seed)
        self.nouns = _make_stems(rng, noun_stems, 2, 3)
        self.verbs = _make_stems(rng, verb_stems, 2, 3)
        self.adjs = _make_stems(rng, adj_stems, 2, 3)
        self.funcs = _make_stems(rng, func_words, 1, 1)
        self.noun_w = _zipf_weights(len(self.nouns), 1.08)
        self.verb_w = _zipf_weights(len(self.verbs), 1.12)
        self.adj_w = _zipf_weights(len(self.adjs), 1.15)
        self.func_w = _zipf_weights(len(self.funcs), 0.9)

    def _noun(self, rng, plural):
        stem = self.nouns[rng.choice(len(self.nouns), p=self.noun_w)]
        num = self.PLURAL[1] if plural else ""
        case = self.NOUN_CASES[rng.choice(len(self.NOUN_CASES), p=self.CASE_W)]
        return stem + num + case

    def _verb(self, rng, plural):
        stem = self.verbs[rng.choice(len(self.verbs), p=self.verb_w)]
        tense = self.VERB_TENSE[rng.integers(2)]
        bank = self.PERSON_PL if plural else self.PERSON_SG
        person = bank[rng.integers(len(bank))]
        return stem + tense + person

    def _adj(self, rng):
        stem = self.adjs[rng.choice(len(self.adjs), p=self.adj_w)]
        return stem + self.ADJ_DEGREE[rng.integers(2) if rng.random() < 0.3 else 0]

    def _func(self, rng):
        return self.funcs[rng.choice(len(self.funcs), p=self.func_w)]

    def sentence(self, rng):
        # [FUNC] [ADJ] NOUN-subj ... VERB(agree) [[ADJ] NOUN-obj] [FUNC NOUN]
        plural = rng.random() < 0.35
        out = []
        if rng.random() < 0.45:
            out.append(self._func(rng))
        if rng.random() < 0.35:
            out.append(self._adj(rng))
        out.append(self._noun(rng, plural))
        n_mid = rng.integers(0, 3)
        for _ in range(n_mid):
            out.append(self._func(rng) if rng.random() < 0.6 else self._noun(rng, rng.random() < 0.3))
        out.append(self._verb(rng, plural))
        if rng.random() < 0.6:
            if rng.random() < 0.3:
                out.append(self._adj(rng))
            out.append(self._noun(rng, rng.random() < 0.3))
        if rng.random() < 0.3:
            out.append(self._func(rng))
            out.append(self._noun(rng, rng.random() < 0.3))
        return out

    def corpus(self, n_tokens, seed):
        """At least ``n_tokens`` tokens of whole sentences."""
        rng = np.random.default_rng(seed)
        sentences = []
        total = 0
        while total < n_tokens:
            s = self.sentence(rng)
            sentences.append(s)
            total += len(s)
        return sentences


def standard_splits(train_tokens=500_000, dev_tokens=30_000, eval_tokens=40_000,
                    language_seed=12345):
    """The fixed train/dev/eval splits used across the heavy tests."""
    lang = SyntheticLanguage(seed=language_seed)
    train = lang.corpus(train_tokens, seed=1)
    dev = lang.corpus(dev_tokens, seed=2)
    eval_ = lang.corpus(eval_tokens, seed=3)
    return lang, train, dev, eval_
