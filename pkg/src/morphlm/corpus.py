"""Corpus ingestion, vocabulary construction, subsampling and statistics.

Corpora are lists of sentences; a sentence is a list of unicode tokens with
no embedded whitespace.  On disk a corpus is UTF-8 text, one sentence per
line, tokens separated by single spaces.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass

from sklearn.base import BaseEstimator, TransformerMixin

from .validation import check_fitted, check_random_state, check_sentences

UNK = "<unk>"
SOS = "<s>"
EOS = "</s>"
SPECIALS = (UNK, SOS, EOS)


def normalize_and_tokenize(raw):
    """Split raw text into sentences of whitespace-separated tokens.

    ``raw`` may be ``str`` or UTF-8 ``bytes``.  One sentence per line, runs
    of whitespace collapse, empty lines are dropped, case is preserved.
    Invalid UTF-8 raises ``ValueError`` naming the byte offset.
    """
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ValueError(
                f"input is not valid UTF-8 at byte offset {exc.start}"
            ) from exc
    return [line.split() for line in raw.splitlines() if line.split()]


def read_corpus(path):
    """Read a one-sentence-per-line UTF-8 corpus file."""
    with open(path, "rb") as fh:
        return normalize_and_tokenize(fh.read())


def write_corpus(sentences, path):
    with open(path, "w", encoding="utf-8") as fh:
        for sent in sentences:
            fh.write(" ".join(sent))
            fh.write("\n")


class Vocabulary(TransformerMixin, BaseEstimator):
    """Frequency-cutoff token vocabulary with reserved special symbols.

    ``fit`` keeps the ``max_size`` most frequent tokens (ties broken by
    lexicographic token order, for determinism) and appends the special
    symbols ``<unk>``, ``<s>``, ``</s>`` at the end of the id range.
    ``transform`` maps out-of-vocabulary tokens to ``<unk>``.

    Ids are dense and 0-based; ``tokens_[id]`` and ``index_[token]`` are
    inverse.
    """

    def __init__(self, max_size=50000):
        self.max_size = max_size

    def fit(self, X, y=None):
        if self.max_size < 1:
            raise ValueError(f"max_size must be >= 1, got {self.max_size}")
        sentences = check_sentences(X)
        counts = Counter()
        for sent in sentences:
            counts.update(sent)
        for special in SPECIALS:
            counts.pop(special, None)
        if not counts:
            raise ValueError("cannot build a vocabulary from an empty corpus")
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        kept = [tok for tok, _ in ranked[: self.max_size]]
        self._set_tokens(kept + list(SPECIALS))
        return self

    def _set_tokens(self, tokens):
        self.tokens_ = list(tokens)
        self.index_ = {tok: i for i, tok in enumerate(self.tokens_)}
        if len(self.index_) != len(self.tokens_):
            raise ValueError("vocabulary contains duplicate tokens")
        for special in SPECIALS:
            if special not in self.index_:
                raise ValueError(f"vocabulary is missing special token {special}")
        self.unk_id_ = self.index_[UNK]
        self.sos_id_ = self.index_[SOS]
        self.eos_id_ = self.index_[EOS]

    @classmethod
    def from_tokens(cls, tokens):
        """Build a fitted vocabulary from an explicit id-ordered token list.

        Special symbols missing from ``tokens`` are appended.
        """
        tokens = list(tokens)
        present = set(tokens)
        tokens += [s for s in SPECIALS if s not in present]
        vocab = cls(max_size=len(tokens))
        vocab._set_tokens(tokens)
        return vocab

    def transform(self, X):
        """Replace tokens outside the vocabulary with ``<unk>``."""
        check_fitted(self, "index_")
        index = self.index_
        return [
            [tok if tok in index else UNK for tok in sent]
            for sent in check_sentences(X)
        ]

    def __len__(self):
        check_fitted(self, "index_")
        return len(self.tokens_)

    def __contains__(self, token):
        check_fitted(self, "index_")
        return token in self.index_

    def id(self, token):
        """Id of ``token``, falling back to the ``<unk>`` id."""
        check_fitted(self, "index_")
        return self.index_.get(token, self.unk_id_)

    def encode(self, sentence):
        index = self.index_
        unk = self.unk_id_
        return [index.get(tok, unk) for tok in sentence]

    def decode(self, ids):
        tokens = self.tokens_
        return [tokens[i] for i in ids]

    def save(self, path):
        """One token per line; the line number (0-based) is the id."""
        check_fitted(self, "index_")
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.tokens_:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        return cls.from_tokens(tokens)


def build_vocabulary(sentences, max_size):
    """Functional form of ``Vocabulary(max_size).fit(sentences)``."""
    return Vocabulary(max_size=max_size).fit(sentences)


def apply_vocabulary(sentences, vocab):
    """Functional form of ``vocab.transform(sentences)``."""
    return vocab.transform(sentences)


def subsample(sentences, target_tokens, seed):
    """Select a random subset of sentences totalling >= ``target_tokens``.

    Sentences are drawn uniformly without replacement until the cumulative
    token count first reaches the target, then returned in their original
    corpus order.  Deterministic for a fixed seed.  If the corpus holds
    fewer than ``target_tokens`` tokens the full corpus is returned and a
    ``UserWarning`` is emitted.
    """
    if target_tokens < 1:
        raise ValueError(f"target_tokens must be >= 1, got {target_tokens}")
    sentences = check_sentences(sentences)
    total = sum(len(s) for s in sentences)
    if target_tokens > total:
        warnings.warn(
            f"subsample target {target_tokens} exceeds corpus size {total}; "
            "returning the full corpus",
            UserWarning,
            stacklevel=2,
        )
        return list(sentences)
    rng = check_random_state(seed)
    order = rng.permutation(len(sentences))
    chosen = []
    cum = 0
    for idx in order:
        chosen.append(idx)
        cum += len(sentences[idx])
        if cum >= target_tokens:
            break
    return [sentences[i] for i in sorted(chosen)]


@dataclass(frozen=True)
class CorpusStats:
    sentence_count: int
    token_count: int
    type_count: int
    oov_rate: float


def corpus_stats(sentences, vocab=None):
    """Exact sentence/token/type counts, plus OOV rate when a vocabulary
    is supplied (0.0 otherwise)."""
    sentences = check_sentences(sentences)
    tokens = 0
    types = set()
    oov = 0
    for sent in sentences:
        tokens += len(sent)
        types.update(sent)
        if vocab is not None:
            oov += sum(1 for tok in sent if tok not in vocab)
    rate = (oov / tokens) if (vocab is not None and tokens) else 0.0
    return CorpusStats(
        sentence_count=len(sentences),
        token_count=tokens,
        type_count=len(types),
        oov_rate=rate,
    )
