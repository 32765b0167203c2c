"""Shared input-validation helpers used across estimators and functions."""

from __future__ import annotations

import numbers

import numpy as np


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``.

    Accepts ``None`` (fresh entropy), an integer seed, or an existing
    Generator (returned unchanged).
    """
    if seed is None:
        return np.random.default_rng()
    if isinstance(seed, numbers.Integral):
        return np.random.default_rng(int(seed))
    if isinstance(seed, np.random.Generator):
        return seed
    raise TypeError(f"cannot derive a random generator from {seed!r}")


def check_sentences(sentences, allow_empty_corpus=True):
    """Validate a corpus: a sequence of sentences, each a list of tokens.

    Tokens must be non-empty strings without whitespace.  Returns the corpus
    as a list of lists of str.
    """
    out = []
    for i, sent in enumerate(sentences):
        toks = list(sent)
        for tok in toks:
            if not isinstance(tok, str):
                raise TypeError(f"sentence {i}: token {tok!r} is not a string")
            if not tok or tok.split() != [tok]:
                raise ValueError(
                    f"sentence {i}: token {tok!r} is empty or contains whitespace"
                )
        out.append(toks)
    if not allow_empty_corpus and not out:
        raise ValueError("corpus is empty")
    return out


def check_fitted(estimator, attribute):
    if not hasattr(estimator, attribute):
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted (missing {attribute!r}); "
            "call fit() first"
        )
