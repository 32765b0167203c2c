"""ARPA text serialization of back-off models.

Layout: a ``\\data\\`` header with per-order entry counts, one
``\\k-grams:`` section per order with ``logprob<TAB>ngram<TAB>backoff``
lines (back-off column only below the top order), then ``\\end\\``.
All values are log10, written with 7 decimals.
"""

from __future__ import annotations

import numpy as np

from .corpus import Vocabulary
from .ngram import BackoffModel, _Level, _bits_for


class ArpaParseError(ValueError):
    def __init__(self, message, line_no):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def _decode_code(code, k, bits, tokens):
    ids = []
    mask = (1 << bits) - 1
    for j in range(k):
        ids.append((code >> ((k - 1 - j) * bits)) & mask)
    return " ".join(tokens[i] for i in ids)


def write_arpa(model, sink):
    """Write ``model`` to a path or text file object."""
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "w", encoding="utf-8") as fh:
            return write_arpa(model, fh)
    tokens = model.vocab.tokens_
    sink.write("\\data\\\n")
    for k in range(1, model.order + 1):
        sink.write(f"ngram {k}={len(model.levels[k - 1].codes)}\n")
    for k in range(1, model.order + 1):
        level = model.levels[k - 1]
        sink.write(f"\n\\{k}-grams:\n")
        with_bow = k < model.order
        for i in range(len(level.codes)):
            gram = _decode_code(int(level.codes[i]), k, model.bits, tokens)
            if with_bow:
                sink.write(f"{level.logp[i]:.10f}\t{gram}\t{level.bow[i]:.10f}\n")
            else:
                sink.write(f"{level.logp[i]:.10f}\t{gram}\n")
    sink.write("\n\\end\\\n")


def read_arpa(source):
    """Parse an ARPA file into a ``BackoffModel``.

    The vocabulary is taken from the unigram section in file order (special
    symbols appended if absent).  Malformed headers or a count mismatch
    with the body raise ``ArpaParseError`` with the offending line number.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, encoding="utf-8") as fh:
            return read_arpa(fh)
    lines = source.read().splitlines()
    i = 0
    n = len(lines)
    while i < n and lines[i].strip() != "\\data\\":
        if lines[i].strip():
            raise ArpaParseError("expected \\data\\ header", i + 1)
        i += 1
    if i == n:
        raise ArpaParseError("missing \\data\\ header", n)
    i += 1
    counts = {}
    while i < n and lines[i].strip():
        line = lines[i].strip()
        if not line.startswith("ngram "):
            break
        try:
            order_s, count_s = line[len("ngram ") :].split("=")
            counts[int(order_s)] = int(count_s)
        except ValueError:
            raise ArpaParseError(f"bad count line {line!r}", i + 1) from None
        i += 1
    if not counts or sorted(counts) != list(range(1, max(counts) + 1)):
        raise ArpaParseError("incomplete ngram count declarations", i)
    order = max(counts)

    sections = {}
    unigram_tokens = []
    expected = 1
    while i < n:
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if line == "\\end\\":
            break
        if not (line.startswith("\\") and line.endswith("-grams:")):
            raise ArpaParseError(f"expected a \\k-grams: header, got {line!r}", i + 1)
        try:
            k = int(line[1 : -len("-grams:")])
        except ValueError:
            raise ArpaParseError(f"bad section header {line!r}", i + 1) from None
        if k != expected:
            raise ArpaParseError(f"expected \\{expected}-grams: section", i + 1)
        i += 1
        entries = []
        while i < n and lines[i].strip() and not lines[i].strip().startswith("\\"):
            fields = lines[i].strip().split("\t")
            if len(fields) == 1:
                # Tolerate space-separated files: logp, k tokens, optional bow.
                parts = lines[i].split()
                if len(parts) == k + 2:
                    fields = [parts[0], " ".join(parts[1:-1]), parts[-1]]
                elif len(parts) == k + 1:
                    fields = [parts[0], " ".join(parts[1:])]
            if len(fields) not in (2, 3):
                raise ArpaParseError("expected 2 or 3 tab-separated fields", i + 1)
            try:
                logp = float(fields[0])
                bow = float(fields[2]) if len(fields) == 3 else 0.0
            except ValueError:
                raise ArpaParseError("non-numeric probability field", i + 1) from None
            gram = tuple(fields[1].split())
            if len(gram) != k:
                raise ArpaParseError(
                    f"{len(gram)}-token entry in the \\{k}-grams: section", i + 1
                )
            entries.append((gram, logp, bow))
            if k == 1:
                unigram_tokens.append(gram[0])
            i += 1
        if len(entries) != counts[k]:
            raise ArpaParseError(
                f"\\{k}-grams: section has {len(entries)} entries, "
                f"header declared {counts[k]}",
                i,
            )
        sections[k] = entries
        expected += 1
    if expected != order + 1:
        raise ArpaParseError("missing n-gram sections", i)
    if i == n or lines[i].strip() != "\\end\\":
        raise ArpaParseError("missing \\end\\ marker", min(i + 1, n))

    vocab = Vocabulary.from_tokens(unigram_tokens)
    bits = _bits_for(len(vocab))
    if order * bits > 64:
        raise ArpaParseError(
            f"order {order} with {len(vocab)} unigrams exceeds the 64-bit packing", 1
        )
    levels = []
    for k in range(1, order + 1):
        entries = sections[k]
        codes = np.empty(len(entries), dtype=np.uint64)
        logp = np.empty(len(entries), dtype=np.float64)
        bow = np.empty(len(entries), dtype=np.float64)
        for j, (gram, lp, bw) in enumerate(entries):
            code = 0
            for tok in gram:
                tid = vocab.index_.get(tok)
                if tid is None:
                    raise ArpaParseError(f"token {tok!r} missing from unigrams", 1)
                code = (code << bits) | tid
            codes[j] = code
            logp[j] = lp
            bow[j] = bw
        sorter = np.argsort(codes, kind="stable")
        levels.append(_Level(codes[sorter], logp[sorter], bow[sorter]))
    return BackoffModel(vocab, order, levels)
