import warnings

import numpy as np
import pytest

from morphlm import (
    EOS,
    SOS,
    UNK,
    Vocabulary,
    build_vocabulary,
    corpus_stats,
    normalize_and_tokenize,
    read_corpus,
    subsample,
    write_corpus,
)


class TestTokenize:
    def test_example_sentence(self):
        out = normalize_and_tokenize("hát megbeszélem a nejemmel\n")
        assert out == [["hát", "megbeszélem", "a", "nejemmel"]]

    def test_empty_input(self):
        assert normalize_and_tokenize("") == []

    def test_whitespace_collapse(self):
        assert normalize_and_tokenize("a  b\t c\n") == [["a", "b", "c"]]

    def test_blank_lines_dropped(self):
        assert normalize_and_tokenize("a\n\n\nb c\n") == [["a"], ["b", "c"]]

    def test_invalid_utf8_names_offset(self):
        with pytest.raises(ValueError, match="byte offset 4"):
            normalize_and_tokenize(b"abcd\xff\xfe")

    def test_case_preserved(self):
        assert normalize_and_tokenize("Ab aB\n") == [["Ab", "aB"]]


class TestVocabulary:
    def test_frequency_order(self):
        vocab = build_vocabulary([["a", "b", "a"]], max_size=1)
        assert "a" in vocab and "b" not in vocab
        assert set(vocab.tokens_) == {"a", UNK, SOS, EOS}

    def test_tie_breaks_lexicographic(self):
        vocab = build_vocabulary([["b", "a"]], max_size=1)
        assert "a" in vocab and "b" not in vocab

    def test_specials_always_present(self):
        vocab = build_vocabulary([["x"]], max_size=1)
        for s in (UNK, SOS, EOS):
            assert s in vocab
        assert len(vocab) <= 1 + 3

    def test_ids_dense_bijection(self):
        vocab = build_vocabulary([["c", "b", "a", "b", "c", "c"]], max_size=10)
        ids = sorted(vocab.index_.values())
        assert ids == list(range(len(vocab)))
        for tok, i in vocab.index_.items():
            assert vocab.tokens_[i] == tok

    def test_deterministic(self, small_corpus):
        v1 = build_vocabulary(small_corpus, 500)
        v2 = build_vocabulary(small_corpus, 500)
        assert v1.tokens_ == v2.tokens_

    def test_empty_corpus_error(self):
        with pytest.raises(ValueError):
            build_vocabulary([], max_size=5)

    def test_transform_maps_oov(self):
        vocab = build_vocabulary([["a", "b"]], max_size=10)
        assert vocab.transform([["a", "zzz"]]) == [["a", UNK]]

    def test_transform_identity_in_vocab(self):
        vocab = build_vocabulary([["a", "b"]], max_size=10)
        assert vocab.transform([["b", "a"]]) == [["b", "a"]]

    def test_transform_empty(self):
        vocab = build_vocabulary([["a"]], max_size=10)
        assert vocab.transform([]) == []

    def test_transform_closed_over_vocab(self, small_corpus, small_heldout):
        vocab = build_vocabulary(small_corpus, 300)
        mapped = vocab.transform(small_heldout)
        assert all(tok in vocab for sent in mapped for tok in sent)

    def test_save_load_roundtrip(self, tmp_path):
        vocab = build_vocabulary([["b", "a", "a"]], max_size=10)
        vocab.save(tmp_path / "v.txt")
        loaded = Vocabulary.load(tmp_path / "v.txt")
        assert loaded.tokens_ == vocab.tokens_
        assert loaded.unk_id_ == vocab.unk_id_

    def test_sklearn_params(self):
        vocab = Vocabulary(max_size=7)
        assert vocab.get_params() == {"max_size": 7}
        vocab.set_params(max_size=9).fit([["a"]])
        assert vocab.max_size == 9


class TestSubsample:
    def test_reaches_target(self, small_corpus):
        out = subsample(small_corpus, 5_000, seed=0)
        total = sum(len(s) for s in out)
        longest = max(len(s) for s in small_corpus)
        assert 5_000 <= total <= 5_000 + longest

    def test_original_order(self, small_corpus):
        out = subsample(small_corpus, 3_000, seed=1)
        pos = [small_corpus.index(s) for s in out[:10]]
        assert pos == sorted(pos)

    def test_deterministic(self, small_corpus):
        assert subsample(small_corpus, 2_000, seed=3) == subsample(
            small_corpus, 2_000, seed=3
        )
        assert subsample(small_corpus, 2_000, seed=3) != subsample(
            small_corpus, 2_000, seed=4
        )

    def test_target_above_corpus_warns_and_returns_all(self):
        corpus = [["a", "b"], ["c"]]
        with pytest.warns(UserWarning):
            out = subsample(corpus, 10, seed=0)
        assert out == corpus

    def test_target_equal_identity(self):
        corpus = [["a", "b"], ["c"]]
        assert subsample(corpus, 3, seed=0) == corpus


class TestCorpusStats:
    def test_counts(self):
        stats = corpus_stats([["a", "a"]])
        assert stats.token_count == 2 and stats.type_count == 1
        assert stats.sentence_count == 1 and stats.oov_rate == 0.0

    def test_oov_rate(self):
        vocab = build_vocabulary([["a", "b"]], max_size=10)
        stats = corpus_stats([["a", "zzz", "qqq", "b"]], vocab)
        assert stats.oov_rate == pytest.approx(0.5)

    def test_type_count_bounded_by_vocab_after_transform(self, small_corpus):
        vocab = build_vocabulary(small_corpus, 200)
        stats = corpus_stats(vocab.transform(small_corpus))
        assert stats.type_count <= len(vocab)


def test_corpus_file_roundtrip(tmp_path, small_corpus):
    path = tmp_path / "c.txt"
    write_corpus(small_corpus[:50], path)
    assert read_corpus(path) == small_corpus[:50]
