import numpy as np
import pytest
from hypothesis import given, strategies as st

from prodcat.embedding_io import OOV_INIT_RANGE, build_matrix, load_embedding_file
from prodcat.utils.errors import DataValidationError, InputFileError
from prodcat.vocab import PAD_ID, UNK_ID, Vocabulary, build_vocabulary, decode, encode, encode_batch

words = st.sampled_from(["leite", "queijo", "sabonete", "cerveja", "1l", "80g", "lata", "dove"])
texts = st.lists(st.lists(words, min_size=1, max_size=8).map(" ".join), min_size=1, max_size=20)


def test_ranking_by_frequency_then_first_occurrence():
    vocab = build_vocabulary(["b a", "c a", "c d"], max_words=10)
    assert vocab.tokens == ("a", "c", "b", "d")
    assert vocab.id("a") == 2
    assert vocab.size == 6


def test_max_words_caps_including_specials():
    vocab = build_vocabulary(["a b c d e"], max_words=4)
    assert vocab.tokens == ("a", "b")
    assert vocab.id("e") == UNK_ID


def test_build_rejects_small_cap_and_empty_input():
    with pytest.raises(DataValidationError):
        build_vocabulary(["a"], max_words=2)
    with pytest.raises(DataValidationError):
        build_vocabulary([], max_words=10)


def test_encode_truncates_left_keeping_and_pads():
    vocab = build_vocabulary(["a b c"], max_words=10)
    assert encode("a b c a", vocab, max_len=3).ids == (2, 3, 4)
    padded = encode("c zz", vocab, max_len=4)
    assert padded.ids == (4, UNK_ID, PAD_ID, PAD_ID)
    assert padded.length == 2


def test_decode_skips_padding():
    vocab = build_vocabulary(["leite integral"], max_words=10)
    assert decode(encode("leite integral", vocab, 5).ids, vocab) == ["leite", "integral"]


def test_vocabulary_file_round_trip_and_digest(tmp_path):
    vocab = build_vocabulary(["leite integral", "leite desnatado"], max_words=50)
    vocab.save(tmp_path / "vocab.txt")
    loaded = Vocabulary.load(tmp_path / "vocab.txt")
    assert loaded == vocab
    assert loaded.digest() == vocab.digest()
    assert (tmp_path / "vocab.txt").read_text(encoding="utf-8") == "leite\nintegral\ndesnatado\n"


def test_missing_vocabulary_file(tmp_path):
    with pytest.raises(InputFileError):
        Vocabulary.load(tmp_path / "missing.txt")


def test_duplicate_tokens_rejected():
    with pytest.raises(DataValidationError):
        Vocabulary(["a", "a"])


@given(texts, st.integers(min_value=1, max_value=10))
def test_encode_batch_shapes_and_ranges(corpus, max_len):
    vocab = build_vocabulary(corpus, max_words=6)
    ids, lengths = encode_batch(corpus, vocab, max_len)
    assert ids.shape == (len(corpus), max_len)
    assert ids.min() >= 0 and ids.max() < vocab.size
    for row, length in zip(ids, lengths):
        assert np.all(row[:length] != PAD_ID)
        assert np.all(row[length:] == PAD_ID)


@given(texts)
def test_encode_batch_threads_match_serial(corpus):
    vocab = build_vocabulary(corpus, max_words=100)
    serial, _ = encode_batch(corpus, vocab, 8, threads=1)
    threaded, _ = encode_batch(corpus, vocab, 8, threads=3)
    assert np.array_equal(serial, threaded)


def _write_vectors(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_embedding_file_with_header(tmp_path):
    path = _write_vectors(tmp_path / "w2v.txt", ["2 3", "leite 0.1 0.2 0.3", "queijo 1 2 3"])
    table = load_embedding_file(path)
    assert table.dim == 3
    assert len(table) == 2
    np.testing.assert_allclose(table.vectors["queijo"], [1.0, 2.0, 3.0])


def test_embedding_file_without_header_keeps_first_duplicate(tmp_path):
    path = _write_vectors(tmp_path / "glove.txt", ["leite 1 1", "leite 2 2", "lata 3 3"])
    table = load_embedding_file(path)
    assert table.dim == 2
    np.testing.assert_allclose(table.vectors["leite"], [1.0, 1.0])


def test_embedding_file_with_tabs_and_repeated_spaces(tmp_path):
    path = _write_vectors(tmp_path / "tabs.txt", ["leite\t0.5\t1.5", "queijo  2   3 "])
    table = load_embedding_file(path)
    assert table.dim == 2
    np.testing.assert_allclose(table.vectors["leite"], [0.5, 1.5])
    np.testing.assert_allclose(table.vectors["queijo"], [2.0, 3.0])


@pytest.mark.parametrize("lines", [["leite 1 2", "queijo 1"], ["leite 1 x"], ["leite 1 nan"]])
def test_malformed_embedding_lines(tmp_path, lines):
    with pytest.raises(DataValidationError):
        load_embedding_file(_write_vectors(tmp_path / "bad.txt", lines))


def test_build_matrix_copies_known_rows_and_zeroes_pad(tmp_path):
    vocab = build_vocabulary(["leite queijo lata"], max_words=10)
    table = load_embedding_file(_write_vectors(tmp_path / "v.txt", ["leite 1 2", "lata 3 4"]))
    aligned = build_matrix(table, vocab, seed=7)
    assert aligned.shape == (vocab.size, 2)
    assert aligned.found == 2
    assert aligned.coverage == pytest.approx(2 / 3)
    np.testing.assert_array_equal(aligned.matrix[PAD_ID], [0.0, 0.0])
    np.testing.assert_allclose(aligned.matrix[vocab.id("leite")], [1.0, 2.0])
    oov = aligned.matrix[[UNK_ID, vocab.id("queijo")]]
    assert np.all(np.abs(oov) <= OOV_INIT_RANGE)
    again = build_matrix(table, vocab, seed=7)
    np.testing.assert_array_equal(again.matrix, aligned.matrix)
