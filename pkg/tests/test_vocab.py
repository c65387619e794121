"""Vocabulary pipeline: tokenizer, counting, filtering, ranking, TSV io."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import tokenize_oracle, vocab_oracle
from tenet.vocab import (FrequencyTable, Vocabulary, build_vocabulary,
                         corpus_stats, count_corpus, merge_tables,
                         read_captions, tokenize, write_stats_json)

# Messy-ish caption text: words, digits, apostrophes, punctuation, whitespace.
caption_st = st.text(
    alphabet=" \tabcdefghijklmnoprstuvwxyzABCDE0123'’.,!?-()",
    min_size=0, max_size=60)
corpus_st = st.lists(caption_st, min_size=0, max_size=100)


def test_tokenize_basics():
    assert tokenize("A man riding a horse.") == ["a", "man", "riding", "a", "horse"]
    assert tokenize("the dog's bone!") == ["the", "dog's", "bone"]
    assert tokenize("'quoted' word") == ["quoted", "word"]
    assert tokenize("route 66") == ["route", "66"]
    assert tokenize("  ") == []
    assert tokenize("--- !!!") == []


@given(caption_st)
def test_tokenize_matches_oracle(caption):
    assert tokenize(caption) == tokenize_oracle(caption)


@given(caption_st)
def test_tokenize_token_shape(caption):
    for token in tokenize(caption):
        assert token == token.lower()
        assert token
        assert not token.startswith("'") and not token.endswith("'")
        assert all(ch.isalnum() or ch == "'" for ch in token)


def test_count_corpus_counts_every_occurrence():
    table = count_corpus(["a cat and a cat", "A CAT!"])
    assert table.entries["cat"] == 3
    assert table.entries["a"] == 3
    assert table.entries["and"] == 1
    assert table.total_raw_words == 3


@given(st.lists(caption_st, max_size=30), st.lists(caption_st, max_size=30))
def test_merge_tables_matches_joint_count(left, right):
    merged = merge_tables([count_corpus(left), count_corpus(right)])
    assert merged.entries == count_corpus(left + right).entries


@given(corpus_st, st.integers(1, 5), st.integers(1, 4), st.integers(1, 40))
def test_build_vocabulary_matches_oracle(captions, min_count, min_length, size):
    vocab = build_vocabulary(count_corpus(captions), min_count=min_count,
                             min_length=min_length, vocab_size=size)
    assert list(zip(vocab.words, vocab.counts)) == vocab_oracle(
        captions, min_count, min_length, size)


@given(corpus_st)
def test_build_vocabulary_filter_and_rank_invariants(captions):
    table = count_corpus(captions)
    vocab = build_vocabulary(table, min_count=2, min_length=3, vocab_size=25)
    assert len(vocab) <= 25
    for word, count in zip(vocab.words, vocab.counts):
        assert count >= 2
        assert len(word) >= 3
        assert table.entries[word] == count
    for (w1, c1), (w2, c2) in zip(zip(vocab.words, vocab.counts),
                                  list(zip(vocab.words, vocab.counts))[1:]):
        assert c1 > c2 or (c1 == c2 and w1 < w2)


def test_build_vocabulary_tie_break_is_lexicographic():
    table = FrequencyTable(entries={"zebra": 4, "apple": 4, "mango": 4})
    vocab = build_vocabulary(table, min_count=4, min_length=3, vocab_size=10)
    assert vocab.words == ["apple", "mango", "zebra"]


def test_build_vocabulary_rejects_bad_args():
    with pytest.raises(ValueError):
        build_vocabulary(FrequencyTable(), min_count=0)
    with pytest.raises(ValueError):
        build_vocabulary(FrequencyTable(), min_length=0)
    with pytest.raises(ValueError):
        build_vocabulary(FrequencyTable(), vocab_size=0)


def test_vocabulary_lookup_helpers():
    vocab = Vocabulary(words=["man", "standing"], counts=[9, 5],
                       min_count=4, min_length=3)
    assert len(vocab) == vocab.size == 2
    assert "man" in vocab and "tree" not in vocab
    assert vocab.rank_of("standing") == 1
    assert vocab.rank_of("tree") is None


def test_tsv_round_trip(tmp_path):
    vocab = Vocabulary(words=["man", "dog's", "66"], counts=[7, 5, 4],
                       min_count=4, min_length=2)
    path = tmp_path / "vocab.tsv"
    vocab.save_tsv(path)
    again = Vocabulary.load_tsv(path, min_count=4, min_length=2)
    assert again.words == vocab.words
    assert again.counts == vocab.counts
    assert again.sha256() == vocab.sha256()
    assert path.read_text() == "man\t7\ndog's\t5\n66\t4\n"


def test_corpus_stats_buckets():
    table = FrequencyTable(entries={"a": 9, "of": 3, "cat": 1, "dogs": 2,
                                    "horse": 7, "x": 1})
    stats = corpus_stats(table)
    assert stats == {"distinct_words": 6, "hapax_count": 2, "count_le_3": 4,
                     "len_1_count": 2, "len_2_count": 1}


def test_read_captions_text_and_json(tmp_path):
    text = tmp_path / "captions.txt"
    text.write_text("a man\n\na dog\n")
    assert list(read_captions(text)) == ["a man", "a dog"]

    coco = tmp_path / "captions.json"
    coco.write_text(json.dumps({"annotations": [
        {"image_id": 1, "caption": "a man"},
        {"image_id": 2, "caption": "a dog"}]}))
    assert list(read_captions(coco)) == ["a man", "a dog"]


def test_read_captions_malformed_json_names_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValueError, match="bad.json"):
        list(read_captions(bad))


def test_write_stats_json(tmp_path):
    path = tmp_path / "stats.json"
    write_stats_json({"distinct_words": 3}, path)
    assert json.loads(path.read_text()) == {"distinct_words": 3}
