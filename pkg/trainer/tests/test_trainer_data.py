import json

import pytest
from trainer_helpers import HYPOTHESIS, make_nli_corpus, make_posts_corpus, write_jsonl

from hsnli_trainer.data import (
    HS_TO_NLI,
    LABEL_INDEX,
    LABELS,
    Post,
    encode_batch,
    posts_to_nli_pairs,
    posts_to_single_pairs,
    read_nli_examples,
    read_posts,
)
from hsnli_trainer.errors import DataError
from hsnli_trainer.model import build_tokenizer, corpus_token_counts


def test_label_tables():
    assert LABELS == ("entailment", "neutral", "contradiction")
    assert LABEL_INDEX == {"entailment": 0, "neutral": 1, "contradiction": 2}
    assert HS_TO_NLI == {"hate": "entailment", "not_hate": "contradiction"}


def test_read_nli_examples_round_trip(tmp_path):
    path = make_nli_corpus(tmp_path / "nli.jsonl", 9, seed=0)
    pairs = read_nli_examples(path)
    assert len(pairs) == 9
    raw = [json.loads(line) for line in path.read_text().splitlines()]
    for pair, row in zip(pairs, raw):
        assert pair.premise == row["premise"]
        assert pair.hypothesis == row["hypothesis"]
        assert pair.label_index == LABEL_INDEX[row["label"]]


def test_read_nli_examples_bad_records(tmp_path):
    bad_label = write_jsonl(
        tmp_path / "bad_label.jsonl",
        [{"premise": "a", "hypothesis": "b", "label": "maybe"}],
    )
    with pytest.raises(DataError, match="bad_label.jsonl:1"):
        read_nli_examples(bad_label)
    missing = write_jsonl(
        tmp_path / "missing.jsonl", [{"premise": "a", "label": "neutral"}]
    )
    with pytest.raises(DataError, match="hypothesis"):
        read_nli_examples(missing)
    broken = tmp_path / "broken.jsonl"
    broken.write_text('{"premise": "a"\n', encoding="utf-8")
    with pytest.raises(DataError, match="broken.jsonl:1: invalid JSON"):
        read_nli_examples(broken)
    not_object = tmp_path / "not_object.jsonl"
    not_object.write_text("[1, 2]\n", encoding="utf-8")
    with pytest.raises(DataError, match="not an object"):
        read_nli_examples(not_object)


def test_read_posts_round_trip_and_blank_lines(tmp_path):
    path = make_posts_corpus(tmp_path / "posts.jsonl", 6, n_val=2, n_test=2, seed=1)
    text = path.read_text(encoding="utf-8")
    path.write_text(text.replace("\n", "\n\n", 3), encoding="utf-8")  # blank lines ok
    posts = read_posts(path)
    assert len(posts) == 10
    assert {p.split for p in posts} == {"train", "validation", "test"}
    assert all(p.label in ("hate", "not_hate") for p in posts)


def test_read_posts_rejects_unknown_label_and_split(tmp_path):
    base = {"id": "x", "text": "t", "language": "en"}
    bad_label = write_jsonl(
        tmp_path / "bad_label.jsonl", [dict(base, label="spam", split="train")]
    )
    with pytest.raises(DataError, match="unknown label 'spam'"):
        read_posts(bad_label)
    bad_split = write_jsonl(
        tmp_path / "bad_split.jsonl", [dict(base, label="hate", split="dev")]
    )
    with pytest.raises(DataError, match="bad_split.jsonl:1: unknown split 'dev'"):
        read_posts(bad_split)


def sample_posts():
    return [
        Post("a", "first text", "hate", "en", "train"),
        Post("b", "second text", "not_hate", "en", "train"),
        Post("c", "third text", "hate", "es", "test"),
    ]


def test_posts_to_nli_pairs_mapping():
    posts = sample_posts()
    pairs = posts_to_nli_pairs(posts, HYPOTHESIS)
    assert len(pairs) == len(posts)  # count-preserving: one pair per post
    for post, pair in zip(posts, pairs):
        assert pair.premise == post.text
        assert pair.hypothesis == HYPOTHESIS
        expected = LABEL_INDEX["entailment" if post.label == "hate" else "contradiction"]
        assert pair.label_index == expected
    with pytest.raises(DataError, match="non-empty"):
        posts_to_nli_pairs(posts, "")


def test_posts_to_single_pairs_mapping():
    posts = sample_posts()
    pairs = posts_to_single_pairs(posts)
    assert len(pairs) == len(posts)
    assert all(p.hypothesis is None for p in pairs)
    assert [p.label_index for p in pairs] == [0, 2, 0]


def test_encode_batch_shapes_padding_truncation(tmp_path):
    corpus = make_nli_corpus(tmp_path / "nli.jsonl", 30, seed=4)
    tokenizer = build_tokenizer(corpus_token_counts([corpus]), vocab_size=120)
    pairs = posts_to_nli_pairs(sample_posts(), HYPOTHESIS)
    ids, mask, labels = encode_batch(tokenizer, pairs, max_len=64, pad_id=0)
    assert ids.shape == mask.shape
    assert ids.shape[0] == len(pairs) and labels.shape == (len(pairs),)
    lengths = mask.sum(dim=1)
    assert int(lengths.max()) == ids.shape[1]  # padded to the widest row
    for row in range(len(pairs)):
        n = int(lengths[row])
        assert (ids[row, n:] == 0).all()  # everything past the mask is pad
        assert (mask[row, :n] == 1).all()
    single = posts_to_single_pairs([Post("d", "word " * 500, "hate", "en", "train")])
    ids, mask, _ = encode_batch(tokenizer, single, max_len=16, pad_id=0)
    assert ids.shape[1] == 16  # truncated at the model's sequence budget
    assert int(mask.sum()) == 16


def test_encode_batch_rejects_empty(tmp_path):
    corpus = make_nli_corpus(tmp_path / "nli.jsonl", 9, seed=4)
    tokenizer = build_tokenizer(corpus_token_counts([corpus]), vocab_size=60)
    with pytest.raises(DataError, match="empty batch"):
        encode_batch(tokenizer, [], max_len=16, pad_id=0)
