"""Corpus loading and batch encoding.

Two JSONL record shapes come in from the data-construction tooling:
NLI examples {"premise", "hypothesis", "label"} with a 3-way label, and
labeled posts {"id", "text", "label", "language", "split"} with a binary
label. Hate speech phases can consume posts either recast as NLI pairs
against one fixed hypothesis (label hate -> entailment, not_hate ->
contradiction) or as single-segment examples on the same 3-way head, so
every trained model speaks the same 3-output interface.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .errors import DataError

LABELS = ("entailment", "neutral", "contradiction")
LABEL_INDEX = {name: i for i, name in enumerate(LABELS)}

HS_LABELS = ("hate", "not_hate")
SPLITS = ("train", "validation", "test")

# Label mapping used when a binary corpus is recast for the 3-way head.
HS_TO_NLI = {"hate": "entailment", "not_hate": "contradiction"}


@dataclass
class TrainingPair:
    """One encodable example: hypothesis is None for single-segment records."""

    premise: str
    hypothesis: str | None
    label_index: int


@dataclass
class Post:
    id: str
    text: str
    label: str
    language: str
    split: str


def _read_jsonl(path: str | Path):
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: record is not an object")
            yield lineno, obj


def _require_str(obj: dict, key: str, where: str) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise DataError(f"{where}: field '{key}' missing or not a string")
    return value


def read_nli_examples(path: str | Path) -> list[TrainingPair]:
    """Read NLI-example JSONL into training pairs."""
    pairs = []
    for lineno, obj in _read_jsonl(path):
        where = f"{path}:{lineno}"
        label = _require_str(obj, "label", where)
        if label not in LABEL_INDEX:
            raise DataError(f"{where}: unknown NLI label '{label}'")
        pairs.append(
            TrainingPair(
                premise=_require_str(obj, "premise", where),
                hypothesis=_require_str(obj, "hypothesis", where),
                label_index=LABEL_INDEX[label],
            )
        )
    return pairs


def read_posts(path: str | Path) -> list[Post]:
    """Read labeled-post JSONL, enforcing the closed label and split sets."""
    posts = []
    for lineno, obj in _read_jsonl(path):
        where = f"{path}:{lineno}"
        post = Post(
            id=_require_str(obj, "id", where),
            text=_require_str(obj, "text", where),
            label=_require_str(obj, "label", where),
            language=_require_str(obj, "language", where),
            split=_require_str(obj, "split", where),
        )
        if post.label not in HS_LABELS:
            raise DataError(f"{where}: unknown label '{post.label}'")
        if post.split not in SPLITS:
            raise DataError(f"{where}: unknown split '{post.split}'")
        posts.append(post)
    return posts


def posts_to_nli_pairs(posts: list[Post], hypothesis: str) -> list[TrainingPair]:
    """Recast binary posts as NLI pairs against one fixed hypothesis.

    Count-preserving: exactly one pair per post, hate -> entailment and
    not_hate -> contradiction.
    """
    if not hypothesis:
        raise DataError("hypothesis text must be non-empty")
    return [
        TrainingPair(
            premise=p.text,
            hypothesis=hypothesis,
            label_index=LABEL_INDEX[HS_TO_NLI[p.label]],
        )
        for p in posts
    ]


def posts_to_single_pairs(posts: list[Post]) -> list[TrainingPair]:
    """Binary posts as single-segment examples on the 3-way head.

    The binary task rides on the entailment/contradiction outputs (the same
    two the engine's decision rule reads); the neutral output is never a gold
    label here.
    """
    return [
        TrainingPair(
            premise=p.text,
            hypothesis=None,
            label_index=LABEL_INDEX[HS_TO_NLI[p.label]],
        )
        for p in posts
    ]


def encode_batch(
    tokenizer,
    pairs: list[TrainingPair],
    max_len: int,
    pad_id: int,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Encode pairs to padded (ids, attention_mask, labels) tensors."""
    if not pairs:
        raise DataError("cannot encode an empty batch")
    tokenizer.enable_truncation(max_length=max_len)
    encodings = [
        tokenizer.encode(p.premise)
        if p.hypothesis is None
        else tokenizer.encode(p.premise, p.hypothesis)
        for p in pairs
    ]
    width = max(len(e.ids) for e in encodings)
    ids = torch.full((len(pairs), width), pad_id, dtype=torch.long)
    mask = torch.zeros((len(pairs), width), dtype=torch.long)
    for row, enc in enumerate(encodings):
        ids[row, : len(enc.ids)] = torch.tensor(enc.ids, dtype=torch.long)
        mask[row, : len(enc.ids)] = 1
    labels = torch.tensor([p.label_index for p in pairs], dtype=torch.long)
    return ids, mask, labels
