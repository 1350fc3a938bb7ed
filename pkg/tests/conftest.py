import json
import random
from pathlib import Path

import pytest

from hsnli.corpus import LabeledPost
from hsnli.engine import load_catalog
from hsnli.references import default_catalog_path

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def catalog():
    return load_catalog(default_catalog_path())


def make_posts(
    n_hate: int,
    n_not: int,
    language: str = "en",
    split: str = "train",
    prefix: str = "p",
    seed: int = 0,
) -> list[LabeledPost]:
    """Synthetic corpus with deterministic ids and slightly varied text."""
    rng = random.Random(seed)
    posts = []
    for i in range(n_hate + n_not):
        label = "hate" if i < n_hate else "not_hate"
        posts.append(
            LabeledPost(
                id=f"{prefix}{i:05d}",
                text=f"sample text {prefix}{i:05d} token{rng.randrange(1000)}",
                label=label,
                language=language,
                split=split,
            )
        )
    return posts


def write_corpus(path: Path, posts: list[LabeledPost]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for p in posts:
            fh.write(json.dumps(p.to_record(), ensure_ascii=False) + "\n")
    return path


def write_mock_table(path: Path, rows: list[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path


def random_simplex(rng: random.Random, ndigits: int | None = None) -> list[float]:
    """A random probability triple; optionally rounded then re-closed so the
    components still sum to 1 exactly enough for the score contract."""
    cuts = sorted([rng.random(), rng.random()])
    triple = [cuts[0], cuts[1] - cuts[0], 1.0 - cuts[1]]
    if ndigits is not None:
        triple = [round(v, ndigits) for v in triple]
        triple[2] = round(1.0 - triple[0] - triple[1], ndigits + 2)
        if triple[2] < 0:
            triple[2] = 0.0
            triple[1] = round(1.0 - triple[0], ndigits + 2)
    return triple
