"""Dataset model and file-based corpus construction.

All corpora travel as JSONL. A labeled post is
{"id", "text", "label": "hate"|"not_hate", "language", "split"} and an NLI
example is {"premise", "hypothesis", "label": "entailment"|"neutral"|
"contradiction", "premise_language", "hypothesis_language"}. Parallel corpora
for language shuffling carry per-language text maps instead of single strings:
{"id", "label", "premise": {lang: text}, "hypothesis": {lang: text}}.
"""

import math
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError, DataFormatError, ManifestMismatchError
from .fileio import load_toml, read_jsonl

HS_LABELS = ("hate", "not_hate")
NLI_LABELS = ("entailment", "neutral", "contradiction")
SPLITS = ("train", "validation", "test")

# Label mapping of the NLI reformulation: a hateful premise entails the
# "this is hate speech" hypothesis, a non-hateful one contradicts it.
HS_TO_NLI_LABEL = {"hate": "entailment", "not_hate": "contradiction"}
NLI_TO_HS_LABEL = {"entailment": "hate", "contradiction": "not_hate"}


@dataclass
class LabeledPost:
    id: str
    text: str
    label: str
    language: str
    split: str

    def to_record(self) -> dict[str, str]:
        return {
            "id": self.id,
            "text": self.text,
            "label": self.label,
            "language": self.language,
            "split": self.split,
        }


@dataclass
class NliExample:
    premise: str
    hypothesis: str
    label: str
    premise_language: str
    hypothesis_language: str

    def to_record(self) -> dict[str, str]:
        return {
            "premise": self.premise,
            "hypothesis": self.hypothesis,
            "label": self.label,
            "premise_language": self.premise_language,
            "hypothesis_language": self.hypothesis_language,
        }


@dataclass
class ParallelExample:
    """One NLI example with premise and hypothesis available in several languages."""

    id: str
    label: str
    premise: dict[str, str]
    hypothesis: dict[str, str]


@dataclass
class SamplingSpec:
    n: int
    seed: int
    stratified: bool = False


@dataclass
class DatasetManifest:
    code: str
    source: str = ""
    language: str = ""
    expected_hate_pct: float | None = None
    expected_sizes: dict[str, int] = field(default_factory=dict)
    size_tolerance: int = 0
    hate_pct_tolerance: float = 0.001


@dataclass
class DatasetStats:
    total: int
    split_sizes: dict[str, int]
    hate_count: int

    @property
    def hate_fraction(self) -> float:
        return self.hate_count / self.total if self.total else 0.0


def _require_str(obj: dict[str, Any], key: str, where: str) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise DataFormatError(f"{where}: field '{key}' missing or not a string")
    return value


def parse_post(obj: dict[str, Any], where: str) -> LabeledPost:
    post = LabeledPost(
        id=_require_str(obj, "id", where),
        text=_require_str(obj, "text", where),
        label=_require_str(obj, "label", where),
        language=_require_str(obj, "language", where),
        split=_require_str(obj, "split", where),
    )
    if post.label not in HS_LABELS:
        raise DataFormatError(f"{where}: unknown label '{post.label}'")
    if post.split not in SPLITS:
        raise DataFormatError(f"{where}: unknown split '{post.split}'")
    return post


def load_posts(path: str | Path) -> list[LabeledPost]:
    """Read a corpus JSONL file, enforcing the closed label/split sets and id uniqueness."""
    posts = []
    seen: set[str] = set()
    for lineno, obj in enumerate(read_jsonl(path), start=1):
        post = parse_post(obj, f"{path}:{lineno}")
        if post.id in seen:
            raise DataFormatError(f"{path}:{lineno}: duplicate id '{post.id}'")
        seen.add(post.id)
        posts.append(post)
    return posts


def compute_stats(posts: list[LabeledPost]) -> DatasetStats:
    split_sizes = Counter(p.split for p in posts)
    hate_count = sum(1 for p in posts if p.label == "hate")
    return DatasetStats(total=len(posts), split_sizes=dict(split_sizes), hate_count=hate_count)


def load_manifest(path: str | Path) -> DatasetManifest:
    doc = load_toml(path)
    if "code" not in doc:
        raise DataFormatError(f"{path}: manifest missing 'code'")
    tolerances = doc.get("tolerances", {})
    manifest = DatasetManifest(
        code=str(doc["code"]),
        source=str(doc.get("source", "")),
        language=str(doc.get("language", "")),
        expected_hate_pct=doc.get("expected_hate_pct"),
        expected_sizes={k: int(v) for k, v in doc.get("expected_sizes", {}).items()},
        size_tolerance=int(tolerances.get("size", 0)),
        hate_pct_tolerance=float(tolerances.get("hate_pct", 0.001)),
    )
    if manifest.expected_hate_pct is not None and not 0.0 <= manifest.expected_hate_pct <= 1.0:
        raise DataFormatError(f"{path}: expected_hate_pct outside [0, 1]")
    for split, size in manifest.expected_sizes.items():
        if split not in SPLITS:
            raise DataFormatError(f"{path}: unknown split '{split}' in expected_sizes")
        if size < 0:
            raise DataFormatError(f"{path}: negative expected size for split '{split}'")
    return manifest


def validate_against_manifest(stats: DatasetStats, manifest: DatasetManifest) -> list[str]:
    """Return one message per declared expectation the stats violate."""
    problems = []
    for split, expected in manifest.expected_sizes.items():
        actual = stats.split_sizes.get(split, 0)
        if abs(actual - expected) > manifest.size_tolerance:
            problems.append(
                f"{manifest.code}: split '{split}' has {actual} records, expected {expected}"
            )
    if manifest.expected_hate_pct is not None and stats.total:
        actual_pct = stats.hate_fraction
        if abs(actual_pct - manifest.expected_hate_pct) > manifest.hate_pct_tolerance:
            problems.append(
                f"{manifest.code}: hate fraction {actual_pct:.4f}, "
                f"expected {manifest.expected_hate_pct:.4f} "
                f"(tolerance {manifest.hate_pct_tolerance})"
            )
    return problems


def load_dataset(
    path: str | Path,
    manifest: DatasetManifest | None = None,
    strict: bool = False,
) -> tuple[list[LabeledPost], DatasetStats, list[str]]:
    """Load a corpus file and, when a manifest is given, check it against expectations.

    Lenient mode returns mismatches as warning strings; strict mode raises on the
    first batch of mismatches instead.
    """
    posts = load_posts(path)
    stats = compute_stats(posts)
    warnings: list[str] = []
    if manifest is not None:
        warnings = validate_against_manifest(stats, manifest)
        if warnings and strict:
            raise ManifestMismatchError("; ".join(warnings))
    return posts, stats, warnings


def downsample_non_hate(
    posts: list[LabeledPost],
    target_ratio: float,
    seed: int,
    strict: bool = False,
) -> list[LabeledPost]:
    """Drop non-hate posts until the hate fraction reaches at least target_ratio.

    Keeps every hate post and k = floor(h * (1 - r) / r) uniformly chosen non-hate
    posts, the largest k with h / (h + k) >= r. Input order is preserved. When the
    corpus is already at or above the target (or has no hate posts at all, making
    the target unreachable), strict mode raises and lenient mode returns the input
    unchanged.
    """
    if not 0.0 < target_ratio < 1.0:
        raise ConfigError(f"target ratio must be in (0, 1), got {target_ratio}")
    hate = [p for p in posts if p.label == "hate"]
    non_hate = [p for p in posts if p.label != "hate"]
    h = len(hate)
    current = h / len(posts) if posts else 0.0
    if h == 0 or current > target_ratio:
        if strict:
            raise ConfigError(
                f"hate ratio {current:.4f} cannot be downsampled to {target_ratio}"
            )
        return list(posts)
    k = math.floor(h * (1.0 - target_ratio) / target_ratio)
    k = min(k, len(non_hate))
    rng = random.Random(seed)
    kept_ids = set(p.id for p in rng.sample(non_hate, k))
    return [p for p in posts if p.label == "hate" or p.id in kept_ids]


def sample_n_shot(
    posts: list[LabeledPost], spec: SamplingSpec
) -> tuple[list[LabeledPost], dict[str, int]]:
    """Draw spec.n posts without replacement; returns the sample plus its class counts.

    The default draw is uniform over the pool. With stratified=True the budget is
    split evenly across the labels present (remainder to earlier labels in
    HS_LABELS order), erroring if a class cannot fill its share.
    """
    if spec.n < 0:
        raise ConfigError(f"sample size must be non-negative, got {spec.n}")
    if spec.n > len(posts):
        raise ConfigError(f"cannot sample {spec.n} posts from a pool of {len(posts)}")
    rng = random.Random(spec.seed)
    if not spec.stratified:
        sample = rng.sample(posts, spec.n)
    else:
        by_label = {label: [p for p in posts if p.label == label] for label in HS_LABELS}
        base, extra = divmod(spec.n, len(HS_LABELS))
        sample = []
        for i, label in enumerate(HS_LABELS):
            share = base + (1 if i < extra else 0)
            pool = by_label[label]
            if share > len(pool):
                raise ConfigError(
                    f"stratified sample needs {share} '{label}' posts, pool has {len(pool)}"
                )
            sample.extend(rng.sample(pool, share))
    counts = Counter(p.label for p in sample)
    return sample, {label: counts.get(label, 0) for label in HS_LABELS}


def hs_to_nli(
    posts: list[LabeledPost], hypothesis: str, hypothesis_language: str = "en"
) -> list[NliExample]:
    """Recast binary posts as NLI pairs against one fixed hypothesis."""
    if not hypothesis:
        raise ConfigError("hypothesis text must be non-empty")
    return [
        NliExample(
            premise=p.text,
            hypothesis=hypothesis,
            label=HS_TO_NLI_LABEL[p.label],
            premise_language=p.language,
            hypothesis_language=hypothesis_language,
        )
        for p in posts
    ]


def parse_parallel(obj: dict[str, Any], where: str) -> ParallelExample:
    ex = ParallelExample(
        id=_require_str(obj, "id", where),
        label=_require_str(obj, "label", where),
        premise=obj.get("premise"),
        hypothesis=obj.get("hypothesis"),
    )
    if ex.label not in NLI_LABELS:
        raise DataFormatError(f"{where}: unknown label '{ex.label}'")
    for name, table in (("premise", ex.premise), ("hypothesis", ex.hypothesis)):
        if not isinstance(table, dict) or not table:
            raise DataFormatError(f"{where}: '{name}' must be a non-empty language map")
        for lang, text in table.items():
            if not isinstance(text, str):
                raise DataFormatError(f"{where}: '{name}' text for '{lang}' is not a string")
    return ex


def load_parallel(path: str | Path) -> list[ParallelExample]:
    return [
        parse_parallel(obj, f"{path}:{lineno}")
        for lineno, obj in enumerate(read_jsonl(path), start=1)
    ]


def shuffle_xnli_languages(
    corpus: list[ParallelExample],
    seed: int,
    languages: list[str] | None = None,
) -> list[NliExample]:
    """Draw a premise language and a hypothesis language per example, independently
    and uniformly over the corpus languages, keeping gold labels untouched.

    When languages is omitted it is inferred as the sorted key set of the first
    example's premise map. A drawn language missing from an example is an error
    naming that example.
    """
    if not corpus:
        return []
    if languages is None:
        languages = sorted(corpus[0].premise.keys())
    if not languages:
        raise ConfigError("language list must be non-empty")
    rng = random.Random(seed)
    out = []
    for ex in corpus:
        p_lang = rng.choice(languages)
        h_lang = rng.choice(languages)
        if p_lang not in ex.premise:
            raise DataFormatError(f"example '{ex.id}': no '{p_lang}' translation for premise")
        if h_lang not in ex.hypothesis:
            raise DataFormatError(f"example '{ex.id}': no '{h_lang}' translation for hypothesis")
        out.append(
            NliExample(
                premise=ex.premise[p_lang],
                hypothesis=ex.hypothesis[h_lang],
                label=ex.label,
                premise_language=p_lang,
                hypothesis_language=h_lang,
            )
        )
    return out


def parse_nli_example(obj: dict[str, Any], where: str) -> NliExample:
    ex = NliExample(
        premise=_require_str(obj, "premise", where),
        hypothesis=_require_str(obj, "hypothesis", where),
        label=_require_str(obj, "label", where),
        premise_language=_require_str(obj, "premise_language", where),
        hypothesis_language=_require_str(obj, "hypothesis_language", where),
    )
    if ex.label not in NLI_LABELS:
        raise DataFormatError(f"{where}: unknown label '{ex.label}'")
    return ex


def load_nli_examples(path: str | Path) -> list[NliExample]:
    return [
        parse_nli_example(obj, f"{path}:{lineno}")
        for lineno, obj in enumerate(read_jsonl(path), start=1)
    ]
