"""NLI scoring backends, the hypothesis catalog, and the binary decision rule.

A backend maps a (premise, hypothesis) text pair to a probability triple over
entailment / neutral / contradiction. Everything downstream (decision policy,
filter strategies, the grid) talks to backends only through that contract, so a
table-driven mock and an exported neural model are interchangeable.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

from .corpus import NLI_LABELS
from .errors import BackendError, ConfigError, DataFormatError, MissingTranslationError
from .fileio import load_toml, read_jsonl
from .normalize import normalize

# Slot key for the main hypothesis; auxiliary slots are (strategy, slot) pairs.
MAIN = "main"

MODEL_KINDS = ("monolingual", "multilingual")

SCORE_SUM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class NliScores:
    entailment: float
    neutral: float
    contradiction: float

    def as_list(self) -> list[float]:
        return [self.entailment, self.neutral, self.contradiction]

    def check(self) -> str | None:
        """Return a problem description, or None when the triple is a distribution."""
        for name, p in (
            ("entailment", self.entailment),
            ("neutral", self.neutral),
            ("contradiction", self.contradiction),
        ):
            if not 0.0 <= p <= 1.0:
                return f"{name} probability {p} outside [0, 1]"
        total = self.entailment + self.neutral + self.contradiction
        if abs(total - 1.0) > SCORE_SUM_TOLERANCE:
            return f"probabilities sum to {total}, not 1"
        return None


UNIFORM_SCORES = NliScores(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)


class InferenceBackend(Protocol):
    identity: str

    def score(self, premise: str, hypothesis: str) -> NliScores: ...


@dataclass
class MockRule:
    match: str
    slot: str
    scores: NliScores

    def applies(self, premise: str, hypothesis: str) -> bool:
        return self.match in premise and self.slot in hypothesis


class MockBackend:
    """Deterministic table-driven backend for tests and desk-scale experiments.

    The table is JSONL of {"match", "slot", "scores": [e, n, c]}. A rule applies
    when its match string occurs in the premise and its slot string occurs in the
    hypothesis; empty strings match anything. The first applicable rule in file
    order wins, so a trailing empty/empty rule acts as the declared default.
    Pairs no rule covers score uniform (1/3, 1/3, 1/3).
    """

    def __init__(self, rules: list[MockRule], identity: str = "mock"):
        self.rules = rules
        self.identity = identity

    @classmethod
    def from_file(cls, path: str | Path) -> "MockBackend":
        path = Path(path)
        rules = []
        for lineno, obj in enumerate(read_jsonl(path), start=1):
            where = f"{path}:{lineno}"
            match = obj.get("match", "")
            slot = obj.get("slot", "")
            raw = obj.get("scores")
            if not isinstance(match, str) or not isinstance(slot, str):
                raise DataFormatError(f"{where}: 'match' and 'slot' must be strings")
            if not isinstance(raw, list) or len(raw) != 3:
                raise DataFormatError(f"{where}: 'scores' must be a list of three numbers")
            try:
                triple = NliScores(float(raw[0]), float(raw[1]), float(raw[2]))
            except (TypeError, ValueError) as exc:
                raise DataFormatError(f"{where}: non-numeric score") from exc
            problem = triple.check()
            if problem is not None:
                raise DataFormatError(f"{where}: {problem}")
            rules.append(MockRule(match=match, slot=slot, scores=triple))
        return cls(rules, identity=f"mock:{path.name}")

    def score(self, premise: str, hypothesis: str) -> NliScores:
        for rule in self.rules:
            if rule.applies(premise, hypothesis):
                return rule.scores
        return UNIFORM_SCORES


class ExportedBackend:
    """Backend over an exported model directory.

    The directory holds a TorchScript module, a tokenizer definition, and a
    metadata document (backend.json) naming the model file, the tokenizer file,
    the output index of each NLI label, and the maximum sequence length. torch
    and tokenizers are imported lazily so the rest of the package works without
    them.
    """

    METADATA_FILE = "backend.json"

    def __init__(self, directory: str | Path):
        directory = Path(directory)
        meta_path = directory / self.METADATA_FILE
        if not meta_path.is_file():
            raise BackendError(f"{directory}: missing {self.METADATA_FILE}")
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise BackendError(f"{meta_path}: invalid JSON: {exc.msg}") from exc

        labels = meta.get("labels")
        if not isinstance(labels, dict) or sorted(labels) != sorted(NLI_LABELS):
            raise BackendError(
                f"{meta_path}: 'labels' must map exactly {list(NLI_LABELS)} to output indices"
            )
        indices = [labels[name] for name in NLI_LABELS]
        if sorted(indices) != [0, 1, 2]:
            raise BackendError(f"{meta_path}: label indices must be a permutation of 0..2")
        self._indices = {name: int(labels[name]) for name in NLI_LABELS}
        self.max_sequence_length = int(meta.get("max_sequence_length", 128))
        self.identity = str(meta.get("identity", directory.name))

        try:
            import torch
            from tokenizers import Tokenizer
        except ImportError as exc:
            raise BackendError(
                f"backend '{self.identity}' needs torch and tokenizers installed"
            ) from exc
        self._torch = torch

        model_file = directory / meta.get("model_file", "model.pt")
        tokenizer_file = directory / meta.get("tokenizer_file", "tokenizer.json")
        if not model_file.is_file():
            raise BackendError(f"{directory}: missing model file {model_file.name}")
        if not tokenizer_file.is_file():
            raise BackendError(f"{directory}: missing tokenizer file {tokenizer_file.name}")
        try:
            self._model = torch.jit.load(str(model_file), map_location="cpu")
        except Exception as exc:
            raise BackendError(f"{model_file}: could not load model: {exc}") from exc
        self._model.eval()
        self._tokenizer = Tokenizer.from_file(str(tokenizer_file))
        self._tokenizer.enable_truncation(max_length=self.max_sequence_length)

    def score(self, premise: str, hypothesis: str) -> NliScores:
        torch = self._torch
        encoding = self._tokenizer.encode(premise, hypothesis)
        ids = torch.tensor([encoding.ids], dtype=torch.long)
        mask = torch.tensor([encoding.attention_mask], dtype=torch.long)
        with torch.no_grad():
            logits = self._model(ids, mask)
        if isinstance(logits, (tuple, list)):
            logits = logits[0]
        probs = torch.softmax(logits[0].float(), dim=-1).tolist()
        if len(probs) != 3:
            raise BackendError(f"backend '{self.identity}' produced {len(probs)} outputs, not 3")
        return NliScores(
            entailment=probs[self._indices["entailment"]],
            neutral=probs[self._indices["neutral"]],
            contradiction=probs[self._indices["contradiction"]],
        )


def load_backend(path: str | Path) -> InferenceBackend:
    """Open a backend given either a mock table file or an exported model directory."""
    path = Path(path)
    if path.is_dir():
        return ExportedBackend(path)
    if path.is_file():
        return MockBackend.from_file(path)
    raise BackendError(f"{path}: no such backend (expected a JSONL table or a model directory)")


@dataclass
class HypothesisCatalog:
    """Hypothesis texts for the main classification and the filter strategies.

    main maps language to the main hypothesis text; auxiliaries maps a
    (strategy, slot) pair to its own language table.
    """

    default_language: str
    main: dict[str, str]
    auxiliaries: dict[tuple[str, str], dict[str, str]] = field(default_factory=dict)

    def __post_init__(self):
        if self.default_language not in self.main:
            raise ConfigError(
                f"catalog main hypothesis missing default language '{self.default_language}'"
            )

    def slots_for(self, strategy: str) -> list[str]:
        return [slot for (strat, slot) in self.auxiliaries if strat == strategy]


def load_catalog(path: str | Path) -> HypothesisCatalog:
    """Read a catalog TOML: [main] plus one [<strategy>.<slot>] table per auxiliary,
    each mapping language codes to hypothesis text."""
    doc = load_toml(path)
    default_language = doc.get("default_language", "en")
    main = doc.get("main")
    if not isinstance(main, dict) or not main:
        raise DataFormatError(f"{path}: catalog needs a non-empty [main] table")
    auxiliaries: dict[tuple[str, str], dict[str, str]] = {}
    for key, value in doc.items():
        if key in ("default_language", "main"):
            continue
        if not isinstance(value, dict):
            raise DataFormatError(f"{path}: unexpected top-level entry '{key}'")
        for slot, table in value.items():
            if not isinstance(table, dict) or not all(
                isinstance(t, str) for t in table.values()
            ):
                raise DataFormatError(f"{path}: [{key}.{slot}] must map languages to text")
            auxiliaries[(key, slot)] = dict(table)
    try:
        return HypothesisCatalog(
            default_language=str(default_language), main=dict(main), auxiliaries=auxiliaries
        )
    except ConfigError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


@dataclass
class DecisionPolicy:
    """Maps a 3-way NLI distribution to hate / not_hate.

    argmax calls hate only when entailment strictly beats both other classes;
    renormalized_threshold drops neutral mass and compares
    p_e / (p_e + p_c) against the threshold. Ties always resolve to not_hate.
    """

    rule: str = "argmax"
    threshold: float = 0.5

    def __post_init__(self):
        if self.rule not in ("argmax", "renormalized_threshold"):
            raise ConfigError(f"unknown decision rule '{self.rule}'")
        if self.rule == "renormalized_threshold" and not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must be in (0, 1), got {self.threshold}")


def decide(scores: NliScores, policy: DecisionPolicy) -> str:
    if policy.rule == "argmax":
        is_hate = (
            scores.entailment > scores.neutral and scores.entailment > scores.contradiction
        )
    else:
        denom = scores.entailment + scores.contradiction
        is_hate = denom > 0.0 and scores.entailment / denom > policy.threshold
    return "hate" if is_hate else "not_hate"


def resolve_hypothesis(
    catalog: HypothesisCatalog,
    slot_key: str | tuple[str, str],
    language: str,
    model_kind: str,
) -> str:
    """Pick the hypothesis text for a slot.

    Monolingual models require a translation in the target language; multilingual
    models always use the default-language (English) text.
    """
    if model_kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind '{model_kind}'")
    if slot_key == MAIN:
        table = catalog.main
        slot_name = MAIN
    else:
        table = catalog.auxiliaries.get(slot_key)
        slot_name = f"{slot_key[0]}.{slot_key[1]}"
        if table is None:
            raise ConfigError(f"catalog has no auxiliary hypothesis '{slot_name}'")
    wanted = language if model_kind == "monolingual" else catalog.default_language
    text = table.get(wanted)
    if text is None:
        raise MissingTranslationError(slot_name, wanted)
    return text


def score_pair(backend: InferenceBackend, premise: str, hypothesis: str) -> NliScores:
    try:
        scores = backend.score(premise, hypothesis)
    except (BackendError, MissingTranslationError):
        raise
    except Exception as exc:
        raise BackendError(f"backend '{backend.identity}' failed: {exc}") from exc
    problem = scores.check()
    if problem is not None:
        raise BackendError(f"backend '{backend.identity}' returned bad scores: {problem}")
    return scores


def classify_main(
    backend: InferenceBackend,
    catalog: HypothesisCatalog,
    policy: DecisionPolicy,
    text: str,
    language: str,
    model_kind: str,
) -> tuple[str, NliScores]:
    """Normalize, resolve the main hypothesis, score, decide."""
    hypothesis = resolve_hypothesis(catalog, MAIN, language, model_kind)
    scores = score_pair(backend, normalize(text), hypothesis)
    return decide(scores, policy), scores


def parse_scores(raw: Any, where: str) -> NliScores:
    """Parse an [e, n, c] list into validated NliScores."""
    if not isinstance(raw, list) or len(raw) != 3:
        raise DataFormatError(f"{where}: scores must be a list of three numbers")
    try:
        triple = NliScores(float(raw[0]), float(raw[1]), float(raw[2]))
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"{where}: non-numeric score") from exc
    problem = triple.check()
    if problem is not None:
        raise DataFormatError(f"{where}: {problem}")
    return triple
