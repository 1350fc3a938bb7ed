"""Filter strategies layered on top of the main hate/not-hate prediction.

Each strategy asks auxiliary yes/no questions through extra NLI hypotheses and
may overturn a positive main prediction to not_hate. Filters only ever remove
positives, never create them. When the main model has been fine-tuned on hate
speech data, the auxiliary backend should be the NLI-only model; callers wire
that up, this module just takes two backends.
"""

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .engine import (
    DecisionPolicy,
    HypothesisCatalog,
    InferenceBackend,
    NliScores,
    classify_main,
    resolve_hypothesis,
    score_pair,
)
from .errors import ConfigError, DataFormatError
from .fileio import load_toml
from .normalize import normalize

TARGET = "filter_by_target"
SLURS = "filter_reclaimed_slurs"
COUNTER = "filter_counterspeech"
STRATEGY_NAMES = (TARGET, SLURS, COUNTER)

# Auxiliary slot names, matching the catalog's [<strategy>.<slot>] tables.
SELF_REFERENCE = "self_reference"
POSITIVE_SENTIMENT = "positive_sentiment"
COUNTER_SLOTS = (
    "references_another_statement",
    "referenced_statement_is_hate",
    "opposes_referenced_statement",
)

DEFAULT_CHARACTERISTICS = (
    "religion",
    "race_or_ethnicity",
    "gender",
    "sexual_orientation",
    "disability",
    "national_origin",
)


@dataclass
class StrategyConfig:
    enabled: list[str] = field(default_factory=lambda: list(STRATEGY_NAMES))
    tau_target: float = 0.5
    tau_slur: float = 0.5
    tau_counter: float = 0.5
    characteristics: list[str] = field(default_factory=lambda: list(DEFAULT_CHARACTERISTICS))
    slur_lexicon: list[str] = field(default_factory=list)

    def __post_init__(self):
        for name in self.enabled:
            if name not in STRATEGY_NAMES:
                raise ConfigError(f"unknown strategy '{name}'")
        for tau_name, tau in (
            ("tau_target", self.tau_target),
            ("tau_slur", self.tau_slur),
            ("tau_counter", self.tau_counter),
        ):
            # The endpoints are allowed on purpose: with strict comparisons,
            # tau_target=0 and tau_slur=tau_counter=1 make a filter unfireable,
            # which is how a strategy is neutralized without editing the set.
            if not 0.0 <= tau <= 1.0:
                raise ConfigError(f"{tau_name} must be in [0, 1], got {tau}")
        if TARGET in self.enabled and not self.characteristics:
            raise ConfigError(f"{TARGET} enabled but characteristics list is empty")

    def thresholds(self) -> dict[str, float]:
        return {
            "tau_target": self.tau_target,
            "tau_slur": self.tau_slur,
            "tau_counter": self.tau_counter,
        }


def load_strategy_config(path: str | Path) -> StrategyConfig:
    path = Path(path)
    doc = load_toml(path)
    lexicon = [str(w) for w in doc.get("slur_lexicon", [])]
    lexicon_path = doc.get("lexicon_path")
    if lexicon_path:
        lex_file = Path(lexicon_path)
        if not lex_file.is_absolute():
            lex_file = path.parent / lex_file
        if not lex_file.is_file():
            raise DataFormatError(f"{path}: lexicon file not found: {lex_file}")
        for line in lex_file.read_text(encoding="utf-8").splitlines():
            word = line.strip()
            if word and not word.startswith("#"):
                lexicon.append(word)
    kwargs: dict[str, Any] = {"slur_lexicon": lexicon}
    for key in ("enabled", "tau_target", "tau_slur", "tau_counter", "characteristics"):
        if key in doc:
            kwargs[key] = doc[key]
    try:
        return StrategyConfig(**kwargs)
    except TypeError as exc:
        raise DataFormatError(f"{path}: bad strategy config: {exc}") from exc


@dataclass
class ClassificationTrace:
    input_id: str
    language: str
    main_label: str
    main_scores: NliScores
    final_label: str
    aux_scores: dict[str, dict[str, NliScores]] = field(default_factory=dict)
    fired_filters: list[str] = field(default_factory=list)
    skipped_filters: list[str] = field(default_factory=list)
    slur_lexicon_matched: bool | None = None
    thresholds: dict[str, float] = field(default_factory=dict)

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.input_id,
            "language": self.language,
            "main_label": self.main_label,
            "main_scores": self.main_scores.as_list(),
            "aux_scores": {
                strategy: {slot: s.as_list() for slot, s in slots.items()}
                for strategy, slots in self.aux_scores.items()
            },
            "fired_filters": self.fired_filters,
            "skipped_filters": self.skipped_filters,
            "slur_lexicon_matched": self.slur_lexicon_matched,
            "thresholds": self.thresholds,
            "final_label": self.final_label,
        }


def _score_slot(
    aux_backend: InferenceBackend,
    catalog: HypothesisCatalog,
    strategy: str,
    slot: str,
    premise: str,
    language: str,
    model_kind: str,
) -> NliScores:
    hypothesis = resolve_hypothesis(catalog, (strategy, slot), language, model_kind)
    return score_pair(aux_backend, premise, hypothesis)


def filter_by_target(
    premise: str,
    aux_backend: InferenceBackend,
    catalog: HypothesisCatalog,
    config: StrategyConfig,
    language: str,
    model_kind: str,
) -> tuple[bool, dict[str, NliScores]]:
    """Fires when no protected characteristic looks targeted: the maximum
    entailment probability across the characteristic slots stays below tau_target."""
    slot_scores = {
        c: _score_slot(aux_backend, catalog, TARGET, c, premise, language, model_kind)
        for c in config.characteristics
    }
    best = max(s.entailment for s in slot_scores.values())
    return best < config.tau_target, slot_scores


def _lexicon_pattern(lexicon: list[str]) -> re.Pattern | None:
    words = [w for w in lexicon if w]
    if not words:
        return None
    joined = "|".join(re.escape(w) for w in sorted(set(words)))
    return re.compile(rf"\b(?:{joined})\b", re.IGNORECASE)


def filter_reclaimed_slurs(
    premise: str,
    aux_backend: InferenceBackend,
    catalog: HypothesisCatalog,
    config: StrategyConfig,
    language: str,
    model_kind: str,
) -> tuple[bool, dict[str, NliScores], bool]:
    """Fires on lexicon-flagged texts that read as self-referential or positive.

    The lexicon gate runs first on the normalized premise (case-insensitive,
    word boundaries); without a match the auxiliary slots are not scored at all,
    so an empty lexicon turns the strategy off. Returns (fired, slot scores,
    lexicon matched).
    """
    pattern = _lexicon_pattern(config.slur_lexicon)
    if pattern is None or pattern.search(premise) is None:
        return False, {}, False
    slot_scores = {
        slot: _score_slot(aux_backend, catalog, SLURS, slot, premise, language, model_kind)
        for slot in (SELF_REFERENCE, POSITIVE_SENTIMENT)
    }
    fired = (
        slot_scores[SELF_REFERENCE].entailment > config.tau_slur
        or slot_scores[POSITIVE_SENTIMENT].entailment > config.tau_slur
    )
    return fired, slot_scores, True


def filter_counterspeech(
    premise: str,
    aux_backend: InferenceBackend,
    catalog: HypothesisCatalog,
    config: StrategyConfig,
    language: str,
    model_kind: str,
) -> tuple[bool, dict[str, NliScores]]:
    """Fires when the text quotes another statement, that statement is hateful,
    and the text opposes it; all three slots must clear tau_counter."""
    slot_scores = {
        slot: _score_slot(aux_backend, catalog, COUNTER, slot, premise, language, model_kind)
        for slot in COUNTER_SLOTS
    }
    fired = all(s.entailment > config.tau_counter for s in slot_scores.values())
    return fired, slot_scores


def classify_with_strategies(
    text: str,
    input_id: str,
    language: str,
    main_backend: InferenceBackend,
    aux_backend: InferenceBackend,
    catalog: HypothesisCatalog,
    policy: DecisionPolicy,
    config: StrategyConfig,
    model_kind: str,
) -> ClassificationTrace:
    """Main prediction plus filter pass.

    A not_hate main prediction is final and skips every filter. A hate main
    prediction runs all enabled filters (each fully scored so traces stay
    complete for error analysis) and flips to not_hate when any fires.
    """
    main_label, main_scores = classify_main(
        main_backend, catalog, policy, text, language, model_kind
    )
    trace = ClassificationTrace(
        input_id=input_id,
        language=language,
        main_label=main_label,
        main_scores=main_scores,
        final_label=main_label,
        thresholds=config.thresholds(),
    )
    if main_label == "not_hate":
        trace.skipped_filters = list(config.enabled)
        return trace

    premise = normalize(text)
    if TARGET in config.enabled:
        fired, slot_scores = filter_by_target(
            premise, aux_backend, catalog, config, language, model_kind
        )
        trace.aux_scores[TARGET] = slot_scores
        if fired:
            trace.fired_filters.append(TARGET)
    if SLURS in config.enabled:
        fired, slot_scores, matched = filter_reclaimed_slurs(
            premise, aux_backend, catalog, config, language, model_kind
        )
        trace.aux_scores[SLURS] = slot_scores
        trace.slur_lexicon_matched = matched
        if fired:
            trace.fired_filters.append(SLURS)
    if COUNTER in config.enabled:
        fired, slot_scores = filter_counterspeech(
            premise, aux_backend, catalog, config, language, model_kind
        )
        trace.aux_scores[COUNTER] = slot_scores
        if fired:
            trace.fired_filters.append(COUNTER)

    trace.final_label = "not_hate" if trace.fired_filters else "hate"
    return trace
