"""Phase plans: which fine-tuning phases run, in which order, on what data.

A plan is a TOML document naming a base checkpoint and an ordered list of
phases drawn from {nli, en_hs, tl_hs}. Optional phases are simply omitted;
the canonical order nli -> en_hs -> tl_hs is enforced, with at most one
phase of each kind. Hate speech phases carry an as_nli flag that must be
true exactly when an nli phase precedes them: a model trained on NLI
examples keeps being trained in the NLI formulation.
"""

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import PlanError

PHASE_KINDS = ("nli", "en_hs", "tl_hs")
_KIND_RANK = {kind: i for i, kind in enumerate(PHASE_KINDS)}

DEFAULT_HYPOTHESIS = "This text is hate speech."


@dataclass
class PhaseHyperparameters:
    epochs: int
    learning_rate: float
    batch_size: int
    max_sequence_length: int

    def __post_init__(self):
        if self.epochs < 1:
            raise PlanError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise PlanError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise PlanError(f"batch size must be >= 1, got {self.batch_size}")
        if self.max_sequence_length < 8:
            raise PlanError(
                f"max sequence length must be >= 8, got {self.max_sequence_length}"
            )


# Per-kind defaults; everything else stays at the optimizer's own defaults.
DEFAULT_HYPERPARAMETERS = {
    "nli": PhaseHyperparameters(5, 2e-05, 32, 128),
    "en_hs": PhaseHyperparameters(3, 5e-05, 16, 128),
    "tl_hs": PhaseHyperparameters(5, 5e-05, 16, 128),
}


@dataclass
class Phase:
    kind: str
    train: str = ""  # nli: training corpus path
    validation: str = ""  # optional validation corpus path (any kind)
    dataset: str = ""  # hs kinds: labeled-post corpus path (split field inside)
    n: int | None = None  # tl_hs: examples sampled from the train split
    seed: int = 0  # tl_hs: sampling seed
    as_nli: bool = False  # hs kinds: train in the NLI formulation
    select_best: bool = False  # hs kinds: pick best epoch instead of the last
    hyperparameters: PhaseHyperparameters = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.kind not in PHASE_KINDS:
            raise PlanError(f"unknown phase kind '{self.kind}'")
        if self.hyperparameters is None:
            self.hyperparameters = DEFAULT_HYPERPARAMETERS[self.kind]
        if self.kind == "nli":
            if not self.train:
                raise PlanError("nli phase needs a 'train' corpus")
        else:
            if not self.dataset:
                raise PlanError(f"{self.kind} phase needs a 'dataset' corpus")
        if self.kind == "tl_hs":
            if self.n is None or self.n < 0:
                raise PlanError("tl_hs phase needs n >= 0")


@dataclass
class PhasePlan:
    name: str
    base_model: str
    phases: list[Phase]
    seed: int = 0
    hypothesis: str = DEFAULT_HYPOTHESIS

    def __post_init__(self):
        if not self.base_model:
            raise PlanError("plan needs a base_model checkpoint path")
        if not self.hypothesis:
            raise PlanError("plan needs a non-empty hypothesis text")
        ranks = [_KIND_RANK[p.kind] for p in self.phases]
        if ranks != sorted(ranks):
            raise PlanError(
                "phases must follow the order nli -> en_hs -> tl_hs, got "
                + " -> ".join(p.kind for p in self.phases)
            )
        if len(set(ranks)) != len(ranks):
            raise PlanError("at most one phase of each kind is allowed")
        nli_seen = False
        for index, phase in enumerate(self.phases):
            if phase.kind == "nli":
                nli_seen = True
            elif phase.as_nli != nli_seen:
                expect = "true" if nli_seen else "false"
                raise PlanError(
                    f"phase {index} ({phase.kind}): as_nli must be {expect} because "
                    f"an nli phase {'precedes' if nli_seen else 'does not precede'} it"
                )


def _phase_from_doc(doc: dict, index: int, base_dir: Path) -> Phase:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise PlanError(f"phase {index}: needs a 'kind'")

    def path_of(key: str) -> str:
        value = doc.get(key, "")
        if not value:
            return ""
        path = Path(str(value))
        return str(path if path.is_absolute() else base_dir / path)

    hp_doc = doc.get("hyperparameters")
    hyperparameters = None
    if hp_doc is not None:
        if not isinstance(hp_doc, dict):
            raise PlanError(f"phase {index}: hyperparameters must be a table")
        kind = str(doc["kind"])
        defaults = DEFAULT_HYPERPARAMETERS.get(kind)
        if defaults is None:
            raise PlanError(f"phase {index}: unknown phase kind '{kind}'")
        hyperparameters = PhaseHyperparameters(
            epochs=int(hp_doc.get("epochs", defaults.epochs)),
            learning_rate=float(hp_doc.get("learning_rate", defaults.learning_rate)),
            batch_size=int(hp_doc.get("batch_size", defaults.batch_size)),
            max_sequence_length=int(
                hp_doc.get("max_sequence_length", defaults.max_sequence_length)
            ),
        )
    try:
        return Phase(
            kind=str(doc["kind"]),
            train=path_of("train"),
            validation=path_of("validation"),
            dataset=path_of("dataset"),
            n=int(doc["n"]) if "n" in doc else None,
            seed=int(doc.get("seed", 0)),
            as_nli=bool(doc.get("as_nli", False)),
            select_best=bool(doc.get("select_best", False)),
            hyperparameters=hyperparameters,
        )
    except PlanError as exc:
        raise PlanError(f"phase {index}: {exc}") from exc


def load_plan(path: str | Path, data_dir: str | Path | None = None) -> PhasePlan:
    """Read a plan TOML. Relative corpus and checkpoint paths resolve against
    data_dir when given, else against the plan file's directory."""
    path = Path(path)
    base_dir = Path(data_dir) if data_dir is not None else path.parent
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise PlanError(f"{path}: invalid TOML: {exc}") from exc
    if "base_model" not in doc:
        raise PlanError(f"{path}: plan needs a 'base_model'")
    phases_doc = doc.get("phases")
    if not isinstance(phases_doc, list) or not phases_doc:
        raise PlanError(f"{path}: plan needs a non-empty [[phases]] list")
    base_model = Path(str(doc["base_model"]))
    if not base_model.is_absolute():
        base_model = base_dir / base_model
    try:
        return PhasePlan(
            name=str(doc.get("name", path.stem)),
            base_model=str(base_model),
            phases=[_phase_from_doc(p, i, base_dir) for i, p in enumerate(phases_doc)],
            seed=int(doc.get("seed", 0)),
            hypothesis=str(doc.get("hypothesis", DEFAULT_HYPOTHESIS)),
        )
    except PlanError as exc:
        raise PlanError(f"{path}: {exc}") from exc
