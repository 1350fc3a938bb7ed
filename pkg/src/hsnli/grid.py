"""The experiment grid: every (variant, language, N, test set) cell scored over
several per-seed runs, with resumable per-cell persistence.

The grid never trains anything. Backends are either mock tables or exported
model directories produced elsewhere; path templates with {variant}, {language},
{n}, and {seed} placeholders let one registry entry cover every cell. A cell
failure (missing backend, missing translation) is recorded and the grid moves
on; finished cells are written to disk immediately so an interrupted grid picks
up where it stopped.
"""

import json
import re
import threading
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .corpus import (
    LabeledPost,
    SamplingSpec,
    load_posts,
    sample_n_shot,
)
from .engine import (
    DecisionPolicy,
    HypothesisCatalog,
    InferenceBackend,
    classify_main,
    load_backend,
    load_catalog,
)
from .errors import ConfigError, GridError, HsnliError
from .evaluation import CellKey, MetricReport, RunScore, aggregate_runs, score_run
from .fileio import load_toml, read_jsonl, write_json_atomic, write_jsonl, write_text_atomic
from .references import default_catalog_path
from .strategies import StrategyConfig, classify_with_strategies, load_strategy_config

BASES = ("M", "X")
NLI_STAGES = ("NLI", "XNLI")
EN_HS_STAGES = ("DEN", "FEN", "KEN")
MODES = ("standard", "strategies")
TEST_SETS = ("held_out", "hatecheck")


@dataclass(frozen=True)
class ModelVariant:
    """Parsed form of a variant spec like "X+XNLI+DEN:strategies".

    The tag names the training recipe: base checkpoint (M or X), an optional
    NLI stage, an optional English hate speech stage. The mode picks plain
    classification or the filter-strategy pipeline.
    """

    spec: str
    tag: str
    base: str
    nli: str | None
    en_hs: str | None
    mode: str

    @property
    def model_kind(self) -> str:
        return "monolingual" if self.base == "M" else "multilingual"


def parse_variant(spec: str) -> ModelVariant:
    tag, _, mode = spec.partition(":")
    mode = mode or "standard"
    if mode not in MODES:
        raise ConfigError(f"variant '{spec}': unknown mode '{mode}'")
    parts = tag.split("+")
    base = parts[0]
    if base not in BASES:
        raise ConfigError(f"variant '{spec}': base must be M or X, got '{base}'")
    nli: str | None = None
    en_hs: str | None = None
    for part in parts[1:]:
        if part in NLI_STAGES:
            if nli is not None or en_hs is not None:
                raise ConfigError(f"variant '{spec}': '{part}' out of place")
            nli = part
        elif part in EN_HS_STAGES:
            if en_hs is not None:
                raise ConfigError(f"variant '{spec}': multiple English HS stages")
            en_hs = part
        else:
            raise ConfigError(f"variant '{spec}': unknown stage '{part}'")
    if nli == "XNLI" and base != "X":
        raise ConfigError(f"variant '{spec}': XNLI requires the multilingual base")
    if mode == "strategies" and nli is None:
        raise ConfigError(f"variant '{spec}': strategies mode requires an NLI stage")
    return ModelVariant(spec=spec, tag=tag, base=base, nli=nli, en_hs=en_hs, mode=mode)


@dataclass
class BackendSpec:
    """Registry entry for one variant tag: path templates for the main backend
    and, optionally, the NLI-only auxiliary backend used by strategies mode."""

    main: str
    aux: str | None = None

    def resolve(self, template: str, variant: ModelVariant, language: str, n: int, seed: int) -> str:
        return template.format(variant=variant.tag, language=language, n=n, seed=seed)


@dataclass
class LanguageData:
    code: str
    held_out: str | None = None
    hatecheck: str | None = None
    hatecheck_code: str = ""


@dataclass
class GridConfig:
    variants: list[str]
    languages: list[str]
    n_values: list[int]
    test_sets: list[str]
    datasets: dict[str, LanguageData]
    backends: dict[str, BackendSpec]
    runs: int = 10
    alpha: float = 0.05
    resamples: int = 10000
    seed: int = 0
    catalog_path: str = ""
    strategy_config_path: str = ""
    policy: DecisionPolicy = field(default_factory=DecisionPolicy)

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        for t in self.test_sets:
            if t not in TEST_SETS:
                raise ConfigError(f"unknown test set '{t}'")
        for n in self.n_values:
            if n < 0:
                raise ConfigError(f"negative N value {n}")


def _resolve(base_dir: Path, value: str) -> str:
    path = Path(value)
    return str(path if path.is_absolute() else base_dir / path)


def load_grid_config(path: str | Path) -> GridConfig:
    """Read a grid TOML. Relative paths are taken relative to the config file."""
    path = Path(path)
    base_dir = path.parent
    doc = load_toml(path)
    for key in ("variants", "languages", "n_values", "test_sets"):
        if key not in doc or not isinstance(doc[key], list) or not doc[key]:
            raise ConfigError(f"{path}: '{key}' must be a non-empty list")

    datasets: dict[str, LanguageData] = {}
    for lang, entry in doc.get("datasets", {}).items():
        if not isinstance(entry, dict) or "code" not in entry:
            raise ConfigError(f"{path}: [datasets.{lang}] needs a 'code'")
        datasets[lang] = LanguageData(
            code=str(entry["code"]),
            held_out=_resolve(base_dir, entry["held_out"]) if "held_out" in entry else None,
            hatecheck=_resolve(base_dir, entry["hatecheck"]) if "hatecheck" in entry else None,
            hatecheck_code=str(entry.get("hatecheck_code", f"HateCheck_{lang.upper()}")),
        )

    backends: dict[str, BackendSpec] = {}
    for tag, entry in doc.get("backends", {}).items():
        if not isinstance(entry, dict) or "main" not in entry:
            raise ConfigError(f"{path}: [backends.\"{tag}\"] needs a 'main' path")
        backends[tag] = BackendSpec(
            main=_resolve(base_dir, str(entry["main"])),
            aux=_resolve(base_dir, str(entry["aux"])) if "aux" in entry else None,
        )

    policy_doc = doc.get("policy", {})
    policy = DecisionPolicy(
        rule=policy_doc.get("rule", "argmax"),
        threshold=float(policy_doc.get("threshold", 0.5)),
    )
    return GridConfig(
        variants=[str(v) for v in doc["variants"]],
        languages=[str(lang) for lang in doc["languages"]],
        n_values=[int(n) for n in doc["n_values"]],
        test_sets=[str(t) for t in doc["test_sets"]],
        datasets=datasets,
        backends=backends,
        runs=int(doc.get("runs", 10)),
        alpha=float(doc.get("alpha", 0.05)),
        resamples=int(doc.get("resamples", 10000)),
        seed=int(doc.get("seed", 0)),
        catalog_path=_resolve(base_dir, doc["catalog"]) if "catalog" in doc else "",
        strategy_config_path=(
            _resolve(base_dir, doc["strategy_config"]) if "strategy_config" in doc else ""
        ),
        policy=policy,
    )


@dataclass(frozen=True)
class ExperimentCell:
    variant: ModelVariant
    language: str
    n: int
    test_set: str
    dataset_code: str

    def key(self) -> str:
        return f"{self.variant.spec}|{self.language}|{self.n}|{self.test_set}"

    def file_stem(self) -> str:
        return re.sub(r"[^A-Za-z0-9+._-]", "_", self.key().replace("|", "__"))


@dataclass
class RunRecord:
    run_index: int
    seed: int
    backend: str
    sample_class_counts: dict[str, int] | None
    score: RunScore

    def to_record(self) -> dict[str, Any]:
        return {
            "run_index": self.run_index,
            "seed": self.seed,
            "backend": self.backend,
            "sample_class_counts": self.sample_class_counts,
            "macro_f1": self.score.macro_f1,
            "per_class_f1": self.score.per_class_f1,
            "missing_classes": self.score.missing_classes,
        }


@dataclass
class CellResult:
    cell: ExperimentCell
    status: str
    error: str | None = None
    report: MetricReport | None = None
    run_records: list[RunRecord] = field(default_factory=list)

    def to_record(self) -> dict[str, Any]:
        return {
            "variant": self.cell.variant.spec,
            "tag": self.cell.variant.tag,
            "mode": self.cell.variant.mode,
            "language": self.cell.language,
            "dataset": self.cell.dataset_code,
            "n": self.cell.n,
            "test_set": self.cell.test_set,
            "status": self.status,
            "error": self.error,
            "report": self.report.to_record() if self.report else None,
            "runs": [r.to_record() for r in self.run_records],
        }


def _cell_seed(base_seed: int, key: str) -> int:
    return zlib.crc32(key.encode("utf-8")) ^ (base_seed & 0xFFFFFFFF)


class _Caches:
    """Thread-safe caches for loaded backends and corpora."""

    def __init__(self):
        self._lock = threading.Lock()
        self._backends: dict[str, InferenceBackend] = {}
        self._corpora: dict[str, list[LabeledPost]] = {}

    def backend(self, path: str) -> InferenceBackend:
        with self._lock:
            if path not in self._backends:
                self._backends[path] = load_backend(path)
            return self._backends[path]

    def posts(self, path: str) -> list[LabeledPost]:
        with self._lock:
            if path not in self._corpora:
                self._corpora[path] = load_posts(path)
            return self._corpora[path]


def build_cells(config: GridConfig) -> list[ExperimentCell]:
    variants = [parse_variant(spec) for spec in config.variants]
    cells = []
    for variant in variants:
        for language in config.languages:
            data = config.datasets.get(language)
            for n in config.n_values:
                for test_set in config.test_sets:
                    if data is None:
                        code = language
                    else:
                        code = data.code if test_set == "held_out" else data.hatecheck_code
                    cells.append(
                        ExperimentCell(
                            variant=variant,
                            language=language,
                            n=n,
                            test_set=test_set,
                            dataset_code=code,
                        )
                    )
    if not cells:
        raise GridError("grid is empty: no cells to run")
    return cells


def _pick_aux(
    config: GridConfig,
    spec: BackendSpec,
    cell: ExperimentCell,
    main_backend: InferenceBackend,
    caches: _Caches,
    run_seed: int,
) -> InferenceBackend:
    """Auxiliary predictions must come from the NLI-only model. The registry can
    name it explicitly; otherwise the main backend is reused only when it has
    seen no hate speech data (no English HS stage and N=0)."""
    variant = cell.variant
    if spec.aux is not None:
        path = spec.resolve(spec.aux, variant, cell.language, cell.n, run_seed)
        return caches.backend(path)
    if variant.en_hs is None and cell.n == 0:
        return main_backend
    raise GridError(
        f"variant '{variant.spec}' is hate-speech fine-tuned; "
        f"the backend registry must name an NLI-only 'aux' backend"
    )


def run_cell(
    config: GridConfig,
    cell: ExperimentCell,
    caches: _Caches,
    catalog: HypothesisCatalog,
    strategy_config: StrategyConfig,
) -> CellResult:
    data = config.datasets.get(cell.language)
    if data is None:
        return CellResult(cell, "failed", error=f"no datasets configured for '{cell.language}'")
    spec = config.backends.get(cell.variant.tag)
    if spec is None:
        return CellResult(cell, "failed", error=f"no backend registered for '{cell.variant.tag}'")

    eval_path = data.held_out if cell.test_set == "held_out" else data.hatecheck
    if eval_path is None:
        return CellResult(
            cell, "failed", error=f"no {cell.test_set} corpus for '{cell.language}'"
        )

    try:
        eval_posts = [p for p in caches.posts(eval_path) if p.split == "test"]
        if not eval_posts:
            raise GridError(f"{eval_path}: no test-split records")
        train_pool: list[LabeledPost] = []
        if cell.n > 0:
            if data.held_out is None:
                raise GridError(f"no held_out corpus to sample from for '{cell.language}'")
            train_pool = [p for p in caches.posts(data.held_out) if p.split == "train"]

        run_records = []
        for run_index in range(config.runs):
            run_seed = _cell_seed(config.seed, f"{cell.key()}|run{run_index}")
            main_path = spec.resolve(spec.main, cell.variant, cell.language, cell.n, run_seed)
            main_backend = caches.backend(main_path)

            counts: dict[str, int] | None = None
            if cell.n > 0:
                # The N-shot draw this run's model was (or would be) trained on;
                # recorded so the sample is auditable and reproducible.
                _, counts = sample_n_shot(train_pool, SamplingSpec(n=cell.n, seed=run_seed))

            predictions = []
            gold = []
            if cell.variant.mode == "strategies":
                aux_backend = _pick_aux(config, spec, cell, main_backend, caches, run_seed)
                for post in eval_posts:
                    trace = classify_with_strategies(
                        post.text,
                        post.id,
                        cell.language,
                        main_backend,
                        aux_backend,
                        catalog,
                        config.policy,
                        strategy_config,
                        cell.variant.model_kind,
                    )
                    predictions.append(trace.final_label)
                    gold.append(post.label)
            else:
                for post in eval_posts:
                    label, _ = classify_main(
                        main_backend,
                        catalog,
                        config.policy,
                        post.text,
                        cell.language,
                        cell.variant.model_kind,
                    )
                    predictions.append(label)
                    gold.append(post.label)
            run_records.append(
                RunRecord(
                    run_index=run_index,
                    seed=run_seed,
                    backend=main_backend.identity,
                    sample_class_counts=counts,
                    score=score_run(predictions, gold),
                )
            )

        report = aggregate_runs(
            [r.score for r in run_records],
            resamples=config.resamples,
            alpha=config.alpha,
            seed=_cell_seed(config.seed, f"{cell.key()}|ci"),
        )
        return CellResult(cell, "ok", report=report, run_records=run_records)
    except (HsnliError, OSError) as exc:
        return CellResult(cell, "failed", error=str(exc))


def _cell_store_path(results_dir: Path, cell: ExperimentCell) -> Path:
    return results_dir / "cells" / f"{cell.file_stem()}.json"


def _load_finished(path: Path, cell: ExperimentCell) -> CellResult | None:
    if not path.is_file():
        return None
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return None
    if doc.get("status") != "ok" or doc.get("report") is None:
        return None
    rep = doc["report"]
    report = MetricReport(
        macro_f1=rep["macro_f1"],
        per_class_f1=rep["per_class_f1"],
        ci_low=rep["ci_low"],
        ci_high=rep["ci_high"],
        runs=rep["runs"],
        run_scores=rep.get("run_scores", []),
        missing_classes=rep.get("missing_classes", []),
    )
    run_records = [
        RunRecord(
            run_index=r["run_index"],
            seed=r["seed"],
            backend=r.get("backend", ""),
            sample_class_counts=r.get("sample_class_counts"),
            score=RunScore(
                macro_f1=r["macro_f1"],
                per_class_f1=r["per_class_f1"],
                missing_classes=r.get("missing_classes", []),
            ),
        )
        for r in doc.get("runs", [])
    ]
    return CellResult(cell, "ok", report=report, run_records=run_records)


def run_grid(
    config: GridConfig,
    results_dir: str | Path,
    jobs: int = 1,
    progress: Callable[[str], None] | None = None,
) -> list[CellResult]:
    """Run (or resume) every cell, persist finished cells, and write the report
    files. Failed cells are reported but never stop the rest of the grid."""
    results_dir = Path(results_dir)
    (results_dir / "cells").mkdir(parents=True, exist_ok=True)
    cells = build_cells(config)
    caches = _Caches()
    catalog = load_catalog(config.catalog_path or default_catalog_path())
    strategy_config = (
        load_strategy_config(config.strategy_config_path)
        if config.strategy_config_path
        else StrategyConfig()
    )

    say = progress or (lambda msg: None)
    results: dict[str, CellResult] = {}
    todo = []
    for cell in cells:
        finished = _load_finished(_cell_store_path(results_dir, cell), cell)
        if finished is not None:
            results[cell.key()] = finished
            say(f"[grid] reuse {cell.key()}")
        else:
            todo.append(cell)

    def work(cell: ExperimentCell) -> CellResult:
        result = run_cell(config, cell, caches, catalog, strategy_config)
        if result.status == "ok":
            write_json_atomic(_cell_store_path(results_dir, cell), result.to_record())
            say(f"[grid] done {cell.key()} macro_f1={result.report.macro_f1:.4f}")
        else:
            say(f"[grid] FAIL {cell.key()}: {result.error}")
        return result

    if jobs > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for result in pool.map(work, todo):
                results[result.cell.key()] = result
    else:
        for cell in todo:
            results[cell.key()] = work(cell)

    ordered = [results[c.key()] for c in cells]
    write_outputs(config, ordered, results_dir)
    return ordered


def write_outputs(config: GridConfig, results: list[CellResult], results_dir: Path) -> None:
    write_jsonl(results_dir / "cells.jsonl", (r.to_record() for r in results))
    for test_set in config.test_sets:
        subset = [r for r in results if r.cell.test_set == test_set]
        write_text_atomic(results_dir / f"report_{test_set}.csv", _shaped_csv(config, subset))


def _shaped_csv(config: GridConfig, results: list[CellResult]) -> str:
    """Rows = variant specs, columns = dataset x N, values = mean macro-F1."""
    columns: list[tuple[str, int]] = []
    for language in config.languages:
        data = config.datasets.get(language)
        for result in results:
            if result.cell.language == language:
                code = result.cell.dataset_code
                break
        else:
            code = data.code if data else language
        for n in config.n_values:
            columns.append((code, n))
    by_key = {
        (r.cell.variant.spec, r.cell.dataset_code, r.cell.n): r for r in results
    }
    lines = ["variant," + ",".join(f"{code}/N={n}" for code, n in columns)]
    for spec in config.variants:
        row = [spec]
        for code, n in columns:
            result = by_key.get((spec, code, n))
            if result is not None and result.status == "ok":
                row.append(f"{result.report.macro_f1:.2f}")
            else:
                row.append("")
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def results_to_cell_scores(records: list[dict[str, Any]]) -> dict[CellKey, float]:
    """Long-form cell records -> {(variant spec, dataset, n): mean macro-F1}."""
    out: dict[CellKey, float] = {}
    for rec in records:
        if rec.get("status") != "ok" or not rec.get("report"):
            continue
        out[(rec["variant"], rec["dataset"], int(rec["n"]))] = rec["report"]["macro_f1"]
    return out


def load_cell_records(path: str | Path) -> list[dict[str, Any]]:
    return list(read_jsonl(path))
