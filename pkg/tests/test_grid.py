import json

import pytest

from hsnli import grid as grid_mod
from hsnli.engine import DecisionPolicy
from hsnli.errors import ConfigError, GridError
from hsnli.grid import (
    BackendSpec,
    GridConfig,
    LanguageData,
    build_cells,
    load_grid_config,
    parse_variant,
    run_grid,
)

from conftest import make_posts, write_corpus, write_mock_table

MAIN_TEXT = "This text is hate speech."


def test_parse_variant_grammar():
    v = parse_variant("X+XNLI+DEN:strategies")
    assert (v.base, v.nli, v.en_hs, v.mode) == ("X", "XNLI", "DEN", "strategies")
    assert v.tag == "X+XNLI+DEN"
    assert v.model_kind == "multilingual"

    v = parse_variant("M")
    assert (v.base, v.nli, v.en_hs, v.mode) == ("M", None, None, "standard")
    assert v.model_kind == "monolingual"

    assert parse_variant("M+NLI").nli == "NLI"
    assert parse_variant("X+DEN").en_hs == "DEN"

    for bad in ("Q", "X+QEN", "M+XNLI", "X+DEN+FEN", "X+DEN+NLI", "X:dance", "M:strategies"):
        with pytest.raises(ConfigError):
            parse_variant(bad)


def test_strategies_mode_needs_nli_stage():
    assert parse_variant("X+NLI:strategies").mode == "strategies"
    with pytest.raises(ConfigError):
        parse_variant("X+DEN:strategies")


def _mini_setup(tmp_path, hate_entail=0.9):
    """Two languages, each with a held_out corpus (train+test) and a hatecheck
    corpus (test only); one mock backend that marks hate posts by a text token."""
    data_dir = tmp_path / "data"
    datasets = {}
    for lang, code in (("es", "BAS19_ES"), ("pt", "FOR19_PT")):
        train = make_posts(30, 30, language=lang, split="train", prefix=f"{lang}tr", seed=1)
        test = make_posts(10, 10, language=lang, split="test", prefix=f"{lang}te", seed=2)
        for p in train + test:
            if p.label == "hate":
                p.text += " hateful-marker"
        held_out = write_corpus(data_dir / f"{code}.jsonl", train + test)
        hc = make_posts(14, 6, language=lang, split="test", prefix=f"{lang}hc", seed=3)
        for p in hc:
            if p.label == "hate":
                p.text += " hateful-marker"
        hatecheck = write_corpus(data_dir / f"HC_{lang}.jsonl", hc)
        datasets[lang] = LanguageData(
            code=code,
            held_out=str(held_out),
            hatecheck=str(hatecheck),
            hatecheck_code=f"HateCheck_{lang.upper()}",
        )
    table = write_mock_table(
        tmp_path / "mock.jsonl",
        [
            {"match": "hateful-marker", "slot": MAIN_TEXT, "scores": [hate_entail, 0.05, 1.0 - hate_entail - 0.05]},
            {"match": "", "slot": "", "scores": [0.05, 0.15, 0.8]},
        ],
    )
    backends = {
        "X": BackendSpec(main=str(table)),
        "X+DEN": BackendSpec(main=str(table)),
    }
    return datasets, backends, table


def _mini_config(datasets, backends, runs=2):
    return GridConfig(
        variants=["X", "X+DEN"],
        languages=["es", "pt"],
        n_values=[0, 20],
        test_sets=["held_out", "hatecheck"],
        datasets=datasets,
        backends=backends,
        runs=runs,
        resamples=200,
        seed=0,
    )


def test_build_cells_cardinality(tmp_path):
    datasets, backends, _ = _mini_setup(tmp_path)
    cells = build_cells(_mini_config(datasets, backends))
    assert len(cells) == 2 * 2 * 2 * 2
    keys = {c.key() for c in cells}
    assert len(keys) == 16


def test_empty_grid_errors():
    with pytest.raises(ConfigError):
        GridConfig(
            variants=[], languages=[], n_values=[], test_sets=["nope"],
            datasets={}, backends={},
        )
    config = GridConfig(
        variants=[], languages=[], n_values=[], test_sets=[], datasets={}, backends={}
    )
    with pytest.raises(GridError):
        build_cells(config)


def test_grid_runs_all_cells_and_persists(tmp_path):
    datasets, backends, _ = _mini_setup(tmp_path)
    config = _mini_config(datasets, backends)
    out = tmp_path / "results"
    results = run_grid(config, out)
    assert len(results) == 16
    assert all(r.status == "ok" for r in results)
    # perfect separation in the mock: macro F1 is 1 everywhere
    assert all(abs(r.report.macro_f1 - 1.0) < 1e-12 for r in results)
    stored = list((out / "cells").glob("*.json"))
    assert len(stored) == 16
    cells_lines = (out / "cells.jsonl").read_text().strip().splitlines()
    assert len(cells_lines) == 16
    for test_set in ("held_out", "hatecheck"):
        csv = (out / f"report_{test_set}.csv").read_text().strip().splitlines()
        assert len(csv) == 3  # header + 2 variant rows
        assert csv[0].startswith("variant,")


def test_grid_deterministic_across_runs(tmp_path):
    datasets, backends, _ = _mini_setup(tmp_path)
    config = _mini_config(datasets, backends)
    run_grid(config, tmp_path / "r1")
    run_grid(config, tmp_path / "r2")
    a = (tmp_path / "r1" / "cells.jsonl").read_text()
    b = (tmp_path / "r2" / "cells.jsonl").read_text()
    assert a == b


def test_grid_parallel_equals_serial(tmp_path):
    datasets, backends, _ = _mini_setup(tmp_path)
    config = _mini_config(datasets, backends)
    run_grid(config, tmp_path / "serial", jobs=1)
    run_grid(config, tmp_path / "parallel", jobs=4)
    assert (tmp_path / "serial" / "cells.jsonl").read_text() == (
        tmp_path / "parallel" / "cells.jsonl"
    ).read_text()


def test_grid_resume_reuses_finished_cells(tmp_path):
    datasets, backends, table = _mini_setup(tmp_path)
    config = _mini_config(datasets, backends)
    out = tmp_path / "results"
    first = run_grid(config, out)
    # sabotage the backend table: recomputing any cell now would flip labels
    write_mock_table(
        table,
        [
            {"match": "hateful-marker", "slot": MAIN_TEXT, "scores": [0.0, 0.0, 1.0]},
            {"match": "", "slot": "", "scores": [0.9, 0.05, 0.05]},
        ],
    )
    second = run_grid(config, out)
    assert [r.to_record() for r in second] == [r.to_record() for r in first]


def test_grid_recomputes_missing_cell_after_interruption(tmp_path):
    datasets, backends, _ = _mini_setup(tmp_path)
    config = _mini_config(datasets, backends)
    out = tmp_path / "results"
    first = run_grid(config, out)
    victim = sorted((out / "cells").glob("*.json"))[0]
    victim.unlink()
    second = run_grid(config, out)
    assert [r.to_record() for r in second] == [r.to_record() for r in first]
    assert len(list((out / "cells").glob("*.json"))) == 16


def test_failed_cell_does_not_abort_grid(tmp_path):
    datasets, backends, _ = _mini_setup(tmp_path)
    backends["X+DEN"] = BackendSpec(main=str(tmp_path / "missing.jsonl"))
    config = _mini_config(datasets, backends)
    results = run_grid(config, tmp_path / "results")
    ok = [r for r in results if r.status == "ok"]
    failed = [r for r in results if r.status == "failed"]
    assert len(ok) == 8 and len(failed) == 8
    assert all("missing.jsonl" in r.error for r in failed)
    # failed cells are not persisted, so a fixed registry recomputes them
    stored = list((tmp_path / "results" / "cells").glob("*.json"))
    assert len(stored) == 8


def test_strategies_cell_requires_aux_for_hs_finetuned(tmp_path):
    datasets, backends, table = _mini_setup(tmp_path)
    config = GridConfig(
        variants=["X+NLI+DEN:strategies"],
        languages=["es"],
        n_values=[0],
        test_sets=["held_out"],
        datasets=datasets,
        backends={"X+NLI+DEN": BackendSpec(main=str(table))},
        runs=1,
        resamples=100,
    )
    results = run_grid(config, tmp_path / "results")
    assert results[0].status == "failed"
    assert "aux" in results[0].error

    config.backends["X+NLI+DEN"] = BackendSpec(main=str(table), aux=str(table))
    results = run_grid(config, tmp_path / "results2")
    assert results[0].status == "ok"


def test_strategies_cell_reuses_main_backend_when_nli_only(tmp_path):
    datasets, backends, table = _mini_setup(tmp_path)
    config = GridConfig(
        variants=["X+NLI:strategies"],
        languages=["es"],
        n_values=[0],
        test_sets=["held_out"],
        datasets=datasets,
        backends={"X+NLI": BackendSpec(main=str(table))},
        runs=1,
        resamples=100,
    )
    results = run_grid(config, tmp_path / "results")
    assert results[0].status == "ok"


def test_n_shot_sample_counts_recorded(tmp_path):
    datasets, backends, _ = _mini_setup(tmp_path)
    config = _mini_config(datasets, backends, runs=2)
    results = run_grid(config, tmp_path / "results")
    for r in results:
        for rr in r.run_records:
            if r.cell.n == 0:
                assert rr.sample_class_counts is None
            else:
                assert sum(rr.sample_class_counts.values()) == r.cell.n
    # distinct runs draw with distinct seeds
    cell = next(r for r in results if r.cell.n == 20)
    seeds = [rr.seed for rr in cell.run_records]
    assert len(set(seeds)) == len(seeds)


def test_load_grid_config_roundtrip(tmp_path):
    datasets, backends, table = _mini_setup(tmp_path)
    cfg = tmp_path / "grid.toml"
    cfg.write_text(
        "\n".join(
            [
                'variants = ["X", "X+DEN"]',
                'languages = ["es"]',
                "n_values = [0, 20]",
                'test_sets = ["held_out"]',
                "runs = 3",
                "resamples = 150",
                "seed = 42",
                "[policy]",
                'rule = "argmax"',
                "[datasets.es]",
                'code = "BAS19_ES"',
                f'held_out = "{datasets["es"].held_out}"',
                "[backends.X]",
                f'main = "{table}"',
                '[backends."X+DEN"]',
                f'main = "{table}"',
            ]
        )
    )
    config = load_grid_config(cfg)
    assert config.runs == 3 and config.seed == 42
    assert config.datasets["es"].code == "BAS19_ES"
    assert config.backends["X+DEN"].main == str(table)
    assert isinstance(config.policy, DecisionPolicy)
    results = run_grid(config, tmp_path / "out")
    assert len(results) == 4 and all(r.status == "ok" for r in results)


def test_results_to_cell_scores(tmp_path):
    datasets, backends, _ = _mini_setup(tmp_path)
    config = _mini_config(datasets, backends)
    out = tmp_path / "results"
    run_grid(config, out)
    records = [json.loads(line) for line in (out / "cells.jsonl").read_text().splitlines()]
    scores = grid_mod.results_to_cell_scores(records)
    assert ("X", "BAS19_ES", 0) in scores
    assert ("X+DEN", "HateCheck_PT", 20) in scores
    assert all(0.0 <= v <= 1.0 for v in scores.values())
