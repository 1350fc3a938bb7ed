"""Command-line entry point.

Every subcommand reads and writes plain files (JSONL corpora, TOML configs) and
writes outputs atomically. Errors come back as a single "error: ..." line on
stderr with a nonzero exit. Precedence for settings is flag > environment >
config default.

Environment overrides:
  HSNLI_CATALOG          default hypothesis catalog path
  HSNLI_BACKEND_ROOT     base directory for relative backend paths
  HSNLI_REFERENCE_TABLE  default reference score table for `report`
"""

import argparse
import os
import sys
from pathlib import Path

from . import corpus, evaluation, grid as grid_mod, references
from .engine import DecisionPolicy, load_backend, load_catalog, classify_main
from .errors import ConfigError, DataFormatError, HsnliError
from .fileio import read_jsonl, write_json_atomic, write_jsonl, write_text_atomic
from .normalize import normalize
from .strategies import StrategyConfig, classify_with_strategies, load_strategy_config


def _catalog_path(flag_value: str | None) -> Path:
    if flag_value:
        return Path(flag_value)
    env = os.environ.get("HSNLI_CATALOG")
    if env:
        return Path(env)
    return references.default_catalog_path()


def _backend_path(value: str) -> str:
    path = Path(value)
    if not path.is_absolute() and not path.exists():
        root = os.environ.get("HSNLI_BACKEND_ROOT")
        if root and (Path(root) / path).exists():
            return str(Path(root) / path)
    return value


def cmd_preprocess(args: argparse.Namespace) -> int:
    posts = corpus.load_posts(args.infile)
    for post in posts:
        post.text = normalize(post.text)
    count = write_jsonl(args.out, (p.to_record() for p in posts))
    print(f"[preprocess] wrote {count} records to {args.out}")
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    posts = corpus.load_posts(args.infile)
    if args.split:
        posts = [p for p in posts if p.split == args.split]
    meta: dict = {"seed": args.seed, "pool_size": len(posts)}
    if args.target_hate_ratio is not None:
        kept = corpus.downsample_non_hate(
            posts, args.target_hate_ratio, args.seed, strict=args.strict
        )
        stats = corpus.compute_stats(kept)
        meta.update(
            target_hate_ratio=args.target_hate_ratio,
            kept=len(kept),
            hate_fraction=stats.hate_fraction,
        )
        out_posts = kept
        print(
            f"[sample] downsampled {len(posts)} -> {len(kept)} records, "
            f"hate fraction {stats.hate_fraction:.4f}"
        )
    else:
        out_posts, counts = corpus.sample_n_shot(
            posts, corpus.SamplingSpec(n=args.n, seed=args.seed, stratified=args.stratified)
        )
        meta.update(n=args.n, stratified=args.stratified, class_counts=counts)
        print(f"[sample] drew {len(out_posts)} records, class counts {counts}")
    write_jsonl(args.out, (p.to_record() for p in out_posts))
    write_json_atomic(Path(str(args.out) + ".meta.json"), meta)
    return 0


def cmd_convert_nli(args: argparse.Namespace) -> int:
    posts = corpus.load_posts(args.infile)
    if args.hypothesis:
        hypothesis = args.hypothesis
        language = args.hypothesis_language
    else:
        catalog = load_catalog(_catalog_path(args.catalog))
        language = args.hypothesis_language or catalog.default_language
        hypothesis = catalog.main.get(language)
        if hypothesis is None:
            raise ConfigError(f"catalog has no main hypothesis for language '{language}'")
    examples = corpus.hs_to_nli(posts, hypothesis, language or "en")
    count = write_jsonl(args.out, (e.to_record() for e in examples))
    print(f"[convert-nli] wrote {count} NLI pairs to {args.out}")
    return 0


def cmd_shuffle_xnli(args: argparse.Namespace) -> int:
    parallel = corpus.load_parallel(args.infile)
    languages = args.languages.split(",") if args.languages else None
    shuffled = corpus.shuffle_xnli_languages(parallel, args.seed, languages)
    count = write_jsonl(args.out, (e.to_record() for e in shuffled))
    print(f"[shuffle-xnli] wrote {count} examples to {args.out}")
    return 0


def cmd_classify(args: argparse.Namespace) -> int:
    backend = load_backend(_backend_path(args.backend))
    catalog = load_catalog(_catalog_path(args.catalog))
    policy = DecisionPolicy(rule=args.policy, threshold=args.threshold)
    posts = corpus.load_posts(args.infile)
    records = []
    if args.strategies:
        config = load_strategy_config(args.strategies)
        aux = load_backend(_backend_path(args.aux_backend)) if args.aux_backend else backend
        for post in posts:
            trace = classify_with_strategies(
                post.text,
                post.id,
                post.language,
                backend,
                aux,
                catalog,
                policy,
                config,
                args.model_kind,
            )
            records.append(trace.to_record())
    else:
        for post in posts:
            label, scores = classify_main(
                backend, catalog, policy, post.text, post.language, args.model_kind
            )
            records.append(
                {
                    "id": post.id,
                    "language": post.language,
                    "label": label,
                    "scores": scores.as_list(),
                }
            )
    count = write_jsonl(args.out, records)
    print(f"[classify] wrote {count} predictions to {args.out}")
    return 0


def _prediction_label(record: dict, where: str) -> str:
    label = record.get("final_label", record.get("label"))
    if label not in corpus.HS_LABELS:
        raise DataFormatError(f"{where}: no usable prediction label")
    return label


def cmd_evaluate(args: argparse.Namespace) -> int:
    gold_posts = corpus.load_posts(args.gold)
    if args.split:
        gold_posts = [p for p in gold_posts if p.split == args.split]
    gold_by_id = {p.id: p.label for p in gold_posts}
    predictions = []
    gold = []
    for lineno, rec in enumerate(read_jsonl(args.predictions), start=1):
        where = f"{args.predictions}:{lineno}"
        pid = rec.get("id")
        if pid not in gold_by_id:
            raise DataFormatError(f"{where}: prediction id '{pid}' not in gold set")
        predictions.append(_prediction_label(rec, where))
        gold.append(gold_by_id[pid])
    run = evaluation.score_run(predictions, gold)
    if args.item_bootstrap:
        low, high = evaluation.bootstrap_ci_items(
            predictions, gold, resamples=args.resamples, alpha=args.alpha, seed=args.seed
        )
    else:
        low, high = run.macro_f1, run.macro_f1
    report = evaluation.MetricReport(
        macro_f1=run.macro_f1,
        per_class_f1=run.per_class_f1,
        ci_low=low,
        ci_high=high,
        runs=1,
        run_scores=[run.macro_f1],
        missing_classes=run.missing_classes,
    )
    if args.out:
        write_json_atomic(args.out, report.to_record())
    flags = f" missing={report.missing_classes}" if report.missing_classes else ""
    print(
        f"[evaluate] macro_f1={report.macro_f1:.4f} "
        f"ci=[{report.ci_low:.4f}, {report.ci_high:.4f}] n={len(gold)}{flags}"
    )
    return 0


def cmd_grid(args: argparse.Namespace) -> int:
    config = grid_mod.load_grid_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.runs is not None:
        config.runs = args.runs
    results = grid_mod.run_grid(
        config, args.out, jobs=args.jobs, progress=lambda msg: print(msg)
    )
    failed = [r for r in results if r.status != "ok"]
    print(f"[grid] {len(results) - len(failed)}/{len(results)} cells ok, outputs in {args.out}")
    return 1 if failed else 0


def _format_diff_csv(table: evaluation.DifferenceTable) -> str:
    header = ["variant"] + [f"{code}/N={n}" for code, n in table.columns] + ["avg_diff"]
    lines = [",".join(header)]
    for row in table.rows:
        cells = [row]
        for col in table.columns:
            diff = table.diffs.get((row, col))
            cells.append("" if diff is None else f"{diff:+.2f}")
        avg = table.row_averages.get(row)
        cells.append("" if avg is None else f"{avg:+.3f}")
        lines.append(",".join(cells))
    avg_cells = ["avg_diff"]
    for col in table.columns:
        avg = table.column_averages.get(col)
        avg_cells.append("" if avg is None else f"{avg:+.3f}")
    avg_cells.append("")
    lines.append(",".join(avg_cells))
    return "\n".join(lines) + "\n"


def cmd_report(args: argparse.Namespace) -> int:
    records = grid_mod.load_cell_records(args.cells)
    ours = grid_mod.results_to_cell_scores(records)
    ref_path = args.reference or os.environ.get("HSNLI_REFERENCE_TABLE")
    reference = references.load_reference_table(ref_path)
    table = evaluation.compare_to_reference(ours, reference)
    for warning in table.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    write_text_atomic(args.out, _format_diff_csv(table))
    shown = sum(1 for _ in table.diffs)
    print(f"[report] {shown} overlapping cells, diff table written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsnli",
        description="Entailment-based multilingual hate speech classification pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="normalize URLs and @-handles in a corpus")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("sample", help="N-shot sampling or class downsampling")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--n", type=int, help="N-shot sample size")
    group.add_argument(
        "--target-hate-ratio",
        type=float,
        help="downsample non-hate records until this hate fraction is reached",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="", help="restrict the pool to one split first")
    p.add_argument("--stratified", action="store_true")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("convert-nli", help="recast a binary corpus as NLI pairs")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--catalog", default=None)
    p.add_argument("--hypothesis", default=None, help="explicit hypothesis text")
    p.add_argument("--hypothesis-language", default=None)
    p.set_defaults(func=cmd_convert_nli)

    p = sub.add_parser("shuffle-xnli", help="draw premise/hypothesis languages per example")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--languages", default=None, help="comma-separated override")
    p.set_defaults(func=cmd_shuffle_xnli)

    p = sub.add_parser("classify", help="classify a corpus with one backend")
    p.add_argument("--backend", required=True, help="mock table or exported model directory")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--catalog", default=None)
    p.add_argument("--strategies", default=None, help="strategy config enables the filter pass")
    p.add_argument("--aux-backend", default=None, help="NLI-only backend for auxiliary slots")
    p.add_argument("--model-kind", choices=["monolingual", "multilingual"], default="multilingual")
    p.add_argument("--policy", choices=["argmax", "renormalized_threshold"], default="argmax")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="score predictions against gold labels")
    p.add_argument("--predictions", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--split", default="", help="restrict gold to one split")
    p.add_argument("--resamples", type=int, default=10000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--item-bootstrap", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grid", help="run the evaluation grid from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--runs", type=int, default=None)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("report", help="diff grid results against the reference scores")
    p.add_argument("--cells", required=True, help="cells.jsonl from a grid run")
    p.add_argument("--out", required=True)
    p.add_argument("--reference", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HsnliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
