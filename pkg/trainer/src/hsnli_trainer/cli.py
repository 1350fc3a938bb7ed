"""Command-line entry point for the trainer.

Subcommands: init-tiny builds a randomly initialized desk-scale checkpoint
with a corpus-fitted vocabulary; run-plan executes a phase plan TOML and
exports the result; export converts an existing checkpoint directory to the
portable backend format. Errors come back as one "error: ..." line on
stderr with exit code 2.
"""

import argparse
import sys
from pathlib import Path

from .errors import TrainerError
from .export import export_model
from .model import init_tiny_checkpoint, load_checkpoint
from .plan import load_plan
from .training import run_phase_plan


def cmd_init_tiny(args: argparse.Namespace) -> int:
    path = init_tiny_checkpoint(
        corpus_paths=[Path(p) for p in args.corpus],
        out_dir=args.out,
        vocab_size=args.vocab_size,
        hidden_size=args.hidden_size,
        num_layers=args.layers,
        num_heads=args.heads,
        ff_size=args.ff_size,
        max_len=args.max_len,
        dropout=args.dropout,
        seed=args.seed,
    )
    print(f"[init-tiny] wrote checkpoint to {path}")
    return 0


def cmd_run_plan(args: argparse.Namespace) -> int:
    plan = load_plan(args.plan, data_dir=args.data_dir)
    result = run_phase_plan(plan, args.out, progress=print)
    ran = sum(1 for o in result.outcomes if not o.skipped)
    print(
        f"[run-plan] {ran}/{len(result.outcomes)} phases ran, "
        f"model in {result.export_dir}, log in {result.log_path}"
    )
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    model, config, tokenizer = load_checkpoint(args.checkpoint)
    report = export_model(
        model, tokenizer, args.out, identity=args.identity, max_len=config.max_len
    )
    print(
        f"[export] wrote {report.directory} "
        f"(probe max diff {report.probe_max_diff:.2e})"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsnli-trainer",
        description="Fine-tuning phase plans and portable model export.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-tiny", help="create a tiny randomly initialized checkpoint")
    p.add_argument("--corpus", action="append", required=True, help="JSONL corpus, repeatable")
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-size", type=int, default=2000)
    p.add_argument("--hidden-size", type=int, default=32)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--ff-size", type=int, default=64)
    p.add_argument("--max-len", type=int, default=128)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_init_tiny)

    p = sub.add_parser("run-plan", help="run a phase plan TOML and export the model")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--data-dir",
        default=None,
        help="base for relative paths in the plan (default: the plan's directory)",
    )
    p.set_defaults(func=cmd_run_plan)

    p = sub.add_parser("export", help="export a checkpoint to the backend format")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--identity", default="exported")
    p.set_defaults(func=cmd_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
