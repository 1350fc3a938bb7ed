"""The phase-plan training loop.

Each phase fine-tunes the weights the previous phase produced. NLI phases
keep the epoch checkpoint with the best validation accuracy; hate speech
phases keep the final epoch unless select_best is set. All randomness
(parameter init, shuffling, dropout, sampling) derives from the plan seed,
and training runs single-threaded, so two runs of the same plan produce
identical training logs.
"""

import copy
import json
import random
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import torch

from .data import (
    TrainingPair,
    encode_batch,
    posts_to_nli_pairs,
    posts_to_single_pairs,
    read_nli_examples,
    read_posts,
)
from .errors import DataError, TrainingError
from .export import export_model
from .model import load_checkpoint
from .plan import Phase, PhasePlan


@dataclass
class PhaseOutcome:
    kind: str
    epochs_run: int
    selected_epoch: int | None
    skipped: bool = False


@dataclass
class PlanResult:
    export_dir: Path
    log_path: Path
    probe_max_diff: float
    outcomes: list[PhaseOutcome] = field(default_factory=list)


def _phase_seed(plan_seed: int, index: int, kind: str) -> int:
    return zlib.crc32(f"{plan_seed}|{index}|{kind}".encode("utf-8"))


def _batches(count: int, batch_size: int, rng: random.Random) -> list[list[int]]:
    indices = list(range(count))
    rng.shuffle(indices)
    return [indices[i : i + batch_size] for i in range(0, count, batch_size)]


def _evaluate_accuracy(
    model, tokenizer, pairs: list[TrainingPair], max_len: int, pad_id: int, batch_size: int
) -> float:
    model.eval()
    correct = 0
    with torch.no_grad():
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[start : start + batch_size]
            ids, mask, labels = encode_batch(tokenizer, chunk, max_len, pad_id)
            predicted = model(ids, mask).argmax(dim=-1)
            correct += int((predicted == labels).sum().item())
    return correct / len(pairs)


def _load_phase_pairs(
    phase: Phase, hypothesis: str
) -> tuple[list[TrainingPair], list[TrainingPair]]:
    """Training and validation pairs for a phase, in the phase's formulation."""
    if phase.kind == "nli":
        train = read_nli_examples(phase.train)
        val = read_nli_examples(phase.validation) if phase.validation else []
        return train, val

    posts = read_posts(phase.dataset)
    train_posts = [p for p in posts if p.split == "train"]
    val_posts = [p for p in posts if p.split == "validation"]
    if phase.validation:
        val_posts = read_posts(phase.validation)
    if phase.kind == "tl_hs":
        n = phase.n or 0
        if n > len(train_posts):
            raise DataError(
                f"{phase.dataset}: cannot sample {n} posts from a train split of "
                f"{len(train_posts)}"
            )
        train_posts = random.Random(phase.seed).sample(train_posts, n)
    if phase.as_nli:
        return (
            posts_to_nli_pairs(train_posts, hypothesis),
            posts_to_nli_pairs(val_posts, hypothesis),
        )
    return posts_to_single_pairs(train_posts), posts_to_single_pairs(val_posts)


def run_phase(
    model,
    tokenizer,
    pad_id: int,
    phase: Phase,
    phase_index: int,
    plan: PhasePlan,
    log: list[dict[str, Any]],
    say: Callable[[str], None],
) -> PhaseOutcome:
    hp = phase.hyperparameters
    seed = _phase_seed(plan.seed, phase_index, phase.kind)
    torch.manual_seed(seed)
    rng = random.Random(seed)

    train_pairs, val_pairs = _load_phase_pairs(phase, plan.hypothesis)
    if phase.kind == "tl_hs" and not train_pairs:
        # N=0 is the zero-shot variant: the phase does not run at all.
        log.append({"phase": phase.kind, "index": phase_index, "event": "skipped", "n": 0})
        say(f"[trainer] phase {phase_index} ({phase.kind}): skipped, n=0")
        return PhaseOutcome(kind=phase.kind, epochs_run=0, selected_epoch=None, skipped=True)
    if not train_pairs:
        raise DataError(f"phase {phase_index} ({phase.kind}): empty training set")

    optimizer = torch.optim.AdamW(model.parameters(), lr=hp.learning_rate)
    select_best = phase.kind == "nli" or phase.select_best
    best_accuracy = -1.0
    best_epoch = -1
    best_state: dict | None = None

    for epoch in range(hp.epochs):
        model.train()
        total_loss = 0.0
        for batch in _batches(len(train_pairs), hp.batch_size, rng):
            ids, mask, labels = encode_batch(
                tokenizer,
                [train_pairs[i] for i in batch],
                hp.max_sequence_length,
                pad_id,
            )
            optimizer.zero_grad()
            logits = model(ids, mask)
            loss = torch.nn.functional.cross_entropy(logits, labels)
            if not torch.isfinite(loss):
                log.append(
                    {
                        "phase": phase.kind,
                        "index": phase_index,
                        "epoch": epoch,
                        "event": "aborted",
                        "reason": "non-finite loss",
                    }
                )
                raise TrainingError(
                    f"phase {phase_index} ({phase.kind}) epoch {epoch}: non-finite loss"
                )
            loss.backward()
            optimizer.step()
            total_loss += float(loss.item()) * len(batch)
        train_loss = total_loss / len(train_pairs)

        val_accuracy = None
        if val_pairs:
            val_accuracy = _evaluate_accuracy(
                model, tokenizer, val_pairs, hp.max_sequence_length, pad_id, hp.batch_size
            )
            if select_best and val_accuracy > best_accuracy:
                best_accuracy = val_accuracy
                best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
        log.append(
            {
                "phase": phase.kind,
                "index": phase_index,
                "epoch": epoch,
                "train_loss": train_loss,
                "val_accuracy": val_accuracy,
                "examples": len(train_pairs),
                "learning_rate": hp.learning_rate,
                "batch_size": hp.batch_size,
            }
        )
        accuracy_note = "" if val_accuracy is None else f" val_acc={val_accuracy:.4f}"
        say(
            f"[trainer] phase {phase_index} ({phase.kind}) epoch {epoch}: "
            f"loss={train_loss:.4f}{accuracy_note}"
        )

    selected = hp.epochs - 1
    if select_best and best_state is not None:
        model.load_state_dict(best_state)
        selected = best_epoch
        log.append(
            {"phase": phase.kind, "index": phase_index, "event": "selected", "epoch": selected}
        )
    return PhaseOutcome(kind=phase.kind, epochs_run=hp.epochs, selected_epoch=selected)


def run_phase_plan(
    plan: PhasePlan,
    out_dir: str | Path,
    progress: Callable[[str], None] | None = None,
) -> PlanResult:
    """Execute every phase of the plan, export the final model, write the log.

    Outputs land in out_dir: model/ (the portable backend directory) and
    training_log.jsonl. The log is written even when training aborts.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    say = progress or (lambda msg: None)
    torch.set_num_threads(1)  # keeps reductions, and therefore logs, reproducible

    model, config, tokenizer = load_checkpoint(plan.base_model)
    log: list[dict[str, Any]] = []
    outcomes = []
    log_path = out_dir / "training_log.jsonl"
    try:
        for index, phase in enumerate(plan.phases):
            outcomes.append(
                run_phase(model, tokenizer, config.pad_id, phase, index, plan, log, say)
            )
    finally:
        _write_log(log_path, log)

    export_dir = out_dir / "model"
    report = export_model(model, tokenizer, export_dir, identity=plan.name)
    log.append({"event": "exported", "probe_max_diff": report.probe_max_diff})
    _write_log(log_path, log)
    say(f"[trainer] exported to {export_dir} (probe max diff {report.probe_max_diff:.2e})")
    return PlanResult(
        export_dir=export_dir,
        log_path=log_path,
        probe_max_diff=report.probe_max_diff,
        outcomes=outcomes,
    )


def _write_log(path: Path, records: list[dict[str, Any]]) -> None:
    text = "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)
    path.write_text(text, encoding="utf-8")
