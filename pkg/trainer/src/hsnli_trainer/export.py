"""Export to the portable backend directory format and verify the round trip.

The format the classification engine consumes: a directory with a
TorchScript module (model.pt), a tokenizer definition (tokenizer.json), and
a metadata document (backend.json) naming the files, the output index of
each label, and the maximum sequence length. Verification reloads both
files fresh and compares probabilities against the native model on a fixed
probe set; a mismatch beyond PROBE_TOLERANCE fails the export.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import torch
from tokenizers import Tokenizer

from .data import LABELS
from .errors import ExportError
from .model import TOKENIZER_FILE

MODEL_FILE = "model.pt"
METADATA_FILE = "backend.json"

MAX_SEQUENCE_LENGTH = 128
PROBE_TOLERANCE = 1e-4
SUM_TOLERANCE = 1e-6

# 16 fixed probe pairs covering scripts, handles, URLs, and truncation.
PROBE_PAIRS = [
    ("You people are the problem", "This text is hate speech."),
    ("I love this community", "This text is hate speech."),
    ("they should all disappear", "This text is hate speech."),
    ("what a beautiful morning", "This text is about religion."),
    ("@user said something vile and I disagree", "This text opposes a statement."),
    ("https look at this nonsense", "This text refers to another statement."),
    ("nobody likes your kind here", "This text is about sexual orientation."),
    ("we reclaim that word with pride", "The author of this text is referring to themselves."),
    ("este texto es una prueba", "Este texto es discurso de odio."),
    ("ils ne comptent pas", "This text is hate speech."),
    ("das ist nur ein test", "This text is about gender."),
    ("هذا نص تجريبي", "This text is hate speech."),
    ("यह एक परीक्षण है", "This text is about national origin."),
    ("short", "This text is hate speech."),
    ("", "This text is hate speech."),
    ("long input " * 200, "This text is hate speech."),
]


@dataclass
class ExportReport:
    directory: Path
    probe_max_diff: float


def _probe_scores(model, tokenizer, max_len: int) -> list[list[float]]:
    tokenizer.enable_truncation(max_length=max_len)
    model.eval()
    rows = []
    with torch.no_grad():
        for premise, hypothesis in PROBE_PAIRS:
            encoding = tokenizer.encode(premise, hypothesis)
            ids = torch.tensor([encoding.ids], dtype=torch.long)
            mask = torch.tensor([encoding.attention_mask], dtype=torch.long)
            logits = model(ids, mask)
            rows.append(torch.softmax(logits[0].float(), dim=-1).tolist())
    return rows


def verify_export(
    model,
    tokenizer: Tokenizer,
    directory: str | Path,
    max_len: int = MAX_SEQUENCE_LENGTH,
) -> float:
    """Score the probe set with the native model and tokenizer, then with a
    fresh reload of the exported files; return the maximum absolute
    probability difference."""
    directory = Path(directory)
    model_path = directory / MODEL_FILE
    tokenizer_path = directory / TOKENIZER_FILE
    if not model_path.is_file():
        raise ExportError(f"{directory}: missing {MODEL_FILE}")
    if not tokenizer_path.is_file():
        raise ExportError(f"{directory}: missing {TOKENIZER_FILE}")
    exported_model = torch.jit.load(str(model_path), map_location="cpu")
    exported_model.eval()
    exported_tokenizer = Tokenizer.from_file(str(tokenizer_path))

    native = _probe_scores(model, tokenizer, max_len)
    exported = _probe_scores(exported_model, exported_tokenizer, max_len)

    max_diff = 0.0
    for row_native, row_exported in zip(native, exported):
        for probs in (row_native, row_exported):
            total = sum(probs)
            if abs(total - 1.0) > SUM_TOLERANCE:
                raise ExportError(f"probe probabilities sum to {total}, not 1")
        for a, b in zip(row_native, row_exported):
            max_diff = max(max_diff, abs(a - b))
    if max_diff > PROBE_TOLERANCE:
        raise ExportError(
            f"export verification failed: probe mismatch {max_diff:.3e} "
            f"exceeds {PROBE_TOLERANCE:.0e}"
        )
    return max_diff


def export_model(
    model,
    tokenizer: Tokenizer,
    out_dir: str | Path,
    identity: str = "trained",
    max_len: int = MAX_SEQUENCE_LENGTH,
) -> ExportReport:
    """Write the backend directory (TorchScript module, tokenizer, metadata)
    and verify it against the native model before reporting success."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.eval()
    try:
        scripted = torch.jit.script(model)
    except Exception as exc:
        raise ExportError(f"model is not scriptable: {exc}") from exc
    scripted.save(str(out_dir / MODEL_FILE))
    tokenizer.save(str(out_dir / TOKENIZER_FILE))
    metadata = {
        "model_file": MODEL_FILE,
        "tokenizer_file": TOKENIZER_FILE,
        "labels": {name: i for i, name in enumerate(LABELS)},
        "max_sequence_length": max_len,
        "identity": identity,
    }
    (out_dir / METADATA_FILE).write_text(
        json.dumps(metadata, indent=2) + "\n", encoding="utf-8"
    )
    max_diff = verify_export(model, tokenizer, out_dir, max_len)
    return ExportReport(directory=out_dir, probe_max_diff=max_diff)
