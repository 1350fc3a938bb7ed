"""Access to packaged reference data: published scores, dataset manifests, and
the default hypothesis catalog. Reference numbers are for reporting only; no
test asserts against them because full-scale results are not reproducible at
desk scale."""

import json
from pathlib import Path

from .corpus import DatasetManifest, load_manifest
from .errors import DataFormatError
from .evaluation import CellKey

_REFERENCES_DIR = Path(__file__).parent / "references"


def default_catalog_path() -> Path:
    return _REFERENCES_DIR / "default_catalog.toml"


def manifest_path(code: str) -> Path:
    return _REFERENCES_DIR / "manifests" / f"{code}.toml"


def load_packaged_manifest(code: str) -> DatasetManifest:
    path = manifest_path(code)
    if not path.is_file():
        raise DataFormatError(f"no packaged manifest for dataset code '{code}'")
    return load_manifest(path)


def packaged_manifest_codes() -> list[str]:
    return sorted(p.stem for p in (_REFERENCES_DIR / "manifests").glob("*.toml"))


def load_reference_table(path: str | Path | None = None) -> dict[CellKey, float]:
    """Flatten the published score table into {(variant, dataset, n): value}."""
    path = Path(path) if path is not None else _REFERENCES_DIR / "table1.json"
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON: {exc.msg}") from exc
    scores = doc.get("scores")
    if not isinstance(scores, dict):
        raise DataFormatError(f"{path}: missing 'scores' table")
    flat: dict[CellKey, float] = {}
    for variant, by_dataset in scores.items():
        for dataset, by_n in by_dataset.items():
            for n_str, value in by_n.items():
                flat[(variant, dataset, int(n_str))] = float(value)
    return flat
