"""On-disk formats: shot records, calibration documents, results with manifests.

Shots
    ``.json``: ``{"n": 2, "counts": {"00": 3, "11": 1}}``, expanded
    lexicographically.  Anything else is read as text, one bitstring per line,
    ``#`` comments and blank lines ignored.
Calibration
    ``{"qubits": [{"r1_given_0": a, "r0_given_1": b}, ...]}``; list order is
    the qubit index.
Results
    ``{"manifest": {...}, "payload": {...}}``, optionally mirrored as a CSV
    table with columns ``method,subgroup_or_resample_index,value``.

Bitstrings are qubit-0-leftmost everywhere.  Writes are atomic.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .core import ShotRecord, SparseDistribution, ValidationError
from .noise_model import CalibrationWarning, ProductChannel, calibration_document, load_calibration
from .structural import MixtureModel

TABLE_COLUMNS = ("method", "subgroup_or_resample_index", "value")


@dataclass
class RunManifest:
    command: str
    config: dict[str, Any]
    seeds: dict[str, int]
    input_digests: dict[str, str] = field(default_factory=dict)
    artifact_version: str = ""
    duration_s: float = 0.0
    warnings: list[str] = field(default_factory=list)

    def to_doc(self) -> dict:
        return asdict(self)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_json(path) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc


def _is_structured(path) -> bool:
    return Path(path).suffix.lower() == ".json"


def read_shots(path) -> ShotRecord:
    if _is_structured(path):
        doc = _read_json(path)
        if not isinstance(doc, dict) or "n" not in doc or not isinstance(doc.get("counts"), dict):
            raise ValidationError(f"{path}: counts document needs fields 'n' and 'counts'")
        n = int(doc["n"])
        if not doc["counts"]:
            raise ValidationError(f"{path}: no shots")
        return ShotRecord.from_counts(doc["counts"], n)
    shots = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.strip("01"):
                raise ValidationError(f"{path}:{lineno}: illegal characters in {line!r}")
            if shots and len(line) != len(shots[0]):
                raise ValidationError(
                    f"{path}:{lineno}: ragged shot length {len(line)}, expected {len(shots[0])}"
                )
            shots.append(line)
    if not shots:
        raise ValidationError(f"{path}: no shots")
    return ShotRecord.from_strings(shots)


def write_shots(path, record: ShotRecord) -> None:
    if _is_structured(path):
        counts = record.counts()
        doc = {"n": record.n, "counts": {s: counts[s] for s in sorted(counts)}}
        atomic_write_text(path, json.dumps(doc, indent=1) + "\n")
    else:
        atomic_write_text(path, "\n".join(record.strings()) + "\n")


def read_calibration(path) -> ProductChannel:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CalibrationWarning)
        return load_calibration(_read_json(path))


def write_calibration(path, ch: ProductChannel) -> None:
    atomic_write_text(path, json.dumps(calibration_document(ch), indent=1) + "\n")


def distribution_to_doc(dist: SparseDistribution) -> dict:
    return {
        "n": dist.n,
        "normalization_mode": dist.mode,
        "weights": {s: dist.weights[s] for s in sorted(dist.weights)},
    }


def distribution_from_doc(doc: dict) -> SparseDistribution:
    try:
        return SparseDistribution(int(doc["n"]), dict(doc["weights"]), doc.get("normalization_mode", "probability"))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed distribution document: {exc}") from exc


def read_distribution(path) -> SparseDistribution:
    doc = _read_json(path)
    if isinstance(doc, dict) and "payload" in doc:
        doc = doc["payload"].get("distribution", doc["payload"])
    return distribution_from_doc(doc)


def mixture_to_doc(model: MixtureModel) -> dict:
    return {"n": model.n, "components": [{"xi": xi, "p": p} for xi, p in model.components]}


def mixture_from_doc(doc: dict) -> MixtureModel:
    try:
        return MixtureModel(int(doc["n"]), tuple((c["xi"], c["p"]) for c in doc["components"]))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed mixture document: {exc}") from exc


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def table_path(path) -> Path:
    return Path(path).with_suffix(".csv")


def write_table(path, rows: Iterable[tuple[str, int, float | None]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    for method, index, value in rows:
        writer.writerow([method, index, "" if value is None else repr(float(value))])
    atomic_write_text(path, buf.getvalue())


def read_table(path) -> list[tuple[str, int, float | None]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TABLE_COLUMNS:
            raise ValidationError(f"{path}: unexpected header {header}")
        return [(m, int(i), float(v) if v else None) for m, i, v in reader]


def write_results(path, payload: dict, manifest: RunManifest, table=None) -> None:
    """Write ``{"manifest", "payload"}``; with ``table`` rows also a CSV next to it."""
    doc = {"manifest": manifest.to_doc(), "payload": payload}
    atomic_write_text(path, json.dumps(_jsonable(doc), indent=1) + "\n")
    if table is not None:
        write_table(table_path(path), table)


def read_results(path) -> dict:
    doc = _read_json(path)
    if not isinstance(doc, dict) or "manifest" not in doc or "payload" not in doc:
        raise ValidationError(f"{path}: not a results document")
    return doc


def check_shots_match(record: ShotRecord, ch: ProductChannel) -> None:
    if record.n != ch.n:
        raise ValidationError(f"shots have {record.n} bits but calibration lists {ch.n} qubits")

