"""Deterministic CSV/JSON writers that stamp every file with the config digest."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

DIGEST_PREFIX = "# config_digest: "


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (list, dict)):
        return _clean(obj.item())
    return obj


def write_json(path, payload: dict, digest: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"config_digest": digest, **_clean(payload)}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def write_csv(path, rows: list[dict], digest: str, columns: list[str] | None = None) -> Path:
    """CSV with one ``# config_digest:`` comment line followed by one header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = columns or (list(rows[0]) if rows else [])
    with path.open("w", newline="") as fh:
        fh.write(DIGEST_PREFIX + digest + "\n")
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in columns})
    return path


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def embedded_digest(path) -> str | None:
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text()).get("config_digest")
    with path.open() as fh:
        first = fh.readline().rstrip("\n")
    return first[len(DIGEST_PREFIX):] if first.startswith(DIGEST_PREFIX) else None


def read_csv(path) -> list[dict]:
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
