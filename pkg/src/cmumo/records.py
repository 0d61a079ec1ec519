"""Line-delimited JSON artifacts with a provenance header.

Every file written here starts with ``{"provenance": {...}}`` on its first
line (JSONL) or as its first key (JSON). Readers skip that line. Ingestion
problems are reported with the file and 1-based line number.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

from . import __version__
from .molgraph import CanonicalSmiles, MolGraphError, canonicalize

TOOL = "cmumo"


class IngestionError(ValueError):
    """A malformed input record."""

    def __init__(self, path, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def provenance(command: str, config_sha256: str, seeds: Mapping[str, int], **extra) -> dict:
    """Deterministic header: no timestamps, hosts or absolute paths."""
    out = {"tool": TOOL, "version": __version__, "command": command,
           "config_sha256": config_sha256, "seeds": dict(sorted(seeds.items()))}
    out.update(extra)
    return out


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_jsonl(path, header: Mapping, records: Iterable[Mapping]) -> int:
    """Write the header line then one line per record, in iteration order."""
    lines = [json.dumps({"provenance": dict(header)}, ensure_ascii=False)]
    lines.extend(json.dumps(r, ensure_ascii=False) for r in records)
    _atomic_write(Path(path), "\n".join(lines) + "\n")
    return len(lines) - 1


def write_json(path, header: Mapping, body: Mapping) -> None:
    doc = {"provenance": dict(header)}
    doc.update(body)
    _atomic_write(Path(path), json.dumps(doc, indent=2, ensure_ascii=False) + "\n")


def write_text(path, text: str) -> None:
    _atomic_write(Path(path), text)


def read_jsonl(path) -> Iterator[tuple[int, dict]]:
    """``(line number, record)`` for each data line; the header is skipped."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(path, lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise IngestionError(path, lineno, "record is not a JSON object")
            if lineno == 1 and set(rec) == {"provenance"}:
                continue
            yield lineno, rec


def read_header(path) -> dict | None:
    with Path(path).open(encoding="utf-8") as fh:
        first = fh.readline().strip()
    try:
        rec = json.loads(first)
    except json.JSONDecodeError:
        return None
    return rec.get("provenance") if isinstance(rec, dict) else None


# --- field checks -----------------------------------------------------------

def require(rec: Mapping, field: str, path, line: int):
    if field not in rec:
        raise IngestionError(path, line, f"missing field {field!r}")
    return rec[field]


def score_map(value, field: str, path, line: int) -> dict[str, float]:
    if not isinstance(value, Mapping):
        raise IngestionError(path, line, f"{field} must be an object of property scores")
    out = {}
    for k, v in value.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise IngestionError(path, line, f"{field}.{k} is not a number: {v!r}")
        if not math.isfinite(v):
            raise IngestionError(path, line, f"{field}.{k} is not finite")
        out[str(k)] = float(v)
    return out


def smiles_field(rec: Mapping, field: str, path, line: int) -> str:
    value = require(rec, field, path, line)
    if not isinstance(value, str) or not value.strip():
        raise IngestionError(path, line, f"{field} must be a non-empty string")
    return value.strip()


def canonical_field(rec: Mapping, field: str, path, line: int,
                    cache: dict | None = None) -> CanonicalSmiles:
    text = smiles_field(rec, field, path, line)
    if cache is not None and text in cache:
        return cache[text]
    try:
        can = canonicalize(text)
    except MolGraphError as exc:
        raise IngestionError(path, line, f"{field}: {exc}") from None
    if cache is not None:
        cache[text] = can
    return can
