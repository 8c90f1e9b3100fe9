"""Result files: RFC-4180 CSV tables, JSON summaries and stage stamps.

Every CSV row ends with the ``config_hash`` and ``seed`` columns; floats are
written with ``repr`` so that values round-trip exactly.
"""
from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from .errors import MissingStageError


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def write_csv(path: Path, header, rows, config_hash: str, seed: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(list(header) + ["config_hash", "seed"])
        for row in rows:
            w.writerow([_cell(v) for v in row] + [config_hash, int(seed)])
    os.replace(tmp, path)
    return path


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def write_json(path: Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)
    return path


def read_json(path: Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# stage stamps
# ---------------------------------------------------------------------------

def stamp_path(out: Path, stage: str) -> Path:
    return Path(out) / "stamps" / f"{stage}.json"


def stamp_matches(out: Path, stage: str, provenance: dict) -> bool:
    """True when the stage ran with the same provenance and its outputs exist."""
    p = stamp_path(out, stage)
    if not p.exists():
        return False
    try:
        st = read_json(p)
    except (OSError, ValueError):
        return False
    if st.get("provenance") != _jsonable(provenance):
        return False
    return all((Path(out) / f).exists() for f in st.get("outputs", []))


def write_stamp(out: Path, stage: str, provenance: dict, outputs) -> None:
    rel = sorted(str(Path(o).relative_to(out)) for o in outputs)
    write_json(stamp_path(out, stage), {"provenance": provenance, "outputs": rel})


def require_stage(out: Path, stage: str, provenance: dict, needed_by: str) -> None:
    if not stamp_matches(out, stage, provenance):
        raise MissingStageError(
            f"'{needed_by}' needs the results of '{stage}' for this config and seed; "
            f"run 'zerocurrents {stage}' first")
