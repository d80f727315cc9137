"""Byte-stable file emission: CSV, JSON, run manifests."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__


def fmt(v) -> str:
    return format(float(v), ".17g")


def write_csv(path: Path, header: list[str], columns) -> Path:
    """Write columns of equal length; numbers use 17 significant digits."""
    cols = [np.asarray(c) for c in columns]
    n = cols[0].shape[0]
    if any(c.shape[0] != n for c in cols):
        raise ValueError("columns differ in length")
    lines = [",".join(header)]
    for i in range(n):
        lines.append(",".join(str(int(c[i])) if c.dtype.kind in "iub" else fmt(c[i]) for c in cols))
    path = Path(path)
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def _plain(o):
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, np.ndarray):
        return _plain(o.tolist())
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    return o


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(dumps(obj))
    return path


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir: Path, command: str, config_sections: dict, outputs: list[Path],
                   verdicts: dict, duration: float, extra: dict | None = None) -> Path:
    """``manifest.json``: config snapshot, version, digests of every output file.

    ``wall_clock_seconds`` is the only field that varies between identical runs.
    """
    out_dir = Path(out_dir)
    manifest = {
        "artifact": "hbvsde",
        "version": __version__,
        "command": command,
        "config": config_sections,
        "outputs": {Path(p).name: sha256(p) for p in sorted(outputs, key=lambda p: Path(p).name)},
        "verdicts": verdicts,
        "wall_clock_seconds": round(duration, 6),
    }
    if extra:
        manifest.update(extra)
    return write_json(out_dir / "manifest.json", manifest)
