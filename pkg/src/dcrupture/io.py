"""File output: CSV tables with JSON sidecars, data manifests and checkpoints.

Floats are written with 17 significant digits so every CSV parses back to
the identical binary value.  Every emitted file gets a sidecar
``<name>.json`` holding the config hash, the units and a SHA-256 checksum,
which :func:`verify_manifest` cross-checks.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .forward import StageHistory

FLOAT_FMT = "%.17g"
UNITS = {
    "coordinates": "km",
    "time": "s",
    "displacement": "m",
    "velocity": "m/s",
    "slip": "m",
    "slip_rate": "m/s",
    "stress": "MPa",
}

CHECKPOINT_MAGIC = b"DCRSTAGE"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<8sIIQQQQ")
HEADER_SIZE = 64


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fmt(x: float) -> str:
    return FLOAT_FMT % x


def write_table(path: str | Path, header: list[str], rows, meta: dict, config_hash: str) -> Path:
    """Write a CSV table and its JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    write_sidecar(path, meta, config_hash)
    return path


def write_sidecar(path: Path, meta: dict, config_hash: str) -> Path:
    side = path.with_suffix(path.suffix + ".json")
    body = {"file": path.name, "config_hash": config_hash, "units": UNITS, "sha256": sha256_file(path)}
    body.update(meta)
    side.write_text(json.dumps(body, indent=2, sort_keys=True, default=_json_default))
    return side


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def read_table(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def write_seismograms(out: str | Path, history: StageHistory, positions: np.ndarray, kind: str, config_hash: str,
                      prefix: str = "receiver") -> list[Path]:
    """One CSV per receiver with columns (step, stage, time_s, value)."""
    out = Path(out)
    n = history.measurements.shape[0]
    steps, stages = np.divmod(np.arange(n), 4)
    paths = []
    for k, (x, y) in enumerate(positions):
        rows = zip(steps.tolist(), stages.tolist(), history.stamps.tolist(), history.measurements[:, k].tolist())
        meta = {"kind": kind, "receiver": k, "position_km": [float(x), float(y)]}
        paths.append(write_table(out / f"{prefix}_{k:04d}.csv", ["step", "stage", "time_s", "value"], rows, meta, config_hash))
    return paths


def write_data_set(out: str | Path, data: np.ndarray, stamps: np.ndarray, positions: np.ndarray, kind: str,
                   config_hash: str, source_hash: str | None = None) -> Path:
    """Stage-aligned receiver data (one column per receiver) plus a manifest."""
    out = Path(out)
    n = data.shape[0]
    steps, stages = np.divmod(np.arange(n), 4)
    header = ["step", "stage", "time_s"] + [f"r{k}" for k in range(data.shape[1])]
    rows = ([int(s), int(c), float(t)] + [float(v) for v in row] for s, c, t, row in zip(steps, stages, stamps, data))
    meta = {"kind": kind, "n_receivers": int(data.shape[1]), "n_stages": int(n), "positions_km": positions}
    table = write_table(out / "data.csv", header, rows, meta, config_hash)
    manifest = {
        "config_hash": config_hash,
        "source_config_hash": source_hash or config_hash,
        "kind": kind,
        "n_receivers": int(data.shape[1]),
        "n_stages": int(n),
        "files": {table.name: sha256_file(table)},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def read_data_set(manifest_path: str | Path, expected_hash: str | None = None) -> tuple[np.ndarray, dict]:
    """Load data referenced by a manifest after checking checksums and hash."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    if expected_hash is not None and manifest["config_hash"] != expected_hash:
        raise ValueError(
            f"data manifest was made for config {manifest['config_hash']}, current config is {expected_hash}"
        )
    for name, digest in manifest["files"].items():
        if sha256_file(manifest_path.parent / name) != digest:
            raise ValueError(f"checksum mismatch for {name}")
    _, table = read_table(manifest_path.parent / "data.csv")
    return table[:, 3:], manifest


def verify_manifest(directory: str | Path) -> list[str]:
    """Problems found among sidecars and manifests in ``directory`` (empty if consistent)."""
    directory = Path(directory)
    problems = []
    hashes = set()
    for side in sorted(directory.rglob("*.json")):
        try:
            body = json.loads(side.read_text())
        except json.JSONDecodeError as exc:
            problems.append(f"{side}: unreadable ({exc})")
            continue
        if side.name == "manifest.json":
            hashes.add(body.get("config_hash"))
            for name, digest in body.get("files", {}).items():
                target = side.parent / name
                if not target.exists():
                    problems.append(f"{side}: missing {name}")
                elif sha256_file(target) != digest:
                    problems.append(f"{side}: checksum mismatch for {name}")
            continue
        if "config_hash" not in body or "file" not in body:
            continue
        hashes.add(body["config_hash"])
        target = side.parent / body["file"]
        if not target.exists():
            problems.append(f"{side}: missing {body['file']}")
        elif body.get("sha256") and sha256_file(target) != body["sha256"]:
            problems.append(f"{side}: checksum mismatch for {body['file']}")
    if len(hashes) > 1:
        problems.append(f"inconsistent config hashes: {sorted(h for h in hashes if h)}")
    return problems


def write_checkpoint(path: str | Path, history: StageHistory) -> Path:
    """Little-endian float64 dump of a stage history behind a 64-byte header."""
    n_stage = len(history.stamps)
    n_fault = history.v_star.shape[1]
    n_rec = 0 if history.measurements is None else history.measurements.shape[1]
    flags = (1 if history.measurements is not None else 0) | (2 if history.residuals is not None else 0)
    head = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, flags, history.n_steps, n_stage, n_fault, n_rec)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(head.ljust(HEADER_SIZE, b"\0"))
        for arr in (history.step_sizes, history.stamps, history.v_star, history.psi, history.measurements, history.residuals):
            if arr is not None:
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def read_checkpoint(path: str | Path) -> StageHistory:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise ValueError("checkpoint too short")
    magic, version, flags, n_steps, n_stage, n_fault, n_rec = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError("not a stage-history checkpoint")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    if n_stage != 4 * n_steps:
        raise ValueError("corrupt checkpoint: stage count is not 4 x step count")
    body = np.frombuffer(raw, dtype="<f8", offset=HEADER_SIZE)
    sizes = [n_steps, n_stage, n_stage * n_fault, n_stage * n_fault]
    if flags & 1:
        sizes.append(n_stage * n_rec)
    if flags & 2:
        sizes.append(n_stage * n_rec)
    if len(body) != sum(sizes):
        raise ValueError("corrupt checkpoint: payload size mismatch")
    parts = np.split(body.astype(float), np.cumsum(sizes)[:-1])
    hist = StageHistory(parts[0], parts[1], parts[2].reshape(n_stage, n_fault), parts[3].reshape(n_stage, n_fault))
    k = 4
    if flags & 1:
        hist.measurements = parts[k].reshape(n_stage, n_rec)
        k += 1
    if flags & 2:
        hist.residuals = parts[k].reshape(n_stage, n_rec)
    return hist
