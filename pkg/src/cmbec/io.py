"""CSV emission, run manifests and the binary accumulator checkpoint.

Checkpoint layout (all little-endian)::

    offset  size  field
    0       8     magic  b"CMBECKP1"
    8       4     uint32 format version (1)
    12      4     uint32 M, number of lattice cells
    16      4     uint32 S, number of snapshots
    20      4     reserved, zero
    24      64    ASCII hex SHA-256 of the resumable part of the run config
    88      ...   S records of float64 values

Each record holds, in order: t, count, mean_re (2M), m2_re (2M x 2M,
row major), sum_im (2M), sum_im_sq (2M), Re and Im of sum_conj (M each),
sum_conj_sq (2M), max_conj_dev, max_abs_n.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .positivep.ensemble import EnsembleAccumulator

MAGIC = b"CMBECKP1"
VERSION = 1
_HEADER = struct.Struct("<8sIIII64s")


class CheckpointError(ValueError):
    pass


def config_hash(obj) -> str:
    """SHA-256 of the canonical JSON form of ``obj``."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(text.encode()).hexdigest()


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"not serializable: {type(v).__name__}")


def record_length(m: int) -> int:
    k = 2 * m
    return 2 + k + k * k + k + k + 2 * m + k + 2


def _pack(acc: EnsembleAccumulator) -> np.ndarray:
    parts = [
        [acc.t, float(acc.count)],
        acc.mean_re, acc.m2_re.ravel(), acc.sum_im, acc.sum_im_sq,
        acc.sum_conj.real, acc.sum_conj.imag, acc.sum_conj_sq,
        [acc.max_conj_dev, acc.max_abs_n],
    ]
    return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])


def _unpack(rec: np.ndarray, m: int) -> EnsembleAccumulator:
    k = 2 * m
    pos = 2

    def take(n):
        nonlocal pos
        out = rec[pos:pos + n]
        pos += n
        return out.copy()

    acc = EnsembleAccumulator(float(rec[0]), m, int(rec[1]))
    acc.mean_re = take(k)
    acc.m2_re = take(k * k).reshape(k, k)
    acc.sum_im = take(k)
    acc.sum_im_sq = take(k)
    acc.sum_conj = take(m) + 1j * take(m)
    acc.sum_conj_sq = take(k)
    acc.max_conj_dev, acc.max_abs_n = (float(v) for v in take(2))
    return acc


def write_checkpoint(path, snapshots, digest: str) -> None:
    """Write atomically (temporary file, then rename)."""
    m = snapshots[0].m_cells
    if len(digest) != 64:
        raise ValueError("digest must be a hex SHA-256")
    header = _HEADER.pack(MAGIC, VERSION, m, len(snapshots), 0, digest.encode("ascii"))
    body = np.concatenate([_pack(a) for a in snapshots]).astype("<f8")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(body.tobytes())
    os.replace(tmp, path)


def read_checkpoint(path, expect_digest: str | None = None) -> tuple[list[EnsembleAccumulator], str]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CheckpointError("truncated checkpoint header")
    magic, version, m, s, _, digest = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    digest = digest.decode("ascii")
    if expect_digest is not None and digest != expect_digest:
        raise CheckpointError("checkpoint belongs to a different configuration")
    n = record_length(m)
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if body.size != n * s:
        raise CheckpointError("checkpoint body has the wrong length")
    return [_unpack(body[i * n:(i + 1) * n], m) for i in range(s)], digest


def write_csv(path, header, rows) -> None:
    """UTF-8, header row, '.' decimal separator, full float precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_manifest(path, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
