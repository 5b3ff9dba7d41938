"""Batches of equal-length real time series and their on-disk format.

The binary layout is fixed: magic bytes ``CMPS``, little-endian u32
format version (currently 1), u32 number of signals, u32 signal length,
little-endian f64 sample spacing dt, then the samples as little-endian
f64 in row-major order.  A JSON sidecar ``<path>.meta.json`` carries
provenance (process spec, seeds, conventions, checkpoint hash) so any
file can be regenerated exactly.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import FormatError

MAGIC = b"CMPS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII d")


@dataclass
class SignalSet:
    """n equal-length signals sampled every ``dt`` seconds, plus metadata."""

    data: np.ndarray  # (n, length) float64
    dt: float
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"data must be 2-D (n, length), got shape {arr.shape}")
        if not (self.dt > 0):
            raise ValueError("dt must be > 0")
        self.data = arr
        self.dt = float(self.dt)

    @property
    def n_signals(self) -> int:
        return self.data.shape[0]

    @property
    def length(self) -> int:
        return self.data.shape[1]

    def times(self) -> np.ndarray:
        return np.arange(self.length) * self.dt


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".meta.json")


def write_signalset(signals: SignalSet, path: str | Path) -> Path:
    """Write dataset + sidecar atomically (write-then-rename)."""
    path = Path(path)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, signals.n_signals, signals.length, signals.dt)
    payload = np.ascontiguousarray(signals.data, dtype="<f8").tobytes()
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(header + payload)
    os.replace(tmp, path)
    meta = dict(signals.metadata)
    meta.setdefault("n_signals", signals.n_signals)
    meta.setdefault("length", signals.length)
    meta.setdefault("dt", signals.dt)
    tmp_meta = Path(str(sidecar_path(path)) + ".tmp")
    tmp_meta.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    os.replace(tmp_meta, sidecar_path(path))
    return path


def read_signalset(path: str | Path) -> SignalSet:
    """Read a dataset file, validating the header against the payload size.

    Raises:
        FormatError: bad magic, unsupported version, or payload size mismatch.
    """
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, length, dt = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    expected = _HEADER.size + 8 * n * length
    if len(blob) != expected:
        raise FormatError(f"{path}: payload size mismatch (expected {expected} bytes, found {len(blob)})")
    if not (dt > 0):
        raise FormatError(f"{path}: invalid dt {dt}")
    data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).reshape(n, length).astype(np.float64)
    metadata: dict[str, Any] = {}
    side = sidecar_path(path)
    if side.exists():
        metadata = json.loads(side.read_text())
    return SignalSet(data=data, dt=dt, metadata=metadata)
