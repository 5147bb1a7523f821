"""Binary field snapshots.

Layout (little endian): a 60-byte header

    magic "GKPS" | version u32 | nx u32 | ny u32 | scale_x f64 | scale_y f64 |
    t f64 | L f64 | p i32 | q i32 | lambda i32

followed by ``nx*ny`` float64 samples of ``u``, row-major (y outer, x inner).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"GKPS"
VERSION = 1
_HEADER = struct.Struct("<4sIIIddddiii")


class SnapshotFormatError(ValueError):
    """Bad magic, unsupported version or truncated payload."""


@dataclass
class Snapshot:
    nx: int
    ny: int
    scale_x: float
    scale_y: float
    t: float
    L: float
    p: int
    q: int
    lam: int
    u: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.u.shape != (self.ny, self.nx):
            raise ValueError(f"u has shape {self.u.shape}, expected {(self.ny, self.nx)}")


def write_snapshot(snap: Snapshot, path) -> None:
    header = _HEADER.pack(MAGIC, VERSION, snap.nx, snap.ny, snap.scale_x, snap.scale_y,
                          snap.t, snap.L, snap.p, snap.q, snap.lam)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(snap.u, dtype="<f8").tobytes())


def read_snapshot(path) -> Snapshot:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SnapshotFormatError("file shorter than the snapshot header")
    magic, version, nx, ny, sx, sy, t, L, p, q, lam = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    expected = nx * ny * 8
    payload = data[_HEADER.size:]
    if len(payload) != expected:
        raise SnapshotFormatError(f"payload has {len(payload)} bytes, expected {expected}")
    u = np.frombuffer(payload, dtype="<f8").reshape(ny, nx).astype(float)
    return Snapshot(nx, ny, sx, sy, t, L, p, q, lam, u)
