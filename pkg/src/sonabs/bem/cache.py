"""Disk cache for per-frequency Green matrices.

Layout: one directory per geometry key holding a ``meta.json`` describing the
geometry and one binary record per frequency index.

Record format (version 1, little-endian), file name ``f<index:05d>.gmat``::

    offset  size  field
    0       4     magic  b"SGM1"
    4       2     version (uint16) = 1
    6       2     reserved (uint16) = 0
    8       4     n  (uint32)  number of surface elements
    12      4     n_recv (uint32)  number of receiver rows
    16      8     frequency (float64) [Hz]
    24      4     payload CRC32 (uint32)
    28      -     payload: n*n complex128 matrix (row-major), then
                  n_recv*n complex128 receiver rows

The geometry key is a SHA-256 prefix over the canonical geometry record
(mesh, quadrature order, receiver points, frequency grid), so a cache entry
can never be reused for a mismatched configuration.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from pathlib import Path

import numpy as np

from sonabs.bem.mesh import BemMesh

RECORD_MAGIC = b"SGM1"
RECORD_VERSION = 1
_HEADER = struct.Struct("<4sHHIIdI")


class CacheError(RuntimeError):
    """Raised for corrupt, mismatched, or unreadable cache records."""


def geometry_key(
    mesh: BemMesh,
    quad_order: int,
    receiver_points: np.ndarray,
    frequencies: np.ndarray,
) -> str:
    """Stable identifier of everything a cached record depends on."""
    canonical = {
        "lx": mesh.lx,
        "ly": mesh.ly,
        "nx": mesh.nx,
        "ny": mesh.ny,
        "quad_order": quad_order,
        "receivers": np.asarray(receiver_points, dtype=np.float64).ravel().tolist(),
        "frequencies": np.asarray(frequencies, dtype=np.float64).tolist(),
    }
    blob = json.dumps(canonical, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


class GreenCache:
    """Read/write access to cached per-frequency records under a root directory."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _dir(self, key: str) -> Path:
        return self.root / key

    def _record_path(self, key: str, index: int) -> Path:
        return self._dir(key) / f"f{index:05d}.gmat"

    def ensure_meta(self, key: str, meta: dict) -> None:
        d = self._dir(key)
        d.mkdir(parents=True, exist_ok=True)
        path = d / "meta.json"
        if not path.exists():
            path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    def has(self, key: str, index: int) -> bool:
        return self._record_path(key, index).exists()

    def write(
        self,
        key: str,
        index: int,
        frequency: float,
        matrix: np.ndarray,
        receiver_rows: np.ndarray,
    ) -> None:
        matrix = np.ascontiguousarray(matrix, dtype=np.complex128)
        receiver_rows = np.ascontiguousarray(receiver_rows, dtype=np.complex128)
        n = matrix.shape[0]
        if matrix.shape != (n, n):
            raise ValueError("matrix must be square")
        if receiver_rows.shape[1] != n:
            raise ValueError("receiver rows must match matrix dimension")
        payload = matrix.astype("<c16").tobytes() + receiver_rows.astype("<c16").tobytes()
        header = _HEADER.pack(
            RECORD_MAGIC,
            RECORD_VERSION,
            0,
            n,
            receiver_rows.shape[0],
            float(frequency),
            zlib.crc32(payload),
        )
        path = self._record_path(key, index)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(header + payload)
        tmp.replace(path)

    def read(self, key: str, index: int):
        """Return (frequency, matrix, receiver_rows) for a cached record."""
        path = self._record_path(key, index)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise CacheError(f"cannot read cache record {path}: {exc}") from exc
        if len(raw) < _HEADER.size:
            raise CacheError(f"truncated cache record {path}")
        magic, version, _, n, n_recv, freq, crc = _HEADER.unpack_from(raw)
        if magic != RECORD_MAGIC:
            raise CacheError(f"bad magic in cache record {path}")
        if version != RECORD_VERSION:
            raise CacheError(
                f"unsupported cache record version {version} in {path}"
            )
        payload = raw[_HEADER.size :]
        expected = (n * n + n_recv * n) * 16
        if len(payload) != expected:
            raise CacheError(f"payload size mismatch in {path}")
        if zlib.crc32(payload) != crc:
            raise CacheError(f"checksum mismatch in {path}")
        matrix = np.frombuffer(payload[: n * n * 16], dtype="<c16").reshape(n, n)
        recv = np.frombuffer(payload[n * n * 16 :], dtype="<c16").reshape(n_recv, n)
        return freq, matrix.astype(np.complex128), recv.astype(np.complex128)

    def drop(self, key: str) -> None:
        """Delete all records for a geometry key."""
        d = self._dir(key)
        if d.exists():
            for p in d.iterdir():
                p.unlink()
            d.rmdir()
