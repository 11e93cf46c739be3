"""On-disk cache for distance tables and minimal-radius records.

Entries are keyed by a content hash of the graph file text.  A missing,
stale or corrupt entry is treated as a miss; the caller recomputes.
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
from pathlib import Path

import numpy as np

from .graph import DistanceMatrix, MetricGraph, format_graph

log = logging.getLogger(__name__)

CACHE_ENV = "XHAT_CACHE_DIR"
DIST_MAGIC = b"CSDC1"
RMIN_MAGIC = b"CSRM1"
UNREACHABLE_CODE = 0xFFFFFFFF
NOT_THIN_FLAG = 0x80000000


def cache_dir() -> Path | None:
    path = os.environ.get(CACHE_ENV)
    return Path(path) if path else None


def graph_key(g: MetricGraph) -> str:
    return hashlib.sha256(format_graph(g).encode()).hexdigest()


def encode_distances(D: DistanceMatrix) -> bytes:
    arr = D.array.astype(np.int64)
    out = np.where(arr < 0, UNREACHABLE_CODE, arr).astype("<u4")
    return DIST_MAGIC + struct.pack("<Q", D.n) + out.tobytes()


def decode_distances(blob: bytes) -> DistanceMatrix:
    if not blob.startswith(DIST_MAGIC) or len(blob) < len(DIST_MAGIC) + 8:
        raise ValueError("not a distance cache file")
    (n,) = struct.unpack_from("<Q", blob, len(DIST_MAGIC))
    body = blob[len(DIST_MAGIC) + 8:]
    if len(body) != 4 * n * n:
        raise ValueError("truncated distance cache file")
    raw = np.frombuffer(body, dtype="<u4").reshape(n, n)
    if (raw == UNREACHABLE_CODE).any():
        raise ValueError("cached table of a connected graph has unreachable entries")
    return DistanceMatrix(raw.astype(np.int32))


def center_code(center, n: int) -> int:
    """Vertex c ↦ c; edge (u, w) with u < w ↦ n + u·n + w."""
    if isinstance(center, tuple):
        u, w = sorted(center)
        return n + u * n + w
    return int(center)


def decode_center(code: int, n: int):
    if code < n:
        return code
    u, w = divmod(code - n, n)
    return (u, w)


def encode_rmin(records: dict, n: int) -> bytes:
    rows = []
    for (p, q, center), (value, cap) in sorted(records.items(), key=lambda kv: (
            kv[0][0], kv[0][1], center_code(kv[0][2], n))):
        word = value if value is not None else NOT_THIN_FLAG | cap
        rows.append((p, q, center_code(center, n), word))
    arr = np.asarray(rows, dtype="<u4").reshape(-1, 4)
    return RMIN_MAGIC + struct.pack("<Q", n) + arr.tobytes()


def decode_rmin(blob: bytes) -> tuple[int, dict]:
    if not blob.startswith(RMIN_MAGIC) or len(blob) < len(RMIN_MAGIC) + 8:
        raise ValueError("not an r_min cache file")
    (n,) = struct.unpack_from("<Q", blob, len(RMIN_MAGIC))
    body = blob[len(RMIN_MAGIC) + 8:]
    if len(body) % 16:
        raise ValueError("truncated r_min cache file")
    arr = np.frombuffer(body, dtype="<u4").reshape(-1, 4)
    records = {}
    for p, q, code, word in arr.tolist():
        if p >= n or q >= n or code >= n + n * n:
            raise ValueError("r_min record out of range")
        if word & NOT_THIN_FLAG:
            val = (None, word & ~NOT_THIN_FLAG)
        else:
            val = (word, word)
        records[(p, q, decode_center(code, n))] = val
    return n, records


def _path(key: str, suffix: str, root: Path | None) -> Path | None:
    root = root if root is not None else cache_dir()
    return None if root is None else root / f"{key}.{suffix}"


def _read(path: Path | None) -> bytes | None:
    if path is None or not path.exists():
        return None
    return path.read_bytes()


def _write(path: Path | None, blob: bytes) -> None:
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)


def cache_store(key: str, D: DistanceMatrix, root: Path | None = None) -> None:
    _write(_path(key, "csdc", root), encode_distances(D))


def cache_load(key: str, n: int, root: Path | None = None) -> DistanceMatrix | None:
    path = _path(key, "csdc", root)
    blob = _read(path)
    if blob is None:
        return None
    try:
        D = decode_distances(blob)
    except ValueError as exc:
        log.warning("ignoring corrupt cache file %s: %s", path, exc)
        return None
    return D if D.n == n else None


def rmin_store(key: str, records: dict, n: int, root: Path | None = None) -> None:
    _write(_path(key, "csrm", root), encode_rmin(records, n))


def rmin_load(key: str, n: int, root: Path | None = None) -> dict | None:
    path = _path(key, "csrm", root)
    blob = _read(path)
    if blob is None:
        return None
    try:
        stored_n, records = decode_rmin(blob)
    except ValueError as exc:
        log.warning("ignoring corrupt cache file %s: %s", path, exc)
        return None
    return records if stored_n == n else None


def cached_distances(g: MetricGraph, root: Path | None = None) -> DistanceMatrix:
    """All-pairs distances, through the cache when one is configured."""
    from .graph import all_pairs_distances

    key = graph_key(g)
    D = cache_load(key, g.vertex_count, root)
    if D is None:
        D = all_pairs_distances(g)
        cache_store(key, D, root)
    return D
