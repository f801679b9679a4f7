"""Readers and writers for the on-disk artifacts.

Binary formats use 4-byte magic headers and little-endian 64-bit payloads
so the same input hashes identically across platforms. Text and CSV
mirrors exist for inspection and interop; floats there are written with
shortest round-trip repr, so they reload exactly as well. Every writer
goes through a temporary file in the target directory followed by an
atomic rename.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .distances import DistanceMatrix
from .errors import FormatError
from .kernel import KernelMatrix
from .model import Labeling, SolverConfig, Streamline, Tractogram

SLB_MAGIC = b"SLB1"
DM_MAGIC = b"DM01"
KM_MAGIC = b"KM01"

_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")

# refuse to allocate for counts beyond this when a corrupt header lies
_SANE_COUNT = 10**9


def _atomic_write_bytes(path, data: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _atomic_write_text(path, text: str):
    _atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(v) -> str:
    """Shortest decimal that round-trips the float64 exactly."""
    return repr(float(v))


# --- streamline text format ------------------------------------------------

def write_sl(t: Tractogram, path):
    """Text format: one "x y z" line per point, blank line between streamlines."""
    lines = [f"# {len(t)} streamlines"]
    for idx, s in enumerate(t):
        if idx:
            lines.append("")
        for p in s.points:
            lines.append(f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}")
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_sl(path) -> Tractogram:
    blocks = []
    current = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if line.startswith("#"):
                continue
            if not line:
                if current:
                    blocks.append(current)
                    current = []
                continue
            parts = line.split()
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            try:
                current.append([float(v) for v in parts])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if current:
        blocks.append(current)
    if not blocks:
        raise FormatError(f"{path}: no streamlines found")
    try:
        return Tractogram(tuple(Streamline(np.array(b)) for b in blocks))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# --- streamline binary format ----------------------------------------------

def write_slb(t: Tractogram, path):
    """Binary format: magic, u64 count, then u64 point count + f64 triples each."""
    parts = [SLB_MAGIC, _U64.pack(len(t))]
    for s in t:
        parts.append(_U64.pack(len(s)))
        parts.append(np.ascontiguousarray(s.points, dtype="<f8").tobytes())
    _atomic_write_bytes(path, b"".join(parts))


class _Reader:
    """Sequential parser with out-of-data detection for binary files."""

    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, count: int) -> bytes:
        end = self.pos + count
        if end > len(self.data):
            raise FormatError(f"{self.path}: truncated (wanted {count} more bytes)")
        out = self.data[self.pos:end]
        self.pos = end
        return out

    def u64(self) -> int:
        (v,) = _U64.unpack(self.take(8))
        if v > _SANE_COUNT:
            raise FormatError(f"{self.path}: implausible count {v}")
        return v

    def f64(self) -> float:
        (v,) = _F64.unpack(self.take(8))
        return v

    def f64_array(self, count: int, shape=None) -> np.ndarray:
        arr = np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)
        return arr if shape is None else arr.reshape(shape)

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(f"{self.path}: {len(self.data) - self.pos} trailing bytes")


def _read_binary(path, magic: bytes) -> _Reader:
    with open(path, "rb") as f:
        data = f.read()
    r = _Reader(data, path)
    if r.take(len(magic)) != magic:
        raise FormatError(f"{path}: bad magic, expected {magic!r}")
    return r


def read_slb(path) -> Tractogram:
    r = _read_binary(path, SLB_MAGIC)
    count = r.u64()
    streamlines = []
    for _ in range(count):
        npts = r.u64()
        pts = r.f64_array(3 * npts, shape=(npts, 3))
        try:
            streamlines.append(Streamline(pts))
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from exc
    r.done()
    if not streamlines:
        raise FormatError(f"{path}: no streamlines found")
    return Tractogram(tuple(streamlines))


# --- labels ----------------------------------------------------------------

def write_labels(lab: Labeling, path):
    _atomic_write_text(path, "\n".join(str(v) for v in lab.labels) + "\n")


def read_labels(path, m: int | None = None) -> Labeling:
    values = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                values.append(int(line))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if not values:
        raise FormatError(f"{path}: no labels found")
    arr = np.array(values, dtype=np.int64)
    try:
        return Labeling(arr, m=int(arr.max()) + 1 if m is None else m)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# --- distance matrix -------------------------------------------------------

def write_dm(d: DistanceMatrix, path):
    """Binary: magic, u64 n, upper triangle (diagonal included) row-major f64."""
    iu = np.triu_indices(d.n)
    payload = np.ascontiguousarray(d.values[iu], dtype="<f8").tobytes()
    _atomic_write_bytes(path, DM_MAGIC + _U64.pack(d.n) + payload)


def read_dm(path) -> DistanceMatrix:
    r = _read_binary(path, DM_MAGIC)
    n = r.u64()
    tri = r.f64_array(n * (n + 1) // 2)
    r.done()
    values = np.zeros((n, n))
    iu = np.triu_indices(n)
    values[iu] = tri
    values.T[iu] = tri
    try:
        return DistanceMatrix(n=n, values=values)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_dm_csv(d: DistanceMatrix, path):
    """Full square matrix, one row per line, for external tools."""
    lines = [",".join(_fmt(v) for v in row) for row in d.values]
    _atomic_write_text(path, "\n".join(lines) + "\n")


# --- kernel matrix ---------------------------------------------------------

_KM_DENSE = 0
_KM_FACTORED = 1


def write_km(k: KernelMatrix, path):
    """Binary: magic, u8 form tag, u64 n and p, f64 gamma and shift, payload.

    Dense form stores the full n×n block (p written as n); the factored
    form stores the n×p factor followed by the landmark index list.
    """
    if k.is_factored:
        form = _KM_FACTORED
        payload = np.ascontiguousarray(k.factor, dtype="<f8")
        p = payload.shape[1]
        landmarks = k.landmarks if k.landmarks is not None else np.array([], dtype=np.int64)
        tail = _U64.pack(len(landmarks)) + b"".join(_U64.pack(int(i)) for i in landmarks)
    else:
        form = _KM_DENSE
        payload = np.ascontiguousarray(k.dense_values, dtype="<f8")
        p = k.n
        tail = b""
    head = KM_MAGIC + struct.pack("<B", form) + _U64.pack(k.n) + _U64.pack(p)
    head += _F64.pack(k.gamma) + _F64.pack(k.shift)
    _atomic_write_bytes(path, head + payload.tobytes() + tail)


def read_km(path) -> KernelMatrix:
    r = _read_binary(path, KM_MAGIC)
    (form,) = struct.unpack("<B", r.take(1))
    n, p = r.u64(), r.u64()
    gamma, shift = r.f64(), r.f64()
    try:
        if form == _KM_DENSE:
            if p != n:
                raise FormatError(f"{path}: dense form with p={p} != n={n}")
            values = r.f64_array(n * n, shape=(n, n))
            r.done()
            return KernelMatrix(n=n, gamma=gamma, shift=shift, dense_values=values)
        if form == _KM_FACTORED:
            factor = r.f64_array(n * p, shape=(n, p))
            count = r.u64()
            landmarks = np.array([r.u64() for _ in range(count)], dtype=np.int64)
            r.done()
            return KernelMatrix(
                n=n, gamma=gamma, shift=shift, factor=factor,
                landmarks=landmarks if count else None,
            )
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    raise FormatError(f"{path}: unknown kernel form tag {form}")


# --- CSV matrix helpers ----------------------------------------------------

def write_dense_csv(arr, path):
    arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    lines = [",".join(_fmt(v) for v in row) for row in arr]
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_dense_csv(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise FormatError(f"{path}: empty matrix")
    width = len(rows[0])
    if any(len(row) != width for row in rows):
        raise FormatError(f"{path}: ragged rows")
    return np.array(rows, dtype=np.float64)


def write_sparse_csv(arr, path):
    """Triplet form "row,col,value" with a header line; zeros omitted."""
    arr = np.asarray(arr, dtype=np.float64)
    ii, jj = np.nonzero(arr)
    lines = ["row,col,value"]
    lines += [f"{i},{j},{_fmt(arr[i, j])}" for i, j in zip(ii, jj)]
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_sparse_csv(path, shape) -> np.ndarray:
    out = np.zeros(shape)
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "row,col,value":
            raise FormatError(f"{path}: expected triplet header, got {header!r}")
        for lineno, raw in enumerate(f, start=2):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 fields")
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            if not (0 <= i < shape[0] and 0 <= j < shape[1]):
                raise FormatError(f"{path}:{lineno}: index ({i}, {j}) out of {shape}")
            out[i, j] = v
    return out


# --- fit result directory --------------------------------------------------

def config_to_dict(cfg: SolverConfig) -> dict:
    return dataclasses.asdict(cfg)


def write_fit_dir(result, cfg: SolverConfig, out_dir, method: str):
    """Persist a solver run: W and A matrices, labels, traces, and config.

    ``labels.txt`` holds the hard assignment; streamlines with no active
    coefficient are listed by index in ``unassigned.txt`` (absent when all
    streamlines are assigned).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_sparse_csv(result.assignment.w, out / "w.csv")
    write_dense_csv(result.dictionary.a, out / "a.csv")
    write_labels(result.labels, out / "labels.txt")
    unassigned = np.nonzero(np.asarray(result.unassigned))[0]
    if unassigned.size:
        _atomic_write_text(
            out / "unassigned.txt", "\n".join(str(i) for i in unassigned) + "\n"
        )
    cost = list(result.cost_trace)
    primal = list(result.primal_residual_trace)
    lines = ["iter,cost,primal_residual"]
    for i in range(max(len(cost), len(primal))):
        c = _fmt(cost[i]) if i < len(cost) else ""
        p = _fmt(primal[i]) if i < len(primal) else ""
        lines.append(f"{i},{c},{p}")
    _atomic_write_text(out / "trace.csv", "\n".join(lines) + "\n")
    config = dict(config_to_dict(cfg), method=method)
    _atomic_write_text(out / "config.json", json.dumps(config, indent=2, sort_keys=True) + "\n")
    return out
