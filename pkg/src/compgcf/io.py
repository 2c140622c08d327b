"""Binary checkpoint format (little-endian).

A checkpoint file is a matrix blob for the codebook, an assignment blob,
and optionally an Adam trailer::

    matrix:     "LEGC" | version u32 | rows u32 | cols u32 | width u8 (32/64) | row-major scalars
    assignment: N u32 | c u32 | t u32 | nnz u64 | nnz x (row u32, col u32, weight f64)
    adam:       "ADAM" | step u64 | matrix (first moment) | matrix (second moment)

Assignment triplets are written row by row in slot order, so the anchor of
every row survives a round trip.
"""
import io
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding import MetaCodebook, SparseAssignment

MAGIC = b"LEGC"
ADAM_MAGIC = b"ADAM"
VERSION = 1
_MATRIX_HEADER = struct.Struct("<4sIIIB")
_ASSIGN_HEADER = struct.Struct("<IIIQ")
_TRIPLET = np.dtype([("row", "<u4"), ("col", "<u4"), ("weight", "<f8")])


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    codebook: MetaCodebook
    assignment: SparseAssignment
    adam: tuple[int, np.ndarray, np.ndarray] | None = None


def atomic_write(path, payload: bytes | str) -> None:
    """Write to a temp file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload.encode("utf-8") if isinstance(payload, str) else payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated {what}")
    return buf


def write_matrix(fh, m: np.ndarray) -> None:
    m = np.asarray(m)
    if m.dtype == np.float32:
        width, dt = 32, "<f4"
    elif m.dtype == np.float64:
        width, dt = 64, "<f8"
    else:
        raise CheckpointError(f"unsupported dtype {m.dtype}")
    fh.write(_MATRIX_HEADER.pack(MAGIC, VERSION, m.shape[0], m.shape[1], width))
    fh.write(np.ascontiguousarray(m, dtype=dt).tobytes())


def read_matrix(fh) -> np.ndarray:
    magic, version, rows, cols, width = _MATRIX_HEADER.unpack(
        _read_exact(fh, _MATRIX_HEADER.size, "matrix header"))
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}")
    if width not in (32, 64):
        raise CheckpointError(f"unsupported scalar width {width}")
    dt = np.dtype("<f4" if width == 32 else "<f8")
    raw = _read_exact(fh, rows * cols * dt.itemsize, "matrix payload")
    return np.frombuffer(raw, dtype=dt).reshape(rows, cols).astype(dt.newbyteorder("="))


def write_assignment(fh, s: SparseAssignment) -> None:
    keep = s.weight != 0
    rows = np.broadcast_to(np.arange(s.n_entities)[:, None], s.index.shape)[keep]
    trip = np.empty(int(keep.sum()), dtype=_TRIPLET)
    trip["row"], trip["col"], trip["weight"] = rows, s.index[keep], s.weight[keep]
    fh.write(_ASSIGN_HEADER.pack(s.n_entities, s.c, s.t, len(trip)))
    fh.write(trip.tobytes())


def read_assignment(fh) -> SparseAssignment:
    n, c, t, nnz = _ASSIGN_HEADER.unpack(_read_exact(fh, _ASSIGN_HEADER.size, "assignment header"))
    trip = np.frombuffer(_read_exact(fh, nnz * _TRIPLET.itemsize, "assignment payload"), dtype=_TRIPLET)
    if nnz and (trip["row"].max() >= n or trip["col"].max() >= c):
        raise CheckpointError("assignment triplet out of range")
    if nnz and np.any(np.diff(trip["row"].astype(np.int64)) < 0):
        raise CheckpointError("assignment triplets must be grouped by row")
    counts = np.bincount(trip["row"], minlength=n)
    if counts.max(initial=0) > t:
        raise CheckpointError(f"row with more than t={t} entries")
    index = np.empty((n, t), dtype=np.int64)
    weight = np.zeros((n, t))
    starts = np.concatenate([[0], np.cumsum(counts)])
    slot = np.arange(nnz) - starts[trip["row"]]
    index[trip["row"], slot] = trip["col"]
    weight[trip["row"], slot] = trip["weight"]
    # pad short rows with the smallest unused meta ids at zero weight
    for p in np.flatnonzero(counts < t):
        used = set(index[p, :counts[p]].tolist())
        free = (q for q in range(c) if q not in used)
        for j in range(counts[p], t):
            index[p, j] = next(free)
    return SparseAssignment(c, index, weight)


def save_checkpoint(path, codebook: MetaCodebook, assignment: SparseAssignment,
                    adam: tuple[int, np.ndarray, np.ndarray] | None = None) -> None:
    buf = io.BytesIO()
    write_matrix(buf, codebook.weights)
    write_assignment(buf, assignment)
    if adam is not None:
        step, m, v = adam
        buf.write(ADAM_MAGIC + struct.pack("<Q", step))
        write_matrix(buf, m)
        write_matrix(buf, v)
    atomic_write(path, buf.getvalue())


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"no checkpoint at {path}")
    with open(path, "rb") as fh:
        codebook = MetaCodebook(read_matrix(fh))
        assignment = read_assignment(fh)
        if assignment.c != codebook.c:
            raise CheckpointError(f"assignment c={assignment.c} does not match codebook c={codebook.c}")
        adam = None
        tag = fh.read(4)
        if tag:
            if tag != ADAM_MAGIC:
                raise CheckpointError(f"unexpected trailer {tag!r}")
            (step,) = struct.unpack("<Q", _read_exact(fh, 8, "adam step"))
            adam = (step, read_matrix(fh), read_matrix(fh))
    return Checkpoint(codebook, assignment, adam)


def save_matrix(path, m: np.ndarray) -> None:
    buf = io.BytesIO()
    write_matrix(buf, m)
    atomic_write(path, buf.getvalue())


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_matrix(fh)
