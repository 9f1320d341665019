"""Dataset loaders (dense CSV, dense binary, svmlight) and the log writer."""
import csv
import math
import struct

import numpy as np

from .core import LOG_FIELDS, Dataset, TimeEnergyLog


class FormatError(ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


def _finite(x, line, path):
    v = float(x)
    if not math.isfinite(v):
        raise FormatError(f"non-finite value {x!r}", line, path)
    return v


def load_dense_csv(path, delimiter=",") -> Dataset:
    """One sample per line; blank lines are ignored."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(delimiter) if delimiter else line.split()
            try:
                row = [_finite(f, lineno, path) for f in fields]
            except ValueError as exc:
                if isinstance(exc, FormatError):
                    raise
                raise FormatError(f"non-numeric field in {line!r}", lineno, path) from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise FormatError(f"expected {width} columns, got {len(row)}", lineno, path)
            rows.append(row)
    if not rows:
        raise FormatError("empty file", None, path)
    return Dataset(np.array(rows, dtype=np.float64))


_HEADER = struct.Struct("<QQ")


def save_dense_binary(dataset, path) -> None:
    """Header ``<u64 N><u64 d>`` then N*d little-endian float64, row-major."""
    X = dataset.toarray() if isinstance(dataset, Dataset) else np.asarray(dataset, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(*X.shape))
        fh.write(np.ascontiguousarray(X, dtype="<f8").tobytes())


def load_dense_binary(path) -> Dataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError("file shorter than header", None, path)
    n, d = _HEADER.unpack_from(raw)
    payload = len(raw) - _HEADER.size
    if n * d * 8 != payload:
        raise FormatError(f"header says {n}x{d} doubles ({n * d * 8} bytes), payload has {payload}",
                          None, path)
    X = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64).reshape(n, d)
    if not np.all(np.isfinite(X)):
        raise FormatError("non-finite value in payload", None, path)
    return Dataset(X)


def load_svmlight(path, n_dims=None) -> Dataset:
    """``<label> idx:val ...`` lines with 1-based ascending indices.

    Labels are parsed and dropped. ``n_dims`` overrides the inferred
    dimension (the largest index seen) so train and validation files agree.
    """
    indptr = [0]
    indices = []
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                float(parts[0])
            except ValueError:
                raise FormatError(f"bad label {parts[0]!r}", lineno, path) from None
            last = 0
            for tok in parts[1:]:
                idx, sep, val = tok.partition(":")
                if not sep:
                    raise FormatError(f"malformed pair {tok!r}", lineno, path)
                try:
                    j = int(idx)
                    x = float(val)
                except ValueError:
                    raise FormatError(f"malformed pair {tok!r}", lineno, path) from None
                if not math.isfinite(x):
                    raise FormatError(f"non-finite value {val!r}", lineno, path)
                if j < 1:
                    raise FormatError(f"index {j} is not 1-based", lineno, path)
                if j <= last:
                    raise FormatError(f"indices not ascending ({last} then {j})", lineno, path)
                last = j
                indices.append(j - 1)
                values.append(x)
            indptr.append(len(indices))
    if len(indptr) == 1:
        raise FormatError("empty file", None, path)
    inferred = (max(indices) + 1) if indices else 1
    if n_dims is None:
        n_dims = inferred
    elif n_dims < inferred:
        raise FormatError(f"index {inferred} exceeds requested dimension {n_dims}", None, path)
    return Dataset(indptr=np.array(indptr), indices=np.array(indices, dtype=np.int64),
                   values=np.array(values, dtype=np.float64), n_dims=n_dims)


def load_dataset(path, delimiter=",", n_dims=None) -> Dataset:
    """Pick a loader from the file extension (.bin, .svm/.svmlight/.libsvm, else CSV)."""
    p = str(path).lower()
    if p.endswith(".bin"):
        return load_dense_binary(path)
    if p.endswith((".svm", ".svmlight", ".libsvm", ".txt")):
        return load_svmlight(path, n_dims=n_dims)
    return load_dense_csv(path, delimiter=delimiter)


def save_dense_csv(dataset, path, delimiter=",") -> None:
    X = dataset.toarray() if isinstance(dataset, Dataset) else np.asarray(dataset)
    with open(path, "w", newline="") as fh:
        for row in X:
            fh.write(delimiter.join(repr(float(v)) for v in row) + "\n")


def _fmt(x: float) -> str:
    return format(x, ".17g")


def write_log_csv(log: TimeEnergyLog, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_FIELDS)
        for r in log:
            w.writerow([_fmt(r.elapsed_s), r.iteration, r.batch_size, r.distance_calcs,
                        _fmt(r.energy), r.kind])


def read_log_csv(path) -> TimeEnergyLog:
    log = TimeEnergyLog()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != LOG_FIELDS:
            raise FormatError(f"unexpected header {header}", 1, path)
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(LOG_FIELDS):
                raise FormatError("wrong number of fields", lineno, path)
            log.append(float(row[0]), int(row[1]), int(row[2]), int(row[3]), float(row[4]), row[5])
    return log
