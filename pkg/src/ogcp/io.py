"""Reading and writing ``.tns`` sparse tensors and K-tensor exports.

``.tns`` is the FROSTT text convention: one stored entry per line as d
1-based indices followed by the value, ``#`` starting comment lines. An
optional header comment ``# dims: I1 I2 ... Id`` declares the mode
sizes; without it they are inferred from the per-mode maximum index.

The K-tensor export is line-oriented: ``d R``, then the dims, then the
weights, then every factor matrix row-major, one row per line. All
values are printed with 17 significant digits so round-trips are exact.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterator

import numpy as np

from .exceptions import DataError
from .tensor import KTensor, SparseTensor, linear_strides

_FMT = "%.17g"


def _fmt_row(values) -> str:
    return " ".join(_FMT % v for v in values)


def read_tns(path, merge_duplicates: bool = False) -> SparseTensor:
    """Parse a ``.tns`` file into a SparseTensor.

    Duplicate coordinates are an error unless ``merge_duplicates`` is
    set, in which case duplicates are summed (entries that cancel to
    exactly zero are dropped, since zeros are implicit).
    """
    path = Path(path)
    header_dims = None
    subs, vals = [], []
    arity = None
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.lower().startswith("dims:") and header_dims is None:
                    try:
                        header_dims = tuple(int(v) for v in body[5:].split())
                    except ValueError as exc:
                        raise DataError(
                            f"{path}:{lineno}: malformed dims header") from exc
                continue
            tokens = line.split()
            if arity is None:
                arity = len(header_dims) + 1 if header_dims else len(tokens)
                if arity < 2:
                    raise DataError(
                        f"{path}:{lineno}: need at least one index and a value")
            if len(tokens) != arity:
                raise DataError(
                    f"{path}:{lineno}: expected {arity} fields, got "
                    f"{len(tokens)}")
            try:
                idx = [int(v) for v in tokens[:-1]]
                val = float(tokens[-1])
            except ValueError as exc:
                raise DataError(
                    f"{path}:{lineno}: non-numeric field") from exc
            if any(i < 1 for i in idx):
                raise DataError(
                    f"{path}:{lineno}: indices are 1-based and positive")
            subs.append(idx)
            vals.append(val)
    if header_dims is None:
        if not subs:
            raise DataError(f"{path}: empty file with no dims header")
        header_dims = tuple(np.asarray(subs, dtype=np.int64).max(axis=0))
    subs_arr = (np.asarray(subs, dtype=np.int64) if subs
                else np.empty((0, len(header_dims)), dtype=np.int64))
    vals_arr = np.asarray(vals, dtype=np.float64)
    if merge_duplicates and subs_arr.size:
        if (subs_arr.max(axis=0) > np.asarray(header_dims)).any():
            raise DataError(f"{path}: index exceeds declared dims")
        lin = (subs_arr - 1) @ linear_strides(header_dims)
        uniq, first, inverse = np.unique(lin, return_index=True,
                                         return_inverse=True)
        merged = np.bincount(inverse, weights=vals_arr, minlength=uniq.size)
        keep = merged != 0.0
        subs_arr, vals_arr = subs_arr[first][keep], merged[keep]
    return SparseTensor(header_dims, subs_arr, vals_arr)


def write_tns(X, path) -> None:
    """Write a SparseTensor (or a KTensor, via its export format).

    Tensors get a dims header and round-trip exactly.
    """
    if isinstance(X, KTensor):
        write_ktensor(X, path)
        return
    path = Path(path)
    with path.open("w") as fh:
        fh.write("# dims: " + " ".join(str(d) for d in X.dims) + "\n")
        subs = X.subs()
        for row, val in zip(subs, X.vals):
            fh.write(" ".join(str(i) for i in row) + " " + _FMT % val + "\n")


def write_ktensor(M: KTensor, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"{M.ndim} {M.rank}\n")
        fh.write(" ".join(str(d) for d in M.dims) + "\n")
        fh.write(_fmt_row(M.weights) + "\n")
        for a in M.factors:
            for row in a:
                fh.write(_fmt_row(row) + "\n")


def read_ktensor(path) -> KTensor:
    path = Path(path)
    lines = [ln.strip() for ln in path.read_text().splitlines()
             if ln.strip() and not ln.startswith("#")]
    if len(lines) < 3:
        raise DataError(f"{path}: truncated K-tensor file")
    try:
        ndim, rank = (int(v) for v in lines[0].split())
        dims = tuple(int(v) for v in lines[1].split())
        weights = np.array([float(v) for v in lines[2].split()])
    except ValueError as exc:
        raise DataError(f"{path}: malformed K-tensor header") from exc
    if len(dims) != ndim or weights.shape != (rank,):
        raise DataError(f"{path}: inconsistent K-tensor header")
    expect = 3 + sum(dims)
    if len(lines) != expect:
        raise DataError(
            f"{path}: expected {expect} lines for dims {dims}, got "
            f"{len(lines)}")
    factors = []
    cursor = 3
    for d in dims:
        rows = []
        for r in range(d):
            row = [float(v) for v in lines[cursor + r].split()]
            if len(row) != rank:
                raise DataError(
                    f"{path}: factor row has {len(row)} values, rank is "
                    f"{rank}")
            rows.append(row)
        cursor += d
        factors.append(np.array(rows))
    return KTensor(weights, factors)


def stream_slices(X: SparseTensor) -> Iterator[SparseTensor]:
    """Yield last-mode slices of a (d+1)-way tensor in arrival order."""
    if X.ndim < 2:
        raise DataError("streaming requires a tensor with at least 2 modes")
    for t in range(1, X.dims[-1] + 1):
        yield X.slice_view(t)


def leading_block(X: SparseTensor, n: int) -> SparseTensor:
    """First ``n`` last-mode slices as one tensor (the warm-start block)."""
    if X.ndim < 2:
        raise DataError("a block needs a tensor with at least 2 modes")
    if not 1 <= n <= X.dims[-1]:
        raise DataError(f"block size {n} out of range 1..{X.dims[-1]}")
    mask = X.subs0[:, -1] < n
    return SparseTensor.from_zero_based(X.dims[:-1] + (n,), X.subs0[mask],
                                        X.vals[mask])
