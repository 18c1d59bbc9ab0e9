"""Matrix Market readers and writers for operators and frames.

Values are written with 17 significant digits so that every IEEE double
round-trips exactly. Both array and coordinate files are accepted on read.
"""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse

from .linalg import Frame, HermitianOperator

# Significant digits per value; 17 makes every IEEE double round-trip exactly.
_PRECISION = 17


def _read_dense(path) -> np.ndarray:
    a = scipy.io.mmread(path)
    if scipy.sparse.issparse(a):
        a = a.toarray()
    return np.asarray(a)


def write_operator(path, op: HermitianOperator, fmt: str = "array") -> None:
    """Write an operator; ``fmt`` selects dense array or sparse coordinate storage."""
    if fmt == "array":
        scipy.io.mmwrite(path, op.matrix, precision=_PRECISION)
    elif fmt == "coordinate":
        scipy.io.mmwrite(path, scipy.sparse.coo_matrix(op.matrix), precision=_PRECISION)
    else:
        raise ValueError(f"unknown Matrix Market format {fmt!r}")


def read_operator(path) -> HermitianOperator:
    return HermitianOperator(_read_dense(path))


def write_frame(path, frame: Frame) -> None:
    scipy.io.mmwrite(path, frame.columns, precision=_PRECISION)


def read_frame(path) -> Frame:
    return Frame(_read_dense(path))
