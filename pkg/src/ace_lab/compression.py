"""Adaptive compression of an expensive Hermitian operator.

Given B - t*I negative definite and a rank-n frame V, the compression
replaces B by the operator

    W (W*V)^{-1} W* + t*I,      W = (B - t*I) V,

which agrees with B on span(V), costs O(N n) to apply, and touches B only
through the n products forming W. Internally the rank-n part is kept as
-Y Y* with Y = W L^{-*} and -W*V = L L*, so negative semidefiniteness of
the shifted part is structural and application never forms an inverse.
"""

from __future__ import annotations

import threading

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, InvalidParameter, ShiftInsufficient
from .linalg import Frame, HermitianOperator, as_matrix, qr_completion


class MatvecCounter:
    """Monotonic, thread-safe tally of applications of the expensive operator."""

    __slots__ = ("_count", "_lock")

    def __init__(self):
        self._count = 0
        self._lock = threading.Lock()

    def add(self, k: int) -> None:
        with self._lock:
            self._count += int(k)

    @property
    def count(self) -> int:
        return self._count

    def __repr__(self):
        return f"MatvecCounter(count={self._count})"


def _tally(counter, k: int) -> None:
    if counter is None:
        return
    if isinstance(counter, MatvecCounter):
        counter.add(k)
        return
    for c in counter:
        c.add(k)


class CompressedOperator:
    """Factored form of the t-shifted adaptive compression of B at a frame.

    Immutable and shareable across threads. ``image`` is W = (B - t*I) V,
    ``gram_inv`` is (W*V)^{-1} after Hermitian symmetrization, and
    ``factor`` (when the definite path was taken) satisfies
    ``rank-n part = -factor @ factor*``.
    """

    __slots__ = ("image", "gram_inv", "factor", "shift", "dim", "rank", "lambda_max_gram")

    def __init__(self, image, gram_inv, factor, shift, lambda_max_gram):
        self.image = image
        self.gram_inv = gram_inv
        self.factor = factor
        self.shift = float(shift)
        self.dim, self.rank = image.shape
        self.lambda_max_gram = float(lambda_max_gram)
        image.setflags(write=False)
        gram_inv.setflags(write=False)
        if factor is not None:
            factor.setflags(write=False)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Apply to a vector (or to columns of a matrix) in O(N n)."""
        x = np.asarray(x)
        if x.shape[0] != self.dim:
            raise DimensionMismatch(f"expected leading dimension {self.dim}, got {x.shape[0]}")
        if self.factor is not None:
            y = -self.factor @ (self.factor.conj().T @ x)
        else:
            y = self.image @ (self.gram_inv @ (self.image.conj().T @ x))
        if self.shift != 0.0:
            y = y + self.shift * x
        return y

    def materialize(self) -> HermitianOperator:
        """Dense N-by-N form (for diagnostics and the inner dense eigensolve)."""
        if self.factor is not None:
            dense = -self.factor @ self.factor.conj().T
        else:
            dense = self.image @ self.gram_inv @ self.image.conj().T
        if self.shift != 0.0:
            dense = dense + self.shift * np.eye(self.dim, dtype=dense.dtype)
        return HermitianOperator(dense)

    def summary(self, counter: MatvecCounter | None = None) -> dict:
        return {
            "n": self.rank,
            "t": self.shift,
            "lambda_max_WV": self.lambda_max_gram,
            "matvec_count": None if counter is None else counter.count,
        }

    def __repr__(self):
        return f"CompressedOperator(dim={self.dim}, rank={self.rank}, shift={self.shift})"


def compress(
    b,
    v: Frame,
    t: float = 0.0,
    *,
    counter=None,
    unsafe_indefinite: bool = False,
) -> CompressedOperator:
    """Build the t-shifted adaptive compression of ``b`` at the frame ``v``.

    Counts exactly n applications of ``b`` on each counter passed. The
    Gram matrix W*V is symmetrized before factorization; failure of the
    Cholesky factorization of -(W*V) signals ``ShiftInsufficient`` (the
    caller must raise ``t``). ``unsafe_indefinite`` skips the definiteness
    certificate and inverts W*V directly; the sandwich property is then
    not guaranteed.
    """
    bm = as_matrix(b)
    if bm.shape[0] != v.dim:
        raise DimensionMismatch(f"operator dim {bm.shape[0]} != frame dim {v.dim}")
    cols = v.columns
    w = bm @ cols
    if t != 0.0:
        w = w - t * cols
    _tally(counter, v.rank)

    gram = w.conj().T @ cols
    gram = (gram + gram.conj().T) / 2
    lam_max_gram = float(np.linalg.eigvalsh(gram)[-1])

    if unsafe_indefinite:
        try:
            gram_inv = np.linalg.inv(gram)
        except np.linalg.LinAlgError as exc:
            raise InvalidParameter("V*(B - t)V is singular") from exc
        gram_inv = (gram_inv + gram_inv.conj().T) / 2
        return CompressedOperator(w, gram_inv, None, t, lam_max_gram)

    try:
        low = scipy.linalg.cholesky(-gram, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise ShiftInsufficient(
            f"W*V is not negative definite (lambda_max = {lam_max_gram:.3e}); "
            f"raise the shift t = {t}"
        ) from exc
    # Y = W L^{-*} so that the rank-n part is exactly -Y Y*.
    factor = scipy.linalg.solve_triangular(low, w.conj().T, lower=True).conj().T
    neg_gram_inv = scipy.linalg.cho_solve((low, True), np.eye(v.rank, dtype=gram.dtype))
    gram_inv = -(neg_gram_inv + neg_gram_inv.conj().T) / 2
    return CompressedOperator(w, gram_inv, factor, t, lam_max_gram)


def apply(c: CompressedOperator, x: np.ndarray) -> np.ndarray:
    return c.apply(x)


def materialize(c: CompressedOperator) -> HermitianOperator:
    return c.materialize()


def schur_complement(b, v: Frame, t: float = 0.0) -> np.ndarray:
    """Schur complement S22 = B22 - B12* B11^{-1} B12 of the shifted operator.

    Blocks are taken in the basis [V, Q] where Q is the deterministic
    Householder-QR completion of ``v`` (see :func:`ace_lab.linalg.qr_completion`).
    For B - t*I negative definite, S22 is negative definite as well. With
    n = N the complement is empty and a 0-by-0 block is returned.
    """
    bm = as_matrix(b)
    if bm.shape[0] != v.dim:
        raise DimensionMismatch(f"operator dim {bm.shape[0]} != frame dim {v.dim}")
    if t != 0.0:
        bm = bm - t * np.eye(v.dim, dtype=bm.dtype)
    comp = qr_completion(v)
    if comp.shape[1] == 0:
        return np.zeros((0, 0), dtype=bm.dtype)
    cols = v.columns
    b11 = cols.conj().T @ bm @ cols
    b11 = (b11 + b11.conj().T) / 2
    b12 = cols.conj().T @ bm @ comp
    b22 = comp.conj().T @ bm @ comp
    try:
        low = scipy.linalg.cholesky(-b11, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise ShiftInsufficient(
            f"V*(B - t)V is not negative definite; raise the shift t = {t}"
        ) from exc
    z = scipy.linalg.solve_triangular(low, b12, lower=True)
    s22 = b22 + z.conj().T @ z
    return (s22 + s22.conj().T) / 2
