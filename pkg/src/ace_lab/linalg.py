"""Field-generic dense Hermitian linear algebra.

Provides the substrate every other module builds on: eigendecomposition
with a deterministic tie-break, projector frames (factored rank-n
orthogonal projectors), subspace metrics, and deterministic orthonormal
completions. Real-symmetric inputs stay in the real field end-to-end;
complex Hermitian inputs are first-class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateGap, DimensionMismatch, InvalidParameter, RankOutOfRange

#: Orthonormality tolerance for frames, ||V*V - I||_2.
FRAME_ORTHO_TOL = 1e-12

#: Relative spectral-gap tolerance below which a density matrix is degenerate.
GAP_RTOL = 1e-12


def as_matrix(x) -> np.ndarray:
    """Return the underlying ndarray of an operator-like object."""
    if isinstance(x, HermitianOperator):
        return x.matrix
    return np.asarray(x)


def _as_float_array(entries) -> np.ndarray:
    m = np.asarray(entries)
    if np.iscomplexobj(m):
        return m.astype(np.complex128, copy=True)
    return m.astype(np.float64, copy=True)


def norm2(m) -> float:
    """Spectral norm of a (possibly non-square) matrix."""
    a = as_matrix(m)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def _phase_fix(columns: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive.

    Ties in magnitude resolve to the lowest row index, so the result is
    deterministic for a fixed input.
    """
    cols = columns.copy()
    lead_rows = np.argmax(np.abs(cols), axis=0)
    lead = cols[lead_rows, np.arange(cols.shape[1])]
    if np.iscomplexobj(cols):
        mags = np.abs(lead)
        safe = mags > 0
        phase = np.ones_like(lead)
        phase[safe] = lead[safe] / mags[safe]
        cols = cols * phase.conj()
    else:
        signs = np.where(lead < 0, -1.0, 1.0)
        cols = cols * signs
    return cols


class HermitianOperator:
    """Dense N-by-N Hermitian (or real-symmetric) matrix.

    Entries are symmetrized once at construction, which enforces the
    Hermiticity invariant exactly; the stored array is read-only.
    """

    __slots__ = ("matrix", "dim", "field", "_norm2")

    def __init__(self, entries):
        m = _as_float_array(entries)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
        if m.shape[0] < 1:
            raise DimensionMismatch("dimension must be at least 1")
        m = (m + m.conj().T) / 2
        m.setflags(write=False)
        self.matrix = m
        self.dim = m.shape[0]
        self.field = "complex" if np.iscomplexobj(m) else "real"
        self._norm2 = None

    def norm2(self) -> float:
        """Spectral norm, max |eigenvalue| (cached)."""
        if self._norm2 is None:
            w = np.linalg.eigvalsh(self.matrix)
            self._norm2 = float(max(abs(w[0]), abs(w[-1]))) if w.size else 0.0
        return self._norm2

    def __add__(self, other) -> "HermitianOperator":
        return HermitianOperator(self.matrix + as_matrix(other))

    def __sub__(self, other) -> "HermitianOperator":
        return HermitianOperator(self.matrix - as_matrix(other))

    def __array__(self, dtype=None):
        return np.asarray(self.matrix, dtype=dtype)

    def __repr__(self):
        return f"HermitianOperator(dim={self.dim}, field={self.field})"


class Frame:
    """N-by-n matrix with orthonormal columns.

    The canonical (factored) representation of a rank-n orthogonal
    projector P = V V*; dense projectors are a derived view so that
    idempotency is structural rather than numerical.
    """

    __slots__ = ("columns", "dim", "rank")

    def __init__(self, columns, *, check: bool = True):
        c = _as_float_array(columns)
        if c.ndim != 2:
            raise DimensionMismatch(f"frame columns must be 2-D, got shape {c.shape}")
        dim, rank = c.shape
        if not (1 <= rank <= dim):
            raise RankOutOfRange(f"frame rank {rank} not in [1, {dim}]")
        if check:
            gram = c.conj().T @ c
            drift = norm2(gram - np.eye(rank))
            if drift > FRAME_ORTHO_TOL:
                raise InvalidParameter(
                    f"columns are not orthonormal: ||V*V - I|| = {drift:.3e}"
                )
        c.setflags(write=False)
        self.columns = c
        self.dim = dim
        self.rank = rank

    def projector(self) -> np.ndarray:
        """Dense V V* (derived view; the frame stays the primary object)."""
        return self.columns @ self.columns.conj().T

    @classmethod
    def orthonormalize(cls, raw) -> "Frame":
        """QR-orthonormalize arbitrary independent columns (diag(R) >= 0)."""
        x = _as_float_array(raw)
        if x.ndim != 2:
            raise DimensionMismatch("expected a 2-D array of columns")
        q, r = np.linalg.qr(x)
        d = np.diagonal(r).copy()
        if np.min(np.abs(d)) <= 1e-13 * max(1.0, float(np.max(np.abs(d), initial=0.0))):
            raise InvalidParameter("columns are numerically rank deficient")
        if np.iscomplexobj(q):
            phase = d / np.abs(d)
            q = q * phase.conj()
        else:
            q = q * np.where(d < 0, -1.0, 1.0)
        return cls(q, check=False)

    @classmethod
    def coordinate(cls, dim: int, indices) -> "Frame":
        """Frame of coordinate vectors e_i for the given 0-based indices."""
        idx = list(indices)
        cols = np.zeros((dim, len(idx)))
        for j, i in enumerate(idx):
            cols[i, j] = 1.0
        return cls(cols, check=False)

    @classmethod
    def haar(cls, dim: int, rank: int, rng: np.random.Generator, field: str = "real") -> "Frame":
        """Haar-distributed frame via QR of a Gaussian matrix."""
        g = rng.standard_normal((dim, rank))
        if field == "complex":
            g = g + 1j * rng.standard_normal((dim, rank))
        return cls.orthonormalize(g)

    def __repr__(self):
        return f"Frame(dim={self.dim}, rank={self.rank})"


@dataclass(frozen=True)
class Spectrum:
    """Full spectral decomposition: non-decreasing eigenvalues and paired columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.eigenvalues.shape[0])

    def frame(self, n: int) -> Frame:
        """Frame of the eigenvectors paired with the lowest n eigenvalues."""
        if not (1 <= n <= self.dim):
            raise RankOutOfRange(f"n = {n} not in [1, {self.dim}]")
        return Frame(self.eigenvectors[:, :n], check=False)


def eigh(h) -> Spectrum:
    """Full Hermitian eigendecomposition with deterministic tie-breaking.

    Eigenvalues ascend; within numerically degenerate clusters the backend
    column order is kept, and each eigenvector is phase-normalized so its
    largest entry is real positive. Deterministic for a fixed input.
    """
    m = as_matrix(h)
    w, u = np.linalg.eigh(m)
    u = _phase_fix(u)
    w = np.asarray(w, dtype=np.float64)
    w.setflags(write=False)
    u.setflags(write=False)
    return Spectrum(w, u)


class DensityResult(NamedTuple):
    frame: Frame
    lam_n: float
    lam_next: float
    gap: float


def density_matrix(
    h,
    n: int,
    *,
    gap_tol: float | None = None,
    allow_degenerate: bool = False,
) -> DensityResult:
    """Frame spanning the lowest-n eigenspace of a Hermitian operator.

    Accepts an operator (or raw matrix) or a precomputed ``Spectrum``.
    Raises ``DegenerateGap`` when lambda_{n+1} - lambda_n <= gap_tol
    (default ``GAP_RTOL * ||H||_2``) unless ``allow_degenerate`` is set, in
    which case the deterministic tie-break of :func:`eigh` selects the frame.
    """
    spec = h if isinstance(h, Spectrum) else eigh(h)
    dim = spec.dim
    if not (1 <= n <= dim):
        raise RankOutOfRange(f"n = {n} not in [1, {dim}]")
    w = spec.eigenvalues
    scale = max(abs(float(w[0])), abs(float(w[-1])))
    if gap_tol is None:
        gap_tol = GAP_RTOL * scale
    lam_n = float(w[n - 1])
    lam_next = float(w[n]) if n < dim else math.inf
    gap = lam_next - lam_n
    if gap <= gap_tol and not allow_degenerate:
        raise DegenerateGap(
            f"gap {gap:.3e} at n = {n} is below tolerance {gap_tol:.3e}"
        )
    return DensityResult(spec.frame(n), lam_n, lam_next, gap)


def subspace_distance(p: Frame, q: Frame, norm: str = "2") -> float:
    """Distance between equal-rank projectors.

    ``norm="2"`` gives ||P - Q||_2, the sine of the largest principal
    angle, equal to sqrt(1 - sigma_min(V*W)^2). The value is evaluated
    through the residual (I - V V*) W, whose largest singular value is the
    same sine; the cosine form loses all accuracy below sqrt(eps), while
    the sine form resolves distances down to machine precision, which the
    convergence tolerances here require. ``norm="fro"`` gives the
    Frobenius distance. The argument order is normalized internally so the
    metric is exactly symmetric, and values are clipped to [0, 1].
    """
    if p.dim != q.dim:
        raise DimensionMismatch(f"frame dims differ: {p.dim} vs {q.dim}")
    if p.rank != q.rank:
        raise DimensionMismatch(f"frame ranks differ: {p.rank} vs {q.rank}")
    a, b = p.columns, q.columns
    key_a, key_b = (a.dtype.str, a.tobytes()), (b.dtype.str, b.tobytes())
    if key_a == key_b:
        return 0.0
    if key_a > key_b:
        a, b = b, a
    residual = b - a @ (a.conj().T @ b)
    sines = np.linalg.svd(residual, compute_uv=False)
    sines = np.clip(sines, 0.0, 1.0)
    if norm == "2":
        return float(sines[0]) if sines.size else 0.0
    if norm == "fro":
        return float(math.sqrt(2.0) * math.sqrt(float(np.sum(sines**2))))
    raise InvalidParameter(f"unknown norm {norm!r}")


def sub_frame(v: Frame, spectrum_order, m: int) -> Frame:
    """Frame of the m columns of ``v`` carrying the lowest paired values.

    ``spectrum_order`` gives the Ritz value paired with each column. Ties
    break deterministically toward the lower column index.
    """
    values = np.asarray(spectrum_order, dtype=np.float64)
    if values.shape != (v.rank,):
        raise DimensionMismatch(
            f"expected {v.rank} paired values, got shape {values.shape}"
        )
    if not (1 <= m <= v.rank):
        raise RankOutOfRange(f"m = {m} not in [1, {v.rank}]")
    order = np.argsort(values, kind="stable")[:m]
    return Frame(v.columns[:, order], check=False)


def qr_completion(v: Frame) -> np.ndarray:
    """Deterministic orthonormal completion of a frame.

    Householder QR of the frame columns in complete mode; the trailing
    N - n columns of Q are returned after the same phase normalization as
    :func:`eigh`, so the completion basis is reproducible.
    """
    q, _ = np.linalg.qr(v.columns, mode="complete")
    comp = q[:, v.rank:]
    if comp.shape[1] == 0:
        return comp
    return _phase_fix(comp)
