"""The density-matrix fixed-point iteration and its trace machinery.

One outer step maps a rank-n frame Q to the density matrix of
A + compress(B, Q, t); the expensive operator B is touched exactly n
times per step (building W = (B - t) Q). The inner eigenproblem is solved
by full dense diagonalization, which keeps inner-solver noise out of rate
measurements at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .compression import MatvecCounter, compress
from .errors import InsufficientTrace, InvalidParameter, RankOutOfRange, ShiftInsufficient
from .linalg import (
    Frame,
    HermitianOperator,
    Spectrum,
    density_matrix,
    eigh,
    norm2,
    subspace_distance,
)
from .textfmt import csv_cell

#: Shift validation threshold: lambda_max(B - t) must be below -EPS_SHIFT*||B||.
EPS_SHIFT = 1e-12

#: Terminal statuses of a run.
CONVERGED_TO_TRUTH = "converged_to_truth"
CONVERGED_TO_OTHER = "converged_to_other_fixed_point"
CONVERGED = "converged"  # converged, but no ground truth attached to classify
MAX_ITER = "max_iter"
STALLED = "stalled"


def auto_shift(b, margin: float = 0.1) -> float:
    """Shift policy: 0 when B is safely negative definite, else above lambda_max(B).

    Returns 0 when lambda_max(B) < -margin*||B||_2 and
    lambda_max(B) + margin*||B||_2 otherwise. A zero operator yields t = 0;
    the downstream compression then reports ShiftInsufficient rather than
    hiding the degeneracy.
    """
    if margin < 0:
        raise InvalidParameter("margin must be nonnegative for the default policy")
    w = np.linalg.eigvalsh(np.asarray(b.matrix if isinstance(b, HermitianOperator) else b))
    lam_max = float(w[-1])
    scale = max(abs(float(w[0])), abs(lam_max))
    if lam_max < -margin * scale:
        return 0.0
    return lam_max + margin * scale


@dataclass
class Problem:
    """Bundle (A, B, n, resolved shift t) with optional ground-truth metadata.

    ``spectrum`` holds the full eigendecomposition of A + B when known;
    ``truth`` is the frame of its lowest-n eigenvectors. The matvec counter
    is a monotonic atomic tally across every compression built for this
    problem; per-run tallies live in the traces.
    """

    A: HermitianOperator
    B: HermitianOperator
    n: int
    t: float
    spectrum: Spectrum | None = None
    gap: float | None = None
    truth: Frame | None = None
    op_norm: float = 0.0
    b_norm: float = 0.0
    b_shift_norm: float = 0.0
    label: str = ""
    meta: dict = field(default_factory=dict)
    matvecs: MatvecCounter = field(default_factory=MatvecCounter)

    @property
    def dim(self) -> int:
        return self.A.dim

    @property
    def eigenvalues(self) -> np.ndarray | None:
        return None if self.spectrum is None else self.spectrum.eigenvalues

    def __repr__(self):
        tag = f" {self.label!r}" if self.label else ""
        return f"Problem(N={self.dim}, n={self.n}, t={self.t}{tag})"

    @classmethod
    def build(
        cls,
        a,
        b,
        n: int,
        *,
        shift: float | str = "auto",
        shift_margin: float = 0.1,
        compute_spectrum: bool = True,
        label: str = "",
        meta: dict | None = None,
    ) -> "Problem":
        """Validate and assemble a problem, resolving the shift policy.

        Requires 1 <= n < N and B - t*I negative definite. When
        ``compute_spectrum`` is set (default), the true spectrum of A + B is
        computed by dense diagonalization and the ground-truth frame is
        attached whenever the gap at n is positive.
        """
        a_op = a if isinstance(a, HermitianOperator) else HermitianOperator(a)
        b_op = b if isinstance(b, HermitianOperator) else HermitianOperator(b)
        if a_op.dim != b_op.dim:
            raise InvalidParameter(f"A and B dims differ: {a_op.dim} vs {b_op.dim}")
        if not (1 <= n < a_op.dim):
            raise RankOutOfRange(f"n = {n} not in [1, {a_op.dim - 1}]")

        wb = np.linalg.eigvalsh(b_op.matrix)
        b_norm = max(abs(float(wb[0])), abs(float(wb[-1])))
        t = auto_shift(b_op, shift_margin) if shift == "auto" else float(shift)
        if float(wb[-1]) - t >= -EPS_SHIFT * b_norm:
            raise ShiftInsufficient(
                f"lambda_max(B - t) = {float(wb[-1]) - t:.3e} with t = {t}; "
                "B - t*I must be negative definite"
            )
        b_shift_norm = max(abs(float(wb[0]) - t), abs(float(wb[-1]) - t))

        spectrum = None
        gap = None
        truth = None
        op_norm = norm2(a_op.matrix + b_op.matrix)
        if compute_spectrum:
            spectrum = eigh(a_op.matrix + b_op.matrix)
            w = spectrum.eigenvalues
            gap = float(w[n] - w[n - 1])
            op_norm = max(abs(float(w[0])), abs(float(w[-1])))
            if gap > 1e-12 * op_norm:
                truth = spectrum.frame(n)
        return cls(
            A=a_op,
            B=b_op,
            n=n,
            t=t,
            spectrum=spectrum,
            gap=gap,
            truth=truth,
            op_norm=op_norm,
            b_norm=b_norm,
            b_shift_norm=b_shift_norm,
            label=label,
            meta=dict(meta or {}),
        )


class MapResult(NamedTuple):
    frame: Frame
    eigenvalues: np.ndarray  # lowest n eigenvalues of A + compress(B, Q, t)
    gap: float
    degenerate: bool


def fixed_point_map(problem: Problem, q: Frame, *, counter=None) -> MapResult:
    """One application of the iteration map: Q -> density matrix of A + B~[Q, t].

    The compressed operator already restores the shift, so the reported
    eigenvalues live on the scale of A + B with no further correction. A
    degenerate inner gap is resolved by the deterministic tie-break of the
    eigensolver and flagged in the result rather than raised.
    """
    counters = [problem.matvecs]
    if counter is not None:
        counters.append(counter)
    comp = compress(problem.B, q, problem.t, counter=counters)
    op = problem.A.matrix + comp.materialize().matrix
    spec = eigh(op)
    scale = max(abs(float(spec.eigenvalues[0])), abs(float(spec.eigenvalues[-1])))
    dens = density_matrix(spec, problem.n, allow_degenerate=True)
    degenerate = dens.gap <= 1e-12 * scale
    return MapResult(dens.frame, spec.eigenvalues[: problem.n].copy(), dens.gap, degenerate)


@dataclass
class TraceStep:
    """One recorded outer step; ``k = 0`` is the initial frame."""

    k: int
    eigenvalues: np.ndarray | None
    frame: Frame | None
    dist_prev: float | None
    dist_truth: float | None
    delta: float | None
    b_matvecs: int
    degenerate_gap: bool = False


@dataclass
class IterationTrace:
    steps: list[TraceStep]
    terminal_status: str
    tol: float
    op_norm: float
    n: int
    label: str = ""

    @property
    def iters(self) -> int:
        return self.steps[-1].k

    @property
    def final_frame(self) -> Frame | None:
        return self.steps[-1].frame

    @property
    def final_distance(self) -> float | None:
        return self.steps[-1].dist_prev

    @property
    def final_distance_to_truth(self) -> float | None:
        return self.steps[-1].dist_truth

    def distance_to_truth_series(self) -> tuple[np.ndarray, np.ndarray]:
        ks, ds = [], []
        for s in self.steps:
            if s.dist_truth is not None:
                ks.append(s.k)
                ds.append(s.dist_truth)
        return np.asarray(ks, dtype=np.intp), np.asarray(ds, dtype=np.float64)


def run(
    problem: Problem,
    *,
    tol: float = 1e-10,
    max_iter: int = 500,
    init: Frame | str = "eigvecs_of_A",
    keep_frames: bool = True,
) -> IterationTrace:
    """Iterate the map until consecutive projectors are closer than ``tol``.

    The convergence metric is the spectral-norm subspace distance between
    consecutive projectors. When ground truth is attached, a converged run
    is classified against it (distance below 100*tol counts as the truth).
    Exceeding ``max_iter`` is encoded in the terminal status, not raised.
    Stalls (five consecutive steps with no eigenvalue descent while the
    projector still moves more than ``tol``) are reported as ``stalled``.
    """
    if isinstance(init, Frame):
        if init.dim != problem.dim or init.rank != problem.n:
            raise InvalidParameter(
                f"init frame is {init.dim}x{init.rank}, expected {problem.dim}x{problem.n}"
            )
        current = init
    elif init == "eigvecs_of_A":
        current = density_matrix(eigh(problem.A), problem.n, allow_degenerate=True).frame
    else:
        raise InvalidParameter(f"unknown init mode {init!r}")

    truth = problem.truth
    local = MatvecCounter()

    def dist_truth(f: Frame) -> float | None:
        return None if truth is None else subspace_distance(f, truth)

    steps = [
        TraceStep(
            k=0,
            eigenvalues=None,
            frame=current if keep_frames else None,
            dist_prev=None,
            dist_truth=dist_truth(current),
            delta=None,
            b_matvecs=0,
        )
    ]
    status = MAX_ITER
    stall_run = 0
    eps_stall = np.finfo(np.float64).eps * problem.op_norm
    prev_frame = current
    last_frame = current
    prev_eigs: np.ndarray | None = None

    for k in range(1, max_iter + 1):
        res = fixed_point_map(problem, prev_frame, counter=local)
        last_frame = res.frame
        d_prev = subspace_distance(res.frame, prev_frame)
        steps.append(
            TraceStep(
                k=k,
                eigenvalues=res.eigenvalues,
                frame=res.frame if keep_frames else None,
                dist_prev=d_prev,
                dist_truth=dist_truth(res.frame),
                delta=None,
                b_matvecs=local.count,
                degenerate_gap=res.degenerate,
            )
        )
        if prev_eigs is not None:
            steps[k - 1].delta = float(np.sum(prev_eigs - res.eigenvalues))

        if d_prev < tol:
            if truth is None:
                status = CONVERGED
            elif steps[-1].dist_truth < 100 * tol:
                status = CONVERGED_TO_TRUTH
            else:
                status = CONVERGED_TO_OTHER
            break

        # Stalls mean the projector stopped improving while the eigenvalues
        # are flat; a converging tail also has flat eigenvalues (they settle
        # twice as fast), so a step only counts toward a stall when the
        # consecutive distance failed to shrink as well.
        still_moving = steps[k - 1].dist_prev is not None and d_prev < 0.9 * steps[k - 1].dist_prev
        if steps[k - 1].delta is not None and steps[k - 1].delta < eps_stall and not still_moving:
            stall_run += 1
            if stall_run >= 5:
                status = STALLED
                break
        else:
            stall_run = 0

        prev_frame, prev_eigs = res.frame, res.eigenvalues

    if steps[-1].frame is None:
        steps[-1].frame = last_frame
    return IterationTrace(
        steps=steps,
        terminal_status=status,
        tol=tol,
        op_norm=problem.op_norm,
        n=problem.n,
        label=problem.label,
    )


class RateFit(NamedTuple):
    rate: float
    window: tuple[int, int]
    r_squared: float
    n_points: int


def fit_geometric_rate(
    ks,
    dists,
    *,
    floor: float,
    ceiling: float = 0.1,
    min_points: int = 6,
) -> RateFit:
    """Least-squares slope of log(dist) over the qualifying window.

    A point qualifies when ``floor < dist < ceiling``; the window is the
    largest maximal contiguous run of qualifying points, with ties broken
    toward the latest run so the asymptotic tail wins. The fitted rate is
    exp(slope) of the ordinary least-squares line of log(dist) against k.
    """
    ks = np.asarray(ks, dtype=np.float64)
    dists = np.asarray(dists, dtype=np.float64)
    ok = (dists > floor) & (dists < ceiling)
    if not ok.any():
        raise InsufficientTrace("no trace points inside the qualifying band")
    # Largest maximal contiguous run of qualifying indices, ties to the
    # latest run; isolated noise blips near the floor stay excluded.
    idx = np.flatnonzero(ok)
    breaks = np.flatnonzero(np.diff(idx) > 1)
    runs = np.split(idx, breaks + 1)
    window = max(runs, key=lambda r: (r.size, r[-1]))
    if window.size < min_points:
        raise InsufficientTrace(
            f"only {window.size} qualifying trailing points, need {min_points}"
        )
    x = ks[window]
    y = np.log(dists[window])
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(
        rate=float(math.exp(slope)),
        window=(int(ks[window[0]]), int(ks[window[-1]])),
        r_squared=r2,
        n_points=int(window.size),
    )


def estimate_rate(trace: IterationTrace, *, ceiling: float = 0.1, min_points: int = 6) -> RateFit:
    """Empirical asymptotic rate of the distance-to-truth decay of a trace."""
    ks, ds = trace.distance_to_truth_series()
    if ks.size == 0:
        raise InsufficientTrace("trace has no distance-to-truth records")
    dim = trace.steps[0].frame.dim if trace.steps[0].frame is not None else 0
    if dim == 0:
        for s in trace.steps:
            if s.frame is not None:
                dim = s.frame.dim
                break
    floor = 10 * np.finfo(np.float64).eps * max(dim, 1)
    return fit_geometric_rate(ks, ds, floor=floor, ceiling=ceiling, min_points=min_points)


def trace_to_csv(trace: IterationTrace, path_or_file) -> None:
    """Write the per-step table: k, lambda_1..n, dist_prev, dist_truth, delta, b_matvecs."""
    n = trace.n
    header = ["k"] + [f"lambda_{i + 1}" for i in range(n)] + [
        "dist_prev",
        "dist_truth",
        "delta",
        "b_matvecs",
    ]

    def row(s: TraceStep) -> list[str]:
        lams = [None] * n if s.eigenvalues is None else list(s.eigenvalues)
        return [csv_cell(v) for v in [s.k, *lams, s.dist_prev, s.dist_truth, s.delta, s.b_matvecs]]

    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", encoding="ascii") if own else path_or_file
    try:
        fh.write(",".join(header) + "\n")
        for s in trace.steps:
            fh.write(",".join(row(s)) + "\n")
    finally:
        if own:
            fh.close()


def run_summary(problem: Problem, trace: IterationTrace) -> dict:
    """Machine-readable run summary (deterministic given the trace)."""
    try:
        fit = estimate_rate(trace)
        rate, r2 = fit.rate, fit.r_squared
        window = list(fit.window)
    except InsufficientTrace:
        rate, r2, window = None, None, None
    return {
        "status": trace.terminal_status,
        "iters": trace.iters,
        "final_distance": trace.final_distance,
        "final_distance_to_truth": trace.final_distance_to_truth,
        "estimated_rate": rate,
        "rate_fit_r_squared": r2,
        "rate_fit_window": window,
        "b_matvecs": trace.steps[-1].b_matvecs,
        "n": problem.n,
        "N": problem.dim,
        "t": problem.t,
        "tol": trace.tol,
    }
