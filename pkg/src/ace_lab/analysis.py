"""Executable first- and second-order theory of the iteration map.

Directional derivatives of the density matrix, of the compression, and of
the composed iteration map; Jacobian blocks and their spectra at any fixed
point (the largest eigenvalue is the exact local linear rate); the descent
functional and its curvature along chart directions; and exhaustive
enumeration of the invariant projectors that are the only fixed-point
candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg

from .compression import compress, schur_complement
from .errors import (
    AssumptionViolated,
    DegenerateGap,
    EnumerationCapExceeded,
    NotFixed,
    NotTangent,
    RankOutOfRange,
)
from .iteration import Problem, fixed_point_map
from .linalg import (
    Frame,
    as_matrix,
    eigh,
    norm2,
    qr_completion,
    subspace_distance,
)

#: A frame counts as a fixed point when one map application moves it less than this.
FIXED_POINT_TOL = 1e-8

#: Relative band around equality inside which a candidate is flagged ambiguous.
AMBIGUITY_BAND = 1e-9

_STABLE = "stable"
_UNSTABLE = "unstable"
_NOT_FIXED = "not_fixed"
_AMBIGUOUS = "ambiguous"


# ----------------------------------------------------------------------
# Directional derivatives


def dP_dH(h, n: int, dh, *, gap_tol: float | None = None) -> np.ndarray:
    """Derivative of the rank-n density matrix with respect to its operator.

    First-order response of the spectral projector of ``h`` onto its lowest
    n eigenvectors under the Hermitian perturbation ``dh``:

        sum_{i<=n} sum_{a>n} (mu_i - mu_a)^{-1} u_a (u_a* dH u_i) u_i* + h.c.

    The result is Hermitian and tangent at the projector (both diagonal
    blocks vanish). Requires a positive gap at n.
    """
    hm = as_matrix(h)
    dm = as_matrix(dh)
    spec = eigh(hm)
    dim = spec.dim
    if not (1 <= n <= dim):
        raise RankOutOfRange(f"n = {n} not in [1, {dim}]")
    w = spec.eigenvalues
    scale = max(abs(float(w[0])), abs(float(w[-1])))
    tol = 1e-12 * scale if gap_tol is None else gap_tol
    if n == dim:
        # The projector is the identity for every operator; flat response.
        return np.zeros(hm.shape, dtype=np.result_type(hm.dtype, np.float64))
    if w[n] - w[n - 1] <= tol:
        raise DegenerateGap(f"gap {w[n] - w[n - 1]:.3e} at n = {n} is not positive")
    occ = spec.eigenvectors[:, :n]
    virt = spec.eigenvectors[:, n:]
    coup = virt.conj().T @ dm @ occ                      # (N-n) x n
    denom = w[:n][None, :] - w[n:][:, None]              # mu_i - mu_a < 0
    half = virt @ (coup / denom) @ occ.conj().T
    return half + half.conj().T


def _check_tangent(p: Frame, dp: np.ndarray, tol: float = 1e-10) -> None:
    scale = norm2(dp)
    if scale == 0.0:
        return
    if norm2(dp - dp.conj().T) > tol * scale:
        raise NotTangent("perturbation is not Hermitian")
    cols = p.columns
    inside = cols.conj().T @ dp @ cols
    if norm2(inside) > tol * scale:
        raise NotTangent("P (dP) P block does not vanish")
    dense = p.projector()
    outside = dp - dense @ dp - dp @ dense + dense @ dp @ dense
    if norm2(outside) > tol * scale:
        raise NotTangent("complementary diagonal block of dP does not vanish")


def dBtilde_dP(b, p: Frame, dp, t: float = 0.0) -> np.ndarray:
    """Derivative of the adaptive compression with respect to the projector.

    For a tangent perturbation dP of P = VV* and shifted operator
    B_t = B - t*I:

        (B_t - Btilde_t[P]) (dP) (P B_t P)^+ B_t + h.c.

    The shift contributes nothing because it enters the compression as an
    additive multiple of the identity.
    """
    dp = np.asarray(dp)
    _check_tangent(p, dp)
    bt = as_matrix(b) - t * np.eye(p.dim, dtype=as_matrix(b).dtype)
    comp = compress(b, p, t)
    btilde_t = comp.materialize().matrix - t * np.eye(p.dim, dtype=bt.dtype)
    cols = p.columns
    gram_inv = comp.gram_inv                             # (V* B_t V)^{-1}
    pseudo = cols @ gram_inv @ cols.conj().T             # (P B_t P)^+
    half = (bt - btilde_t) @ dp @ pseudo @ bt
    return half + half.conj().T


# ----------------------------------------------------------------------
# Jacobian blocks at a fixed point


@dataclass(frozen=True)
class JacobianBlocks:
    """Blockwise Jacobian of the iteration map at a fixed point.

    ``blocks[i]`` acts on the i-th tangent column in the recorded
    completion basis; the union of the block spectra is the spectrum of
    the full Jacobian, and ``gamma`` (the largest eigenvalue) is the exact
    local linear rate at an attracting fixed point.
    """

    at_frame: Frame
    completion_basis: np.ndarray
    mu: np.ndarray                       # eigenvalues of A+B on the frame
    blocks: list
    block_eigenvalues: list
    schur: np.ndarray                    # Schur complement of B - t in the basis
    complement_block: np.ndarray         # (A+B) restricted to the completion
    gamma: float

    @property
    def n(self) -> int:
        return self.at_frame.rank

    def matricized(self) -> np.ndarray:
        """Full (N-n)n square Jacobian, block-diagonal in the tangent columns."""
        return scipy.linalg.block_diag(*self.blocks)

    def block_eigendecomposition(self, i: int):
        """Eigenvalues and eigenvectors of block i.

        Uses the symmetrizing similarity transform by (M2 - mu_i)^{1/2}
        when that factor is positive definite (numerically stable, real
        spectrum guaranteed); otherwise falls back to a general dense
        eigensolver.
        """
        shifted = self.complement_block - self.mu[i] * np.eye(self.complement_block.shape[0])
        w = np.linalg.eigvalsh(shifted)
        if w[0] > 0:
            vals, vecs = np.linalg.eigh(shifted)
            root = (vecs * np.sqrt(vals)) @ vecs.conj().T
            sym = root @ np.linalg.solve(-self.schur, root)
            sym = (sym + sym.conj().T) / 2
            wj, yj = np.linalg.eigh(np.eye(sym.shape[0]) + sym)
            eigvals = 1.0 / wj  # wj ascends, so these descend
            raw = np.linalg.solve(root, yj)
            eigvecs = raw / np.linalg.norm(raw, axis=0)
            return eigvals, eigvecs
        eigvals, eigvecs = scipy.linalg.eig(self.blocks[i])
        order = np.argsort(-eigvals.real, kind="stable")
        eigvals = eigvals[order]
        eigvecs = eigvecs[:, order]
        if np.max(np.abs(eigvals.imag)) <= 1e-9 * max(1.0, np.max(np.abs(eigvals.real))):
            eigvals = eigvals.real
            if not np.iscomplexobj(self.blocks[i]):
                eigvecs = eigvecs.real
        return eigvals, eigvecs


def _require_fixed(problem: Problem, p_f: Frame, tol: float = FIXED_POINT_TOL):
    res = fixed_point_map(problem, p_f)
    drift = subspace_distance(res.frame, p_f)
    if drift >= tol:
        raise NotFixed(f"frame moves by {drift:.3e} under the map (tol {tol:.1e})")
    if res.gap <= 1e-12 * max(problem.op_norm, 1.0):
        raise DegenerateGap("compressed operator has no spectral gap at n")
    return res


def jacobian_blocks(problem: Problem, p_f: Frame, *, check_fixed: bool = True) -> JacobianBlocks:
    """Jacobian blocks J_i = [I + (-S22)^{-1} (M2 - mu_i)]^{-1} at a fixed point.

    Blocks are expressed in the deterministic QR completion basis of the
    frame. ``mu`` are the eigenvalues of A+B on the frame, M2 is A+B
    restricted to the completion, and S22 is the Schur complement of the
    shifted expensive operator in the same basis. Eigenvalues of every
    block are real and positive under the genericity assumptions.
    """
    if check_fixed:
        _require_fixed(problem, p_f)
    comp_basis = qr_completion(p_f)
    ab = problem.A.matrix + problem.B.matrix
    cols = p_f.columns
    on_frame = cols.conj().T @ ab @ cols
    on_frame = (on_frame + on_frame.conj().T) / 2
    mu = np.linalg.eigvalsh(on_frame)
    m2 = comp_basis.conj().T @ ab @ comp_basis
    m2 = (m2 + m2.conj().T) / 2
    s22 = schur_complement(problem.B, p_f, problem.t)
    size = m2.shape[0]
    eye = np.eye(size, dtype=m2.dtype)
    blocks = []
    block_eigs = []
    gamma = 0.0
    neg_s22 = -s22
    for mu_i in mu:
        j_i = np.linalg.inv(eye + np.linalg.solve(neg_s22, m2 - mu_i * eye))
        blocks.append(j_i)
        shifted_w = np.linalg.eigvalsh(m2 - mu_i * eye)
        if shifted_w[0] > 0:
            vals, vecs = np.linalg.eigh(m2 - mu_i * eye)
            root = (vecs * np.sqrt(vals)) @ vecs.conj().T
            sym = root @ np.linalg.solve(neg_s22, root)
            sym = (sym + sym.conj().T) / 2
            w = 1.0 / np.linalg.eigvalsh(eye + sym)[::-1]
        else:
            ev = scipy.linalg.eigvals(j_i)
            if np.max(np.abs(ev.imag)) > 1e-9 * max(1.0, np.max(np.abs(ev.real))):
                raise AssumptionViolated(
                    "Jacobian block has a significantly complex eigenvalue; "
                    "the problem violates the genericity assumptions"
                )
            w = np.sort(ev.real)[::-1]
        if np.min(w) <= 0:
            raise AssumptionViolated("Jacobian block has a non-positive eigenvalue")
        block_eigs.append(np.asarray(w, dtype=np.float64))
        gamma = max(gamma, float(np.max(w)))
    return JacobianBlocks(
        at_frame=p_f,
        completion_basis=comp_basis,
        mu=np.asarray(mu, dtype=np.float64),
        blocks=blocks,
        block_eigenvalues=block_eigs,
        schur=s22,
        complement_block=m2,
        gamma=gamma,
    )


def dF_dP(problem: Problem, p_f: Frame, dp) -> np.ndarray:
    """Derivative of the iteration map at an (approximate) fixed point.

    Assembled from the Jacobian blocks as sum_i Z_i (dP) u_i u_i* + h.c.,
    where u_i are the eigenvectors of A+B spanning the frame and Z_i acts
    as block i on the orthogonal complement.
    """
    dp = np.asarray(dp)
    jb = jacobian_blocks(problem, p_f)
    ab = problem.A.matrix + problem.B.matrix
    cols = p_f.columns
    on_frame = cols.conj().T @ ab @ cols
    on_frame = (on_frame + on_frame.conj().T) / 2
    _, y = np.linalg.eigh(on_frame)
    u = cols @ y                                   # eigenvectors of A+B, ascending
    comp = jb.completion_basis
    out = np.zeros_like(dp, dtype=np.result_type(dp.dtype, u.dtype, comp.dtype))
    for i in range(jb.n):
        z_i = comp @ jb.blocks[i] @ comp.conj().T
        ui = u[:, i : i + 1]
        out = out + z_i @ dp @ (ui @ ui.conj().T)
    return out + out.conj().T


def gamma_bound(problem: Problem) -> dict:
    """Exact local rate at the solution and its closed-form upper bounds.

    ``gamma_exact <= bound_schur <= bound_b < 1`` where bound_schur uses
    the Schur complement norm and bound_b uses the full shifted-operator
    norm against the spectral gap.
    """
    if problem.truth is None or problem.gap is None:
        raise DegenerateGap("ground truth with a positive gap is required")
    jb = jacobian_blocks(problem, problem.truth)
    s_norm = norm2(jb.schur)
    lam_g = problem.gap
    return {
        "gamma_exact": jb.gamma,
        "bound_schur": s_norm / (lam_g + s_norm),
        "bound_b": problem.b_shift_norm / (lam_g + problem.b_shift_norm),
        "lambda_g": lam_g,
        "schur_norm": s_norm,
        "b_shift_norm": problem.b_shift_norm,
    }


# ----------------------------------------------------------------------
# Descent functional, chart, curvature


def functional_F(problem: Problem, q: Frame) -> float:
    """Sum of the lowest n eigenvalues of A + Btilde[Q, t].

    Non-increasing along iteration trajectories, globally minimized at the
    solution; the shift is restored inside the compression so the value is
    on the scale of A + B.
    """
    comp = compress(problem.B, q, problem.t, counter=problem.matvecs)
    op = problem.A.matrix + comp.materialize().matrix
    w = np.linalg.eigvalsh(op)
    return float(np.sum(w[: problem.n]))


def tangent_chart(p_f: Frame, x) -> Frame:
    """Second-order retraction from tangent coordinates to frames.

    ``x`` is an (N-n) x n matrix of coordinates against the deterministic
    QR completion of the frame; the result is the frame of the first n
    columns of [V, Q] exp([[0, -X*], [X, 0]]). The zero matrix maps to the
    frame itself exactly, and to first order the projector moves by
    ||X||_2.
    """
    x = np.asarray(x)
    comp = qr_completion(p_f)
    n = p_f.rank
    dim = p_f.dim
    if x.shape != (dim - n, n):
        raise RankOutOfRange(f"chart coordinates must be {(dim - n, n)}, got {x.shape}")
    if x.size == 0 or not np.any(x):
        return p_f
    dtype = np.result_type(p_f.columns.dtype, x.dtype)
    gen = np.zeros((dim, dim), dtype=dtype)
    gen[n:, :n] = x
    gen[:n, n:] = -x.conj().T
    basis = np.concatenate([p_f.columns, comp], axis=1).astype(dtype)
    rotated = basis @ scipy.linalg.expm(gen)
    return Frame(rotated[:, :n], check=False)


def chart_direction(jb: JacobianBlocks, block_index: int, mode_index: int = 0):
    """Eigen-direction of one Jacobian block as chart coordinates.

    Returns ``(sigma, X)`` where sigma is the selected eigenvalue of block
    ``block_index`` (modes sorted by descending eigenvalue) and X is the
    (N-n) x n coordinate matrix supported on that block column.
    """
    vals, vecs = jb.block_eigendecomposition(block_index)
    sigma = float(np.real(vals[mode_index]))
    x = np.zeros((jb.completion_basis.shape[1], jb.n), dtype=vecs.dtype)
    x[:, block_index] = vecs[:, mode_index]
    return sigma, x


def saddle_curvature(problem: Problem, p_f: Frame, x, *, step: float = 1e-4) -> dict:
    """First and second derivatives of t -> F(chart(t X)) at a fixed point.

    The first derivative vanishes at every fixed point (reported via
    central differences). When X is supported on a single tangent column
    and is an eigenvector of that Jacobian block with eigenvalue sigma,
    the curvature has the closed form

        2 (1 - sigma) X_j* (Btilde[P_f] - B)_22 X_j,

    negative exactly along the expanding directions of a spurious fixed
    point. The central-difference value is always reported alongside.
    """
    x = np.asarray(x)
    _require_fixed(problem, p_f)

    def g(s: float) -> float:
        return functional_F(problem, tangent_chart(p_f, s * x))

    g0 = g(0.0)
    gp = g(step)
    gm = g(-step)
    first = (gp - gm) / (2 * step)
    second_fd = (gp - 2 * g0 + gm) / step**2

    second_closed = None
    col_norms = np.linalg.norm(x, axis=0)
    j = int(np.argmax(col_norms))
    single_block = np.all(np.delete(col_norms, j) <= 1e-12 * max(col_norms[j], 1e-300))
    if single_block and col_norms[j] > 0:
        jb = jacobian_blocks(problem, p_f, check_fixed=False)
        vec = x[:, j]
        applied = jb.blocks[j] @ vec
        sigma = complex(vec.conj() @ applied) / float(np.real(vec.conj() @ vec))
        residual = float(np.linalg.norm(applied - sigma * vec))
        if abs(sigma.imag) <= 1e-9 * max(1.0, abs(sigma.real)) and residual <= 1e-6 * float(
            np.linalg.norm(vec)
        ):
            curvature_form = float(np.real(vec.conj() @ (-jb.schur) @ vec))
            second_closed = 2.0 * (1.0 - sigma.real) * curvature_form
    return {
        "first_deriv": first,
        "second_deriv": second_fd if second_closed is None else second_closed,
        "second_deriv_fd": second_fd,
    }


# ----------------------------------------------------------------------
# Fixed-point landscape


@dataclass(frozen=True)
class FixedPointReport:
    """Classification of one invariant projector P_tau of A + B.

    ``tau`` is the 1-based increasing index list selecting n eigenvectors;
    under the genericity assumptions P_tau is a fixed point exactly when
    the largest selected eigenvalue sits below the bottom of the
    complementary spectrum of the compressed operator.
    """

    tau: tuple
    projector: Frame
    is_fixed: bool
    mu_tau: float
    lambda_tau_n: float
    stability: str
    max_jacobian_eigenvalue: float | None

    def to_dict(self) -> dict:
        return {
            "tau": list(self.tau),
            "is_fixed": self.is_fixed,
            "mu_tau": self.mu_tau,
            "lambda_tau_n": self.lambda_tau_n,
            "stability": self.stability,
            "max_jacobian_eigenvalue": self.max_jacobian_eigenvalue,
        }


def _require_spectrum(problem: Problem):
    if problem.spectrum is None:
        raise AssumptionViolated("problem carries no spectrum of A + B; build with compute_spectrum")
    return problem.spectrum


def _check_cap(problem: Problem, cap: int) -> None:
    count = math.comb(problem.dim, problem.n)
    if count > cap:
        raise EnumerationCapExceeded(
            f"binom({problem.dim}, {problem.n}) = {count} exceeds the cap {cap}"
        )


def _distinct_separation(problem: Problem) -> float:
    w = _require_spectrum(problem).eigenvalues
    return float(np.min(np.diff(w))) if w.shape[0] > 1 else math.inf


def _candidate(problem: Problem, tau: tuple[int, ...]):
    """Frame, complementary operator bottom, and top selected eigenvalue for tau (0-based)."""
    spec = _require_spectrum(problem)
    cols = spec.eigenvectors[:, list(tau)]
    frame = Frame(cols, check=False)
    rest = [i for i in range(problem.dim) if i not in tau]
    comp_cols = spec.eigenvectors[:, rest]
    comp_op = compress(problem.B, frame, problem.t, counter=problem.matvecs)
    op = problem.A.matrix + comp_op.materialize().matrix
    block = comp_cols.conj().T @ op @ comp_cols
    block = (block + block.conj().T) / 2
    mu_tau = float(np.linalg.eigvalsh(block)[0])
    lam_tau_n = float(spec.eigenvalues[tau[-1]])
    return frame, mu_tau, lam_tau_n


def enumerate_invariant_projectors(
    problem: Problem,
    *,
    enumeration_cap: int = 100_000,
    with_jacobians: bool = True,
) -> list[FixedPointReport]:
    """Classify every invariant projector of A + B as a fixed-point candidate.

    One report per increasing index set tau. Candidates inside the
    ambiguity band around equality are flagged ``ambiguous`` rather than
    silently classified; fixed candidates are further labeled stable or
    unstable by the largest Jacobian eigenvalue.
    """
    _check_cap(problem, enumeration_cap)
    sep = _distinct_separation(problem)
    band = AMBIGUITY_BAND * max(problem.op_norm, 1.0)
    if sep <= band:
        raise AssumptionViolated(
            f"A + B has nearly repeated eigenvalues (min separation {sep:.3e})"
        )
    reports = []
    for tau0 in combinations(range(problem.dim), problem.n):
        frame, mu_tau, lam_tau_n = _candidate(problem, tau0)
        tau1 = tuple(i + 1 for i in tau0)
        if lam_tau_n > mu_tau + band:
            reports.append(
                FixedPointReport(tau1, frame, False, mu_tau, lam_tau_n, _NOT_FIXED, None)
            )
            continue
        if abs(lam_tau_n - mu_tau) <= band:
            reports.append(
                FixedPointReport(tau1, frame, False, mu_tau, lam_tau_n, _AMBIGUOUS, None)
            )
            continue
        if not with_jacobians:
            reports.append(
                FixedPointReport(tau1, frame, True, mu_tau, lam_tau_n, "fixed", None)
            )
            continue
        jb = jacobian_blocks(problem, frame, check_fixed=False)
        stability = _STABLE if jb.gamma < 1.0 else _UNSTABLE
        reports.append(
            FixedPointReport(tau1, frame, True, mu_tau, lam_tau_n, stability, jb.gamma)
        )
    return reports


def genericity_check(
    problem: Problem,
    *,
    enumeration_cap: int = 100_000,
    distinct_tol: float | None = None,
    margin_tol: float | None = None,
) -> dict:
    """Certify the two genericity assumptions on a problem.

    Distinctness of the eigenvalues of A + B, and a nonzero margin between
    the top selected eigenvalue and the complementary bottom at every
    invariant projector. Both margins must exceed their tolerances for the
    problem to be certified.
    """
    _check_cap(problem, enumeration_cap)
    scale = max(problem.op_norm, 1.0)
    if distinct_tol is None:
        distinct_tol = AMBIGUITY_BAND * scale
    if margin_tol is None:
        margin_tol = AMBIGUITY_BAND * scale
    sep = _distinct_separation(problem)
    distinct = sep > distinct_tol
    margin = math.inf
    violating = None
    for tau0 in combinations(range(problem.dim), problem.n):
        _, mu_tau, lam_tau_n = _candidate(problem, tau0)
        m = abs(lam_tau_n - mu_tau)
        if m < margin:
            margin = m
            violating = tuple(i + 1 for i in tau0)
    certified = bool(distinct and margin > margin_tol)
    return {
        "distinct_eigenvalues": distinct,
        "min_eigen_separation": sep,
        "assumption2_margin": margin,
        "violating_tau": None if margin > margin_tol else list(violating),
        "certified": certified,
    }


def nearest_invariant_projector(
    problem: Problem,
    q: Frame,
    *,
    enumeration_cap: int = 100_000,
) -> tuple[tuple, float]:
    """Invariant projector closest to ``q`` in subspace distance.

    Ties break to the lexicographically smallest index set. Returns the
    1-based index tuple and the distance.
    """
    _check_cap(problem, enumeration_cap)
    spec = _require_spectrum(problem)
    best_tau = None
    best_dist = math.inf
    for tau0 in combinations(range(problem.dim), problem.n):
        frame = Frame(spec.eigenvectors[:, list(tau0)], check=False)
        d = subspace_distance(q, frame)
        if d < best_dist:
            best_dist = d
            best_tau = tuple(i + 1 for i in tau0)
    return best_tau, best_dist
