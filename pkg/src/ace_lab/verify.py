"""Executable invariant suite aggregating every module's properties.

Each check is a callable taking ``quick`` (smaller sample sizes) and
raising ``AssertionError`` on violation. The CLI ``verify`` subcommand
runs the registry and reports one pass/fail line per invariant.
"""

from __future__ import annotations

import numpy as np

from . import mmio
from .analysis import (
    chart_direction,
    dBtilde_dP,
    dF_dP,
    dP_dH,
    enumerate_invariant_projectors,
    functional_F,
    gamma_bound,
    genericity_check,
    jacobian_blocks,
    nearest_invariant_projector,
    saddle_curvature,
    tangent_chart,
)
from .compression import MatvecCounter, compress
from .iteration import Problem, auto_shift, fixed_point_map, run
from .linalg import (
    Frame,
    HermitianOperator,
    density_matrix,
    eigh,
    norm2,
    qr_completion,
    subspace_distance,
)
from .problems import EnsembleSpec, model_1d_exchange, random_problem


def _rng(*tags) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(tags)))


def _random_hermitian(dim: int, rng: np.random.Generator, field: str = "real") -> np.ndarray:
    g = rng.standard_normal((dim, dim))
    if field == "complex":
        g = g + 1j * rng.standard_normal((dim, dim))
    return (g + g.conj().T) / 2


def _negative_definite(dim: int, rng: np.random.Generator, field: str = "real") -> np.ndarray:
    c = rng.standard_normal((dim, dim))
    if field == "complex":
        c = (c + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    s = c @ c.conj().T + 0.01 * np.eye(dim)
    s = (s + s.conj().T) / 2
    return -s / float(np.linalg.eigvalsh(s)[-1])


def _problem(seed: int, dim: int = 12, n: int = 3, gap: float = 1.0) -> Problem:
    return random_problem(EnsembleSpec(N=dim, n=n, gap=gap, b_norm=1.0, seed=seed))


# ----------------------------------------------------------------------
# linalg


def check_frame_invariants(quick: bool) -> None:
    trials = 10 if quick else 40
    for seed in range(trials):
        for field in ("real", "complex"):
            rng = _rng(seed, 1, hash(field) & 0xFF)
            f = Frame.haar(16, 5, rng, field)
            assert norm2(f.columns.conj().T @ f.columns - np.eye(5)) <= 1e-12
            p = f.projector()
            assert norm2(p @ p - p) <= 1e-11
            assert norm2(p - p.conj().T) <= 1e-11
            assert abs(np.trace(p).real - 5) <= 1e-11


def check_eigh_reconstruction(quick: bool) -> None:
    seeds = 10 if quick else 100
    for dim in (4, 16, 64):
        for seed in range(seeds):
            rng = _rng(seed, 2, dim)
            field = "complex" if seed % 3 == 0 else "real"
            h = _random_hermitian(dim, rng, field)
            spec = eigh(h)
            scale = max(norm2(h), 1e-300)
            recon = (spec.eigenvectors * spec.eigenvalues) @ spec.eigenvectors.conj().T
            assert norm2(recon - h) <= 1e-11 * scale
            assert norm2(spec.eigenvectors.conj().T @ spec.eigenvectors - np.eye(dim)) <= 1e-12
            assert np.all(np.diff(spec.eigenvalues) >= 0)


def check_subspace_metric(quick: bool) -> None:
    trials = 5 if quick else 30
    for seed in range(trials):
        rng = _rng(seed, 3)
        frames = [Frame.haar(10, 3, rng) for _ in range(3)]
        d01 = subspace_distance(frames[0], frames[1])
        d10 = subspace_distance(frames[1], frames[0])
        assert d01 == d10, "metric symmetry must be exact"
        d02 = subspace_distance(frames[0], frames[2])
        d12 = subspace_distance(frames[1], frames[2])
        assert d02 <= d01 + d12 + 1e-10
        assert 0.0 <= d01 <= 1.0
        assert subspace_distance(frames[0], frames[0]) == 0.0


def check_density_commutes(quick: bool) -> None:
    trials = 5 if quick else 25
    for seed in range(trials):
        rng = _rng(seed, 4)
        h = _random_hermitian(12, rng)
        dm = density_matrix(h, 4, allow_degenerate=True)
        p = dm.frame.projector()
        assert norm2(p @ h - h @ p) <= 1e-10 * norm2(h)


# ----------------------------------------------------------------------
# compression


def _compression_cases(quick: bool):
    trials = 6 if quick else 25
    for seed in range(trials):
        for field in ("real", "complex"):
            rng = _rng(seed, 5, hash(field) & 0xFF)
            b = _negative_definite(16, rng, field)
            v = Frame.haar(16, 3, rng, field)
            yield seed, b, v


def check_compression_consistency(quick: bool) -> None:
    for seed, b, v in _compression_cases(quick):
        for t in (0.0, 0.7):
            comp = compress(b, v, t)
            resid = comp.apply(v.columns) - b @ v.columns
            assert norm2(resid) <= 1e-12 * norm2(b), f"seed {seed}, t={t}"


def check_compression_sandwich(quick: bool) -> None:
    for seed, b, v in _compression_cases(quick):
        for t in (0.0, 0.9):
            dense = compress(b, v, t).materialize().matrix
            scale = norm2(b)
            assert np.linalg.eigvalsh(dense - b)[0] >= -1e-10 * scale
            assert np.linalg.eigvalsh(dense)[-1] <= t + 1e-10 * scale


def check_compression_uniqueness(quick: bool) -> None:
    # Independent block-recipe assembly in the completion basis must agree.
    for seed, b, v in _compression_cases(quick):
        dense = compress(b, v).materialize().matrix
        comp = qr_completion(v)
        basis = np.concatenate([v.columns, comp], axis=1)
        b11 = v.columns.conj().T @ b @ v.columns
        b12 = v.columns.conj().T @ b @ comp
        lower_right = b12.conj().T @ np.linalg.solve(b11, b12)
        blocks = np.block([[b11, b12], [b12.conj().T, lower_right]])
        recipe = basis @ blocks @ basis.conj().T
        assert norm2(recipe - dense) <= 1e-11 * norm2(b), f"seed {seed}"


def check_compression_maximality(quick: bool) -> None:
    # Any negative semidefinite operator agreeing on span V sits below the
    # compression: subtract a random PSD deficit from the lower-right block.
    for seed, b, v in _compression_cases(quick):
        dense = compress(b, v).materialize().matrix
        comp = qr_completion(v)
        basis = np.concatenate([v.columns, comp], axis=1)
        rng = _rng(seed, 6)
        g = rng.standard_normal((comp.shape[1], comp.shape[1]))
        if np.iscomplexobj(b):
            g = g + 1j * rng.standard_normal(g.shape)
        deficit = g @ g.conj().T
        b11 = v.columns.conj().T @ b @ v.columns
        b12 = v.columns.conj().T @ b @ comp
        lower_right = b12.conj().T @ np.linalg.solve(b11, b12) - deficit
        blocks = np.block([[b11, b12], [b12.conj().T, lower_right]])
        other = basis @ blocks @ basis.conj().T
        assert np.linalg.eigvalsh(other - dense)[-1] <= 1e-10 * norm2(b)


def check_compression_basis_invariance(quick: bool) -> None:
    for seed, b, v in _compression_cases(quick):
        rng = _rng(seed, 7)
        g = rng.standard_normal((v.rank, v.rank))
        if np.iscomplexobj(v.columns):
            g = g + 1j * rng.standard_normal(g.shape)
        q, _ = np.linalg.qr(g)
        rotated = Frame(v.columns @ q, check=False)
        d1 = compress(b, v, 0.3).materialize().matrix
        d2 = compress(b, rotated, 0.3).materialize().matrix
        assert norm2(d1 - d2) <= 1e-11 * norm2(b)


def check_compression_rank(quick: bool) -> None:
    for seed, b, v in _compression_cases(quick):
        for t in (0.0, 0.5):
            dense = compress(b, v, t).materialize().matrix
            sv = np.linalg.svd(dense - t * np.eye(v.dim), compute_uv=False)
            above = int(np.sum(sv > 1e-10 * norm2(b)))
            assert above == v.rank, f"rank {above} != {v.rank}"


def check_compression_matvec_count(quick: bool) -> None:
    counter = MatvecCounter()
    rng = _rng(0, 8)
    b = _negative_definite(10, rng)
    for k in range(1, 6):
        compress(b, Frame.haar(10, 3, rng), counter=counter)
        assert counter.count == 3 * k


# ----------------------------------------------------------------------
# iteration


def check_eigenvalue_monotonicity(quick: bool) -> None:
    trials = 4 if quick else 20
    for seed in range(trials):
        prob = _problem(seed, gap=[0.4, 1.0][seed % 2])
        trace = run(prob)
        tol = 1e-12 * prob.op_norm
        for prev, cur in zip(trace.steps[1:], trace.steps[2:]):
            assert np.all(cur.eigenvalues <= prev.eigenvalues + tol)
            if prev.delta is not None:
                assert prev.delta >= -tol


def check_global_eigenvalue_minimality(quick: bool) -> None:
    prob = _problem(3)
    lam = prob.eigenvalues
    trials = 20 if quick else 100
    for seed in range(trials):
        q = Frame.haar(prob.dim, prob.n, _rng(seed, 9))
        comp = compress(prob.B, q, prob.t)
        w = np.linalg.eigvalsh(prob.A.matrix + comp.materialize().matrix)
        assert np.all(w[: prob.n] >= lam[: prob.n] - 1e-10 * prob.op_norm)


def check_fixed_point_consistency(quick: bool) -> None:
    trials = 5 if quick else 25
    for seed in range(trials):
        prob = _problem(seed)
        comp = compress(prob.B, prob.truth, prob.t)
        w = np.linalg.eigvalsh(prob.A.matrix + comp.materialize().matrix)
        lam = prob.eigenvalues
        tol = 1e-10 * prob.op_norm
        assert np.max(np.abs(w[: prob.n] - lam[: prob.n])) <= tol
        assert np.all(w[prob.n:] >= lam[prob.n:] - tol)
        res = fixed_point_map(prob, prob.truth)
        assert subspace_distance(res.frame, prob.truth) <= 1e-10


def check_trace_inequality(quick: bool) -> None:
    trials = 3 if quick else 10
    for seed in range(trials):
        prob = _problem(seed)
        trace = run(prob)
        for k in range(1, len(trace.steps)):
            step = trace.steps[k]
            if step.delta is None:
                continue
            btilde = compress(prob.B, trace.steps[k - 1].frame, prob.t).materialize().matrix
            lhs = float(np.trace(step.frame.projector() @ (btilde - prob.B.matrix)).real)
            assert lhs <= step.delta + 1e-10 * prob.b_norm


def check_rotation_lower_bound(quick: bool) -> None:
    trials = 2 if quick else 6
    for seed in range(trials):
        prob = _problem(seed)
        trace = run(prob)
        frames = [s.frame for s in trace.steps]
        t_star = np.inf
        for f in frames[:-1]:
            btilde = compress(prob.B, f, prob.t).materialize().matrix
            gain = np.linalg.eigvalsh(f.projector() + btilde - prob.B.matrix)[0]
            t_star = min(t_star, float(gain))
        assert t_star > 0, "Q + (Btilde[Q] - B) must be positive definite"
        for k in range(1, len(frames)):
            delta = trace.steps[k].delta
            if delta is None:
                continue
            rotation = float(
                np.trace(frames[k].projector() @ (np.eye(prob.dim) - frames[k - 1].projector())).real
            )
            assert rotation <= max(delta, 0.0) / t_star + 1e-8


def check_matvec_accounting(quick: bool) -> None:
    for seed in range(2 if quick else 5):
        prob = _problem(seed)
        trace = run(prob)
        for step in trace.steps:
            assert step.b_matvecs == prob.n * step.k


def check_shift_solution_equivalence(quick: bool) -> None:
    # Shifting the problem operator and compensating the internal shift is
    # the identity on trajectories; eigenvalues move by exactly the shift.
    prob = _problem(11, gap=1.0)
    shifted = Problem.build(prob.A, prob.B.matrix - 1.0 * np.eye(prob.dim), prob.n, shift=0.0)
    internal = Problem.build(prob.A, prob.B, prob.n, shift=1.0)
    tr_a = run(internal)
    tr_b = run(shifted)
    assert tr_a.iters == tr_b.iters
    for sa, sb in zip(tr_a.steps[1:], tr_b.steps[1:]):
        assert subspace_distance(sa.frame, sb.frame) <= 1e-9
        assert np.max(np.abs(sa.eigenvalues - (sb.eigenvalues + 1.0))) <= 1e-9 * prob.op_norm
    # Different valid shifts of one problem solve the same eigenproblem:
    # both land on the true subspace with identical reported eigenvalues.
    tr0 = run(prob)
    tr2 = run(Problem.build(prob.A, prob.B, prob.n, shift=2.0))
    assert tr0.terminal_status == "converged_to_truth"
    assert tr2.terminal_status == "converged_to_truth"
    assert subspace_distance(tr0.final_frame, tr2.final_frame) <= 1e-8
    assert np.max(np.abs(tr0.steps[-1].eigenvalues - tr2.steps[-1].eigenvalues)) <= 1e-8


# ----------------------------------------------------------------------
# analysis


def check_derivatives_fd(quick: bool) -> None:
    trials = 3 if quick else 10
    h = 1e-5
    for seed in range(trials):
        prob = _problem(seed)
        dim, n = prob.dim, prob.n
        rng = _rng(seed, 10)
        op = prob.A.matrix + prob.B.matrix

        dh = _random_hermitian(dim, rng)
        dh /= norm2(dh)
        ana = dP_dH(op, n, dh)
        plus = density_matrix(HermitianOperator(op + h * dh), n).frame.projector()
        minus = density_matrix(HermitianOperator(op - h * dh), n).frame.projector()
        assert norm2(ana - (plus - minus) / (2 * h)) <= 1e-6 * norm2(ana)

        x = rng.standard_normal((dim - n, n))
        x /= norm2(x)
        v = prob.truth
        comp_basis = qr_completion(v)
        dp = comp_basis @ x @ v.columns.conj().T
        dp = dp + dp.conj().T
        ana = dBtilde_dP(prob.B, v, dp, prob.t)
        bp = compress(prob.B, tangent_chart(v, h * x), prob.t).materialize().matrix
        bm = compress(prob.B, tangent_chart(v, -h * x), prob.t).materialize().matrix
        assert norm2(ana - (bp - bm) / (2 * h)) <= 1e-6 * max(norm2(ana), 1e-12)

        ana = dF_dP(prob, v, dp)
        fp = fixed_point_map(prob, tangent_chart(v, h * x)).frame.projector()
        fm = fixed_point_map(prob, tangent_chart(v, -h * x)).frame.projector()
        assert norm2(ana - (fp - fm) / (2 * h)) <= 1e-6 * norm2(ana)


def check_rate_chain(quick: bool) -> None:
    trials = 4 if quick else 15
    for seed in range(trials):
        prob = _problem(seed, gap=[0.3, 1.0, 3.0][seed % 3])
        gb = gamma_bound(prob)
        jb = jacobian_blocks(prob, prob.truth)
        for w in jb.block_eigenvalues:
            assert np.all(w > 0) and np.all(w < 1)
        assert gb["gamma_exact"] <= gb["bound_schur"] + 1e-10
        assert gb["bound_schur"] <= gb["bound_b"] + 1e-10
        assert gb["bound_b"] < 1


def check_landscape(quick: bool) -> None:
    trials = 3 if quick else 10
    for seed in range(trials):
        prob = _problem(seed, dim=8, n=2)
        if not genericity_check(prob)["certified"]:
            continue
        reports = enumerate_invariant_projectors(prob)
        stable = [r for r in reports if r.stability == "stable"]
        assert len(stable) == 1 and stable[0].tau == (1, 2)
        for r in reports:
            if r.is_fixed and r.stability == "unstable":
                assert r.max_jacobian_eigenvalue > 1 + 1e-9
            if r.max_jacobian_eigenvalue is not None:
                jb = jacobian_blocks(prob, r.projector, check_fixed=False)
                for w in jb.block_eigenvalues:
                    assert np.min(np.abs(w - 1.0)) > 1e-9


def check_functional_minimality(quick: bool) -> None:
    prob = _problem(4, dim=10, n=2)
    f_truth = functional_F(prob, prob.truth)
    for r in enumerate_invariant_projectors(prob, with_jacobians=False):
        assert f_truth <= functional_F(prob, r.projector) + 1e-10
    trials = 20 if quick else 100
    for seed in range(trials):
        q = Frame.haar(prob.dim, prob.n, _rng(seed, 11))
        assert f_truth <= functional_F(prob, q) + 1e-10


def check_saddle_curvature(quick: bool) -> None:
    prob = _problem(5, dim=8, n=2)
    reports = enumerate_invariant_projectors(prob)
    for r in reports:
        if not r.is_fixed:
            continue
        jb = jacobian_blocks(prob, r.projector, check_fixed=False)
        jmax = int(np.argmax([w[0] for w in jb.block_eigenvalues]))
        sigma, x = chart_direction(jb, jmax, 0)
        sc = saddle_curvature(prob, r.projector, x)
        assert abs(sc["first_deriv"]) <= 1e-8 * max(1.0, prob.op_norm)
        rel = abs(sc["second_deriv"] - sc["second_deriv_fd"]) / abs(sc["second_deriv"])
        assert rel <= 1e-4
        if sigma > 1:
            assert sc["second_deriv"] < 0
        else:
            assert sc["second_deriv"] > 0


def check_nearest_projector_attraction(quick: bool) -> None:
    prob = _problem(6, dim=10, n=2)
    trace = run(prob, tol=1e-12)
    final = trace.final_frame
    res = fixed_point_map(prob, final)
    assert subspace_distance(res.frame, final) <= 1e-8
    tau, dist = nearest_invariant_projector(prob, final)
    assert dist <= 1e-6
    assert tau == (1, 2)


# ----------------------------------------------------------------------
# problems and IO


def check_problem_determinism(quick: bool) -> None:
    spec = EnsembleSpec(N=16, n=3, gap=0.5, b_norm=1.0, seed=7)
    p1 = random_problem(spec)
    p2 = random_problem(spec)
    assert np.array_equal(p1.A.matrix, p2.A.matrix)
    assert np.array_equal(p1.B.matrix, p2.B.matrix)
    assert np.array_equal(p1.truth.columns, p2.truth.columns)


def check_generated_preconditions(quick: bool) -> None:
    trials = 5 if quick else 20
    for seed in range(trials):
        prob = _problem(seed, dim=14, n=4, gap=0.5)
        assert float(np.linalg.eigvalsh(prob.B.matrix)[-1]) < 0
        w = np.linalg.eigvalsh(prob.A.matrix + prob.B.matrix)
        assert abs((w[4] - w[3]) - 0.5) <= 1e-12 * prob.op_norm + 1e-12
        compress(prob.B, prob.truth, prob.t)
        compress(prob.B, prob.truth, auto_shift(prob.B))


def check_model_1d_scaling(quick: bool) -> None:
    norms_a, norms_b = [], []
    for dim in (32, 64, 128):
        prob = model_1d_exchange(dim, 4, 40.0, 2.0, 0.1)
        norms_a.append(prob.A.norm2())
        norms_b.append(prob.b_norm)
        assert float(np.linalg.eigvalsh(prob.B.matrix)[-1]) < 0
    assert norms_a[1] / norms_a[0] >= 3.0 and norms_a[2] / norms_a[1] >= 3.0
    assert max(norms_b) / min(norms_b) <= 1.2


def check_mmio_roundtrip(quick: bool) -> None:
    import tempfile, os

    rng = _rng(0, 12)
    with tempfile.TemporaryDirectory() as tmp:
        for field in ("real", "complex"):
            h = HermitianOperator(_random_hermitian(9, rng, field))
            path = os.path.join(tmp, f"h_{field}.mtx")
            mmio.write_operator(path, h)
            back = mmio.read_operator(path)
            assert np.array_equal(back.matrix, h.matrix)
            f = Frame.haar(9, 3, rng, field)
            path = os.path.join(tmp, f"f_{field}.mtx")
            mmio.write_frame(path, f)
            assert np.array_equal(mmio.read_frame(path).columns, f.columns)


def check_genericity_statistics(quick: bool) -> None:
    trials = 10 if quick else 100
    certified = 0
    for seed in range(trials):
        prob = _problem(seed, dim=10, n=2, gap=0.5)
        if genericity_check(prob)["certified"]:
            certified += 1
    # Violations are flagged, not failed; require the overwhelming majority.
    assert certified >= int(0.95 * trials), f"only {certified}/{trials} certified"


CHECKS = [
    ("linalg: frame invariants", check_frame_invariants),
    ("linalg: eigh reconstruction", check_eigh_reconstruction),
    ("linalg: subspace metric", check_subspace_metric),
    ("linalg: density matrix commutes", check_density_commutes),
    ("compression: consistency on span V", check_compression_consistency),
    ("compression: sandwich bounds", check_compression_sandwich),
    ("compression: uniqueness vs block recipe", check_compression_uniqueness),
    ("compression: maximality", check_compression_maximality),
    ("compression: basis invariance", check_compression_basis_invariance),
    ("compression: rank exactness", check_compression_rank),
    ("compression: matvec accounting", check_compression_matvec_count),
    ("iteration: eigenvalue monotonicity", check_eigenvalue_monotonicity),
    ("iteration: global eigenvalue minimality", check_global_eigenvalue_minimality),
    ("iteration: fixed-point consistency", check_fixed_point_consistency),
    ("iteration: trace inequality", check_trace_inequality),
    ("iteration: rotation lower bound", check_rotation_lower_bound),
    ("iteration: matvec accounting", check_matvec_accounting),
    ("iteration: shift equivalence (solution level)", check_shift_solution_equivalence),
    ("analysis: derivatives vs finite differences", check_derivatives_fd),
    ("analysis: rate bound chain", check_rate_chain),
    ("analysis: fixed-point landscape", check_landscape),
    ("analysis: functional minimality", check_functional_minimality),
    ("analysis: saddle curvature", check_saddle_curvature),
    ("analysis: trajectory lands on invariant projector", check_nearest_projector_attraction),
    ("problems: determinism", check_problem_determinism),
    ("problems: generated preconditions", check_generated_preconditions),
    ("problems: 1d model norm scaling", check_model_1d_scaling),
    ("problems: genericity statistics", check_genericity_statistics),
    ("mmio: exact round trip", check_mmio_roundtrip),
]


def run_checks(quick: bool = False, stream=None) -> bool:
    """Run every invariant check; print one pass/fail line per check."""
    import sys
    import traceback

    out = stream if stream is not None else sys.stdout
    all_ok = True
    for name, fn in CHECKS:
        try:
            fn(quick)
        except Exception as exc:  # noqa: BLE001 - report any failure uniformly
            all_ok = False
            reason = str(exc).strip() or traceback.format_exc(limit=1)
            print(f"FAIL  {name}: {reason}", file=out)
        else:
            print(f"PASS  {name}", file=out)
    return all_ok
