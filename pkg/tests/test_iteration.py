import numpy as np
import pytest

import ace_lab as al
from ace_lab.errors import InsufficientTrace, InvalidParameter, RankOutOfRange, ShiftInsufficient
from ace_lab.iteration import fixed_point_map

from conftest import generic_problem, seeded_rng


class TestAutoShift:
    def test_indefinite_gets_lifted(self):
        assert al.auto_shift(np.diag([1.0, -1.0]), margin=0.5) == pytest.approx(1.5)

    def test_safely_definite_stays_unshifted(self):
        assert al.auto_shift(np.diag([-2.0, -1.0]), margin=0.1) == 0.0

    def test_zero_operator_surfaces_downstream(self):
        t = al.auto_shift(np.zeros((3, 3)))
        assert t == 0.0
        with pytest.raises(ShiftInsufficient):
            al.Problem.build(np.eye(3), np.zeros((3, 3)), 1, shift=t)


class TestProblemBuild:
    def test_requires_definite_shifted_b(self):
        with pytest.raises(ShiftInsufficient):
            al.Problem.build(np.zeros((2, 2)), np.diag([1.0, -1.0]), 1, shift=0.5)

    def test_rank_range(self):
        with pytest.raises(RankOutOfRange):
            al.Problem.build(np.zeros((2, 2)), np.diag([-2.0, -1.0]), 2)

    def test_attaches_truth_and_gap(self):
        prob = al.Problem.build(np.zeros((2, 2)), np.diag([-2.0, -1.0]), 1)
        assert prob.gap == pytest.approx(1.0)
        assert np.allclose(np.abs(prob.truth.columns.ravel()), [1.0, 0.0])


class TestFixedPointMap:
    def test_truth_is_fixed(self):
        prob = generic_problem(0)
        res = fixed_point_map(prob, prob.truth)
        assert al.subspace_distance(res.frame, prob.truth) <= 1e-12

    def test_spurious_step_small_example(self):
        prob = al.counterexample("3x3")
        res = fixed_point_map(prob, al.Frame.coordinate(3, [2]))
        assert np.allclose(np.abs(res.frame.columns.ravel()), [0.0, 1.0, 0.0])
        res2 = fixed_point_map(prob, res.frame)
        assert al.subspace_distance(res2.frame, res.frame) == pytest.approx(0.0, abs=1e-14)

    def test_reports_unshifted_scale_eigenvalues(self):
        prob = generic_problem(1)
        shifted = al.Problem.build(prob.A, prob.B, prob.n, shift=2.0)
        res = fixed_point_map(shifted, shifted.truth)
        assert np.allclose(res.eigenvalues, prob.eigenvalues[: prob.n], atol=1e-9)

    def test_flags_degenerate_inner_gap(self):
        # A + Btilde[Q] collapses to the zero operator at this frame, so the
        # inner gap is exactly zero; the map resolves it deterministically
        # and raises the warning flag instead of an error.
        prob = al.Problem.build(np.diag([0.0, 1.0, 1.0]), -np.eye(3), 2, shift=0.0)
        res = fixed_point_map(prob, al.Frame.coordinate(3, [1, 2]))
        assert res.degenerate
        assert res.gap == pytest.approx(0.0, abs=1e-14)
        res2 = fixed_point_map(prob, al.Frame.coordinate(3, [1, 2]))
        assert np.array_equal(res.frame.columns, res2.frame.columns)


class TestRun:
    def test_two_by_two_wrong_fixed_point(self):
        prob = al.counterexample("2x2")
        trace = al.run(prob, init=al.Frame.coordinate(2, [1]))
        assert trace.terminal_status == "converged_to_other_fixed_point"
        assert trace.iters == 1
        assert np.allclose(np.abs(trace.final_frame.columns.ravel()), [0.0, 1.0])

    def test_three_by_three_trajectory(self):
        prob = al.counterexample("3x3")
        trace = al.run(prob, init=al.Frame.coordinate(3, [2]))
        assert trace.terminal_status == "converged_to_other_fixed_point"
        visited = [np.argmax(np.abs(s.frame.columns.ravel())) for s in trace.steps]
        assert visited == [2, 1, 1]

    def test_generic_converges_to_truth(self):
        for seed in range(8):
            trace = al.run(generic_problem(seed, dim=16, n=3, gap=0.8))
            assert trace.terminal_status == "converged_to_truth"
            assert trace.final_distance_to_truth < 1e-9

    def test_matvec_accounting(self):
        prob = generic_problem(2)
        trace = al.run(prob)
        for step in trace.steps:
            assert step.b_matvecs == prob.n * step.k

    def test_max_iter_status(self):
        prob = generic_problem(3, gap=0.3)
        trace = al.run(prob, max_iter=2)
        assert trace.terminal_status == "max_iter"
        assert trace.iters == 2

    def test_unreachable_tol_terminates_without_converged_status(self):
        # At the rounding floor the run must end as stalled or max_iter,
        # never as converged; the solution itself is still reached.
        prob = generic_problem(4)
        trace = al.run(prob, tol=0.0, max_iter=200)
        assert trace.terminal_status in ("stalled", "max_iter")
        assert trace.final_distance_to_truth < 1e-9

    def test_truthless_problem_reports_plain_converged(self):
        prob = al.Problem.build(
            np.zeros((4, 4)), np.diag([-4.0, -3.0, -2.0, -1.0]), 2, compute_spectrum=False
        )
        trace = al.run(prob, init=al.Frame.coordinate(4, [0, 1]))
        assert trace.terminal_status == "converged"

    def test_init_frame_validation(self):
        prob = generic_problem(5)
        with pytest.raises(InvalidParameter):
            al.run(prob, init=al.Frame.coordinate(prob.dim, [0]))

    def test_keep_frames_false_retains_final_frame_only(self):
        prob = generic_problem(9, dim=16, n=3)
        trace = al.run(prob, keep_frames=False)
        assert trace.terminal_status == "converged_to_truth"
        assert sum(s.frame is not None for s in trace.steps) == 1
        assert trace.final_frame is not None
        assert al.estimate_rate(trace).rate < 1.0

    def test_eigenvalue_monotonicity_along_trace(self):
        for seed in range(6):
            prob = generic_problem(seed, dim=10, n=2, gap=0.5)
            trace = al.run(prob)
            tol = 1e-12 * prob.op_norm
            for prev, cur in zip(trace.steps[1:], trace.steps[2:]):
                assert np.all(cur.eigenvalues <= prev.eigenvalues + tol)

    def test_delta_records_eigenvalue_descent(self):
        prob = generic_problem(6)
        trace = al.run(prob)
        for prev, cur in zip(trace.steps[1:], trace.steps[2:]):
            if prev.delta is not None:
                assert prev.delta == pytest.approx(
                    float(np.sum(prev.eigenvalues - cur.eigenvalues)), abs=1e-15
                )


class TestShiftBehavior:
    def test_internal_shift_equals_shifted_problem(self):
        # Shifting B and compensating the internal shift is the identity on
        # trajectories; reported eigenvalues move by exactly the shift.
        prob = generic_problem(11)
        internal = al.Problem.build(prob.A, prob.B, prob.n, shift=1.0)
        shifted = al.Problem.build(prob.A, prob.B.matrix - np.eye(prob.dim), prob.n, shift=0.0)
        tr_a = al.run(internal)
        tr_b = al.run(shifted)
        assert tr_a.iters == tr_b.iters
        for sa, sb in zip(tr_a.steps[1:], tr_b.steps[1:]):
            assert al.subspace_distance(sa.frame, sb.frame) <= 1e-9
            assert np.max(np.abs(sa.eigenvalues - (sb.eigenvalues + 1.0))) <= 1e-9

    def test_different_shifts_solve_the_same_eigenproblem(self):
        # Trajectories differ, but both reach the true subspace and report
        # identical eigenvalues there.
        prob = generic_problem(12, dim=16, n=3)
        tr0 = al.run(prob)
        tr2 = al.run(al.Problem.build(prob.A, prob.B, prob.n, shift=2.0))
        assert tr0.terminal_status == tr2.terminal_status == "converged_to_truth"
        assert al.subspace_distance(tr0.final_frame, tr2.final_frame) <= 1e-8
        assert np.max(np.abs(tr0.steps[-1].eigenvalues - tr2.steps[-1].eigenvalues)) <= 1e-8


class TestEstimateRate:
    def test_exact_geometric_input(self):
        ks = np.arange(40)
        fit = al.fit_geometric_rate(ks, 0.5**ks, floor=1e-14)
        assert fit.rate == pytest.approx(0.5, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_insufficient_trace(self):
        with pytest.raises(InsufficientTrace):
            al.fit_geometric_rate([0, 1, 2], [0.05, 0.025, 0.0125], floor=1e-14)

    def test_fit_matches_jacobian_gamma(self):
        for seed in range(3):
            prob = generic_problem(seed, dim=16, n=3, gap=1.0)
            jb = al.jacobian_blocks(prob, prob.truth)
            jmax = int(np.argmax([w[0] for w in jb.block_eigenvalues]))
            _, x = al.chart_direction(jb, jmax, 0)
            trace = al.run(prob, tol=1e-13, init=al.tangent_chart(prob.truth, 0.05 * x))
            fit = al.estimate_rate(trace)
            assert fit.rate == pytest.approx(jb.gamma, rel=0.05)

    def test_eigenvalues_converge_at_squared_rate(self):
        # The solution is a stationary point of the occupied eigenvalue sum,
        # so its error contracts at gamma^2 while the projector contracts
        # at gamma.
        prob = generic_problem(0, dim=24, n=3, gap=1.0)
        jb = al.jacobian_blocks(prob, prob.truth)
        jmax = int(np.argmax([w[0] for w in jb.block_eigenvalues]))
        _, x = al.chart_direction(jb, jmax, 0)
        trace = al.run(prob, tol=1e-14, max_iter=3000,
                       init=al.tangent_chart(prob.truth, 0.05 * x))
        target = float(np.sum(prob.eigenvalues[: prob.n]))
        ks, errs = [], []
        for step in trace.steps[1:]:
            err = abs(float(np.sum(step.eigenvalues)) - target)
            if err > 0:
                ks.append(step.k)
                errs.append(err)
        fit = al.fit_geometric_rate(ks, errs, floor=1e-13 * prob.op_norm, ceiling=1e-2)
        assert fit.rate == pytest.approx(jb.gamma**2, rel=0.05)

    def test_noise_floor_excluded_from_window(self):
        ks = np.arange(60)
        dist = np.maximum(0.5**ks, 2e-15) * (1 + 0.1 * np.sin(ks))
        fit = al.fit_geometric_rate(ks, dist, floor=10 * np.finfo(float).eps * 16)
        assert fit.rate == pytest.approx(0.5, rel=0.05)


class TestTraceExport:
    def test_csv_shape_and_determinism(self, tmp_path):
        prob = generic_problem(7, dim=8, n=2)
        trace = al.run(prob)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        al.trace_to_csv(trace, p1)
        al.trace_to_csv(trace, p2)
        assert p1.read_bytes() == p2.read_bytes()
        lines = p1.read_text().splitlines()
        assert lines[0] == "k,lambda_1,lambda_2,dist_prev,dist_truth,delta,b_matvecs"
        assert len(lines) == len(trace.steps) + 1
        assert lines[1].startswith("0,,,")

    def test_summary_fields(self):
        prob = generic_problem(8, dim=8, n=2)
        trace = al.run(prob)
        summary = al.run_summary(prob, trace)
        assert summary["status"] == "converged_to_truth"
        assert summary["b_matvecs"] == prob.n * trace.iters
        assert set(summary) >= {"status", "iters", "final_distance", "estimated_rate"}
