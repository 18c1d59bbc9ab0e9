import numpy as np
import pytest

import ace_lab as al
from ace_lab.errors import (
    AssumptionViolated,
    DegenerateGap,
    EnumerationCapExceeded,
    NotFixed,
    NotTangent,
)
from ace_lab.iteration import fixed_point_map

from conftest import generic_problem, random_hermitian, seeded_rng


def tangent_from_chart(problem, frame, x):
    comp = al.qr_completion(frame)
    dp = comp @ x @ frame.columns.conj().T
    return dp + dp.conj().T


class TestDensityDerivative:
    def test_hand_value(self):
        out = al.dP_dH(np.diag([1.0, 2.0]), 1, np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert np.allclose(out, [[0.0, -1.0], [-1.0, 0.0]], atol=1e-14)

    def test_commuting_perturbation_is_flat(self):
        out = al.dP_dH(np.diag([1.0, 2.0, 4.0]), 2, np.diag([0.3, -0.7, 2.0]))
        assert np.allclose(out, 0.0, atol=1e-14)

    def test_degenerate_gap_raises(self):
        with pytest.raises(DegenerateGap):
            al.dP_dH(np.diag([1.0, 1.0, 2.0]), 1, np.eye(3))

    def test_output_is_hermitian_tangent(self):
        rng = seeded_rng(0, 80)
        h = random_hermitian(10, rng)
        dh = random_hermitian(10, rng)
        out = al.dP_dH(h, 3, dh)
        assert al.norm2(out - out.conj().T) <= 1e-12 * max(al.norm2(out), 1e-30)
        p = al.density_matrix(h, 3).frame.projector()
        assert al.norm2(p @ out @ p) <= 1e-11 * al.norm2(out)
        q = np.eye(10) - p
        assert al.norm2(q @ out @ q) <= 1e-11 * al.norm2(out)

    def test_finite_difference(self):
        h_step = 1e-5
        for seed in range(5):
            rng = seeded_rng(seed, 81)
            prob = generic_problem(seed)
            op = prob.A.matrix + prob.B.matrix
            dh = random_hermitian(prob.dim, rng)
            dh /= al.norm2(dh)
            ana = al.dP_dH(op, prob.n, dh)
            plus = al.density_matrix(op + h_step * dh, prob.n).frame.projector()
            minus = al.density_matrix(op - h_step * dh, prob.n).frame.projector()
            assert al.norm2(ana - (plus - minus) / (2 * h_step)) <= 1e-6 * al.norm2(ana)


class TestCompressionDerivative:
    def test_hand_value(self):
        out = al.dBtilde_dP(
            np.diag([-2.0, -1.0]), al.Frame.coordinate(2, [0]), np.array([[0.0, 1.0], [1.0, 0.0]])
        )
        assert np.allclose(out, [[0.0, -1.0], [-1.0, 0.0]], atol=1e-14)

    def test_zero_direction(self):
        out = al.dBtilde_dP(np.diag([-2.0, -1.0]), al.Frame.coordinate(2, [0]), np.zeros((2, 2)))
        assert np.allclose(out, 0.0)

    def test_rejects_non_tangent(self):
        with pytest.raises(NotTangent):
            al.dBtilde_dP(np.diag([-2.0, -1.0]), al.Frame.coordinate(2, [0]), np.eye(2))

    def test_finite_difference_along_chart(self):
        h_step = 1e-5
        for seed in range(5):
            prob = generic_problem(seed)
            rng = seeded_rng(seed, 82)
            x = rng.standard_normal((prob.dim - prob.n, prob.n))
            x /= al.norm2(x)
            frame = al.Frame.haar(prob.dim, prob.n, rng)
            dp = tangent_from_chart(prob, frame, x)
            ana = al.dBtilde_dP(prob.B, frame, dp, prob.t)
            bp = al.compress(prob.B, al.tangent_chart(frame, h_step * x), prob.t)
            bm = al.compress(prob.B, al.tangent_chart(frame, -h_step * x), prob.t)
            fd = (bp.materialize().matrix - bm.materialize().matrix) / (2 * h_step)
            assert al.norm2(ana - fd) <= 1e-6 * al.norm2(ana)


class TestMapDerivative:
    def test_hand_value_half_contraction(self):
        prob = al.counterexample("2x2")
        dp = np.array([[0.0, 1.0], [1.0, 0.0]])
        out = al.dF_dP(prob, prob.truth, dp)
        assert np.allclose(out, 0.5 * dp, atol=1e-12)

    def test_zero_direction(self):
        prob = al.counterexample("2x2")
        assert np.allclose(al.dF_dP(prob, prob.truth, np.zeros((2, 2))), 0.0)

    def test_requires_fixed_point(self):
        prob = generic_problem(0)
        wander = al.Frame.haar(prob.dim, prob.n, seeded_rng(1, 83))
        with pytest.raises(NotFixed):
            al.dF_dP(prob, wander, np.zeros((prob.dim, prob.dim)))

    def test_finite_difference(self):
        h_step = 1e-5
        for seed in range(5):
            prob = generic_problem(seed)
            rng = seeded_rng(seed, 84)
            x = rng.standard_normal((prob.dim - prob.n, prob.n))
            x /= al.norm2(x)
            dp = tangent_from_chart(prob, prob.truth, x)
            ana = al.dF_dP(prob, prob.truth, dp)
            fp = fixed_point_map(prob, al.tangent_chart(prob.truth, h_step * x)).frame.projector()
            fm = fixed_point_map(prob, al.tangent_chart(prob.truth, -h_step * x)).frame.projector()
            assert al.norm2(ana - (fp - fm) / (2 * h_step)) <= 1e-6 * al.norm2(ana)


class TestJacobianBlocks:
    def test_stable_fixed_point_block(self):
        prob = al.counterexample("2x2")
        jb = al.jacobian_blocks(prob, prob.truth)
        assert np.allclose(jb.blocks[0], [[0.5]], atol=1e-13)
        assert jb.gamma == pytest.approx(0.5, abs=1e-13)

    def test_unstable_fixed_point_block(self):
        prob = al.counterexample("2x2")
        jb = al.jacobian_blocks(prob, al.Frame.coordinate(2, [1]))
        assert np.allclose(jb.blocks[0], [[2.0]], atol=1e-13)
        assert jb.gamma == pytest.approx(2.0, abs=1e-13)

    def test_three_by_three_unstable_value(self):
        prob = al.counterexample("3x3")
        jb = al.jacobian_blocks(prob, al.Frame.coordinate(3, [1]))
        assert jb.gamma == pytest.approx(4.0 / 3.0, abs=1e-12)

    def test_spectrum_in_unit_interval_at_truth(self):
        for seed in range(5):
            prob = generic_problem(seed)
            jb = al.jacobian_blocks(prob, prob.truth)
            for w in jb.block_eigenvalues:
                assert np.all(w > 0) and np.all(w < 1)
                assert np.all(np.isreal(w))

    def test_rejects_non_fixed_frame(self):
        prob = generic_problem(1)
        with pytest.raises(NotFixed):
            al.jacobian_blocks(prob, al.Frame.haar(prob.dim, prob.n, seeded_rng(2, 85)))

    def test_matricized_block_diagonal(self):
        prob = generic_problem(2, dim=8, n=2)
        jb = al.jacobian_blocks(prob, prob.truth)
        full = jb.matricized()
        assert full.shape == (12, 12)
        assert np.allclose(full[:6, :6], jb.blocks[0])
        assert np.allclose(full[6:, 6:], jb.blocks[1])
        assert np.allclose(full[:6, 6:], 0.0)
        # spectrum of the full Jacobian is the union of the block spectra
        full_eigs = np.sort(np.linalg.eigvals(full).real)
        block_eigs = np.sort(np.concatenate(jb.block_eigenvalues))
        assert np.allclose(full_eigs, block_eigs, atol=1e-10)

    def test_block_eigendecomposition_consistent(self):
        prob = generic_problem(3)
        jb = al.jacobian_blocks(prob, prob.truth)
        for i in range(prob.n):
            vals, vecs = jb.block_eigendecomposition(i)
            assert np.all(np.diff(vals) <= 1e-12)  # descending
            resid = jb.blocks[i] @ vecs - vecs * vals
            assert al.norm2(resid) <= 1e-9

    def test_contraction_matches_map(self):
        prob = generic_problem(4)
        jb = al.jacobian_blocks(prob, prob.truth)
        eps = 1e-6
        for i in range(prob.n):
            sigma, x = al.chart_direction(jb, i, 0)
            moved = fixed_point_map(prob, al.tangent_chart(prob.truth, eps * x)).frame
            observed = al.subspace_distance(moved, prob.truth) / eps
            assert observed == pytest.approx(sigma, rel=1e-4)


class TestGammaBound:
    def test_hand_values(self):
        gb = al.gamma_bound(al.counterexample("2x2"))
        assert gb["gamma_exact"] == pytest.approx(0.5, abs=1e-13)
        assert gb["bound_schur"] == pytest.approx(0.5, abs=1e-13)
        assert gb["bound_b"] == pytest.approx(2.0 / 3.0, abs=1e-13)

    def test_chain_and_monotonicity_in_b_norm(self):
        prev = 0.0
        for c in (0.5, 1.0, 2.0, 4.0):
            prob = al.random_problem(al.EnsembleSpec(N=12, n=3, gap=1.0, b_norm=c, seed=5))
            gb = al.gamma_bound(prob)
            assert gb["gamma_exact"] <= gb["bound_schur"] + 1e-10
            assert gb["bound_schur"] <= gb["bound_b"] + 1e-10
            assert gb["bound_b"] < 1
            assert gb["bound_b"] == pytest.approx(c / (1.0 + c), rel=1e-12)
            assert gb["bound_b"] > prev
            prev = gb["bound_b"]

    def test_large_gap_limit(self):
        prob = al.random_problem(al.EnsembleSpec(N=12, n=3, gap=100.0, b_norm=1.0, seed=6))
        assert al.gamma_bound(prob)["bound_b"] < 0.01


class TestFunctional:
    def test_small_example_descent_values(self):
        prob = al.counterexample("3x3")
        values = [al.functional_F(prob, al.Frame.coordinate(3, [i])) for i in range(3)]
        assert values == pytest.approx([-4.0, -3.0, -2.0], abs=1e-13)

    def test_truth_is_global_minimum_over_samples(self):
        prob = generic_problem(7, dim=10, n=2)
        f_truth = al.functional_F(prob, prob.truth)
        assert f_truth == pytest.approx(float(np.sum(prob.eigenvalues[:2])), abs=1e-10)
        for seed in range(100):
            q = al.Frame.haar(10, 2, seeded_rng(seed, 86))
            assert al.functional_F(prob, q) >= f_truth - 1e-10

    def test_non_increasing_along_trajectory(self):
        prob = generic_problem(8)
        trace = al.run(prob)
        values = [al.functional_F(prob, s.frame) for s in trace.steps]
        assert np.all(np.diff(values) <= 1e-10 * prob.op_norm)


class TestEnumeration:
    def test_two_by_two_landscape(self):
        reports = al.enumerate_invariant_projectors(al.counterexample("2x2"))
        by_tau = {r.tau: r for r in reports}
        assert by_tau[(1,)].stability == "stable" and by_tau[(1,)].is_fixed
        assert by_tau[(2,)].stability == "unstable" and by_tau[(2,)].is_fixed
        assert by_tau[(2,)].max_jacobian_eigenvalue == pytest.approx(2.0, abs=1e-12)

    def test_three_by_three_landscape(self):
        reports = al.enumerate_invariant_projectors(al.counterexample("3x3"))
        by_tau = {r.tau: r for r in reports}
        assert by_tau[(1,)].stability == "stable"
        assert by_tau[(2,)].stability == "unstable"
        assert by_tau[(3,)].stability == "not_fixed" and not by_tau[(3,)].is_fixed

    def test_random_problem_unique_stable(self):
        prob = generic_problem(9, dim=10, n=2)
        reports = al.enumerate_invariant_projectors(prob)
        stable = [r for r in reports if r.stability == "stable"]
        assert len(stable) == 1 and stable[0].tau == (1, 2)
        assert len(reports) == 45

    def test_cap(self):
        prob = generic_problem(10, dim=16, n=8)
        with pytest.raises(EnumerationCapExceeded):
            al.enumerate_invariant_projectors(prob, enumeration_cap=100)

    def test_repeated_eigenvalues_rejected(self):
        prob = al.Problem.build(np.zeros((3, 3)), -np.eye(3), 1)
        with pytest.raises(AssumptionViolated):
            al.enumerate_invariant_projectors(prob)


class TestGenericity:
    def test_small_example_margin(self):
        cert = al.genericity_check(al.counterexample("2x2"))
        assert cert["distinct_eigenvalues"] and cert["min_eigen_separation"] == pytest.approx(1.0)
        assert cert["assumption2_margin"] == pytest.approx(1.0, abs=1e-13)
        assert cert["certified"]

    def test_repeated_eigenvalues_flagged(self):
        prob = al.Problem.build(np.zeros((3, 3)), -np.eye(3), 1)
        cert = al.genericity_check(prob)
        assert not cert["distinct_eigenvalues"] and not cert["certified"]

    def test_random_problems_certified(self):
        for seed in range(10):
            prob = generic_problem(seed, dim=10, n=2, gap=0.5)
            cert = al.genericity_check(prob)
            assert cert["certified"] and cert["assumption2_margin"] > 1e-6


class TestTangentChart:
    def test_zero_maps_to_same_frame(self):
        f = al.Frame.haar(8, 3, seeded_rng(0, 87))
        assert al.tangent_chart(f, np.zeros((5, 3))) is f

    def test_first_order_distance(self):
        f = al.Frame.haar(8, 3, seeded_rng(1, 87))
        rng = seeded_rng(2, 87)
        x = rng.standard_normal((5, 3))
        x /= al.norm2(x)
        for amp in (1e-3, 1e-4):
            moved = al.tangent_chart(f, amp * x)
            assert al.subspace_distance(moved, f) == pytest.approx(amp, rel=1e-5)

    def test_unit_coordinates_give_valid_frame(self):
        f = al.Frame.haar(8, 3, seeded_rng(3, 87))
        x = seeded_rng(4, 87).standard_normal((5, 3))
        x /= al.norm2(x)
        moved = al.tangent_chart(f, x)
        gram = moved.columns.conj().T @ moved.columns
        assert al.norm2(gram - np.eye(3)) <= 1e-12


class TestSaddleCurvature:
    def test_unstable_direction_hand_value(self):
        prob = al.counterexample("2x2")
        sc = al.saddle_curvature(prob, al.Frame.coordinate(2, [1]), np.array([[1.0]]))
        assert sc["second_deriv"] == pytest.approx(-4.0, abs=1e-12)
        assert sc["second_deriv_fd"] == pytest.approx(-4.0, rel=1e-5)

    def test_stable_direction_hand_value(self):
        prob = al.counterexample("2x2")
        sc = al.saddle_curvature(prob, prob.truth, np.array([[1.0]]))
        assert sc["second_deriv"] == pytest.approx(1.0, abs=1e-12)

    def test_first_derivative_vanishes_everywhere(self):
        prob = generic_problem(11, dim=8, n=2)
        rng = seeded_rng(5, 88)
        for r in al.enumerate_invariant_projectors(prob):
            if not r.is_fixed:
                continue
            x = rng.standard_normal((6, 2))
            x /= al.norm2(x)
            sc = al.saddle_curvature(prob, r.projector, x)
            assert abs(sc["first_deriv"]) <= 1e-8 * max(1.0, prob.op_norm)

    def test_requires_fixed_point(self):
        prob = generic_problem(12)
        with pytest.raises(NotFixed):
            al.saddle_curvature(
                prob, al.Frame.haar(prob.dim, prob.n, seeded_rng(6, 88)),
                np.zeros((prob.dim - prob.n, prob.n)),
            )


class TestComplexField:
    def test_full_stack_on_complex_problem(self):
        prob = al.random_problem(
            al.EnsembleSpec(N=10, n=2, gap=0.8, b_norm=1.0, seed=5, field="complex")
        )
        jb = al.jacobian_blocks(prob, prob.truth)
        assert all(np.isrealobj(w) and np.all((w > 0) & (w < 1)) for w in jb.block_eigenvalues)
        gb = al.gamma_bound(prob)
        assert gb["gamma_exact"] <= gb["bound_schur"] + 1e-10
        reports = al.enumerate_invariant_projectors(prob)
        stable = [r for r in reports if r.stability == "stable"]
        assert len(stable) == 1 and stable[0].tau == (1, 2)

    def test_complex_map_derivative_matches_fd(self):
        prob = al.random_problem(
            al.EnsembleSpec(N=10, n=2, gap=0.8, b_norm=1.0, seed=5, field="complex")
        )
        rng = seeded_rng(3, 90)
        h = 1e-5
        x = rng.standard_normal((8, 2)) + 1j * rng.standard_normal((8, 2))
        x /= al.norm2(x)
        dp = tangent_from_chart(prob, prob.truth, x)
        ana = al.dF_dP(prob, prob.truth, dp)
        fp = fixed_point_map(prob, al.tangent_chart(prob.truth, h * x)).frame.projector()
        fm = fixed_point_map(prob, al.tangent_chart(prob.truth, -h * x)).frame.projector()
        assert al.norm2(ana - (fp - fm) / (2 * h)) <= 1e-6 * al.norm2(ana)


class TestNearestInvariantProjector:
    def test_exact_membership(self):
        prob = al.counterexample("3x3")
        tau, dist = al.nearest_invariant_projector(prob, al.Frame.coordinate(3, [1]))
        assert tau == (2,) and dist == pytest.approx(0.0, abs=1e-14)

    def test_chart_perturbation(self):
        prob = generic_problem(13, dim=10, n=2)
        rng = seeded_rng(7, 89)
        x = rng.standard_normal((8, 2))
        x /= al.norm2(x)
        q = al.tangent_chart(prob.truth, 0.01 * x)
        tau, dist = al.nearest_invariant_projector(prob, q)
        assert tau == (1, 2)
        assert dist == pytest.approx(0.01, rel=1e-3)

    def test_near_fixed_points_near_invariant_projectors(self):
        prob = generic_problem(14, dim=10, n=2)
        trace = al.run(prob, tol=1e-12)
        final = trace.final_frame
        assert al.subspace_distance(fixed_point_map(prob, final).frame, final) <= 1e-8
        _, dist = al.nearest_invariant_projector(prob, final)
        assert dist <= 1e-6
