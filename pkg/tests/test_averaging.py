import math

import numpy as np
import pytest

from fmm_lab.averaging import (
    D_bounds,
    MultiParamAverage,
    alpha_star_search,
    d_bounds_from_params,
    det_fractional_average,
    find_weak_disorder_R,
    fmm_constants,
    hyperplane_distances,
    multiparam_det_average,
    optimal_lambda,
    resolvent_norm_average_check,
)
from fmm_lab.errors import SingularV
from fmm_lab.model import DisorderDensity, build_single_site

DENSITIES = [
    DisorderDensity.uniform(1.0),
    DisorderDensity.uniform(4.0),
    DisorderDensity.triangular(2.0),
    DisorderDensity.bump(1.5),
]


class TestDetFractionalAverage:
    def test_closed_form(self):
        # integral of |r|^{-1/2} against uniform(1) is 2; bound is 2*sqrt(2)
        rho = DisorderDensity.uniform(1.0)
        integral, bound1, bound2 = det_fractional_average([[0.0]], [[1.0]], rho, 0.5)
        assert integral == pytest.approx(2.0, abs=1e-9)
        assert bound1 == pytest.approx(2.0 * math.sqrt(2.0), abs=1e-12)
        assert integral <= bound1

    def test_bound1_is_optimal_bound2(self):
        for rho in DENSITIES:
            for s in (0.1, 0.5, 0.9):
                _, bound1, bound2 = det_fractional_average(
                    [[0.3, 0.1], [0.1, -0.2]], np.diag([1.0, 2.0]), rho, s
                )
                lam = optimal_lambda(rho, s)
                assert bound1 == pytest.approx(bound2(lam), rel=1e-9)
                for mult in (0.3, 0.7, 1.5, 4.0):
                    assert bound1 <= bound2(lam * mult) * (1 + 1e-12)

    def test_scaling_in_V(self):
        rho = DisorderDensity.triangular(1.0)
        s = 0.4
        A = np.array([[0.5, 0.2], [0.2, -0.7]])
        _, b1, _ = det_fractional_average(A, np.eye(2), rho, s)
        _, b2, _ = det_fractional_average(A, 2 * np.eye(2), rho, s)
        assert b2 == pytest.approx(2.0 ** (-s) * b1, rel=1e-12)

    def test_dominance_randomized(self):
        rng = np.random.default_rng(2)
        for trial in range(60):
            n = int(rng.integers(1, 5))
            A = rng.normal(size=(n, n))
            A = (A + A.T) / 2
            V = np.diag(rng.choice([-1, 1], size=n) * rng.uniform(0.3, 2.0, size=n))
            rho = DENSITIES[trial % len(DENSITIES)]
            s = [0.1, 0.3, 0.5, 0.7, 0.9][trial % 5]
            integral, bound1, bound2 = det_fractional_average(A, V, rho, s)
            tol = 1e-6 * max(1.0, integral)
            assert integral <= bound1 + tol
            for lam in rng.uniform(0.05, 5.0, size=4):
                assert integral <= bound2(float(lam)) + tol

    def test_singular_V(self):
        with pytest.raises(SingularV):
            det_fractional_average(np.eye(2), np.diag([1.0, 0.0]), DENSITIES[0], 0.5)

    def test_A_equals_V(self):
        # integrand |det V| |1+r|^n scaling keeps dominance
        rho = DisorderDensity.uniform(2.0)
        V = np.diag([1.0, -2.0])
        integral, bound1, _ = det_fractional_average(V, V, rho, 0.5)
        assert integral <= bound1


class TestMultiParam:
    def test_single_parameter_degeneration(self):
        rho = DisorderDensity.triangular(1.0)
        A = np.array([[0.2, 0.0], [0.0, -0.4]])
        V0 = np.diag([1.0, 0.5])
        ref, _, _ = det_fractional_average(A, V0, rho, 0.3)
        res = multiparam_det_average(A, [V0], [1.0], rho, 0.3)
        assert res.integral == pytest.approx(ref, rel=1e-6)

    def test_two_fold_quadrature_oracle(self):
        # E|r0 + r1|^{-1/2} for two uniform(1) draws = 4*sqrt(2)/3
        rho = DisorderDensity.uniform(1.0)
        res = multiparam_det_average([[0.0]], [[[1.0]], [[1.0]]], [1.0, 0.0], rho, 0.5)
        assert res.integral == pytest.approx(4.0 * math.sqrt(2.0) / 3.0, rel=1e-6)
        assert res.bound_A2 is not None and res.integral <= res.bound_A2

    def test_permutation_invariance(self):
        rho = DisorderDensity.uniform(1.0)
        A = [[0.1]]
        V0, V1, V2 = [[[1.0]]], [[[0.5]]], [[[2.0]]]
        a = multiparam_det_average(A, [V0[0], V1[0], V2[0]], [1, 0.2, 0.1], rho, 0.4,
                                   n_mc=800, seed=5)
        b = multiparam_det_average(A, [V0[0], V2[0], V1[0]], [1, 0.1, 0.2], rho, 0.4,
                                   n_mc=800, seed=6)
        assert abs(a.integral - b.integral) <= 3 * math.hypot(a.std_error, b.std_error)

    def test_a1_branch_dominates(self):
        rho = DisorderDensity.triangular(1.0)
        res = multiparam_det_average([[0.0]], [[[1.0]], [[1.0]]], [1.0, 0.0], rho, 0.5)
        assert res.bound_A1 is not None
        assert res.integral <= res.bound_A1 + 3 * res.std_error + 1e-9

    def test_uniform_has_no_a1(self):
        res = multiparam_det_average(
            [[0.0]], [[[1.0]], [[1.0]]], [1.0, 0.0], DisorderDensity.uniform(1.0), 0.5
        )
        assert res.bound_A1 is None


class TestConstants:
    def test_unit_product(self):
        rep = fmm_constants(build_single_site([1]), DisorderDensity.uniform(1.0), 0.5)
        assert rep.C_u == 1.0

    def test_weak_disorder_vacuous_mass(self):
        rep = fmm_constants(build_single_site([1]), DisorderDensity.uniform(1.0), 0.5)
        # ||rho||_inf = 1/2: C_rho = 2*sqrt(2), mass negative (vacuous)
        assert rep.C_rho == pytest.approx(2 * math.sqrt(2), abs=1e-12)
        assert rep.C_u_rho == pytest.approx(2 * math.sqrt(2), abs=1e-12)
        assert rep.mass_m < 0

    def test_disorder_threshold_value(self):
        rep = fmm_constants(build_single_site([1]), DisorderDensity.uniform(10.0), 0.5)
        assert rep.disorder_threshold == pytest.approx(1.0 / 16.0, abs=1e-15)

    def test_threshold_consistency_sweep(self):
        # C_{u,rho} < 1 iff ||rho||_inf < 1/16 for u=[1], s=1/2
        u = build_single_site([1])
        for p in np.linspace(0.01, 0.2, 20):
            rho = DisorderDensity.uniform(1.0 / (2 * p))
            rep = fmm_constants(u, rho, 0.5)
            assert abs(rho.sup_norm - p) < 1e-12
            assert (rep.C_u_rho < 1.0) == (p < rep.disorder_threshold - 1e-12) or abs(
                p - rep.disorder_threshold
            ) < 1e-12

    def test_monotonicity_in_sup_norm(self):
        u = build_single_site([1, -2])
        sups, masses = [], []
        for R in (2.0, 5.0, 10.0, 50.0):
            rep = fmm_constants(u, DisorderDensity.uniform(R), 0.5)
            sups.append(rep.C_rho)
            masses.append(rep.mass_m)
        assert all(a > b for a, b in zip(sups, sups[1:]))      # C_rho increasing in sup
        assert all(a < b for a, b in zip(masses, masses[1:]))  # mass decreasing in sup

    def test_gapped_support_flags(self):
        rep = fmm_constants(build_single_site([1, 0, 2]), DisorderDensity.uniform(5.0), 0.5)
        assert rep.mass_m is None and rep.disorder_threshold is None
        assert rep.C_u_rho_plus is None
        assert rep.D_bound_A2 is not None

    def test_mass_sign_matches_threshold(self):
        u = build_single_site([1])
        rep = fmm_constants(u, DisorderDensity.uniform(50.0), 0.5)  # sup = 0.01 < 1/16
        assert rep.mass_m > 0
        rep2 = fmm_constants(u, DisorderDensity.uniform(4.0), 0.5)  # sup = 0.125 > 1/16
        assert rep2.mass_m < 0


class TestAlphaStar:
    def test_connected_support(self):
        av = alpha_star_search(build_single_site([1, 3, -2]))
        assert av.components == (1.0,)
        assert av.min_distance == pytest.approx(1.0)

    def test_gapped_example(self):
        u = build_single_site([1, 0, 2])
        av = alpha_star_search(u)
        floor = 1.0 / (2 * 4 * math.sqrt(2.0))
        assert all(0 <= c <= 1 for c in av.components)
        assert av.components[0] >= floor
        assert av.min_distance >= floor
        # recomputed distances match the certificate
        d = hyperplane_distances(u, av.components)
        assert float(d.min()) == pytest.approx(av.min_distance)

    def test_scale_invariance(self):
        u1 = build_single_site([1, 0, 2])
        u2 = build_single_site([2, 0, 4])
        a1 = alpha_star_search(u1)
        a2 = alpha_star_search(u2)
        assert a1.components == a2.components

    def test_wider_gap(self):
        u = build_single_site([3, 0, 0, -1])
        av = alpha_star_search(u)
        n, r = 4, 2
        floor = 1.0 / (2 * (n + r) * (r + 1) ** (r / 2))
        assert av.min_distance >= floor
        assert hyperplane_distances(u, av.components).min() >= floor


class TestDBounds:
    def test_r0_reduction(self):
        # at r=0 the A1 bound collapses to the displayed connected form
        u = build_single_site([1.0, -2.0])
        rho = DisorderDensity.triangular(2.0)
        s = 0.4
        db = D_bounds(u, rho, s)
        n = u.n
        prod_u_sq = np.prod([u.value(k) ** 2 for k in range(n)])
        expected = (
            rho.w11_norm**s * s ** (-s) / (1 - s) * (2 * n) ** s
            / prod_u_sq ** (s / (2 * n))
        )
        assert db.D_A1 == pytest.approx(expected, rel=1e-12)

    def test_finite_positive(self):
        db = D_bounds(build_single_site([1, 0, 2]), DisorderDensity.uniform(10.0), 0.3)
        assert db.D_A2 is not None and 0 < db.D_A2 < math.inf
        assert db.Dplus_A2 is not None and 0 < db.Dplus_A2 < math.inf
        assert db.D_A1 is None  # uniform density is not W^{1,1}

    def test_monotone_in_R_at_fixed_sup(self):
        u = build_single_site([1, 0, 2])
        vals = [
            d_bounds_from_params(u, 0.3, sup_norm=0.05, w11_norm=None, R=R).D_A2
            for R in (1.0, 2.0, 4.0, 8.0)
        ]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_threshold_search(self):
        u = build_single_site([1, 0, 2])
        R = find_weak_disorder_R(u, 0.5, target=0.9)
        db = D_bounds(u, DisorderDensity.uniform(R), 0.5)
        assert db.D_A2 <= 0.9
        # not absurdly conservative: halving R must cross the target
        db_half = D_bounds(u, DisorderDensity.uniform(R / 2), 0.5)
        assert db_half.D_A2 > 0.9


class TestNormAverage:
    def test_identity_equality(self):
        res = resolvent_norm_average_check(
            np.zeros((3, 3)), np.eye(3), DisorderDensity.uniform(1.0), 0.5
        )
        assert res.vinv_norm == pytest.approx(1.0)
        assert res.vinv_bound == pytest.approx(1.0)

    def test_diag_equality(self):
        res = resolvent_norm_average_check(
            np.zeros((2, 2)), np.diag([1.0, 2.0]), DisorderDensity.uniform(1.0), 0.5
        )
        # ||V^{-1}|| = 1 and ||V||^{n-1}/|det V| = 2/2 = 1
        assert res.vinv_norm == pytest.approx(1.0)
        assert res.vinv_bound == pytest.approx(1.0)

    def test_closed_form_sides(self):
        res = resolvent_norm_average_check([[0.0]], [[1.0]], DisorderDensity.uniform(1.0), 0.5)
        assert res.lhs == pytest.approx(4.0, rel=1e-9)
        assert res.rhs == pytest.approx(4.0 * math.sqrt(2.0), rel=1e-12)
        assert res.lhs <= res.rhs

    def test_random_instances(self):
        rng = np.random.default_rng(3)
        for _ in range(15):
            n = int(rng.integers(1, 4))
            A = rng.normal(size=(n, n))
            V = np.diag(rng.uniform(0.5, 2.0, size=n))
            rho = DisorderDensity.uniform(float(rng.uniform(0.5, 3.0)))
            s = float(rng.uniform(0.15, 0.85))
            res = resolvent_norm_average_check(A, V, rho, s)
            assert res.vinv_norm <= res.vinv_bound * (1 + 1e-12)
            assert res.lhs <= res.rhs * (1 + 1e-9)
