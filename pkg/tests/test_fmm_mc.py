import math

import numpy as np
import pytest

from fmm_lab.averaging import fmm_constants
from fmm_lab.errors import (
    DegenerateDesign,
    ExponentOutOfRange,
    NotConnectedSupport,
)
from fmm_lab.fmm_mc import (
    apriori_sweep,
    conditional_moment_check,
    decay_profile,
    estimate_moment,
    general_support_decay,
    merge_moment_estimates,
    operator_norm_bound,
)
from fmm_lab.model import DisorderDensity, build_single_site

U1 = build_single_site([1])
RHO10 = DisorderDensity.uniform(10.0)


class TestEstimateMoment:
    def test_resolvent_ceiling(self):
        # eps >= 1 forces |G| <= 1 pathwise, hence mean <= 1
        est = estimate_moment(U1, RHO10, (-8, 8), 0 + 1j, 0, 3, 0.5, 400, seed=1)
        assert est.mean <= 1.0

    def test_seed_stability(self):
        a = estimate_moment(U1, RHO10, (-10, 10), 1e-3j, 0, 0, 0.2, 4000, seed=11)
        b = estimate_moment(U1, RHO10, (-10, 10), 1e-3j, 0, 0, 0.2, 4000, seed=97)
        diff = abs(a.mean - b.mean)
        assert diff < 4 * math.hypot(a.std_error, b.std_error)

    def test_clt_scaling(self):
        kw = dict(z=0.1 + 0.05j, x=-3, y=3, exponent=0.5, seed=5,
                  estimator_kind="plain-mean")
        a = estimate_moment(U1, RHO10, (-12, 12), n_samples=2000, **kw)
        b = estimate_moment(U1, RHO10, (-12, 12), n_samples=4000, **kw)
        ratio = a.std_error / b.std_error
        assert abs(ratio - math.sqrt(2)) < 0.2 * math.sqrt(2)

    def test_determinism(self):
        kw = dict(z=0.3 + 0.2j, x=0, y=2, exponent=0.4, n_samples=500, seed=3)
        a = estimate_moment(U1, RHO10, (-6, 6), **kw)
        b = estimate_moment(U1, RHO10, (-6, 6), **kw)
        assert a.mean == b.mean and a.std_error == b.std_error

    def test_merge_disjoint_ranges(self):
        kw = dict(z=0.2 + 0.3j, x=-1, y=4, exponent=0.5, seed=8,
                  estimator_kind="plain-mean")
        whole = estimate_moment(U1, RHO10, (-8, 8), n_samples=3000, **kw)
        p1 = estimate_moment(U1, RHO10, (-8, 8), n_samples=1000, sample_offset=0, **kw)
        p2 = estimate_moment(U1, RHO10, (-8, 8), n_samples=2000, sample_offset=1000, **kw)
        merged = merge_moment_estimates([p1, p2])
        assert merged.n_samples == whole.n_samples
        assert merged.mean == pytest.approx(whole.mean, rel=1e-14)
        assert merged.std_error == pytest.approx(whole.std_error, rel=1e-12)

    def test_estimator_agreement(self):
        # plain mean and median-of-means agree at moderate exponent
        kw = dict(z=0.1 + 0.05j, x=-4, y=4, exponent=0.4, n_samples=8000, seed=2)
        pm = estimate_moment(U1, RHO10, (-12, 12), estimator_kind="plain-mean", **kw)
        mm = estimate_moment(U1, RHO10, (-12, 12), estimator_kind="median-of-means", **kw)
        assert abs(pm.mean - mm.mean) < 3 * math.hypot(pm.std_error, mm.std_error)

    def test_default_estimator_rule(self):
        near = estimate_moment(U1, RHO10, (-6, 6), 1e-3j, 0, 1, 0.5, 200, seed=1)
        far = estimate_moment(U1, RHO10, (-6, 6), 0.5j, 0, 1, 0.5, 200, seed=1)
        assert near.estimator_kind == "median-of-means"
        assert far.estimator_kind == "plain-mean"

    def test_exponent_validation(self):
        with pytest.raises(ExponentOutOfRange):
            estimate_moment(U1, RHO10, (-4, 4), 1j, 0, 1, 1.2, 100, seed=0)

    def test_excessive_resampling_at_spectral_point(self):
        # vanishing disorder with z pinned on a free-box eigenvalue: every
        # draw trips the guard and the measure-zero budget blows
        from fmm_lab.errors import ExcessiveResampling

        tiny = DisorderDensity.uniform(1e-12)
        with pytest.raises(ExcessiveResampling):
            estimate_moment(U1, tiny, (-1, 1), 0.0 + 0.0j, 0, 0, 0.5, 2000, seed=1)


class TestConditionalMoment:
    def test_delta_potential(self):
        vr = conditional_moment_check(
            U1, RHO10, (-6, 6), 0.5 + 0.05j, frozen_seed=1, n_inner=100,
            n_outer=50, s=0.5,
        )
        assert vr == 0.0

    def test_sign_changing_example(self):
        u = build_single_site([1, -1])
        vr = conditional_moment_check(
            u, DisorderDensity.uniform(5.0), (-8, 9), 0.7 + 0.05j,
            frozen_seed=3, n_inner=100, n_outer=50, s=0.5, tol=0.01,
        )
        assert vr == 0.0

    def test_invariant_under_frozen_seed(self):
        u = build_single_site([1, -1])
        args = dict(rho=DisorderDensity.uniform(5.0), box=(-8, 9), z=0.7 + 0.05j,
                    n_inner=80, n_outer=25, s=0.5)
        assert conditional_moment_check(u, frozen_seed=5, **args) == 0.0
        assert conditional_moment_check(u, frozen_seed=6, **args) == 0.0

    def test_requires_connected_support(self):
        with pytest.raises(NotConnectedSupport):
            conditional_moment_check(
                build_single_site([1, 0, 2]), RHO10, (-8, 8), 1j,
                frozen_seed=0, n_inner=50, n_outer=5, s=0.5,
            )


class TestDecayProfile:
    def test_bound_and_rate(self):
        # strong disorder: every mean below the closed-form bound; fitted
        # rate at least the theoretical mass (lower bound on decay)
        fit = decay_profile(U1, RHO10, 0.5, 1e-3j, 60, [5, 10, 15], 4000, seed=7)
        rep = fmm_constants(U1, RHO10, 0.5)
        assert fit.theory_mass == pytest.approx(rep.mass_m)
        margins = fit.bound_margins_sigma()
        assert all(m >= -3 for m in margins)
        assert fit.fitted_rate >= rep.mass_m - fit.rate_ci_half

    def test_degenerate_design(self):
        with pytest.raises(DegenerateDesign):
            decay_profile(U1, RHO10, 0.5, 1e-3j, 40, [7, 7, 7], 500, seed=1)

    def test_weak_disorder_no_bound(self):
        rho = DisorderDensity.uniform(1.0)  # sup = 0.5 > 1/16
        fit = decay_profile(U1, rho, 0.5, 0.5j, 30, [4, 8, 12], 800, seed=2)
        assert fit.bound_values is None and fit.theory_mass is None

    def test_gapped_support_rejected(self):
        with pytest.raises(NotConnectedSupport):
            decay_profile(build_single_site([1, 0, 2]), RHO10, 0.5, 1j, 30,
                          [4, 8], 100, seed=0)

    def test_fit_floor_is_theorem_specific(self):
        # connected support fits from d >= n; gapped from d >= 2(n+r)
        u2 = build_single_site([1, -2])
        fit = decay_profile(u2, RHO10, 0.5, 1e-2j, 40, [2, 4, 8, 12], 400, seed=3)
        assert fit.fit_floor == u2.n
        assert fit.fit_distances == (2, 4, 8, 12)
        from fmm_lab.averaging import find_weak_disorder_R

        ug = build_single_site([1, 0, 2])
        R = find_weak_disorder_R(ug, 0.5, target=0.9)
        gfit = general_support_decay(ug, DisorderDensity.uniform(R), 0.5, 1e-2j,
                                     40, [4, 8, 12], 400, seed=3)
        assert gfit.fit_floor == 2 * (ug.n + ug.gap_width_r)
        assert gfit.fit_distances == (8, 12)


class TestGeneralSupport:
    def test_exponent_gate(self):
        u = build_single_site([1, 0, 2])  # n=3, r=1: s must be < 3/4
        with pytest.raises(ExponentOutOfRange):
            general_support_decay(u, RHO10, 0.8, 1j, 40, [8, 16], 100, seed=0)

    def test_r0_delegates(self):
        kw = dict(z=1e-2j, box_halfwidth=40, distances=[4, 8, 12],
                  n_samples=600, seed=4)
        a = general_support_decay(U1, RHO10, 0.5, **kw)
        b = decay_profile(U1, RHO10, 0.5, **kw)
        assert a == b

    def test_gapped_decay_smoke(self):
        from fmm_lab.averaging import D_bounds, find_weak_disorder_R

        u = build_single_site([1, 0, 2])
        R = find_weak_disorder_R(u, 0.5, target=0.9)
        rho = DisorderDensity.uniform(R)
        fit = general_support_decay(u, rho, 0.5, 0.5 + 1e-2j, 60, [8, 16, 24],
                                    1500, seed=9)
        db = D_bounds(u, rho, 0.5)
        assert fit.theory_mass == pytest.approx(-math.log(db.D_A2))
        assert all(m >= -3 for m in fit.bound_margins_sigma())


class TestApriori:
    def test_bounded_cells(self):
        u = build_single_site([1, -2])
        rho = DisorderDensity.uniform(2.0)
        big = operator_norm_bound(u, rho) + 2.0
        res = apriori_sweep(u, rho, 0.4, [1e-4j, 0.3 + 1e-2j, big + 0j],
                            (-10, 10), 300, seed=5)
        assert math.isfinite(res.sup_estimate)
        for c in res.cells:
            if c["z"] == big + 0j:
                assert c["mean"] <= 1.0

    def test_diagonal_included_and_finite(self):
        u = build_single_site([1])
        res = apriori_sweep(u, DisorderDensity.uniform(3.0), 0.5, [1e-4j],
                            (-8, 8), 400, seed=6, xs=[0], ys=[0])
        c = res.cell(0, 0, 1e-4j)
        assert math.isfinite(c["mean"]) and c["mean"] > 0

    def test_box_doubling_insensitivity(self):
        # truncation effects on the compared entry sit below MC noise:
        # doubling the box moves the estimate by less than 2 sigma (shared
        # coupling indices keep the comparison tightly coupled)
        kw = dict(z=0.2 + 0.05j, x=-4, y=4, exponent=0.5, n_samples=4000,
                  seed=21, estimator_kind="plain-mean")
        small = estimate_moment(U1, RHO10, (-24, 24), **kw)
        big = estimate_moment(U1, RHO10, (-48, 48), **kw)
        assert abs(small.mean - big.mean) < 2 * math.hypot(small.std_error,
                                                           big.std_error)

    def test_sample_doubling_stability(self):
        u = build_single_site([1])
        rho = DisorderDensity.uniform(3.0)
        kw = dict(xs=[-4, 0, 4], ys=[-4, 0, 4], box=(-9, 9))
        r1 = apriori_sweep(u, rho, 0.5, [1e-2j, 0.5 + 1e-2j], n_samples=1500,
                           seed=7, **kw)
        r2 = apriori_sweep(u, rho, 0.5, [1e-2j, 0.5 + 1e-2j], n_samples=3000,
                           seed=7, **kw)
        top = max(r1.cells, key=lambda c: c["mean"])
        assert abs(r1.sup_estimate - r2.sup_estimate) < 3 * top["std_error"]
