import numpy as np
import pytest
from scipy.integrate import quad

from fmm_lab.errors import EmptyBox, EmptySupport, InsufficientCouplings, UnnormalizedSupport
from fmm_lab.model import (
    BoxHamiltonian,
    DisorderDensity,
    alloy_potential,
    alloy_potential_batch,
    assemble_box_hamiltonian,
    build_single_site,
    coupling_matrix,
    required_offsets,
    sample_couplings,
)


class TestBuildSingleSite:
    def test_delta(self):
        u = build_single_site([1])
        assert u.n == 1 and u.theta == {0} and u.gap_width_r == 0

    def test_single_gap(self):
        # one missing interior site gives gap width 1
        u = build_single_site([1, 0, 2])
        assert u.n == 3 and u.theta == {0, 2} and u.gap_width_r == 1

    def test_double_gap(self):
        # consecutive missing integers {1, 2} give gap width 2
        u = build_single_site([3, 0, 0, -1])
        assert u.n == 4 and u.theta == {0, 3} and u.gap_width_r == 2

    def test_connected_iff_r_zero(self):
        for vals in ([1], [1, -2], [2, 1, 1], [1, -1, 1]):
            u = build_single_site(vals)
            assert u.gap_width_r == 0
            assert u.theta == set(range(u.n))

    def test_empty_support(self):
        with pytest.raises(EmptySupport):
            build_single_site([0, 0])
        with pytest.raises(EmptySupport):
            build_single_site([])

    def test_unnormalized(self):
        with pytest.raises(UnnormalizedSupport):
            build_single_site([0, 1])
        with pytest.raises(UnnormalizedSupport):
            build_single_site([1, 0])


class TestDisorderDensity:
    @pytest.mark.parametrize("kind,R", [("uniform", 1.0), ("uniform", 10.0),
                                        ("triangular", 0.5), ("triangular", 3.0),
                                        ("bump", 1.0), ("bump", 7.0)])
    def test_mass_one(self, kind, R):
        rho = DisorderDensity(kind, R)
        mass, _ = quad(lambda x: float(rho.pdf(x)), -R, R, limit=200)
        assert abs(mass - 1.0) < 1e-10

    def test_closed_form_norms(self):
        assert DisorderDensity.uniform(2.0).sup_norm == 0.25
        tri = DisorderDensity.triangular(2.0)
        assert tri.sup_norm == 0.5 and tri.w11_norm == 1.0
        assert DisorderDensity.uniform(2.0).w11_norm is None

    def test_bump_norms(self):
        rho = DisorderDensity.bump(2.0)
        assert abs(float(rho.pdf(0.0)) - rho.sup_norm) < 1e-12
        # |rho'| integrates to twice the peak for a unimodal density
        assert abs(rho.w11_norm - 2 * rho.sup_norm) < 1e-12

    @pytest.mark.parametrize("kind", ["uniform", "triangular", "bump"])
    def test_ppf_inverts_cdf(self, kind):
        rho = DisorderDensity(kind, 1.5)
        qs = np.linspace(0.01, 0.99, 23)
        xs = rho.ppf(qs)
        for q, x in zip(qs, xs):
            cdf, _ = quad(lambda t: float(rho.pdf(t)), -1.5, x, limit=200)
            assert abs(cdf - q) < 1e-6


class TestSampling:
    def test_support_containment(self):
        rho = DisorderDensity.uniform(1.0)
        cf = sample_couplings(rho, range(-50, 50), seed=3, sample_index=11)
        assert np.all(np.abs(cf.values) <= 1.0)

    def test_determinism(self):
        rho = DisorderDensity.triangular(2.0)
        a = sample_couplings(rho, range(0, 40), seed=9, sample_index=4)
        b = sample_couplings(rho, range(0, 40), seed=9, sample_index=4)
        assert np.array_equal(a.values, b.values)
        c = sample_couplings(rho, range(0, 40), seed=9, sample_index=5)
        assert not np.array_equal(a.values, c.values)

    def test_per_offset_stability(self):
        # the value at a coupling index does not depend on the window
        rho = DisorderDensity.uniform(1.0)
        wide = sample_couplings(rho, range(-10, 30), seed=1, sample_index=2)
        narrow = sample_couplings(rho, range(5, 12), seed=1, sample_index=2)
        for k in range(5, 12):
            assert wide.value(k) == narrow.value(k)

    def test_clt_mean(self):
        # Var(omega) = R^2/3 for the uniform density
        rho = DisorderDensity.uniform(10.0)
        w = coupling_matrix(rho, 0, 0, seed=123, sample_indices=np.arange(100_000))
        se = 10.0 / np.sqrt(3 * 100_000)
        assert abs(w.mean()) < 4 * se

    def test_batch_matches_single(self):
        rho = DisorderDensity.bump(2.0)
        w = coupling_matrix(rho, -3, 4, seed=77, sample_indices=np.arange(5))
        for i in range(5):
            cf = sample_couplings(rho, range(-3, 5), seed=77, sample_index=i)
            assert np.array_equal(w[i], cf.values)


class TestAlloyPotential:
    def test_identity_for_delta(self):
        u = build_single_site([1])
        rho = DisorderDensity.uniform(5.0)
        cf = sample_couplings(rho, range(0, 10), seed=0, sample_index=0)
        V = alloy_potential(u, cf, (0, 9))
        assert np.array_equal(V, cf.values)

    def test_direct_convolution(self):
        # u=[1,2], omega_0=3, omega_{-1}=1, box={0}: V(0) = 3*1 + 1*2 = 5
        u = build_single_site([1, 2])
        cf_vals = np.array([1.0, 3.0])  # indices -1, 0
        from fmm_lab.model import CouplingField

        cf = CouplingField(-1, 0, cf_vals, seed=0, sample_index=0)
        V = alloy_potential(u, cf, (0, 0))
        assert V.shape == (1,) and V[0] == 5.0

    def test_telescoping_sign_change(self):
        u = build_single_site([1, -1])
        from fmm_lab.model import CouplingField

        cf = CouplingField(-1, 10, np.full(12, 3.7), seed=0, sample_index=0)
        V = alloy_potential(u, cf, (0, 10))
        assert np.allclose(V, 0.0)

    def test_insufficient_couplings(self):
        u = build_single_site([1, 2, 3])
        rho = DisorderDensity.uniform(1.0)
        cf = sample_couplings(rho, range(0, 5), seed=0, sample_index=0)
        with pytest.raises(InsufficientCouplings):
            alloy_potential(u, cf, (0, 4))  # needs offsets from -2

    def test_batch_matches_loop(self):
        u = build_single_site([1.0, -2.0, 0.5])
        rho = DisorderDensity.uniform(1.0)
        lo, hi = required_offsets(u, (-4, 6))
        w = coupling_matrix(rho, lo, hi, seed=5, sample_indices=np.arange(7))
        Vb = alloy_potential_batch(u, w, lo, (-4, 6))
        for i in range(7):
            cf = sample_couplings(rho, range(lo, hi + 1), seed=5, sample_index=i)
            assert np.allclose(Vb[i], alloy_potential(u, cf, (-4, 6)))

    def test_covariance_structure(self):
        # cov(V(x), V(x+j)) = Var(omega) * sum_k u(k) u(k+j), zero for j >= n
        u = build_single_site([1.0, -2.0])
        rho = DisorderDensity.uniform(1.0)
        lo, hi = required_offsets(u, (0, 6))
        w = coupling_matrix(rho, lo, hi, seed=42, sample_indices=np.arange(10_000))
        V = alloy_potential_batch(u, w, lo, (0, 6))
        var_omega = 1.0 / 3.0
        for j in range(0, 4):
            prod = (V[:, 0] - V[:, 0].mean()) * (V[:, j] - V[:, j].mean())
            emp = prod.mean()
            se = prod.std(ddof=1) / np.sqrt(len(prod))
            theory = var_omega * sum(
                u.value(k) * u.value(k + j) for k in range(u.n)
            )
            assert abs(emp - theory) < 5 * se + 1e-12


class TestAssembly:
    def test_free_laplacian(self):
        H = assemble_box_hamiltonian((0, 2), np.zeros(3))
        M = H.to_dense()
        assert np.array_equal(np.diag(M), np.zeros(3))
        assert np.array_equal(np.diag(M, 1), [-1.0, -1.0])
        w = np.linalg.eigvalsh(M)
        assert np.allclose(sorted(w), [-np.sqrt(2), 0.0, np.sqrt(2)], atol=1e-12)

    def test_single_site_box(self):
        H = assemble_box_hamiltonian((5, 5), np.array([7.0]))
        assert H.dimension == 1 and H.to_dense()[0, 0] == 7.0

    def test_empty_box(self):
        with pytest.raises(EmptyBox):
            assemble_box_hamiltonian((3, 2), np.zeros(0))

    def test_linearity(self):
        rng = np.random.default_rng(0)
        V1, V2 = rng.normal(size=6), rng.normal(size=6)
        A = assemble_box_hamiltonian((0, 5), V1 + V2).to_dense()
        B = assemble_box_hamiltonian((0, 5), V1).to_dense() + np.diag(V2)
        assert np.array_equal(A, B)

    def test_pipeline_determinism(self):
        u = build_single_site([1, -1, 1])
        rho = DisorderDensity.triangular(1.0)

        def make():
            lo, hi = required_offsets(u, (-5, 5))
            cf = sample_couplings(rho, range(lo, hi + 1), seed=2024, sample_index=9)
            V = alloy_potential(u, cf, (-5, 5))
            return assemble_box_hamiltonian((-5, 5), V).to_dense()

        assert np.array_equal(make(), make())
