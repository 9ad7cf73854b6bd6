"""Determinant spectral averaging, closed-form constants, and the D bounds.

The single averaging inequality everything rests on: for invertible V and
s in (0,1),

    int |det(A + rV)|^{-s/n} rho(r) dr
        <= |det V|^{-s/n} ||rho||_1^{1-s} ||rho||_inf^s 2^s s^{-s}/(1-s)
        <= |det V|^{-s/n} ( lambda^{-s} ||rho||_1 + 2 lambda^{1-s}/(1-s) ||rho||_inf ),

the first line being the second at the minimizing
lambda* = s ||rho||_1 / (2 ||rho||_inf).

The integrand has |r - Re z_j|^{-s}-type integrable singularities at the
roots z_j of r -> det(A + rV); we locate them as eigenvalues of the pencil
(A, -V) and hand their real parts to the quadrature as panel boundaries.

From the inequality follow the decay constants (C_u, C_rho and the + variants,
the disorder threshold) for connected support, the multi-parameter average
for gapped support with its feasible alpha' from the volume-comparison
criterion, and the explicit D / D+ upper bounds.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.linalg import eigvals

from .errors import (
    NoApplicableAssumption,
    QuadratureFailure,
    SearchExhausted,
    SingularCombination,
    SingularV,
)
from .model import DisorderDensity, SingleSitePotential, uniform_stream

__all__ = [
    "ConstantsReport",
    "AlphaVector",
    "DBounds",
    "det_fractional_average",
    "optimal_lambda",
    "MultiParamAverage",
    "multiparam_det_average",
    "fmm_constants",
    "alpha_star_search",
    "D_bounds",
    "d_bounds_from_params",
    "resolvent_norm_average_check",
    "NormAverageResult",
    "find_weak_disorder_R",
]

QUAD_REL_TOL = 1e-6


# ---------------------------------------------------------------------------
# Lemma-level averaging
# ---------------------------------------------------------------------------


def _check_invertible(V: np.ndarray, name: str = "V"):
    sv = np.linalg.svd(np.asarray(V, dtype=complex), compute_uv=False)
    if sv[0] == 0 or sv[-1] <= 1e-13 * sv[0]:
        raise SingularV(f"{name} is numerically singular (cond > 1e13)")


def _pencil_roots(A: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Roots of r -> det(A + rV) as eigenvalues of the pencil (A, -V)."""
    return eigvals(np.asarray(A, dtype=complex), -np.asarray(V, dtype=complex))


def _quad_density(f: Callable[[float], float], rho: DisorderDensity, points) -> float:
    R = rho.support_radius
    pts = sorted({float(p) for p in points if -R < p < R})
    # full_output suppresses quadpack chatter; the error estimate is checked here
    out = quad(
        lambda r: f(r) * float(rho.pdf(r)),
        -R,
        R,
        points=pts or None,
        limit=400,
        full_output=1,
    )
    val, err = out[0], out[1]
    if not math.isfinite(val) or err > QUAD_REL_TOL * max(abs(val), 1e-12):
        raise QuadratureFailure(
            f"quadrature error {err:.2e} exceeds {QUAD_REL_TOL} relative at value {val:.6e}"
        )
    return val


def det_fractional_average(
    A, V, rho: DisorderDensity, s: float
) -> tuple[float, float, Callable[[float], float]]:
    """Average of |det(A + rV)|^{-s/n} against rho, with both upper bounds.

    Returns (integral, bound1, bound2_fn); bound1 equals bound2_fn at the
    minimizing lambda.  n is the matrix dimension.
    """
    if not 0 < s < 1:
        raise ValueError("s must lie in (0,1)")
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    V = np.atleast_2d(np.asarray(V, dtype=complex))
    n = A.shape[0]
    _check_invertible(V)
    sign, logdetV = np.linalg.slogdet(V)
    detV_pow = math.exp(-(s / n) * logdetV)

    roots = _pencil_roots(A, V)

    def integrand(r: float) -> float:
        _, ld = np.linalg.slogdet(A + r * V)
        return math.exp(min(-(s / n) * ld, 700.0))

    integral = _quad_density(integrand, rho, np.real(roots))

    l1 = 1.0  # densities carry unit mass
    sup = rho.sup_norm
    bound1 = detV_pow * l1 ** (1 - s) * sup**s * (2.0**s) * s ** (-s) / (1 - s)

    def bound2_fn(lam: float) -> float:
        return detV_pow * (lam ** (-s) * l1 + 2.0 * lam ** (1 - s) / (1 - s) * sup)

    return integral, bound1, bound2_fn


def optimal_lambda(rho: DisorderDensity, s: float) -> float:
    """Minimizer of the two-term bound: s ||rho||_1 / (2 ||rho||_inf)."""
    return s * 1.0 / (2.0 * rho.sup_norm)


@dataclass(frozen=True)
class MultiParamAverage:
    integral: float
    std_error: float  # 0 for full quadrature
    bound_A1: float | None
    bound_A2: float | None


def _multi_bounds(dets_pow, alpha, rho: DisorderDensity, t: float, N: int):
    a = np.asarray(alpha, dtype=float)
    bound_A1 = None
    if rho.w11_norm is not None:
        bound_A1 = (
            dets_pow
            * (np.sum(np.abs(a))) ** t
            * t ** (-t)
            / (1 - t)
            * rho.w11_norm**t
        )
    ratio = 0.0 if N == 0 else float(np.max(np.abs(a[1:]) / abs(a[0])))
    bound_A2 = (
        dets_pow
        * abs(a[0]) ** t
        * (1.0 + ratio) ** (N * t)
        * (2.0**t) * t ** (-t) / (1 - t)
        * (2.0 * rho.support_radius) ** (N * t)
        * rho.sup_norm ** ((N + 1) * t)
    )
    return bound_A1, bound_A2


def multiparam_det_average(
    A,
    Vs: Sequence,
    alpha: Sequence[float],
    rho: DisorderDensity,
    t: float,
    n_mc: int = 4000,
    seed: int = 0,
) -> MultiParamAverage:
    """(N+1)-fold average of |det(A + sum_i r_i V_i)|^{-t/d} with its bounds.

    N = 0 delegates to the one-parameter average; N = 1 uses nested
    quadrature; larger N is a quadrature-in-r0 / Monte-Carlo-in-the-rest
    hybrid with a reported standard error.
    """
    if not 0 < t < 1:
        raise ValueError("t must lie in (0,1)")
    mats = [np.atleast_2d(np.asarray(M, dtype=complex)) for M in Vs]
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    N = len(mats) - 1
    if N < 0:
        raise ValueError("need at least one matrix V_0")
    a = np.asarray(alpha, dtype=float)
    if a.shape != (N + 1,):
        raise ValueError("alpha must have one entry per matrix")
    if a[0] == 0:
        raise ValueError("alpha_0 must be nonzero")
    comb = sum(ak * M for ak, M in zip(a, mats))
    try:
        _check_invertible(comb, "sum alpha_k V_k")
    except SingularV as exc:
        raise SingularCombination(str(exc)) from exc
    d = A.shape[0]
    sign, logdet = np.linalg.slogdet(comb)
    dets_pow = math.exp(-(t / d) * logdet)
    bound_A1, bound_A2 = _multi_bounds(dets_pow, a, rho, t, N)
    if bound_A1 is None and bound_A2 is None:
        raise NoApplicableAssumption("density satisfies neither A1 nor A2 inputs")

    def inner_integral(rest: np.ndarray) -> float:
        """Root-split quadrature over r_0 at frozen (r_1..r_N)."""
        A_eff = A + sum(r * M for r, M in zip(rest, mats[1:]))
        roots = _pencil_roots(A_eff, mats[0])

        def f(r0: float) -> float:
            _, ld = np.linalg.slogdet(A_eff + r0 * mats[0])
            return math.exp(min(-(t / d) * ld, 700.0))

        return _quad_density(f, rho, np.real(roots))

    if N == 0:
        val = inner_integral(np.zeros(0))
        return MultiParamAverage(val, 0.0, bound_A1, bound_A2)

    if N == 1:
        R = rho.support_radius
        val, err = quad(
            lambda r1: inner_integral(np.array([r1])) * float(rho.pdf(r1)),
            -R,
            R,
            limit=200,
            epsabs=1e-10,
            epsrel=1e-7,
        )
        if err > 10 * QUAD_REL_TOL * max(abs(val), 1e-12):
            raise QuadratureFailure(f"outer quadrature error {err:.2e} too large")
        return MultiParamAverage(val, 0.0, bound_A1, bound_A2)

    # Monte Carlo over (r_1..r_N), exact quadrature over r_0
    draws = rho.ppf(uniform_stream(seed, np.arange(n_mc), np.arange(1, N + 1)))
    vals = np.array([inner_integral(row) for row in draws])
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_mc))
    return MultiParamAverage(mean, se, bound_A1, bound_A2)


# ---------------------------------------------------------------------------
# closed-form constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantsReport:
    """All printable constants for a (u, rho, s) triple.

    The plus-variants, mass and disorder threshold belong to the connected-
    support branch and are None when u has a gap (r > 0); the D bounds are
    the general-support route and are None when the density lacks the
    corresponding assumption.
    """

    s: float
    n: int
    gap_width_r: int
    C_u: float
    C_rho: float
    C_u_rho: float
    C_u_plus: float | None
    C_rho_plus: float | None
    C_u_rho_plus: float | None
    C_u_plus_plus: float | None   # C_{u,+}
    C_u_rho_pplus: float | None   # C_{u,rho,+}
    mass_m: float | None
    disorder_threshold: float | None
    D_bound_A1: float | None
    D_bound_A2: float | None
    Dplus_bound_A1: float | None
    Dplus_bound_A2: float | None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _c_rho(sup: float, s: float) -> float:
    return sup**s * 2.0**s * s ** (-s) / (1 - s)


def fmm_constants(u: SingleSitePotential, rho: DisorderDensity, s: float) -> ConstantsReport:
    if not 0 < s < 1:
        raise ValueError("s must lie in (0,1)")
    n, r = u.n, u.gap_width_r
    sup = rho.sup_norm
    prod_theta = abs(np.prod([u.value(k) for k in sorted(u.theta)]))
    C_u = prod_theta ** (-s / n)
    C_rho = _c_rho(sup, s)
    C_u_rho = C_u * C_rho

    if r == 0:
        C_u_plus = max(
            abs(np.prod([u.value(k) for k in range(i + 1)])) ** (-s / n) for i in range(n)
        )
        C_rho_plus = max(sup**s, sup ** (s / n)) * 2.0**s * s ** (-s) / (1 - s)
        C_u_rho_plus = C_u_plus * C_rho_plus
        C_u_pp = max(
            abs(np.prod([u.value(k) for k in range(n - 1 - i, n)])) ** (-s / n)
            for i in range(n)
        )
        C_u_rho_pp = C_u_pp * C_rho_plus
        mass_m = -math.log(C_u_rho)
        threshold = (1 - s) ** (1 / s) / (2 / s) * prod_theta ** (1 / n)
    else:
        C_u_plus = C_rho_plus = C_u_rho_plus = C_u_pp = C_u_rho_pp = None
        mass_m = threshold = None

    db = D_bounds(u, rho, s)
    return ConstantsReport(
        s=s,
        n=n,
        gap_width_r=r,
        C_u=C_u,
        C_rho=C_rho,
        C_u_rho=C_u_rho,
        C_u_plus=C_u_plus,
        C_rho_plus=C_rho_plus,
        C_u_rho_plus=C_u_rho_plus,
        C_u_plus_plus=C_u_pp,
        C_u_rho_pplus=C_u_rho_pp,
        mass_m=mass_m,
        disorder_threshold=threshold,
        D_bound_A1=db.D_A1,
        D_bound_A2=db.D_A2,
        Dplus_bound_A1=db.Dplus_A1,
        Dplus_bound_A2=db.Dplus_A2,
    )


# ---------------------------------------------------------------------------
# feasible alpha' and the D bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AlphaVector:
    components: tuple[float, ...]
    min_distance: float


def _hyperplane_rows(u: SingleSitePotential) -> np.ndarray:
    """Rows u_i = (u(i-k))_{k=0}^r for i = 0..n-1+r; none is the zero vector."""
    n, r = u.n, u.gap_width_r
    return np.array([[u.value(i - k) for k in range(r + 1)] for i in range(n + r)])


def hyperplane_distances(u: SingleSitePotential, alpha) -> np.ndarray:
    U = _hyperplane_rows(u)
    a = np.asarray(alpha, dtype=float)
    return np.abs(U @ a) / np.linalg.norm(U, axis=1)


def alpha_star_search(u: SingleSitePotential, max_random: int = 200_000) -> AlphaVector:
    """alpha' in [0,1]^{r+1} at distance >= d0/2 from every hyperplane <a,u_i>=0.

    Grid search with step d0/4 (randomized fallback when the grid is too
    large); existence is guaranteed by the volume-comparison argument, and
    the returned min_distance is recomputed exactly.
    """
    n, r = u.n, u.gap_width_r
    d0 = 1.0 / ((n + r) * (r + 1) ** (r / 2.0))
    target = d0 / 2.0
    if r == 0:
        return AlphaVector((1.0,), float(hyperplane_distances(u, [1.0]).min()))

    U = _hyperplane_rows(u)
    norms = np.linalg.norm(U, axis=1)

    def min_dist(a: np.ndarray) -> float:
        return float(np.min(np.abs(U @ a) / norms))

    step = d0 / 4.0
    axis = np.arange(step, 1.0 + 1e-12, step)  # within [0,1], excluding 0
    if len(axis) ** (r + 1) <= 2_000_000:
        best, best_d = None, -1.0
        for cand in itertools.product(axis, repeat=r + 1):
            a = np.asarray(cand)
            dd = min_dist(a)
            if dd > best_d:
                best, best_d = a, dd
        if best_d >= target:
            return AlphaVector(tuple(float(v) for v in best), best_d)

    # randomized fallback: uniform draws succeed with probability >= 1/2
    us = uniform_stream(1234, np.arange(max_random), np.arange(r + 1))
    for row in us:
        dd = min_dist(row)
        if dd >= target:
            return AlphaVector(tuple(float(v) for v in row), dd)
    raise SearchExhausted(
        "no feasible alpha found; the volume argument guarantees one exists"
    )


@dataclass(frozen=True)
class DBounds:
    D_A1: float | None
    D_A2: float | None
    Dplus_A1: float | None
    Dplus_A2: float | None


def d_bounds_from_params(
    u: SingleSitePotential,
    s: float,
    sup_norm: float,
    w11_norm: float | None,
    R: float | None,
) -> DBounds:
    """The four explicit D / D+ upper bounds as displayed formulas.

    The squared-norm products prod_i sum_k u(i-k)^2 come from bounding
    |<alpha', u_i>| >= ||u_i|| * d0/2 for the volume-comparison alpha'.
    """
    if not 0 < s < 1:
        raise ValueError("s must lie in (0,1)")
    n, r = u.n, u.gap_width_r
    U = _hyperplane_rows(u)
    sq = np.sum(U * U, axis=1)  # ||u_i||^2, i = 0..n-1+r
    vol = 2.0 * (n + r) * (r + 1) ** (r / 2.0)
    prod_full = float(np.prod(sq))

    D_A1 = D_A2 = Dplus_A1 = Dplus_A2 = None
    if w11_norm is not None:
        D_A1 = (
            w11_norm**s
            * s ** (-s) / (1 - s)
            * (r + 1) ** s
            * vol**s
            / prod_full ** (s / (2 * (n + r)))
        )
        terms = []
        for d in range(n + r):
            vol_d = 2.0 * (d + 1) * (r + 1) ** (r / 2.0)
            prod_d = float(np.prod(sq[: d + 1]))
            terms.append(
                w11_norm ** (s * (d + 1) / (n + r))
                * s ** (-s) / (1 - s)
                * (r + 1) ** s
                * vol_d**s
                / prod_d ** (s / (2 * (n + r)))
            )
        Dplus_A1 = max(terms)
    if R is not None:
        D_A2 = (
            sup_norm ** ((r + 1) * s)
            * 2.0**s * s ** (-s) / (1 - s)
            * (1.0 + vol) ** (r * s)
            * (2.0 * R) ** (r * s)
            * vol**s
            / prod_full ** (s / (2 * (n + r)))
        )
        terms = []
        for d in range(n + r):
            vol_d = 2.0 * (d + 1) * (r + 1) ** (r / 2.0)
            prod_d = float(np.prod(sq[: d + 1]))
            terms.append(
                sup_norm ** (s * (r + 1) * (d + 1) / (n + r))
                * (2.0 * R) ** (s * r * (d + 1) / (n + r))
                * (1.0 + vol_d) ** (s * r)
                * vol_d**s
                * 2.0**s * s ** (-s) / (1 - s)
                / prod_d ** (s / (2 * (n + r)))
            )
        Dplus_A2 = max(terms)
    return DBounds(D_A1, D_A2, Dplus_A1, Dplus_A2)


def D_bounds(u: SingleSitePotential, rho: DisorderDensity, s: float) -> DBounds:
    return d_bounds_from_params(u, s, rho.sup_norm, rho.w11_norm, rho.support_radius)


def find_weak_disorder_R(
    u: SingleSitePotential, s: float, target: float = 0.9, kind: str = "uniform"
) -> float:
    """Smallest-order support radius with D_A2(uniform(R)) <= target.

    For the uniform density D_A2 scales as (2R)^{-s}, so the solution is
    closed-form up to the prefactor; a doubling search keeps it density-
    agnostic.
    """
    def d_at(R: float) -> float:
        db = D_bounds(u, DisorderDensity(kind, R), s)
        if db.D_A2 is None:
            raise SearchExhausted("density kind lacks a support radius")
        return db.D_A2

    R = 1.0
    for _ in range(200):
        if d_at(R) <= target:
            break
        R *= 2.0
    else:
        raise SearchExhausted(f"no R <= {R} reaches D_A2 <= {target}")
    lo, hi = R / 2.0, R
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if d_at(mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# Lemma 6.2-style norm averaging
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormAverageResult:
    lhs: float            # int_{-R}^{R} ||(A+rV)^{-1}||^{s/n} dr
    rhs: float            # explicit bound
    vinv_norm: float      # ||V^{-1}||
    vinv_bound: float     # ||V||^{n-1} / |det V|


def resolvent_norm_average_check(
    A, V, rho: DisorderDensity, s: float
) -> NormAverageResult:
    """Both halves of the norm-averaging estimate on [-R, R].

    lhs integrates the inverse-norm power over the support of rho (flat
    measure, as in the statement); rhs is
    2 R^{1-s} (||A|| + R ||V||)^{s(n-1)/n} / (s^s (1-s) |det V|^{s/n}).
    """
    if not 0 < s < 1:
        raise ValueError("s must lie in (0,1)")
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    V = np.atleast_2d(np.asarray(V, dtype=complex))
    n = A.shape[0]
    _check_invertible(V)
    R = rho.support_radius
    sv = np.linalg.svd(V, compute_uv=False)
    vinv_norm = 1.0 / sv[-1]
    _, logdetV = np.linalg.slogdet(V)
    vinv_bound = math.exp((n - 1) * math.log(sv[0]) - logdetV)

    roots = np.real(_pencil_roots(A, V))
    pts = sorted({float(p) for p in roots if -R < p < R})

    def f(r: float) -> float:
        M = A + r * V
        smin = np.linalg.svd(M, compute_uv=False)[-1]
        if smin == 0:
            return 1e300
        return smin ** (-(s / n))

    lhs, err = quad(f, -R, R, points=pts or None, limit=400)
    if err > QUAD_REL_TOL * max(abs(lhs), 1e-12):
        raise QuadratureFailure(f"norm-average quadrature error {err:.2e}")

    normA = float(np.linalg.norm(A, 2))
    normV = float(np.linalg.norm(V, 2))
    rhs = (
        2.0
        * R ** (1 - s)
        * (normA + R * normV) ** (s * (n - 1) / n)
        / (s**s * (1 - s) * math.exp((s / n) * logdetV))
    )
    return NormAverageResult(lhs, rhs, vinv_norm, vinv_bound)
