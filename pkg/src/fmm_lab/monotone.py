"""Positive-block extraction from sign-changing single-site potentials.

A positive single-site block can be extracted from the alloy potential iff
the polynomial p_u(z) = sum_k u(k) z^k has no root in [0, infinity).  The
root test is exact: Sturm sign-variation counting in rational arithmetic
(floats are dyadic, so snapping to Fraction is lossless).  The witness is
the Polya multiplier (1+x)^M: multiply until all coefficients of p_u * p
are strictly positive; the coefficient list is then the positive block
v = u * gamma.

The two-parameter averaging inequality behind the extractable case,

    int_{[-S,S]^2} |<d_x, (H+z-v1*phi-v2*psi)^{-1} d_y>|^s dv1 dv2
        <= 4/(1-s) * (C_W / sqrt(phi(x) psi(y)))^s * S^{2-s},

involves a universal constant C_W the source never instantiates; every
dependent check is either a shape (scaling-exponent) check or uses an
explicitly recorded calibrated C_W.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import SeparationViolated
from .model import (
    BoxHamiltonian,
    DisorderDensity,
    SingleSitePotential,
    alloy_potential_batch,
    coupling_matrix,
    required_offsets,
    uniform_stream,
)

__all__ = [
    "PositivityWitness",
    "SearchVerdict",
    "TwoParamResult",
    "MonotoneMomentResult",
    "nonneg_root_test",
    "positive_combination_search",
    "two_param_averaging_check",
    "monotone_moment_bound_check",
    "layer_cake_constant_K",
]


# ---------------------------------------------------------------------------
# exact Sturm root test on [0, infinity)
# ---------------------------------------------------------------------------


def _trim(p: list[Fraction]) -> list[Fraction]:
    while p and p[-1] == 0:
        p.pop()
    return p


def _eval(p: list[Fraction], x: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in reversed(p):
        acc = acc * x + c
    return acc


def _deriv(p: list[Fraction]) -> list[Fraction]:
    return [c * k for k, c in enumerate(p)][1:]


def _rem(num: list[Fraction], den: list[Fraction]) -> list[Fraction]:
    num = num[:]
    dn = len(den) - 1
    lead = den[-1]
    while len(num) - 1 >= dn and _trim(num):
        k = len(num) - 1 - dn
        f = num[-1] / lead
        for i, c in enumerate(den):
            num[k + i] -= f * c
        num.pop()
        _trim(num)
    return num


def _sturm_chain(p: list[Fraction]) -> list[list[Fraction]]:
    chain = [p, _trim(_deriv(p))]
    while chain[-1]:
        r = [-c for c in _rem(chain[-2], chain[-1])]
        r = _trim(r)
        if not r:
            break
        chain.append(r)
    return [q for q in chain if q]


def _variations(chain, x: Fraction) -> int:
    signs = []
    for q in chain:
        v = _eval(q, x)
        if v != 0:
            signs.append(1 if v > 0 else -1)
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def nonneg_root_test(u: SingleSitePotential) -> bool:
    """True iff p_u(x) = sum u(k) x^k has no real root in [0, infinity).

    Exact rational Sturm count on [0, B] with the Cauchy bound
    B = 1 + max_k |u(k)/u(n-1)|; u(0) != 0 rules out a root at zero, and
    distinct roots are counted so multiple roots are still detected.
    """
    p = _trim([Fraction(v) for v in u.values])
    if len(p) <= 1:
        return True  # nonzero constant
    B = 1 + max(abs(c / p[-1]) for c in p)
    chain = _sturm_chain(p)
    return _variations(chain, Fraction(0)) - _variations(chain, B) == 0


# ---------------------------------------------------------------------------
# Polya multiplier witness
# ---------------------------------------------------------------------------


class SearchVerdict(enum.Enum):
    NOT_EXTRACTABLE = "not-extractable"
    INCONCLUSIVE_WITHIN_BUDGET = "inconclusive-within-budget"


@dataclass(frozen=True)
class PositivityWitness:
    """gamma with v = u * gamma strictly positive on {0,...,M+n-1}.

    gamma is |gamma_0| = 1-normalized; gamma_0 = -1 occurs exactly when
    u(0) < 0 (then -p_u is the positive polynomial).
    """

    M: int
    gamma: tuple[float, ...]
    v: tuple[float, ...]


def positive_combination_search(
    u: SingleSitePotential, M_max: int = 64
) -> PositivityWitness | SearchVerdict:
    """Find the Polya witness or report why none is returned.

    Root test fails -> NOT_EXTRACTABLE (exact, no search attempted).
    Otherwise multiply p_u by (1+x)^M until every coefficient is strictly
    positive; the Polya exponent is finite but can exceed any fixed budget,
    in which case INCONCLUSIVE_WITHIN_BUDGET is returned.
    """
    if not nonneg_root_test(u):
        return SearchVerdict.NOT_EXTRACTABLE
    sign = 1 if u.values[0] > 0 else -1
    coeffs = [Fraction(v) for v in u.values]
    for M in range(M_max + 1):
        gamma = [sign * Fraction(math.comb(M, j)) for j in range(M + 1)]
        v = [Fraction(0)] * (M + u.n)
        for j, g in enumerate(gamma):
            for k, c in enumerate(coeffs):
                v[j + k] += g * c
        if all(x > 0 for x in v):
            return PositivityWitness(
                M, tuple(float(g) for g in gamma), tuple(float(x) for x in v)
            )
    return SearchVerdict.INCONCLUSIVE_WITHIN_BUDGET


# ---------------------------------------------------------------------------
# two-parameter averaging (layer-cake bound shape)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoParamResult:
    lhs: float
    rhs: float
    order: int  # Gauss-Legendre order that met the refinement tolerance


def two_param_averaging_check(
    H: BoxHamiltonian,
    phi: np.ndarray,
    psi: np.ndarray,
    x: int,
    y: int,
    z: complex,
    S: float,
    s: float,
    C_W: float = 1.0,
    rel_tol: float = 1e-4,
) -> TwoParamResult:
    """2D quadrature of the double spectral average against the stated bound.

    lhs = int_{[-S,S]^2} |<d_x, (H + z - v1*phi - v2*psi)^{-1} d_y>|^s;
    Im z > 0 keeps the integrand smooth, so tensor Gauss-Legendre with
    order doubling converges fast.  rhs uses the configured C_W.
    """
    if not 0 < s < 1:
        raise ValueError("s must lie in (0,1)")
    zc = complex(z)
    if zc.imag <= 0:
        raise ValueError("two-parameter averaging needs Im z > 0")
    a, _ = H.box
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    d = H.dimension
    if phi.shape != (d,) or psi.shape != (d,):
        raise ValueError("phi and psi must be site functions on the box")
    ix, iy = x - a, y - a
    if phi[ix] <= 0 or psi[iy] <= 0:
        raise ValueError("phi(x) and psi(y) must be positive")
    base = H.to_dense().astype(np.complex128) + zc * np.eye(d)

    def lhs_at(order: int) -> float:
        nodes, weights = np.polynomial.legendre.leggauss(order)
        v = nodes * S
        w = weights * S
        A = (
            base[None, None, :, :]
            - v[:, None, None, None] * np.diag(phi)[None, None, :, :]
            - v[None, :, None, None] * np.diag(psi)[None, None, :, :]
        ).reshape(order * order, d, d)
        rhs_vec = np.zeros((order * order, d, 1), dtype=np.complex128)
        rhs_vec[:, iy, 0] = 1.0
        sol = np.linalg.solve(A, rhs_vec)[:, ix, 0].reshape(order, order)
        return float(np.einsum("i,j,ij->", w, w, np.abs(sol) ** s))

    prev = lhs_at(16)
    order = 32
    while order <= 256:
        cur = lhs_at(order)
        if abs(cur - prev) <= rel_tol * max(abs(cur), 1e-300):
            prev = cur
            break
        prev = cur
        order *= 2
    lhs = prev
    rhs = 4.0 / (1 - s) * (C_W / math.sqrt(phi[ix] * psi[iy])) ** s * S ** (2 - s)
    return TwoParamResult(lhs, rhs, min(order, 256))


def layer_cake_constant_K(
    witness: PositivityWitness,
    u: SingleSitePotential,
    rho: DisorderDensity,
    s: float,
    C_W: float,
) -> tuple[float, float]:
    """(K, S) of the extractable-case moment bound.

    S = R (1 + max_{i>=1} |lambda_i|);
    K = 4/(1-s) (C_W / sqrt(v(0) v(M+n-1)))^s (2 S ||rho||_inf)^{2(M+1)} S^{-s}.
    """
    lam = witness.gamma
    N = witness.M
    R = rho.support_radius
    S = R * (1.0 + (max(abs(l) for l in lam[1:]) if N >= 1 else 0.0))
    corner = witness.v[0] * witness.v[-1]
    K = (
        4.0 / (1 - s)
        * (C_W / math.sqrt(corner)) ** s
        * (2.0 * S * rho.sup_norm) ** (2 * (N + 1))
        * S ** (-s)
    )
    return K, S


@dataclass(frozen=True)
class MonotoneMomentResult:
    estimate: float
    std_error: float
    K: float
    S: float
    n_samples: int


def monotone_moment_bound_check(
    u: SingleSitePotential,
    rho: DisorderDensity,
    s: float,
    box: tuple[int, int],
    x: int,
    j: int,
    z: complex,
    n_samples: int,
    seed: int,
    witness: PositivityWitness,
    C_W: float = 1.0,
    background_seed: int = 0,
) -> MonotoneMomentResult:
    """MC estimate of E_Lambda{|G(z;x,j)|^s} against the extractable-case K.

    Per realization the couplings in the two blocks Lambda_x = {x..x+N} and
    Lambda_j = {j-n+1-N..j-n+1} come from the main stream while everything
    else is frozen from the background stream.  The bound holds pathwise in
    the background, hence also for this mixture, and the estimate converges
    to the full expectation whatever background_seed is.  Requires
    |j-x| >= 2(N+n)-1 and Im z > 0.
    """
    if not 0 < s < 1:
        raise ValueError("s must lie in (0,1)")
    zc = complex(z)
    if zc.imag <= 0:
        raise ValueError("proposition needs Im z > 0")
    N, n = witness.M, u.n
    if abs(j - x) < 2 * (N + n) - 1:
        raise SeparationViolated(f"|j-x| = {abs(j - x)} < 2(N+n)-1 = {2 * (N + n) - 1}")
    a, b = box
    lam_x = list(range(x, x + N + 1))
    lam_j = list(range(j - n + 1 - N, j - n + 2))
    lam = lam_x + lam_j
    lo, hi = required_offsets(u, box)
    if not (lo <= min(lam) and max(lam) <= hi):
        raise ValueError("averaging blocks must lie inside the coupling window")

    w_bg = coupling_matrix(rho, lo, hi, background_seed, np.arange(n_samples))
    cols = [k - lo for k in lam]
    u01 = uniform_stream(seed, np.arange(n_samples), np.asarray(lam))
    draws = rho.ppf(u01)

    from .greens import TridiagFactor

    rhs = np.zeros(b - a + 1, dtype=np.complex128)
    rhs[j - a] = 1.0
    vals = np.empty(n_samples)
    for i in range(n_samples):
        w = w_bg[i].copy()
        w[cols] = draws[i]
        V = alloy_potential_batch(u, w[None, :], lo, box)[0]
        f = TridiagFactor(V.astype(np.complex128) - zc)
        col = f.solve(rhs)
        vals[i] = abs(col[x - a]) ** s
    K, S = layer_cake_constant_K(witness, u, rho, s, C_W)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_samples))
    return MonotoneMomentResult(mean, se, K, S, n_samples)
