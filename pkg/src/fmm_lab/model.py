"""One-dimensional discrete alloy-type Anderson model.

The Hamiltonian on a finite box Gamma = [a, b] of Z is

    H = -Delta + V,   (Delta psi)(x) = psi(x+1) + psi(x-1),

i.e. a real symmetric tridiagonal matrix with -1 off the diagonal and the
alloy potential V(x) = sum_k omega_k u(x-k) on the diagonal.  The couplings
omega_k are i.i.d. with a compactly supported density rho.

Randomness is a pure function of (seed, sample_index, offset): a splitmix64
counter stream feeds the inverse CDF of the density.  Disjoint sample-index
ranges are therefore order-independent and merge deterministically, and two
boxes sharing coupling indices see identical omega values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import (
    BadSubbox,
    EmptyBox,
    EmptySupport,
    InsufficientCouplings,
    UnnormalizedSupport,
)

__all__ = [
    "SingleSitePotential",
    "DisorderDensity",
    "CouplingField",
    "BoxHamiltonian",
    "build_single_site",
    "sample_couplings",
    "coupling_matrix",
    "alloy_potential",
    "alloy_potential_batch",
    "assemble_box_hamiltonian",
    "required_offsets",
]


# ---------------------------------------------------------------------------
# counter-based uniform stream
# ---------------------------------------------------------------------------

_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / float(1 << 53)


def _mix(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer; bijective avalanche on uint64 (wrapping mod 2^64)."""
    with np.errstate(over="ignore"):
        x = (x ^ (x >> _S30)) * _C1
        x = (x ^ (x >> _S27)) * _C2
        return x ^ (x >> _S31)


def _as_u64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.int64).astype(np.uint64)


def uniform_stream(seed: int, sample_index, offsets) -> np.ndarray:
    """Uniform [0,1) keyed on (seed, sample_index, offset), broadcast over
    the last two arguments.  sample_index broadcasts along axis 0, offsets
    along axis 1 when both are arrays."""
    with np.errstate(over="ignore"):
        hs = _mix(_as_u64(seed) * _GOLDEN + _GOLDEN)
        hi = _mix(hs ^ _as_u64(sample_index) * _GOLDEN)
        off = _as_u64(offsets)
        if np.ndim(hi) > 0 and np.ndim(off) > 0:
            h = _mix(hi[:, None] ^ off[None, :] * _GOLDEN)
        else:
            h = _mix(hi ^ off * _GOLDEN)
    return (h >> _S11).astype(np.float64) * _INV53


# ---------------------------------------------------------------------------
# single-site potential
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SingleSitePotential:
    """Finitely supported u with min supp = 0, max supp = n-1.

    gap_width_r is the length of the longest run of consecutive integers in
    {0,...,n-1} missing from the support; 0 iff the support is connected.
    """

    values: tuple[float, ...]
    n: int
    theta: frozenset[int]
    gap_width_r: int

    def value(self, k: int) -> float:
        """u(k), zero outside {0,...,n-1}."""
        if 0 <= k < self.n:
            return self.values[k]
        return 0.0

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


def build_single_site(values) -> SingleSitePotential:
    vals = [float(v) for v in values]
    if not vals or all(v == 0.0 for v in vals):
        raise EmptySupport("single-site potential must have a nonzero entry")
    if vals[0] == 0.0 or vals[-1] == 0.0:
        raise UnnormalizedSupport(
            "normalize u so that u(0) != 0 and u(n-1) != 0 (translate indices)"
        )
    n = len(vals)
    theta = frozenset(k for k, v in enumerate(vals) if v != 0.0)
    # longest run of consecutive missing integers
    r = run = 0
    for k in range(n):
        run = run + 1 if k not in theta else 0
        r = max(r, run)
    return SingleSitePotential(tuple(vals), n, theta, r)


# ---------------------------------------------------------------------------
# disorder densities
# ---------------------------------------------------------------------------

_BUMP_GRID = 16385  # CDF table size for the smooth bump


class DisorderDensity:
    """Coupling density rho supported in [-R, R], normalized to mass one.

    Three shapes:
      uniform    rho = 1/(2R) on [-R,R]           (compact support only)
      triangular rho = (R-|x|)/R^2                 (also W^{1,1})
      bump       rho ~ exp(-1/(1-(x/R)^2))         (smooth, also W^{1,1})

    sup_norm is ||rho||_inf; w11_norm is ||rho'||_{L^1} when rho is weakly
    differentiable, else None; support_radius is R.
    """

    def __init__(self, kind: str, R: float):
        if R <= 0:
            raise ValueError("support radius R must be positive")
        if kind not in ("uniform", "triangular", "bump"):
            raise ValueError(f"unknown density kind {kind!r}")
        self.kind = kind
        self.R = float(R)
        self._cdf_table = None
        if kind == "uniform":
            self.sup_norm = 1.0 / (2 * self.R)
            self.w11_norm = None
        elif kind == "triangular":
            self.sup_norm = 1.0 / self.R
            self.w11_norm = 2.0 / self.R
        else:
            # one-time quadrature for the normalizing constant of the bump
            base = lambda t: math.exp(-1.0 / (1.0 - t * t)) if abs(t) < 1 else 0.0
            mass, _ = quad(base, -1.0, 1.0, epsabs=1e-14, epsrel=1e-13)
            self._bump_mass = mass
            self.sup_norm = math.exp(-1.0) / (mass * self.R)
            # |rho'| integrates to 2*rho(0): rho rises to its single maximum
            self.w11_norm = 2.0 * self.sup_norm
            self._build_bump_cdf()

    # -- constructors ------------------------------------------------------

    @classmethod
    def uniform(cls, R: float) -> "DisorderDensity":
        return cls("uniform", R)

    @classmethod
    def triangular(cls, R: float) -> "DisorderDensity":
        return cls("triangular", R)

    @classmethod
    def bump(cls, R: float) -> "DisorderDensity":
        return cls("bump", R)

    @property
    def support_radius(self) -> float:
        return self.R

    def __repr__(self):
        return f"DisorderDensity({self.kind!r}, R={self.R})"

    # -- evaluation --------------------------------------------------------

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        R = self.R
        if self.kind == "uniform":
            return np.where(np.abs(x) <= R, 1.0 / (2 * R), 0.0)
        if self.kind == "triangular":
            return np.maximum(R - np.abs(x), 0.0) / (R * R)
        t = x / R
        inside = np.abs(t) < 1.0
        out = np.zeros_like(t)
        ts = np.where(inside, t, 0.0)
        out[inside] = np.exp(-1.0 / (1.0 - ts[inside] ** 2))
        return out / (self._bump_mass * R)

    def _build_bump_cdf(self):
        t = np.linspace(-1.0, 1.0, _BUMP_GRID)
        f = np.zeros_like(t)
        inner = np.abs(t) < 1.0
        f[inner] = np.exp(-1.0 / (1.0 - t[inner] ** 2))
        cdf = np.concatenate(([0.0], np.cumsum((f[1:] + f[:-1]) * 0.5 * (t[1] - t[0]))))
        cdf /= cdf[-1]
        self._cdf_table = (cdf, t)

    def ppf(self, q) -> np.ndarray:
        """Inverse CDF; maps uniform [0,1) to the density's support."""
        q = np.asarray(q, dtype=float)
        R = self.R
        if self.kind == "uniform":
            return (2.0 * q - 1.0) * R
        if self.kind == "triangular":
            lo = q < 0.5
            out = np.empty_like(q)
            out[lo] = R * (np.sqrt(2.0 * q[lo]) - 1.0)
            out[~lo] = R * (1.0 - np.sqrt(2.0 * (1.0 - q[~lo])))
            return out
        cdf, t = self._cdf_table
        return np.interp(q, cdf, t) * R


# ---------------------------------------------------------------------------
# coupling sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CouplingField:
    """Realized couplings omega_k on a contiguous index interval."""

    lo: int  # first coupling index
    hi: int  # last coupling index (inclusive)
    values: np.ndarray
    seed: int
    sample_index: int

    @property
    def offsets(self) -> range:
        return range(self.lo, self.hi + 1)

    def value(self, k: int) -> float:
        if not self.lo <= k <= self.hi:
            raise InsufficientCouplings(f"coupling index {k} outside [{self.lo}, {self.hi}]")
        return float(self.values[k - self.lo])


def sample_couplings(
    density: DisorderDensity, offsets, seed: int, sample_index: int
) -> CouplingField:
    """I.i.d. draws omega_k ~ rho for k in the given contiguous index range."""
    offs = list(offsets)
    if not offs:
        raise EmptyBox("coupling offset range is empty")
    lo, hi = offs[0], offs[-1]
    u01 = uniform_stream(seed, sample_index, np.arange(lo, hi + 1))
    vals = density.ppf(u01)
    return CouplingField(lo, hi, vals, seed, sample_index)


def coupling_matrix(
    density: DisorderDensity, lo: int, hi: int, seed: int, sample_indices
) -> np.ndarray:
    """Batch of coupling rows, one per sample index; row i equals
    sample_couplings(density, range(lo, hi+1), seed, sample_indices[i])."""
    idx = np.asarray(sample_indices, dtype=np.int64)
    u01 = uniform_stream(seed, idx, np.arange(lo, hi + 1))
    return density.ppf(u01)


# ---------------------------------------------------------------------------
# alloy potential and box Hamiltonian
# ---------------------------------------------------------------------------


def required_offsets(u: SingleSitePotential, box: tuple[int, int]) -> tuple[int, int]:
    """Coupling index range feeding V on the box: [min(box)-n+1, max(box)]."""
    a, b = box
    return a - (u.n - 1), b


def alloy_potential(
    u: SingleSitePotential, couplings: CouplingField, box: tuple[int, int]
) -> np.ndarray:
    """V(x) = sum_k omega_k u(x-k) for x in box (finite convolution)."""
    a, b = box
    if b < a:
        raise EmptyBox(f"box [{a}, {b}] is empty")
    lo, hi = required_offsets(u, box)
    if couplings.lo > lo or couplings.hi < hi:
        raise InsufficientCouplings(
            f"need couplings on [{lo}, {hi}], have [{couplings.lo}, {couplings.hi}]"
        )
    w = couplings.values[lo - couplings.lo : hi - couplings.lo + 1]
    return np.convolve(w, u.array, mode="valid")


def alloy_potential_batch(
    u: SingleSitePotential, w: np.ndarray, lo: int, box: tuple[int, int]
) -> np.ndarray:
    """Vectorized alloy potential for a batch of coupling rows.

    w[i, :] holds omega on indices lo..lo+w.shape[1]-1; returns V[i, x] for
    x in box.
    """
    a, b = box
    need_lo, need_hi = required_offsets(u, box)
    if lo > need_lo or lo + w.shape[1] - 1 < need_hi:
        raise InsufficientCouplings("coupling batch does not cover the box")
    width = b - a + 1
    n = u.n
    uv = u.array
    base = need_lo - lo
    V = np.zeros((w.shape[0], width))
    for m in range(n):
        # omega_{x-m} for x = a..b sits at columns base + (n-1-m) .. + width-1
        V += uv[m] * w[:, base + n - 1 - m : base + n - 1 - m + width]
    return V


@dataclass(frozen=True)
class BoxHamiltonian:
    """H = -Delta + V restricted to the box [a, b] with simple truncation."""

    box: tuple[int, int]
    potential: np.ndarray

    @property
    def dimension(self) -> int:
        return self.box[1] - self.box[0] + 1

    def site_index(self, x: int) -> int:
        a, b = self.box
        if not a <= x <= b:
            raise BadSubbox(f"site {x} outside box {self.box}")
        return x - a

    def to_dense(self) -> np.ndarray:
        d = self.dimension
        H = np.zeros((d, d))
        H[np.arange(d), np.arange(d)] = self.potential
        if d > 1:
            off = np.arange(d - 1)
            H[off, off + 1] = -1.0
            H[off + 1, off] = -1.0
        return H


def assemble_box_hamiltonian(box: tuple[int, int], potential) -> BoxHamiltonian:
    a, b = box
    if b < a:
        raise EmptyBox(f"box [{a}, {b}] is empty")
    V = np.asarray(potential, dtype=float)
    if V.shape != (b - a + 1,):
        raise EmptyBox(
            f"potential must supply one value per site of [{a}, {b}], got shape {V.shape}"
        )
    return BoxHamiltonian((a, b), V)
