"""Monte-Carlo estimation of averaged fractional moments of Green's functions.

The estimators draw couplings from the counter-based stream, assemble the
box Hamiltonian, and evaluate |G(z;x,y)|^q per realization with one banded
LU factorization per sample (all requested site pairs share it).  A sample
whose factorization trips the singularity guard is replaced by a fresh draw
from a reserved retry key; hits are counted and must stay measure-zero-rare.

Estimates carry their sums, so disjoint sample-index ranges merge exactly.
With common random numbers across distances (same sample index = same
couplings) decay curves lose sampling jitter without biasing any marginal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .averaging import D_bounds, fmm_constants
from .errors import (
    DegenerateDesign,
    ExcessiveResampling,
    ExponentOutOfRange,
    NoApplicableAssumption,
)
from .greens import TridiagFactor
from .model import (
    DisorderDensity,
    SingleSitePotential,
    alloy_potential_batch,
    coupling_matrix,
    required_offsets,
)

__all__ = [
    "MomentEstimate",
    "DecayFit",
    "AprioriResult",
    "estimate_moment",
    "merge_moment_estimates",
    "conditional_moment_check",
    "decay_profile",
    "general_support_decay",
    "apriori_sweep",
    "operator_norm_bound",
]

_RETRY_SHIFT = 48  # retry counter lives in the high bits of the sample key
_MOM_BLOCKS = 16
_MEDIAN_EFF = math.sqrt(math.pi / 2.0)  # asymptotic penalty of a median of means


# ---------------------------------------------------------------------------
# estimates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentEstimate:
    """Monte-Carlo estimate of E{|G(z;x,y)|^exponent}."""

    exponent: float
    x: int
    y: int
    z: complex
    n_samples: int
    mean: float
    std_error: float
    resample_count: int
    estimator_kind: str
    seed: int
    value_sum: float = field(repr=False, default=0.0)
    value_sqsum: float = field(repr=False, default=0.0)


def _finalize(values: np.ndarray, kind: str, meta: dict) -> MomentEstimate:
    n = len(values)
    vsum = float(values.sum())
    vsq = float(np.square(values).sum())
    if kind == "plain-mean":
        mean = vsum / n
        var = max(vsq - n * mean * mean, 0.0) / max(n - 1, 1)
        se = math.sqrt(var / n)
    elif kind == "median-of-means":
        blocks = np.array_split(values, _MOM_BLOCKS)
        bm = np.array([b.mean() for b in blocks if len(b)])
        mean = float(np.median(bm))
        se = _MEDIAN_EFF * float(bm.std(ddof=1)) / math.sqrt(len(bm))
    else:
        raise ValueError(f"unknown estimator kind {kind!r}")
    return MomentEstimate(
        mean=mean,
        std_error=se,
        n_samples=n,
        value_sum=vsum,
        value_sqsum=vsq,
        estimator_kind=kind,
        **meta,
    )


def merge_moment_estimates(parts: list[MomentEstimate]) -> MomentEstimate:
    """Pool plain-mean estimates from disjoint sample ranges exactly."""
    if not parts:
        raise ValueError("nothing to merge")
    if any(p.estimator_kind != "plain-mean" for p in parts):
        raise ValueError("only plain-mean estimates merge exactly")
    head = parts[0]
    n = sum(p.n_samples for p in parts)
    vsum = math.fsum(p.value_sum for p in parts)
    vsq = math.fsum(p.value_sqsum for p in parts)
    mean = vsum / n
    var = max(vsq - n * mean * mean, 0.0) / max(n - 1, 1)
    return MomentEstimate(
        exponent=head.exponent,
        x=head.x,
        y=head.y,
        z=head.z,
        n_samples=n,
        mean=mean,
        std_error=math.sqrt(var / n),
        resample_count=sum(p.resample_count for p in parts),
        estimator_kind="plain-mean",
        seed=head.seed,
        value_sum=vsum,
        value_sqsum=vsq,
    )


def _default_estimator(z: complex) -> str:
    # heavy tails near the real axis favour the robust estimator
    return "median-of-means" if abs(complex(z).imag) < 1e-2 else "plain-mean"


# ---------------------------------------------------------------------------
# batched sampling engine
# ---------------------------------------------------------------------------


def _green_values_batch(
    u: SingleSitePotential,
    rho: DisorderDensity,
    box: tuple[int, int],
    z: complex,
    pairs: list[tuple[int, int]],
    n_samples: int,
    seed: int,
    sample_offset: int = 0,
    chunk: int = 2048,
    threads: int = 1,
) -> tuple[np.ndarray, int]:
    """|G_i(z; x, y)| per sample i and pair (x, y); resamples guard trips.

    Returns (values with shape (n_samples, len(pairs)), resample_count).
    Values are keyed on the absolute sample index, so splitting the range
    across threads reproduces the serial result bit for bit.
    """
    if threads > 1 and n_samples >= 2 * threads:
        from concurrent.futures import ThreadPoolExecutor

        cuts = np.linspace(0, n_samples, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as ex:
            futs = [
                ex.submit(
                    _green_values_batch, u, rho, box, z, pairs,
                    int(b - a), seed, sample_offset + int(a), chunk, 1,
                )
                for a, b in zip(cuts, cuts[1:])
                if b > a
            ]
            parts = [f.result() for f in futs]
        return np.concatenate([p[0] for p in parts]), sum(p[1] for p in parts)
    a, b = box
    dim = b - a + 1
    lo, hi = required_offsets(u, box)
    zc = complex(z)
    ys = sorted({y for _, y in pairs})
    ycol = {y: j for j, y in enumerate(ys)}
    rhs = np.zeros((dim, len(ys)), dtype=np.complex128)
    for y, j in ycol.items():
        rhs[y - a, j] = 1.0

    out = np.empty((n_samples, len(pairs)))
    resamples = 0
    max_resamples = max(8, int(math.ceil(1e-3 * n_samples)))

    def solve_one(idx_key: int) -> np.ndarray | None:
        w = coupling_matrix(rho, lo, hi, seed, np.array([idx_key]))
        V = alloy_potential_batch(u, w, lo, box)[0]
        f = TridiagFactor(V.astype(np.complex128) - zc)
        if f.near_singular:
            return None
        sol = f.solve(rhs)
        return np.array([abs(sol[x - a, ycol[y]]) for x, y in pairs])

    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        idx = np.arange(done, done + m, dtype=np.int64) + sample_offset
        w = coupling_matrix(rho, lo, hi, seed, idx)
        Vmat = alloy_potential_batch(u, w, lo, box)
        for i in range(m):
            f = TridiagFactor(Vmat[i].astype(np.complex128) - zc)
            if f.near_singular:
                row = None
                for retry in range(1, 64):
                    resamples += 1
                    if resamples > max_resamples:
                        raise ExcessiveResampling(
                            f"{resamples} singularity hits in {n_samples} samples; "
                            "the energy sits on a spectral accumulation point"
                        )
                    row = solve_one((done + i + sample_offset) + (retry << _RETRY_SHIFT))
                    if row is not None:
                        break
                if row is None:
                    raise ExcessiveResampling("resampling budget exhausted for one sample")
                out[done + i] = row
            else:
                sol = f.solve(rhs)
                out[done + i] = [abs(sol[x - a, ycol[y]]) for x, y in pairs]
        done += m
    return out, resamples


def estimate_moment(
    u: SingleSitePotential,
    rho: DisorderDensity,
    box: tuple[int, int],
    z: complex,
    x: int,
    y: int,
    exponent: float,
    n_samples: int,
    seed: int,
    estimator_kind: str | None = None,
    sample_offset: int = 0,
    threads: int = 1,
) -> MomentEstimate:
    """Monte-Carlo mean of |G(z;x,y)|^exponent over coupling realizations."""
    if not 0 < exponent < 1:
        raise ExponentOutOfRange(f"exponent {exponent} outside (0,1)")
    a, b = box
    if not (a <= x <= b and a <= y <= b):
        raise ValueError("x and y must lie in the box")
    kind = estimator_kind or _default_estimator(z)
    mags, resamples = _green_values_batch(
        u, rho, box, z, [(x, y)], n_samples, seed, sample_offset, threads=threads
    )
    values = mags[:, 0] ** exponent
    return _finalize(
        values,
        kind,
        dict(exponent=exponent, x=x, y=y, z=complex(z), resample_count=resamples, seed=seed),
    )


# ---------------------------------------------------------------------------
# conditional single-coupling average (pathwise bound)
# ---------------------------------------------------------------------------


def conditional_moment_check(
    u: SingleSitePotential,
    rho: DisorderDensity,
    box: tuple[int, int],
    z: complex,
    frozen_seed: int,
    n_inner: int,
    n_outer: int,
    s: float,
    x: int | None = None,
    tol: float = 0.01,
) -> float:
    """Fraction of frozen backgrounds violating the conditional moment bound.

    For each background (all couplings except omega_x frozen) the average of
    |G(z; x, x+n-1)|^{s/n} over omega_x is a one-dimensional integral,
    evaluated by quadrature and compared against C_u * C_rho * (1 + tol).
    Requires connected support; the bound is pathwise, so the expected
    violation rate is zero.
    """
    from scipy.integrate import quad

    if u.gap_width_r != 0:
        from .errors import NotConnectedSupport

        raise NotConnectedSupport("conditional bound needs gap-free support")
    if not 0 < s < 1:
        raise ValueError("s must lie in (0,1)")
    a, b = box
    n = u.n
    if x is None:
        x = a + (b - a - n + 1) // 2
    if not (a <= x and x + n - 1 <= b):
        raise ValueError("box must contain [x, x+n-1]")
    rep = fmm_constants(u, rho, s)
    cap = rep.C_u_rho * (1.0 + tol)
    dim = b - a + 1
    lo, hi = required_offsets(u, box)
    zc = complex(z)
    R = rho.support_radius

    # direction of the omega_x coupling inside the box
    direction = np.zeros(dim)
    for k in u.theta:
        site = x + k
        if a <= site <= b:
            direction[site - a] = u.value(k)

    rhs = np.zeros(dim, dtype=np.complex128)
    rhs[x + n - 1 - a] = 1.0

    violations = 0
    for outer in range(n_outer):
        w = coupling_matrix(rho, lo, hi, frozen_seed, np.array([outer]))
        V = alloy_potential_batch(u, w, lo, box)[0]
        V_bg = V - w[0, x - lo] * direction  # remove the omega_x contribution

        def g(omega: float) -> float:
            f = TridiagFactor((V_bg + omega * direction).astype(np.complex128) - zc)
            col = f.solve(rhs)
            return abs(col[x - a]) ** (s / n)

        val, err = quad(
            lambda o: g(o) * float(rho.pdf(o)),
            -R,
            R,
            limit=max(50, n_inner),
            epsrel=1e-6,
        )
        if val > cap:
            violations += 1
    return violations / n_outer


# ---------------------------------------------------------------------------
# decay profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    """Per-distance moment estimates with a weighted log-linear decay fit.

    Rates are per theory step (floor(d / step)); the theoretical mass is a
    lower bound on the observed decay, so m_hat may legitimately exceed it.
    """

    distances: tuple[int, ...]
    step: int
    fit_floor: int
    exponent: float
    estimates: tuple[MomentEstimate, ...]
    log_means: tuple[float, ...]
    log_errs: tuple[float, ...]
    fitted_rate: float
    fitted_prefactor: float
    rate_ci_half: float
    theory_mass: float | None
    theory_prefactor: float | None
    bound_values: tuple[float, ...] | None
    resample_count: int

    @property
    def fit_distances(self) -> tuple[int, ...]:
        return tuple(d for d in self.distances if d >= self.fit_floor)

    def bound_margins_sigma(self) -> tuple[float, ...] | None:
        """(bound - mean)/sigma per distance; >= -3 passes the 3-sigma test."""
        if self.bound_values is None:
            return None
        out = []
        for est, bv in zip(self.estimates, self.bound_values):
            se = est.std_error if est.std_error > 0 else 1e-300
            out.append((bv - est.mean) / se)
        return tuple(out)


def _wls_fit(q: np.ndarray, logm: np.ndarray, logerr: np.ndarray):
    if len(np.unique(q)) < 2:
        raise DegenerateDesign("need at least two distinct theory steps to fit a rate")
    w = 1.0 / np.maximum(logerr, 1e-8) ** 2
    X = np.column_stack([np.ones_like(q), -q.astype(float)])
    XtW = X.T * w
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ logm)
    intercept, rate = float(beta[0]), float(beta[1])
    se_rate = math.sqrt(max(cov[1, 1], 0.0))
    return intercept, rate, 1.96 * se_rate


def _profile(
    u, rho, s_over, step, fit_floor, z, box_halfwidth, distances, n_samples, seed,
    estimator_kind, theory_mass, theory_prefactor, bound_active, threads=1,
) -> DecayFit:
    distances = tuple(int(d) for d in distances)
    W = int(box_halfwidth)
    if W < max(distances) // 2 + u.n:
        raise ValueError("box half-width leaves no margin around the farthest pair")
    box = (-W, W)
    pairs = [(-(d // 2), d - d // 2) for d in distances]
    kind = estimator_kind or _default_estimator(z)
    mags, resamples = _green_values_batch(u, rho, box, z, pairs, n_samples, seed,
                                          threads=threads)
    ests = []
    for j, d in enumerate(distances):
        values = mags[:, j] ** s_over
        ests.append(
            _finalize(
                values,
                kind,
                dict(
                    exponent=s_over,
                    x=pairs[j][0],
                    y=pairs[j][1],
                    z=complex(z),
                    resample_count=resamples if j == 0 else 0,
                    seed=seed,
                ),
            )
        )
    log_means = [math.log(e.mean) for e in ests]
    log_errs = [e.std_error / e.mean for e in ests]

    mask = [d >= fit_floor for d in distances]
    q = np.array([d // step for d, m in zip(distances, mask) if m])
    lm = np.array([v for v, m in zip(log_means, mask) if m])
    le = np.array([v for v, m in zip(log_errs, mask) if m])
    intercept, rate, ci = _wls_fit(q, lm, le)

    bounds = None
    if bound_active and theory_mass is not None and theory_prefactor is not None:
        bounds = tuple(
            theory_prefactor * math.exp(-theory_mass * (d // step)) for d in distances
        )
    return DecayFit(
        distances=distances,
        step=step,
        fit_floor=fit_floor,
        exponent=s_over,
        estimates=tuple(ests),
        log_means=tuple(log_means),
        log_errs=tuple(log_errs),
        fitted_rate=rate,
        fitted_prefactor=math.exp(intercept),
        rate_ci_half=ci,
        theory_mass=theory_mass,
        theory_prefactor=theory_prefactor,
        bound_values=bounds,
        resample_count=resamples,
    )


def decay_profile(
    u: SingleSitePotential,
    rho: DisorderDensity,
    s: float,
    z: complex,
    box_halfwidth: int,
    distances,
    n_samples: int,
    seed: int,
    estimator_kind: str | None = None,
    threads: int = 1,
) -> DecayFit:
    """Connected-support decay: exponent s/n, mass m = -ln(C_u C_rho).

    The closed-form bound C_{u,rho,+} e^{-m floor(d/n)} is attached whenever
    the disorder threshold holds (then m > 0); otherwise the fit is reported
    without bound values.
    """
    if u.gap_width_r != 0:
        from .errors import NotConnectedSupport

        raise NotConnectedSupport("decay_profile requires r = 0; see general_support_decay")
    if not 0 < s < 1:
        raise ExponentOutOfRange("s must lie in (0,1)")
    rep = fmm_constants(u, rho, s)
    strong = rho.sup_norm < rep.disorder_threshold
    return _profile(
        u, rho, s / u.n, u.n, u.n, z, box_halfwidth, distances, n_samples, seed,
        estimator_kind,
        theory_mass=rep.mass_m if strong else None,
        theory_prefactor=rep.C_u_rho_pplus if strong else None,
        bound_active=strong,
        threads=threads,
    )


def general_support_decay(
    u: SingleSitePotential,
    rho: DisorderDensity,
    s: float,
    z: complex,
    box_halfwidth: int,
    distances,
    n_samples: int,
    seed: int,
    estimator_kind: str | None = None,
    threads: int = 1,
) -> DecayFit:
    """Gapped-support decay: exponent s/(n+r), mass -ln D, prefactor D+.

    Delegates to decay_profile at r = 0.  The assertion arm activates only
    when the applicable D bound is below one; otherwise fit-only.
    """
    n, r = u.n, u.gap_width_r
    if not 0 < s < n / (n + r):
        raise ExponentOutOfRange(f"theorem needs s in (0, {n}/{n + r})")
    if r == 0:
        return decay_profile(
            u, rho, s, z, box_halfwidth, distances, n_samples, seed, estimator_kind,
            threads,
        )
    db = D_bounds(u, rho, s)
    D = db.D_A2 if db.D_A2 is not None else db.D_A1
    Dplus = db.Dplus_A2 if db.Dplus_A2 is not None else db.Dplus_A1
    if D is None:
        raise NoApplicableAssumption("density supports neither D bound")
    strong = D < 1.0
    return _profile(
        u, rho, s / (n + r), n + r, 2 * (n + r), z, box_halfwidth, distances,
        n_samples, seed,
        estimator_kind,
        theory_mass=-math.log(D) if strong else None,
        theory_prefactor=Dplus if strong else None,
        bound_active=strong,
        threads=threads,
    )


# ---------------------------------------------------------------------------
# a-priori sweep
# ---------------------------------------------------------------------------


def operator_norm_bound(u: SingleSitePotential, rho: DisorderDensity) -> float:
    """Deterministic bound on ||H|| for compactly supported couplings."""
    return 2.0 + rho.support_radius * float(np.sum(np.abs(u.array)))


@dataclass(frozen=True)
class AprioriResult:
    sup_estimate: float
    exponent: float
    cells: tuple[dict, ...]  # x, y, z, mean, std_error
    resample_count: int

    def cell(self, x: int, y: int, z: complex) -> dict:
        for c in self.cells:
            if c["x"] == x and c["y"] == y and c["z"] == complex(z):
                return c
        raise KeyError((x, y, z))


def apriori_sweep(
    u: SingleSitePotential,
    rho: DisorderDensity,
    s: float,
    z_grid,
    box: tuple[int, int],
    n_samples: int,
    seed: int,
    xs=None,
    ys=None,
    threads: int = 1,
) -> AprioriResult:
    """Uniform moment sweep E{|G(z;x,y)|^{s/(4n)}} over an (x, y, z) grid.

    Diagonal pairs are included; the bounded-operator cells (|z| > ||H||+1)
    must come out <= 1 sample by sample.  Returns the empirical sup as the
    desk-scale constant.
    """
    if not 0 < s < 1:
        raise ValueError("s must lie in (0,1)")
    a, b = box
    if xs is None:
        xs = np.unique(np.linspace(a, b, 5).astype(int)).tolist()
    if ys is None:
        ys = xs
    expo = s / (4.0 * u.n)
    pairs = [(int(x), int(y)) for x in xs for y in ys]
    cells = []
    total_resamples = 0
    for z in z_grid:
        mags, resamples = _green_values_batch(u, rho, box, complex(z), pairs,
                                              n_samples, seed, threads=threads)
        total_resamples += resamples
        vals = mags**expo
        means = vals.mean(axis=0)
        ses = vals.std(axis=0, ddof=1) / math.sqrt(n_samples)
        for (x, y), mvl, se in zip(pairs, means, ses):
            cells.append(
                dict(x=x, y=y, z=complex(z), mean=float(mvl), std_error=float(se))
            )
    sup = max(c["mean"] for c in cells)
    return AprioriResult(sup, expo, tuple(cells), total_resamples)
