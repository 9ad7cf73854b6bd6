"""Experiment runner: config ingestion, orchestration, persistence.

One experiment per process.  The TOML config has a [model] block (u, density,
seed), a subcommand-specific [run] block, and an optional [output] block.
Every output embeds the sha256 hash of the resolved config; results (CSV and
JSON) are byte-reproducible, while the wall-clock metadata lives in a
separate .meta.json so reruns stay comparable.

Exit status: 0 success, 2 when a paper bound is violated beyond tolerance,
1 for any operational error (bad config, unknown subcommand, module error).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import __version__
from .averaging import det_fractional_average, fmm_constants
from .errors import ConfigInvalid, FmmLabError
from .fmm_mc import (
    apriori_sweep,
    conditional_moment_check,
    general_support_decay,
    operator_norm_bound,
)
from .greens import (
    corner_determinant_check,
    geometric_resolvent_residual,
    schur_block,
)
from .localization import (
    eigenfunction_decay_stats,
    two_box_regularity_probability,
    wegner_statistic,
)
from .model import (
    DisorderDensity,
    alloy_potential,
    assemble_box_hamiltonian,
    build_single_site,
    required_offsets,
    sample_couplings,
)
from .monotone import PositivityWitness, positive_combination_search

EXIT_OK = 0
EXIT_OPERATIONAL = 1
EXIT_BOUND_VIOLATION = 2

DEFAULT_U_CORPUS = [[1], [1, -2], [1, 0, 2], [1, -1, 1], [2, 1], [1, 0, 0, -2]]


class BoundViolation(Exception):
    """A paper bound failed beyond tolerance; maps to exit status 2."""


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------


def load_config(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigInvalid(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"config parse error: {exc}")


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _get(cfg: dict, path: str, default=None, required=False):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if required:
                raise ConfigInvalid(f"missing required config field: {path}")
            return default
        node = node[part]
    return node


def _model_from(cfg: dict):
    u_vals = _get(cfg, "model.u", required=True)
    density = _get(cfg, "model.density", required=True)
    kind = density.get("kind")
    R = density.get("R")
    if kind not in ("uniform", "triangular", "bump"):
        raise ConfigInvalid(f"model.density.kind must be uniform|triangular|bump, got {kind!r}")
    if not isinstance(R, (int, float)) or R <= 0:
        raise ConfigInvalid("model.density.R must be a positive number")
    try:
        u = build_single_site(u_vals)
    except FmmLabError as exc:
        raise ConfigInvalid(f"model.u invalid: {exc}")
    seed = int(_get(cfg, "model.seed", 0))
    return u, DisorderDensity(kind, float(R)), seed


def _z_from(val, field: str) -> complex:
    if isinstance(val, (list, tuple)) and len(val) == 2:
        return complex(float(val[0]), float(val[1]))
    raise ConfigInvalid(f"{field} must be [real, imag]")


# ---------------------------------------------------------------------------
# atomic output files
# ---------------------------------------------------------------------------


class OutputSet:
    """Append-never file group: all outputs land via temp-file rename."""

    def __init__(self, out_dir: str, stem: str):
        self.out_dir = out_dir
        self.stem = stem
        self._temps: list[tuple[str, str]] = []
        os.makedirs(out_dir, exist_ok=True)

    def _path(self, suffix: str) -> tuple[str, str]:
        final = os.path.join(self.out_dir, f"{self.stem}{suffix}")
        tmp = final + f".tmp-{os.getpid()}"
        self._temps.append((tmp, final))
        return tmp, final

    def write_csv(self, header: list[str], rows: list[list], suffix: str = ".csv"):
        tmp, _ = self._path(suffix)
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)  # RFC-4180: CRLF line endings, quoting as needed
            w.writerow(header)
            w.writerows(rows)

    def write_json(self, payload: dict, suffix: str = ".json"):
        tmp, _ = self._path(suffix)
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")

    def commit(self):
        for tmp, final in self._temps:
            os.replace(tmp, final)
        self._temps.clear()

    def abort(self):
        for tmp, _ in self._temps:
            try:
                os.unlink(tmp)
            except FileNotFoundError:
                pass
        self._temps.clear()


def _json_default(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _fmt(x) -> str:
    """Shortest round-trip decimal for CSV cells ('.' separator, no locale)."""
    return repr(float(x))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_constants(cfg, out: OutputSet, chash, threads, echo):
    u, rho, _ = _model_from(cfg)
    s = float(_get(cfg, "run.s", required=True))
    rep = fmm_constants(u, rho, s)
    payload = dict(config_hash=chash, version=__version__, constants=rep.to_dict())
    out.write_json(payload)
    if echo:
        print(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))
    return EXIT_OK


def cmd_det_average(cfg, out: OutputSet, chash, threads, echo):
    _, _, seed = _model_from(cfg)
    n_inst = int(_get(cfg, "run.n_instances", 1000))
    n_lambda = int(_get(cfg, "run.n_lambda", 10))
    tol_rel = float(_get(cfg, "run.tolerance", 1e-6))
    rng = np.random.default_rng(seed)
    s_grid = [0.1, 0.3, 0.5, 0.7, 0.9]
    kinds = ["uniform", "triangular", "bump"]
    rows, violations = [], 0
    for i in range(n_inst):
        n = int(rng.integers(1, 6))
        A = rng.normal(size=(n, n))
        A = (A + A.T) / 2
        V = np.diag(rng.choice([-1.0, 1.0], size=n) * rng.uniform(0.3, 2.0, size=n))
        rho = DisorderDensity(kinds[i % 3], float(rng.uniform(0.5, 4.0)))
        s = s_grid[i % 5]
        integral, bound1, bound2 = det_fractional_average(A, V, rho, s)
        tol = tol_rel * max(1.0, integral)
        margin = bound1 - integral
        worst_lambda_margin = min(
            bound2(float(l)) - integral
            for l in rng.uniform(0.05, 5.0, size=n_lambda)
        )
        bad = margin < -tol or worst_lambda_margin < -tol
        violations += bad
        rows.append([i, n, s, rho.kind, rho.R, _fmt(integral), _fmt(bound1),
                     _fmt(margin), _fmt(worst_lambda_margin), chash])
    out.write_csv(
        ["instance", "n", "s", "kind", "R", "integral", "bound", "margin",
         "worst_lambda_margin", "config_hash"],
        rows,
    )
    out.write_json(dict(config_hash=chash, version=__version__,
                        n_instances=n_inst, violations=violations))
    if echo:
        print(json.dumps(dict(n_instances=n_inst, violations=violations)))
    if violations:
        raise BoundViolation(f"{violations} dominance violations")
    return EXIT_OK


def cmd_verify_identities(cfg, out: OutputSet, chash, threads, echo):
    _, rho_cfg, seed = _model_from(cfg)
    n_inst = int(_get(cfg, "run.n_instances", 1000))
    tol = float(_get(cfg, "run.tolerance", 1e-9))
    corpus = _get(cfg, "run.u_corpus", DEFAULT_U_CORPUS)
    rng = np.random.default_rng(seed)
    rows, worst = [], 0.0
    for i in range(n_inst):
        u = build_single_site(corpus[i % len(corpus)])
        dim = int(rng.integers(4, 65))
        box = (0, dim - 1)
        lo, hi = required_offsets(u, box)
        cf = sample_couplings(rho_cfg, range(lo, hi + 1), seed, i)
        H = assemble_box_hamiltonian(box, alloy_potential(u, cf, box))
        z = complex(rng.uniform(-3, 3), rng.uniform(1e-3, 1.0))
        res_corner = corner_determinant_check(H, z)
        l0 = int(rng.integers(0, dim))
        l1 = int(rng.integers(l0, dim))
        _, res_schur = schur_block(H, (l0, l1), z)
        c = int(rng.integers(1, dim))
        y = int(rng.integers(c, dim))
        r1, r2, rf = geometric_resolvent_residual(H, (c, dim - 1), z, x=0, y=y)
        m = max(res_corner, res_schur, r1, r2, rf)
        worst = max(worst, m)
        rows.append([i, dim, _fmt(z.real), _fmt(z.imag), _fmt(res_corner),
                     _fmt(res_schur), _fmt(r1), _fmt(r2), _fmt(rf), chash])
    out.write_csv(
        ["instance", "dim", "E", "eps", "corner", "schur", "resolvent1",
         "resolvent2", "factorization", "config_hash"],
        rows,
    )
    out.write_json(dict(config_hash=chash, version=__version__,
                        n_instances=n_inst, worst_residual=worst, tolerance=tol))
    if echo:
        print(json.dumps(dict(worst_residual=worst)))
    if worst > tol:
        raise BoundViolation(f"identity residual {worst:.3e} exceeds {tol}")
    return EXIT_OK


def cmd_fm_decay(cfg, out: OutputSet, chash, threads, echo):
    u, rho, seed = _model_from(cfg)
    s = float(_get(cfg, "run.s", required=True))
    z = _z_from(_get(cfg, "run.z", required=True), "run.z")
    distances = [int(d) for d in _get(cfg, "run.distances", required=True)]
    W = int(_get(cfg, "run.box_halfwidth", 4 * max(distances) + 8 * u.n))
    n_samples = int(_get(cfg, "run.n_samples", required=True))
    estimator = _get(cfg, "run.estimator")
    fit = general_support_decay(u, rho, s, z, W, distances, n_samples, seed,
                                estimator_kind=estimator, threads=threads)
    margins = fit.bound_margins_sigma()
    rows = []
    for k, d in enumerate(fit.distances):
        est = fit.estimates[k]
        bound = _fmt(fit.bound_values[k]) if fit.bound_values else ""
        margin = _fmt(margins[k]) if margins else ""
        rows.append([d, _fmt(est.mean), _fmt(est.std_error), bound, margin, chash])
    out.write_csv(
        ["distance", "mean", "std_error", "bound", "margin_sigmas", "config_hash"],
        rows,
    )
    out.write_json(dict(
        config_hash=chash, version=__version__,
        exponent=fit.exponent, step=fit.step,
        fitted_rate=fit.fitted_rate, fitted_prefactor=fit.fitted_prefactor,
        rate_ci_half=fit.rate_ci_half,
        theory_mass=fit.theory_mass, theory_prefactor=fit.theory_prefactor,
        resample_count=fit.resample_count,
    ))
    if echo:
        print(json.dumps(dict(fitted_rate=fit.fitted_rate,
                              theory_mass=fit.theory_mass)))
    if margins is not None and any(m < -3 for m in margins):
        raise BoundViolation("per-distance mean exceeds closed-form bound by > 3 sigma")
    if fit.theory_mass is not None and fit.fitted_rate < fit.theory_mass - fit.rate_ci_half:
        raise BoundViolation("fitted decay rate below theoretical mass beyond CI")
    return EXIT_OK


def cmd_apriori(cfg, out: OutputSet, chash, threads, echo):
    u, rho, seed = _model_from(cfg)
    s = float(_get(cfg, "run.s", required=True))
    z_grid = [_z_from(zv, "run.z_grid[*]") for zv in _get(cfg, "run.z_grid", required=True)]
    W = int(_get(cfg, "run.box_halfwidth", 16))
    n_samples = int(_get(cfg, "run.n_samples", required=True))
    res = apriori_sweep(u, rho, s, z_grid, (-W, W), n_samples, seed, threads=threads)
    norm_bound = operator_norm_bound(u, rho)
    rows, bad = [], 0
    for c in res.cells:
        ceiling = abs(c["z"]) > norm_bound + 1.0
        if ceiling and c["mean"] > 1.0:
            bad += 1
        rows.append([c["x"], c["y"], _fmt(c["z"].real), _fmt(c["z"].imag),
                     _fmt(c["mean"]), _fmt(c["std_error"]), int(ceiling), chash])
    out.write_csv(
        ["x", "y", "E", "eps", "mean", "std_error", "norm_ceiling_cell", "config_hash"],
        rows,
    )
    out.write_json(dict(config_hash=chash, version=__version__,
                        sup_estimate=res.sup_estimate, exponent=res.exponent,
                        operator_norm_bound=norm_bound,
                        resample_count=res.resample_count))
    if echo:
        print(json.dumps(dict(sup_estimate=res.sup_estimate)))
    if bad:
        raise BoundViolation(f"{bad} norm-ceiling cells exceed 1")
    return EXIT_OK


def cmd_conditional_check(cfg, out: OutputSet, chash, threads, echo):
    u, rho, seed = _model_from(cfg)
    s = float(_get(cfg, "run.s", required=True))
    z = _z_from(_get(cfg, "run.z", required=True), "run.z")
    W = int(_get(cfg, "run.box_halfwidth", 8))
    n_inner = int(_get(cfg, "run.n_inner", 100))
    n_outer = int(_get(cfg, "run.n_outer", 200))
    tol = float(_get(cfg, "run.tol", 0.01))
    rate = conditional_moment_check(u, rho, (-W, W + u.n), z, seed, n_inner,
                                    n_outer, s, tol=tol)
    out.write_csv(["n_outer", "violation_rate", "config_hash"],
                  [[n_outer, _fmt(rate), chash]])
    out.write_json(dict(config_hash=chash, version=__version__,
                        violation_rate=rate, n_outer=n_outer, tol=tol))
    if echo:
        print(json.dumps(dict(violation_rate=rate)))
    if rate > 0:
        raise BoundViolation(f"conditional bound violated on {rate:.1%} of backgrounds")
    return EXIT_OK


def cmd_wegner(cfg, out: OutputSet, chash, threads, echo):
    u, rho, seed = _model_from(cfg)
    s = float(_get(cfg, "run.s", required=True))
    widths = [float(w) for w in _get(cfg, "run.widths", [0.02, 0.05, 0.1, 0.2])]
    L_values = [int(L) for L in _get(cfg, "run.L_values", [16, 32])]
    center = float(_get(cfg, "run.center", 0.0))
    n_samples = int(_get(cfg, "run.n_samples", 1500))
    Nprime = float(_get(cfg, "run.Nprime", 4 * u.n))
    Cprime = _get(cfg, "run.Cprime")
    calibration = None
    if Cprime is None:
        # calibrate the diagonal-moment constant on a disjoint energy grid
        cal_E = [float(e) for e in _get(cfg, "run.calibration_energies", [-0.77, 0.33, 1.11])]
        cal_eps = float(_get(cfg, "run.calibration_eps", 1e-3))
        W = int(_get(cfg, "run.calibration_halfwidth", 16))
        cal = apriori_sweep(u, rho, s * 4 * u.n / Nprime, [complex(E, cal_eps) for E in cal_E],
                            (-W, W), int(_get(cfg, "run.calibration_samples", 2000)),
                            seed + 1, threads=threads)
        Cprime = cal.sup_estimate
        calibration = dict(energies=cal_E, eps=cal_eps, halfwidth=W,
                           sup_estimate=cal.sup_estimate)
    rows, bad = [], 0
    for L in L_values:
        for wdt in widths:
            res = wegner_statistic(u, rho, (-L, L), (center - wdt / 2, center + wdt / 2),
                                   n_samples, seed, s, Nprime, float(Cprime))
            ok = res.lhs <= res.rhs
            bad += not ok
            rows.append([L, _fmt(wdt), _fmt(res.lhs), _fmt(res.lhs_se),
                         _fmt(res.rhs), int(ok), chash])
    out.write_csv(["L", "width", "lhs", "lhs_se", "rhs", "within_bound", "config_hash"],
                  rows)
    out.write_json(dict(config_hash=chash, version=__version__, s=s, Nprime=Nprime,
                        Cprime=float(Cprime), calibration=calibration,
                        violations=bad))
    if echo:
        print(json.dumps(dict(Cprime=float(Cprime), violations=bad)))
    if bad:
        raise BoundViolation(f"{bad} Wegner cells violate the bound")
    return EXIT_OK


def cmd_regularity(cfg, out: OutputSet, chash, threads, echo):
    u, rho, seed = _model_from(cfg)
    L = int(_get(cfg, "run.L", required=True))
    x = int(_get(cfg, "run.x", 0))
    sep = 2 * L + u.n
    y = int(_get(cfg, "run.y", x + sep + L))
    interval = _get(cfg, "run.interval", [0.0, 0.0])
    m = float(_get(cfg, "run.m", required=True))
    step = _get(cfg, "run.energy_grid_step")
    n_samples = int(_get(cfg, "run.n_samples", 200))
    pc = _get(cfg, "run.paper_constants")
    res = two_box_regularity_probability(
        u, rho, L, x, y, (float(interval[0]), float(interval[1])), m,
        None if step is None else float(step), n_samples, seed,
        paper_constants=pc,
    )
    out.write_csv(
        ["L", "x", "y", "E_lo", "E_hi", "m", "p_hat", "ci_lo", "ci_hi",
         "paper_bound", "config_hash"],
        [[L, x, y, _fmt(interval[0]), _fmt(interval[1]), _fmt(m),
          _fmt(res.p_hat), _fmt(res.ci95[0]), _fmt(res.ci95[1]),
          "" if res.paper_bound is None else _fmt(res.paper_bound), chash]],
    )
    out.write_json(dict(config_hash=chash, version=__version__, p_hat=res.p_hat,
                        ci95=list(res.ci95), paper_bound=res.paper_bound,
                        grid_size=res.grid_size, n_samples=res.n_samples))
    if echo:
        print(json.dumps(dict(p_hat=res.p_hat, paper_bound=res.paper_bound)))
    if res.paper_bound is not None:
        se = math.sqrt(max(res.p_hat * (1 - res.p_hat), 0.25 / res.n_samples) / res.n_samples)
        if res.p_hat < res.paper_bound - 3 * se:
            raise BoundViolation("two-box regularity probability below the paper bound")
    return EXIT_OK


def cmd_eigen_decay(cfg, out: OutputSet, chash, threads, echo):
    u, rho, seed = _model_from(cfg)
    W = int(_get(cfg, "run.box_halfwidth", required=True))
    n_samples = int(_get(cfg, "run.n_samples", 100))
    st = eigenfunction_decay_stats(u, rho, (-W, W), n_samples, seed)
    rows = [[i, _fmt(v), chash] for i, v in enumerate(st.per_realization_medians)]
    out.write_csv(["realization", "median_inverse_length", "config_hash"], rows)
    out.write_json(dict(config_hash=chash, version=__version__,
                        median=st.median, iqr=list(st.iqr),
                        median_ci95=list(st.median_ci95), n_fits=st.n_fits))
    if echo:
        print(json.dumps(dict(median=st.median, ci=list(st.median_ci95))))
    return EXIT_OK


def cmd_monotone(cfg, out: OutputSet, chash, threads, echo, u_flag=None):
    if u_flag:
        try:
            vals = [float(v) for v in u_flag.split(",")]
            u = build_single_site(vals)
        except (ValueError, FmmLabError) as exc:
            raise ConfigInvalid(f"--u invalid: {exc}")
    else:
        u, _, _ = _model_from(cfg)
    M_max = int(_get(cfg, "run.M_max", 64))
    outcome = positive_combination_search(u, M_max)
    if isinstance(outcome, PositivityWitness):
        payload = dict(config_hash=chash, version=__version__, extractable=True,
                       M=outcome.M, gamma=list(outcome.gamma), v=list(outcome.v))
    else:
        payload = dict(config_hash=chash, version=__version__, extractable=False,
                       verdict=outcome.value)
    out.write_json(payload)
    print(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))
    return EXIT_OK


COMMANDS = {
    "constants": cmd_constants,
    "det-average": cmd_det_average,
    "verify-identities": cmd_verify_identities,
    "fm-decay": cmd_fm_decay,
    "apriori": cmd_apriori,
    "conditional-check": cmd_conditional_check,
    "wegner": cmd_wegner,
    "regularity": cmd_regularity,
    "eigen-decay": cmd_eigen_decay,
    "monotone": cmd_monotone,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigInvalid(message)


def build_parser() -> _Parser:
    p = _Parser(prog="fmm-lab", description=__doc__)
    p.add_argument("command", choices=sorted(COMMANDS), metavar="COMMAND",
                   help="|".join(sorted(COMMANDS)))
    p.add_argument("--config", default=None, help="TOML experiment file")
    p.add_argument("--seed", type=int, default=None, help="override model.seed")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap (fallback: FMM_LAB_THREADS)")
    p.add_argument("--json", action="store_true", help="echo result JSON to stdout")
    p.add_argument("--u", default=None, help="single-site potential, e.g. '1,-1,1' (monotone)")
    return p


def run_experiment(command: str, cfg: dict, out_dir: str, threads: int,
                   echo: bool, u_flag: str | None = None) -> int:
    chash = config_hash(dict(cfg, _command=command))
    out = OutputSet(out_dir, command)
    t0 = time.time()

    def write_meta():
        meta = OutputSet(out_dir, command)
        meta.write_json(dict(config_hash=chash, version=__version__,
                             timestamp=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                             wall_time_s=time.time() - t0), suffix=".meta.json")
        meta.commit()

    try:
        if command == "monotone":
            code = COMMANDS[command](cfg, out, chash, threads, echo, u_flag=u_flag)
        else:
            code = COMMANDS[command](cfg, out, chash, threads, echo)
    except BoundViolation as exc:
        # violation outputs are still committed: the numbers are the evidence
        out.write_json(dict(config_hash=chash, error=str(exc)), suffix=".violation.json")
        out.commit()
        write_meta()
        print(f"BOUND VIOLATION: {exc}", file=sys.stderr)
        return EXIT_BOUND_VIOLATION
    except Exception:
        out.abort()
        raise
    out.commit()
    write_meta()
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config) if args.config else {}
        if args.seed is not None:
            cfg.setdefault("model", {})["seed"] = args.seed
        threads = args.threads
        if threads is None:
            threads = int(os.environ.get("FMM_LAB_THREADS", "1"))
        out_dir = args.out or _get(cfg, "output.dir", "out")
        return run_experiment(args.command, cfg, out_dir, max(1, threads),
                              args.json, u_flag=args.u)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_OPERATIONAL
    except FmmLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OPERATIONAL
    except Exception as exc:  # operational catch-all keeps the taxonomy total
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_OPERATIONAL


if __name__ == "__main__":
    sys.exit(main())
