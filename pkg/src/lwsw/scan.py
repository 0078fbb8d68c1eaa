"""Sweeps over the constraint level and the structure checks on I(lambda).

Also maps multipliers to traveling-wave parameters and builds the family of
bound states with growing speed.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .energy import CouplingParams, Profile
from .evolution import WaveParams
from .grid import Grid
from .minimizer import (
    MinimizerResult,
    SolveOptions,
    decay_fit,
    default_initial_profile,
    minimize,
)

log = logging.getLogger(__name__)

# k_max / sqrt(sigma); spectra of sech-type profiles are ~1e-14 down there
RESOLUTION = 24.0
MAX_POINTS = 2**16
# decay fits ignore tail values below this fraction of the peak
DECAY_FLOOR = 1e-10

__all__ = [
    "WaveParams",
    "ScanRow",
    "CheckReport",
    "wave_params",
    "grid_for_sigma",
    "solve_adaptive",
    "scan",
    "check_monotone_and_scaling",
    "check_subadditivity",
    "fit_bounds",
    "family",
]


def wave_params(mu: float, c: CouplingParams) -> WaveParams:
    """``sigma = -mu``, ``c = -d mu``, ``k = c / 2``, ``omega = sigma - k^2``."""
    if not mu < 0:
        raise ValueError(f"no traveling bound state for mu={mu} >= 0")
    sigma = -mu
    speed = -c.d * mu
    k = speed / 2.0
    return WaveParams(c=speed, k=k, omega=sigma - k * k, sigma=sigma)


def grid_for_sigma(L: float, sigma: float, d: float, min_points: int = 256) -> Grid:
    """Smallest power-of-two grid whose top wavenumber is ``RESOLUTION * sqrt(sigma_max)``."""
    rate = math.sqrt(max(sigma, sigma * d, 1e-6))
    need = 2.0 * L * RESOLUTION * rate / math.pi
    M = max(min_points, 1 << max(4, math.ceil(math.log2(need))))
    return Grid(L, min(M, MAX_POINTS))


def _sigma_guess(c: CouplingParams) -> float:
    return max((c.lam * float(np.max(np.abs(c.beta))) / 4.0) ** 2, 0.05)


def solve_adaptive(c: CouplingParams, opts: SolveOptions, L: float = 64.0,
                   min_points: int = 256) -> MinimizerResult:
    """Solve on a grid sized from a width guess, refining ``M`` once ``mu`` is known."""
    grid = grid_for_sigma(L, _sigma_guess(c), c.d, min_points)
    result = minimize(default_initial_profile(grid, c, opts.seed), c, opts)
    for _ in range(4):
        if result.mu >= 0:
            break
        need = grid_for_sigma(L, -result.mu, c.d, min_points)
        if need.M <= result.profile.grid.M:
            break
        p = result.profile
        fine = Profile(need, p.grid.interpolate_to(p.u, need), p.grid.interpolate_to(p.v, need))
        result = minimize(fine, c, opts)
    return result


@dataclass
class ScanRow:
    lam: float
    I_value: float
    mu: float
    residual_max: float
    masses: np.ndarray
    decay_phi: float
    decay_psi: float
    seed_best: int
    valid: bool
    M: int
    seed_energies: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    result: MinimizerResult | None = field(default=None, repr=False)

    @property
    def wave(self) -> WaveParams | None:
        if self.result is None or not self.mu < 0:
            return None
        return wave_params(self.mu, self.result.params)

    def csv_record(self) -> dict:
        w = self.wave
        nan = float("nan")
        return {
            "lambda": self.lam,
            "I": self.I_value,
            "mu": self.mu,
            "residual_max": self.residual_max,
            "c": w.c if w else nan,
            "k": w.k if w else nan,
            "omega": w.omega if w else nan,
            "sigma": w.sigma if w else nan,
            "decay_phi": self.decay_phi,
            "decay_psi": self.decay_psi,
            "seed_best": self.seed_best,
        }

    def to_dict(self) -> dict:
        out = self.csv_record()
        out.update(
            masses=[float(m) for m in self.masses],
            valid=self.valid,
            M=self.M,
            seed_energies=[[int(s), float(e), bool(ok)] for s, e, ok in self.seed_energies],
            flags=list(self.flags),
        )
        return out


CSV_COLUMNS = ["lambda", "I", "mu", "residual_max", "c", "k", "omega", "sigma",
               "decay_phi", "decay_psi", "seed_best"]


def _decay(grid: Grid, f: np.ndarray) -> float:
    peak = float(np.max(np.abs(f)))
    if peak == 0:
        return float("nan")
    try:
        return decay_fit(grid, f, 0.5, floor=DECAY_FLOOR * peak).rate
    except ValueError:
        return float("nan")


def _row(lam: float, c: CouplingParams, opts: SolveOptions, n_seeds: int, L: float,
         min_points: int) -> ScanRow:
    cl = c.with_lambda(lam)
    runs = []
    for i in range(n_seeds):
        seed = opts.seed + i
        runs.append(solve_adaptive(cl, replace(opts, seed=seed), L, min_points))
    energies = [(r.seed, r.energy_value, r.converged) for r in runs]
    valid = [r for r in runs if r.converged]
    pool = valid or runs
    best = min(pool, key=lambda r: (r.energy_value, r.seed))
    p = best.profile
    m = best.masses
    dominant = int(np.argmax(m[:-1]))
    flags = list(best.flags)
    if not valid:
        flags.append("not_converged")
    return ScanRow(
        lam=lam,
        I_value=best.energy_value,
        mu=best.mu,
        residual_max=best.residual_max,
        masses=m,
        decay_phi=_decay(p.grid, p.u[dominant]),
        decay_psi=_decay(p.grid, p.v),
        seed_best=best.seed,
        valid=bool(valid),
        M=p.grid.M,
        seed_energies=energies,
        flags=flags,
        result=best,
    )


def scan(lambdas, c: CouplingParams, opts: SolveOptions | None = None, n_seeds: int = 1,
         L: float = 64.0, min_points: int = 256, workers: int = 1) -> list[ScanRow]:
    """Best-over-seeds minimization at every ``lambda``; one row per entry."""
    opts = opts or SolveOptions()
    lambdas = [float(x) for x in lambdas]
    if not lambdas:
        raise ValueError("no lambda values given")
    if any(not x > 0 for x in lambdas):
        raise ValueError("every lambda must be positive")
    if any(b < a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambda values must be increasing")
    if n_seeds < 1:
        raise ValueError("n_seeds must be at least 1")

    def job(lam):
        return _row(lam, c, opts, n_seeds, L, min_points)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(job, lambdas))
    return [job(lam) for lam in lambdas]


# -- structure checks ---------------------------------------------------------


@dataclass
class Check:
    kind: str
    lambdas: tuple
    margin: float
    ok: bool
    note: str = ""


@dataclass
class CheckReport:
    checks: list = field(default_factory=list)

    @property
    def violations(self) -> list:
        return [ch for ch in self.checks if not ch.ok]

    @property
    def passed(self) -> bool:
        return not self.violations

    def __len__(self):
        return len(self.checks)


def _tol(rel: float, *values: float) -> float:
    return rel * max(abs(v) for v in values) + 1e-14


def check_monotone_and_scaling(rows, tol_rel: float = 1e-6) -> CheckReport:
    """Non-increasing ``I`` and ``I(theta lam) <= theta I(lam)`` for every pair of rows.

    Margins are positive when the inequality holds. For pairs with
    ``I(lam) < 0`` the strict form is also recorded (``kind="strict_scaling"``)
    as information; it never counts as a violation.
    """
    rows = sorted(rows, key=lambda r: r.lam)
    report = CheckReport()
    if len(rows) < 2:
        return report
    for a, b in zip(rows, rows[1:]):
        margin = a.I_value - b.I_value
        report.checks.append(Check("monotone", (a.lam, b.lam), margin,
                                   margin >= -_tol(tol_rel, a.I_value, b.I_value)))
    for i, a in enumerate(rows):
        for b in rows[i + 1 :]:
            if b.lam <= a.lam:
                continue
            theta = b.lam / a.lam
            margin = theta * a.I_value - b.I_value
            tol = _tol(tol_rel, theta * a.I_value, b.I_value)
            report.checks.append(Check("scaling", (a.lam, b.lam), margin, margin >= -tol))
            if a.I_value < -tol:
                report.checks.append(Check("strict_scaling", (a.lam, b.lam), margin, True,
                                           "strict" if margin > tol else "not strict"))
    return report


def check_subadditivity(rows, pairs, tol_rel: float = 1e-6) -> CheckReport:
    """Strict ``I(lam) < I(Omega) + I(lam - Omega)`` for each ``(lam, Omega)``.

    Pairs where ``I(lam)`` is not strictly negative are recorded with
    ``note="trivial_regime"`` and excluded from the verdict.
    """
    by_lam = {r.lam: r for r in rows}

    def lookup(x):
        for lam, r in by_lam.items():
            if math.isclose(lam, x, rel_tol=1e-12, abs_tol=1e-12):
                return r
        raise KeyError(f"lambda={x} is not in the scan grid")

    report = CheckReport()
    for lam, omega in pairs:
        if not 0 < omega < lam:
            raise ValueError(f"need 0 < Omega < lambda, got ({lam}, {omega})")
        r, r1, r2 = lookup(lam), lookup(omega), lookup(lam - omega)
        margin = r1.I_value + r2.I_value - r.I_value
        tol = _tol(tol_rel, r.I_value, r1.I_value, r2.I_value)
        if r.I_value >= -tol:
            report.checks.append(Check("subadditivity", (lam, omega), margin, True, "trivial_regime"))
            continue
        report.checks.append(Check("subadditivity", (lam, omega), margin, margin > tol))
    return report


@dataclass
class Bounds:
    A_quad: float
    lambda_star_est: float
    A_lin: float


def fit_bounds(rows, tol: float = 1e-10) -> Bounds:
    """Empirical constants in ``I <= -A lam^2`` and ``mu <= -A lam``.

    ``lambda_star_est`` is the smallest grid value from which every larger
    row has ``I < 0`` and ``mu < 0``; both constants are minima over those
    rows.
    """
    rows = sorted(rows, key=lambda r: r.lam)
    if len(rows) < 4:
        raise ValueError("fit_bounds needs at least 4 rows")
    if rows[-1].lam < 4 * rows[0].lam:
        raise ValueError("lambda values must span at least a factor of 4")
    negative = [r.I_value < -tol and r.mu < 0 for r in rows]
    if not any(negative):
        raise ValueError("all rows are in the trivial regime (I = 0)")
    start = len(rows)
    while start > 0 and negative[start - 1]:
        start -= 1
    if start == len(rows):
        raise ValueError("largest lambda is in the trivial regime")
    tail = rows[start:]
    A_quad = min(-r.I_value / r.lam**2 for r in tail)
    A_lin = min(-r.mu / r.lam for r in tail)
    return Bounds(A_quad=A_quad, lambda_star_est=tail[0].lam, A_lin=A_lin)


@dataclass
class Family:
    members: list  # (WaveParams, MinimizerResult)
    diagnostics: list = field(default_factory=list)

    @property
    def speeds(self) -> list:
        return [w.c for w, _ in self.members]

    @property
    def speeds_increasing(self) -> bool:
        s = self.speeds
        return all(b > a for a, b in zip(s, s[1:]))

    def __len__(self):
        return len(self.members)


def family(lambdas, c: CouplingParams, opts: SolveOptions | None = None, L: float = 64.0,
           rows: list | None = None) -> Family:
    """Bound states with their wave parameters along increasing ``lambda``.

    Reuses ``rows`` from an earlier scan when given; otherwise solves.
    Non-converged or trivial members are skipped with a diagnostic.
    """
    opts = opts or SolveOptions()
    if not c.theorem_regime and not opts.allow_non_theorem:
        raise ValueError("family construction needs alpha_j < 0 and beta_j < 0")
    lambdas = [float(x) for x in lambdas]
    if any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambda values must be strictly increasing")
    known = {r.lam: r for r in rows or []}
    fam = Family([])
    for lam in lambdas:
        row = known.get(lam)
        result = row.result if row is not None else solve_adaptive(c.with_lambda(lam), opts, L)
        if not result.converged:
            fam.diagnostics.append(f"lambda={lam}: not converged (residual {result.residual_max:.2e})")
            continue
        if "possibly_trivial_regime" in result.flags or not result.mu < 0:
            fam.diagnostics.append(f"lambda={lam}: trivial regime (E={result.energy_value:.3g}, mu={result.mu:.3g})")
            continue
        fam.members.append((wave_params(result.mu, c), result))
    if not fam.speeds_increasing:
        fam.diagnostics.append("speeds are not strictly increasing")
        log.warning("family speeds are not strictly increasing: %s", fam.speeds)
    return fam
