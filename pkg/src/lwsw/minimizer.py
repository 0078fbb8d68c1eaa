"""Constrained energy minimization on the sphere ``C = lambda``.

The descent is a projected gradient flow: the L2 gradient is preconditioned
by ``(-d^2/dx^2 + s)^{-1}`` (``s`` tracks ``-mu``), projected onto the
tangent space of the sphere, and every trial point is pulled back onto the
sphere by one scalar rescale. A backtracking line search keeps the energy
trace non-increasing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .energy import (
    CouplingParams,
    Profile,
    absolutize,
    constraint,
    constraint_difference,
    energy,
    energy_difference,
    energy_terms,
    grad_constraint,
    grad_energy,
    inner,
    masses,
    scale_to_constraint,
)
from .grid import Grid

log = logging.getLogger(__name__)

# fields whose L2 norm is below this fraction of sqrt(lambda) get absolute residuals
NEAR_ZERO = 1e-3
# smallest preconditioner shift; used while the multiplier is still nonnegative
MIN_SHIFT = 1e-2


class SolverError(RuntimeError):
    pass


@dataclass
class SolveOptions:
    max_iters: int = 20000
    step0: float = 0.5
    tol_residual: float = 1e-9
    tol_energy: float = 1e-24
    enforce_nonneg: bool = True
    recenter: bool = True
    seed: int = 0
    allow_non_theorem: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        for name in ("step0", "tol_residual", "tol_energy"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return {
            "max_iters": self.max_iters,
            "step0": self.step0,
            "tol_residual": self.tol_residual,
            "tol_energy": self.tol_energy,
            "enforce_nonneg": self.enforce_nonneg,
            "recenter": self.recenter,
            "seed": self.seed,
            "allow_non_theorem": self.allow_non_theorem,
        }


@dataclass
class MinimizerResult:
    profile: Profile
    params: CouplingParams
    energy_value: float
    mu: float
    residuals: np.ndarray
    iters: int
    energy_trace: np.ndarray
    converged: bool
    stop_reason: str
    seed: int = 0
    flags: list = field(default_factory=list)

    @property
    def masses(self) -> np.ndarray:
        return masses(self.profile, self.params)

    @property
    def residual_max(self) -> float:
        return float(np.max(self.residuals))


def lagrange_multiplier(p: Profile, c: CouplingParams) -> float:
    """Multiplier from the integrated Euler-Lagrange system, with ``lambda = C(p)``.

    mu * lambda = sum int u_j'^2 + int v'^2 + sum beta_j int u_j^4
                  + (3/2) sum alpha_j int v u_j^2 - (1/2) int v^3
    """
    lam = constraint(p, c)
    if not lam > 0:
        raise ValueError("multiplier undefined for a zero profile")
    t = energy_terms(p, c)
    total = (
        np.sum(t["kinetic_u"])
        + t["kinetic_v"]
        + np.sum(c.beta * t["quartic_u"])
        + 1.5 * np.sum(c.alpha * t["coupling_u"])
        - 0.5 * t["cubic_v"]
    )
    return float(total / lam)


def el_fields(p: Profile, mu: float, c: CouplingParams) -> Profile:
    """Pointwise Euler-Lagrange defects for multiplier ``mu``."""
    g = p.grid
    a = c.alpha[:, None]
    b = c.beta[:, None]
    ru = -g.deriv(p.u, 2) - mu * p.u + b * p.u**3 + a * p.u * p.v
    rv = -g.deriv(p.v, 2) - mu * c.d * p.v - 0.5 * p.v**2 + 0.5 * np.sum(a * p.u**2, axis=0)
    return Profile(g, ru, rv)


def el_residual(p: Profile, mu: float, c: CouplingParams) -> np.ndarray:
    """L2 norms of the N+1 Euler-Lagrange defects.

    Each norm is divided by the norm of its own field, unless that field is
    below ``NEAR_ZERO * sqrt(C(p))`` in which case the absolute norm is kept.
    """
    g = p.grid
    r = el_fields(p, mu, c).stacked()
    fields = p.stacked()
    rn = np.sqrt(g.integrate(r**2))
    fn = np.sqrt(g.integrate(fields**2))
    scale = np.sqrt(max(constraint(p, c), 0.0))
    denom = np.where(fn > NEAR_ZERO * max(scale, 1e-300), fn, 1.0)
    return rn / denom


def default_initial_profile(grid: Grid, c: CouplingParams, seed: int = 0,
                            width: float | None = None) -> Profile:
    """Gaussian bumps for every short wave, a wider one for the long wave.

    Amplitudes and widths are jittered by a seeded RNG so different seeds
    probe different basins; the result sits on the constraint sphere.
    """
    rng = np.random.default_rng(seed)
    if width is None:
        sigma_est = (c.lam * float(np.max(np.abs(c.beta))) / 4.0) ** 2
        width = float(np.clip(1.0 / np.sqrt(max(sigma_est, 1e-12)), 0.3, 5.0))
    x = grid.x
    amp = 1.0 + 0.3 * rng.uniform(-1, 1, size=c.N + 1)
    wid = width * (1.0 + 0.2 * rng.uniform(-1, 1, size=c.N + 1))
    u = amp[:-1, None] * np.exp(-((x[None, :] / wid[:-1, None]) ** 2))
    v = amp[-1] * np.exp(-((x / (2.0 * wid[-1])) ** 2))
    return scale_to_constraint(Profile(grid, u, v), c)


def _centroid(p: Profile, c: CouplingParams) -> float:
    g = p.grid
    rho = np.sum(p.u**2, axis=0) + c.d * p.v**2
    z = np.sum(rho * np.exp(1j * np.pi * g.x / g.L))
    return float(g.L / np.pi * np.angle(z))


def recenter(p: Profile, c: CouplingParams) -> Profile:
    """Roll by whole nodes so the mass centroid sits nearest ``x = 0``.

    Integer rolls keep every discrete integral unchanged.
    """
    nodes = int(np.rint(-_centroid(p, c) / p.grid.h))
    return p.rolled(nodes) if nodes else p


def _project(p: Profile, c: CouplingParams, enforce_nonneg: bool, center: bool) -> Profile:
    if enforce_nonneg:
        p = absolutize(p)
    p = scale_to_constraint(p, c)
    if center:
        p = recenter(p, c)
    return p


def _descent_direction(p: Profile, c: CouplingParams, mu: float) -> Profile:
    g = p.grid
    s = max(-mu, MIN_SHIFT)
    G = grad_energy(p, c)
    B = grad_constraint(p, c)
    PG = Profile(g, g.helmholtz_solve(G.u, s), g.helmholtz_solve(G.v, s * c.d))
    PB = Profile(g, g.helmholtz_solve(B.u, s), g.helmholtz_solve(B.v, s * c.d))
    t = inner(B, PG) / inner(B, PB)
    return Profile(g, PG.u - t * PB.u, PG.v - t * PB.v)


def minimize(init: Profile, c: CouplingParams, opts: SolveOptions | None = None) -> MinimizerResult:
    """Minimize the energy over the constraint sphere starting from ``init``."""
    opts = opts or SolveOptions()
    if not c.lam > 0:
        raise ValueError("lambda must be positive: only the zero profile has C = 0")
    if not c.theorem_regime and not opts.allow_non_theorem:
        raise ValueError(
            "couplings outside the regime alpha_j < 0, beta_j < 0; "
            "set allow_non_theorem to solve anyway"
        )
    if constraint(init, c) <= 0:
        raise ValueError("initial profile is zero")

    p = _project(init, c, opts.enforce_nonneg, opts.recenter)
    E = energy(p, c)
    if not np.isfinite(E):
        raise SolverError("non-finite energy at the initial profile")
    # trace entries are E(p0) plus accumulated differences, so the trace is
    # monotone even when steps fall below eps * |E|. Each difference is
    # corrected by -mu * dC: rescaling onto the sphere is only exact to
    # rounding, and that slack would otherwise swamp dE near convergence.
    trace = [E]
    tau = opts.step0
    tau_max = 4.0 * opts.step0
    tau_min = 1e-14 * opts.step0
    stall = 0
    patience = 25
    stop = "max_iters"
    it = 0
    for it in range(1, opts.max_iters + 1):
        mu = lagrange_multiplier(p, c)
        res = el_residual(p, mu, c)
        if np.max(res) < opts.tol_residual:
            stop = "residual"
            it -= 1
            break
        D = _descent_direction(p, c, mu)
        blown_up = False
        while tau >= tau_min:
            trial = _project(
                Profile(p.grid, p.u - tau * D.u, p.v - tau * D.v),
                c, opts.enforce_nonneg, False,
            )
            dE = energy_difference(p, trial, c) - mu * constraint_difference(p, trial, c)
            if np.isfinite(dE) and dE <= 0.0:
                break
            blown_up = not np.isfinite(dE)
            tau *= 0.5
        if tau < tau_min:
            if blown_up:
                raise SolverError(f"non-finite energy at iteration {it}; reduce step0={opts.step0}")
            stop = "line_search"
            it -= 1
            break
        p = recenter(trial, c) if opts.recenter else trial
        E += dE
        trace.append(E)
        tau = min(1.5 * tau, tau_max)
        stall = stall + 1 if -dE <= opts.tol_energy * max(abs(E), 1.0) else 0
        if stall >= patience:
            stop = "energy_stagnation"
            break

    E = energy(p, c)
    mu = lagrange_multiplier(p, c)
    res = el_residual(p, mu, c)
    converged = bool(np.max(res) < opts.tol_residual)
    if not np.isfinite(E):
        raise SolverError("non-finite energy at the final iterate")
    flags = []
    if E >= -opts.tol_energy * max(1.0, c.lam):
        flags.append("possibly_trivial_regime")
    log.debug("minimize lam=%g: %s after %d iters, E=%.12g mu=%.8g res=%.2e",
              c.lam, stop, it, E, mu, np.max(res))
    return MinimizerResult(
        profile=p,
        params=c,
        energy_value=float(E),
        mu=mu,
        residuals=res,
        iters=it,
        energy_trace=np.asarray(trace),
        converged=converged,
        stop_reason=stop,
        seed=opts.seed,
        flags=flags,
    )


def solve(grid: Grid, c: CouplingParams, opts: SolveOptions | None = None,
          init: Profile | None = None) -> MinimizerResult:
    """``minimize`` from the seeded default initial profile."""
    opts = opts or SolveOptions()
    if init is None:
        init = default_initial_profile(grid, c, opts.seed)
    return minimize(init, c, opts)


# -- diagnostics -------------------------------------------------------------


def density(p: Profile, c: CouplingParams) -> np.ndarray:
    return np.sum(p.u**2, axis=0) + c.d * p.v**2


def concentration(p: Profile, c: CouplingParams, r: float) -> float:
    """``max_y int_{y-r}^{y+r} rho`` over grid centres ``y``.

    The window integral uses the periodic trapezoid interpolant of ``rho``,
    so ``r = 0`` gives 0 and ``r = L`` gives the full constraint value.
    """
    g = p.grid
    if not 0 <= r <= g.L:
        raise ValueError(f"window radius must lie in [0, L={g.L}], got {r!r}")
    rho = density(p, c)
    M, h = g.M, g.h
    # three periods, cumulative trapezoid
    ext = np.tile(rho, 3)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (ext[1:] + ext[:-1]))])
    xs = h * np.arange(3 * M)
    centres = xs[M : 2 * M]
    hi = np.interp(centres + r, xs, cum)
    lo = np.interp(centres - r, xs, cum)
    return float(np.max(hi - lo))


@dataclass
class DecayFit:
    rate: float
    left: float
    right: float
    drift: float
    points: int

    @property
    def is_exponential(self) -> bool:
        """Slope stable across the fit window (a Gaussian tail is not)."""
        return self.drift < 0.1


def decay_fit(grid: Grid, f, tail_fraction: float = 0.5, floor: float = 1e-13,
              ceiling: float = 1e-3) -> DecayFit:
    """Fit ``|f| ~ exp(-eps |x - x_peak|)`` on both tails.

    The usable tail on each side is the set of nodes, walking outward from
    the peak, where ``floor < |f| < ceiling * peak``; the outer
    ``tail_fraction`` of it enters a least-squares fit of ``log|f|``.
    ``drift`` compares the slopes of the inner and outer halves of that
    window, relative to their mean.
    """
    if not 0 < tail_fraction < 1:
        raise ValueError("tail_fraction must lie in (0, 1)")
    a = np.abs(np.asarray(f, dtype=float))
    i0 = int(np.argmax(a))
    peak = a[i0]
    a = np.roll(a, grid.M // 2 - i0)
    c0 = grid.M // 2
    dist = grid.h * np.arange(c0 + 1)
    rates, drifts, npts = [], [], 0
    for side in (a[c0::-1], np.append(a[c0:], a[0])):
        above = side > floor
        # stop at the first node that sinks below the noise floor
        end = int(np.argmin(above)) if not np.all(above) else side.size
        idx = np.arange(end)
        idx = idx[side[idx] < ceiling * peak]
        if idx.size < 6:
            continue
        n = max(6, int(np.ceil(tail_fraction * idx.size)))
        idx = idx[-n:]
        xs, ys = dist[idx], np.log(side[idx])
        slope = -np.polyfit(xs, ys, 1)[0]
        half = idx.size // 2
        s_in = -np.polyfit(xs[:half], ys[:half], 1)[0]
        s_out = -np.polyfit(xs[half:], ys[half:], 1)[0]
        rates.append(slope)
        drifts.append(abs(s_out - s_in) / max(abs(0.5 * (s_in + s_out)), 1e-300))
        npts += idx.size
    if not rates:
        raise ValueError("tail is below the noise floor; fit is unreliable")
    left = rates[0]
    right = rates[-1]
    return DecayFit(float(np.mean(rates)), float(left), float(right),
                    float(max(drifts)), npts)


def decay_rate(f, tail_fraction: float = 0.5, grid: Grid | None = None,
               floor: float = 1e-13) -> float:
    if grid is None:
        raise ValueError("a grid is required to convert node offsets to distance")
    return decay_fit(grid, f, tail_fraction, floor).rate


def kernel_sources(p: Profile, c: CouplingParams) -> Profile:
    """Right-hand sides ``b_j u_j^3 + a_j u_j v`` and ``v^2/2 + (1/2) sum a_l u_l^2``.

    ``a = -alpha`` and ``b = -beta``, both positive in the theorem regime.
    """
    a = -c.alpha[:, None]
    b = -c.beta[:, None]
    fu = b * p.u**3 + a * p.u * p.v
    fv = 0.5 * p.v**2 + 0.5 * np.sum(a * p.u**2, axis=0)
    return Profile(p.grid, fu, fv)


def kernel_fixed_point(p: Profile, mu: float, c: CouplingParams) -> Profile:
    """One application of the Helmholtz-kernel map with ``s = -mu``."""
    if not mu < 0:
        raise ValueError("kernel map needs a negative multiplier")
    g = p.grid
    s = -mu
    F = kernel_sources(p, c)
    return Profile(g, g.helmholtz_solve(F.u, s), g.helmholtz_solve(F.v, s * c.d))


def kernel_fixed_point_error(p: Profile, mu: float, c: CouplingParams) -> np.ndarray:
    """Relative L2 distance between each field and its kernel image."""
    g = p.grid
    q = kernel_fixed_point(p, mu, c).stacked()
    f = p.stacked()
    num = np.sqrt(g.integrate((q - f) ** 2))
    den = np.sqrt(g.integrate(f**2))
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), num)


def exponential_kernel_image(grid: Grid, F, s: float) -> np.ndarray:
    """``h * sum_j P_s(x_i - x_j) F_j`` with ``P_s(x) = exp(-sqrt(s)|x|) / (2 sqrt(s))``.

    Evaluated with two first-order recursive filters over three periods, so
    only positive terms are ever added: a nonnegative, nonzero ``F`` maps to
    an image that is strictly positive at every node (until underflow).
    """
    F = np.asarray(F, dtype=float)
    a = np.sqrt(s)
    q = np.exp(-a * grid.h)
    ext = np.tile(F, 3)
    fwd = lfilter([grid.h], [1.0, -q], ext)
    bwd = lfilter([grid.h], [1.0, -q], ext[::-1])[::-1]
    M = grid.M
    return (fwd + bwd - grid.h * ext)[M : 2 * M] / (2.0 * a)


@dataclass
class PositivityCertificate:
    strictly_positive: np.ndarray  # per field, raw nodal values > 0
    sources_nonneg: np.ndarray  # per field, kernel sources >= -tol * peak
    image_min: np.ndarray  # per field, min of the exact-kernel image
    image_error: np.ndarray  # per field, relative L2 gap field vs exact-kernel image

    def certified(self, index: int, image_tol: float) -> bool:
        return bool(
            self.strictly_positive[index]
            and self.sources_nonneg[index]
            and self.image_min[index] > 0
            and self.image_error[index] <= image_tol
        )


def positivity_certificate(p: Profile, mu: float, c: CouplingParams,
                           tol: float = 1e-12) -> PositivityCertificate:
    """Check positivity both on the raw nodes and through the kernel identity.

    Below roughly ``1e-16 * peak`` nodal signs are rounding noise; the
    kernel identity ``field = P_s * F`` with ``F >= 0`` carries positivity
    through that region using a kernel that is positive by construction.
    """
    g = p.grid
    s = -mu
    if not s > 0:
        raise ValueError("positivity certificate needs a negative multiplier")
    F = kernel_sources(p, c).stacked()
    fields = p.stacked()
    shifts = [s] * c.N + [s * c.d]
    pos, nonneg, imin, ierr = [], [], [], []
    for f, src, shift in zip(fields, F, shifts):
        peak = np.max(np.abs(src)) if src.size else 0.0
        img = exponential_kernel_image(g, np.clip(src, 0.0, None), shift)
        norm = np.sqrt(g.integrate(f**2))
        pos.append(bool(np.all(f > 0)))
        nonneg.append(bool(peak > 0 and np.min(src) >= -tol * peak))
        imin.append(float(np.min(img)))
        ierr.append(float(np.sqrt(g.integrate((img - f) ** 2)) / norm) if norm > 0 else np.inf)
    return PositivityCertificate(np.array(pos), np.array(nonneg), np.array(imin), np.array(ierr))
