"""Energy functional, mass constraint and their gradients.

For ``N`` short-wave profiles ``u_j`` and a long-wave profile ``v``::

    E = sum_j int (u_j')^2 + (beta_j/2) u_j^4 + alpha_j v u_j^2
        + int (v')^2 - v^3/3

    C = sum_j int u_j^2 + d int v^2

The minimizer works on the sphere ``C = lambda``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .grid import Grid


@dataclass(frozen=True, eq=False)
class CouplingParams:
    """Coupling constants and constraint level.

    ``lam`` is the constraint level lambda (``lambda`` in JSON).
    """

    alpha: np.ndarray
    beta: np.ndarray
    d: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float)).copy()
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        if alpha.ndim != 1 or alpha.shape != beta.shape or alpha.size == 0:
            raise ValueError("alpha and beta must be non-empty 1D arrays of equal length")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
            raise ValueError("alpha and beta must be finite")
        if not (np.isfinite(self.d) and self.d > 0):
            raise ValueError(f"d must be positive, got {self.d!r}")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lambda must be nonnegative, got {self.lam!r}")
        alpha.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "d", float(self.d))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def N(self) -> int:
        return self.alpha.size

    @property
    def theorem_regime(self) -> bool:
        """All couplings strictly negative (the regime with existence guarantees)."""
        return bool(np.all(self.alpha < 0) and np.all(self.beta < 0))

    def with_lambda(self, lam: float) -> "CouplingParams":
        return CouplingParams(self.alpha, self.beta, self.d, lam)

    def __eq__(self, other):
        return (
            isinstance(other, CouplingParams)
            and np.array_equal(self.alpha, other.alpha)
            and np.array_equal(self.beta, other.beta)
            and self.d == other.d
            and self.lam == other.lam
        )

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "d": self.d,
            "lambda": self.lam,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CouplingParams":
        params = cls(data["alpha"], data["beta"], data.get("d", 1.0), data["lambda"])
        if "N" in data and data["N"] != params.N:
            raise ValueError(f"N={data['N']} does not match len(alpha)={params.N}")
        return params

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CouplingParams":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class Profile:
    """Real profiles ``u`` (shape ``(N, M)``) and ``v`` (shape ``(M,)``) on one grid."""

    grid: Grid
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        v = np.asarray(self.v, dtype=float)
        if u.shape[-1] != self.grid.M or v.shape != (self.grid.M,):
            raise ValueError("profile fields do not match the grid size")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("profile fields must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def N(self) -> int:
        return self.u.shape[0]

    def stacked(self) -> np.ndarray:
        """All fields as one ``(N + 1, M)`` array, long wave last."""
        return np.vstack([self.u, self.v[None, :]])

    @classmethod
    def from_stacked(cls, grid: Grid, fields: np.ndarray) -> "Profile":
        return cls(grid, fields[:-1], fields[-1])

    def scaled(self, r: float) -> "Profile":
        return Profile(self.grid, r * self.u, r * self.v)

    def rolled(self, nodes: int) -> "Profile":
        return Profile(self.grid, np.roll(self.u, nodes, axis=-1), np.roll(self.v, nodes))

    def peak(self) -> float:
        return float(max(np.max(np.abs(self.u)), np.max(np.abs(self.v))))


def _check_params(p: Profile, c: CouplingParams) -> None:
    if p.N != c.N:
        raise ValueError(f"profile has N={p.N} short waves, params have N={c.N}")


def energy_terms(p: Profile, c: CouplingParams) -> dict:
    """Individual integrals entering the energy and the multiplier identity."""
    _check_params(p, c)
    g = p.grid
    du = g.deriv(p.u, 1)
    dv = g.deriv(p.v, 1)
    u2 = p.u**2
    return {
        "kinetic_u": g.integrate(du**2),
        "quartic_u": g.integrate(u2**2),
        "coupling_u": g.integrate(p.v * u2),
        "kinetic_v": float(g.integrate(dv**2)),
        "cubic_v": float(g.integrate(p.v**3)),
    }


def energy(p: Profile, c: CouplingParams) -> float:
    t = energy_terms(p, c)
    short = np.sum(t["kinetic_u"] + 0.5 * c.beta * t["quartic_u"] + c.alpha * t["coupling_u"])
    return float(short + t["kinetic_v"] - t["cubic_v"] / 3.0)


def energy_difference(p: Profile, q: Profile, c: CouplingParams) -> float:
    """``E(q) - E(p)`` from products of field differences.

    Resolves changes far below ``eps * |E|``, which a plain difference of
    two energy evaluations cannot.
    """
    _check_params(p, c)
    _check_params(q, c)
    g = p.grid
    du, dv = q.u - p.u, q.v - p.v
    su, sv = q.u + p.u, q.v + p.v
    dku = g.deriv(du, 1) * g.deriv(su, 1)
    dkv = g.deriv(dv, 1) * g.deriv(sv, 1)
    u2d = du * su
    quart = u2d * (q.u**2 + p.u**2)
    coup = dv * q.u**2 + p.v * u2d
    cub = dv * (q.v**2 + q.v * p.v + p.v**2)
    short = np.sum(g.integrate(dku + 0.5 * c.beta[:, None] * quart + c.alpha[:, None] * coup))
    return float(short + g.integrate(dkv) - g.integrate(cub) / 3.0)


def constraint(p: Profile, c: CouplingParams) -> float:
    g = p.grid
    return float(np.sum(g.integrate(p.u**2)) + c.d * g.integrate(p.v**2))


def constraint_difference(p: Profile, q: Profile, c: CouplingParams) -> float:
    """``C(q) - C(p)`` from products of field differences."""
    g = p.grid
    du = g.integrate((q.u - p.u) * (q.u + p.u))
    dv = g.integrate((q.v - p.v) * (q.v + p.v))
    return float(np.sum(du) + c.d * dv)


def masses(p: Profile, c: CouplingParams) -> np.ndarray:
    """Per-component contributions ``(int u_1^2, ..., int u_N^2, d int v^2)``."""
    g = p.grid
    return np.append(g.integrate(p.u**2), c.d * g.integrate(p.v**2))


def grad_energy(p: Profile, c: CouplingParams) -> Profile:
    """L2 gradient of the energy (factor 2 from the quadratic terms kept)."""
    _check_params(p, c)
    g = p.grid
    a = c.alpha[:, None]
    b = c.beta[:, None]
    gu = -2.0 * g.deriv(p.u, 2) + 2.0 * b * p.u**3 + 2.0 * a * p.v * p.u
    gv = -2.0 * g.deriv(p.v, 2) + np.sum(a * p.u**2, axis=0) - p.v**2
    return Profile(g, gu, gv)


def grad_constraint(p: Profile, c: CouplingParams) -> Profile:
    return Profile(p.grid, 2.0 * p.u, 2.0 * c.d * p.v)


def inner(p: Profile, q: Profile) -> float:
    """L2 pairing summed over all components."""
    g = p.grid
    return float(np.sum(g.integrate(p.u * q.u)) + g.integrate(p.v * q.v))


def absolutize(p: Profile) -> Profile:
    return Profile(p.grid, np.abs(p.u), np.abs(p.v))


def scale_to_constraint(p: Profile, c: CouplingParams) -> Profile:
    """Rescale every field by one factor so the constraint equals ``c.lam``."""
    current = constraint(p, c)
    if not current > 0:
        raise ValueError("cannot scale a zero profile onto the constraint sphere")
    return p.scaled(np.sqrt(c.lam / current))


def gn_quartic_ratio(grid: Grid, f) -> float:
    """``||f||_4^4 / (||f'||_2 ||f||_2^3)``; bounded over H^1 by a universal constant."""
    f = np.asarray(f, dtype=float)
    num = grid.integrate(f**4)
    den = np.sqrt(grid.integrate(grid.deriv(f, 1) ** 2)) * grid.integrate(f**2) ** 1.5
    return float(num / den)


def gn_cubic_ratio(grid: Grid, f) -> float:
    """``||f||_3^3 / (||f'||_2^(1/2) ||f||_2^(5/2))``."""
    f = np.asarray(f, dtype=float)
    num = grid.integrate(np.abs(f) ** 3)
    den = grid.integrate(grid.deriv(f, 1) ** 2) ** 0.25 * grid.integrate(f**2) ** 1.25
    return float(num / den)
