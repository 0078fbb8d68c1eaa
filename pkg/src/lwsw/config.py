"""Run configuration: strict JSON parsing with field-path diagnostics.

A minimal solve config::

    {"command": "solve",
     "params": {"alpha": [-1.0], "beta": [-1.0], "lambda": 4.0}}

Everything else has a default. Unknown keys are errors, with a suggestion
when a known key is close (``"alphas"`` -> ``"alpha"``).
"""

from __future__ import annotations

import difflib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .energy import CouplingParams
from .evolution import EvolveOptions
from .minimizer import SolveOptions

COMMANDS = ("solve", "scan", "evolve", "validate")
DEFAULT_L = 64.0


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass
class ScanSpec:
    lambdas: list
    n_seeds: int = 3
    workers: int = 1
    subadditivity: list = field(default_factory=list)  # (lambda, Omega) pairs
    family: list = field(default_factory=list)
    min_points: int = 256

    def to_dict(self) -> dict:
        return {
            "lambdas": list(self.lambdas),
            "n_seeds": self.n_seeds,
            "workers": self.workers,
            "subadditivity": [list(p) for p in self.subadditivity],
            "family": list(self.family),
            "min_points": self.min_points,
        }


@dataclass
class EvolveSpec:
    T: float = 1.0
    dt: float = 1e-3
    substeps_nl: int = 1
    record_every: int = 0
    source: str | None = None

    def options(self) -> EvolveOptions:
        return EvolveOptions(dt=self.dt, T=self.T, substeps_nl=self.substeps_nl,
                             record_every=self.record_every)

    def to_dict(self) -> dict:
        return {"T": self.T, "dt": self.dt, "substeps_nl": self.substeps_nl,
                "record_every": self.record_every, "source": self.source}


@dataclass
class RunConfig:
    command: str
    params: CouplingParams | None = None
    L: float = DEFAULT_L
    M: int | None = None  # None sizes the grid from the expected width
    solve_opts: SolveOptions = field(default_factory=SolveOptions)
    scan: ScanSpec | None = None
    evolve: EvolveSpec | None = None
    output_dir: str | None = None  # None: derived from the output root and input hash
    target: str | None = None  # result directory for validate

    def to_dict(self) -> dict:
        out = {"command": self.command, "grid": {"L": self.L, "M": self.M}, "solve": self.solve_opts.to_dict()}
        if self.params is not None:
            out["params"] = self.params.to_dict()
        if self.scan is not None:
            out["scan"] = self.scan.to_dict()
        if self.evolve is not None:
            out["evolve"] = self.evolve.to_dict()
        if self.target is not None:
            out["target"] = self.target
        if self.output_dir is not None:
            out["output_dir"] = self.output_dir
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# -- helpers ------------------------------------------------------------------


def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else str(key)


def _check_keys(obj, allowed, path: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(path, f"expected an object, got {type(obj).__name__}")
    for key in obj:
        if key not in allowed:
            close = difflib.get_close_matches(key, list(allowed), n=1, cutoff=0.6)
            hint = f"; did you mean {close[0]!r}?" if close else ""
            raise ConfigError(_join(path, key), f"unknown key {key!r}{hint}")


def _number(value, path: str, *, positive=False, nonneg=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    x = float(value)
    if not math.isfinite(x):
        raise ConfigError(path, "must be finite")
    if positive and not x > 0:
        raise ConfigError(path, f"must be positive, got {value!r}")
    if nonneg and x < 0:
        raise ConfigError(path, f"must be nonnegative, got {value!r}")
    return x


def _integer(value, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be at least {minimum}, got {value}")
    return value


def _boolean(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(path, f"expected true or false, got {value!r}")
    return value


def _number_list(value, path: str, **kw) -> list:
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a non-empty list of numbers")
    return [_number(x, _join(path, i), **kw) for i, x in enumerate(value)]


# -- sections -----------------------------------------------------------------


def _parse_params(obj, path: str, need_lambda: bool) -> CouplingParams:
    _check_keys(obj, ("N", "alpha", "beta", "d", "lambda"), path)
    for key in ("alpha", "beta"):
        if key not in obj:
            raise ConfigError(_join(path, key), "required")
    alpha = _number_list(obj["alpha"], _join(path, "alpha"))
    beta = _number_list(obj["beta"], _join(path, "beta"))
    if len(alpha) != len(beta):
        raise ConfigError(_join(path, "beta"), f"has {len(beta)} entries, alpha has {len(alpha)}")
    if "N" in obj and _integer(obj["N"], _join(path, "N"), 1) != len(alpha):
        raise ConfigError(_join(path, "N"), f"N={obj['N']} but alpha has {len(alpha)} entries")
    d = _number(obj.get("d", 1.0), _join(path, "d"), positive=True)
    if "lambda" in obj:
        lam = _number(obj["lambda"], _join(path, "lambda"), positive=True)
    elif need_lambda:
        raise ConfigError(_join(path, "lambda"), "required")
    else:
        lam = 1.0
    return CouplingParams(alpha, beta, d, lam)


def _parse_grid(obj, path: str) -> tuple[float, int | None]:
    _check_keys(obj, ("L", "M"), path)
    L = _number(obj.get("L", DEFAULT_L), _join(path, "L"), positive=True)
    M = obj.get("M")
    if M is not None:
        M = _integer(M, _join(path, "M"), 16)
        if M & (M - 1):
            raise ConfigError(_join(path, "M"), f"must be a power of two, got {M}")
    return L, M


def _parse_solve(obj, path: str) -> SolveOptions:
    defaults = SolveOptions()
    _check_keys(obj, tuple(defaults.to_dict()), path)
    kw = {}
    for key, value in obj.items():
        p = _join(path, key)
        if key in ("max_iters",):
            kw[key] = _integer(value, p, 1)
        elif key == "seed":
            kw[key] = _integer(value, p, 0)
        elif key in ("enforce_nonneg", "recenter", "allow_non_theorem"):
            kw[key] = _boolean(value, p)
        else:
            kw[key] = _number(value, p, positive=True)
    return SolveOptions(**kw)


def _parse_scan(obj, path: str) -> ScanSpec:
    _check_keys(obj, ("lambdas", "n_seeds", "workers", "subadditivity", "family", "min_points"), path)
    if "lambdas" not in obj:
        raise ConfigError(_join(path, "lambdas"), "required")
    lams = _number_list(obj["lambdas"], _join(path, "lambdas"), positive=True)
    for i, (a, b) in enumerate(zip(lams, lams[1:])):
        if not b > a:
            raise ConfigError(_join(_join(path, "lambdas"), i + 1), "lambda values must be strictly increasing")
    spec = ScanSpec(lambdas=lams)
    if "n_seeds" in obj:
        spec.n_seeds = _integer(obj["n_seeds"], _join(path, "n_seeds"), 1)
    if "workers" in obj:
        spec.workers = _integer(obj["workers"], _join(path, "workers"), 1)
    if "min_points" in obj:
        spec.min_points = _integer(obj["min_points"], _join(path, "min_points"), 16)
    pairs = obj.get("subadditivity", [])
    if not isinstance(pairs, list):
        raise ConfigError(_join(path, "subadditivity"), "expected a list of [lambda, Omega] pairs")
    for i, pair in enumerate(pairs):
        p = _join(_join(path, "subadditivity"), i)
        if not isinstance(pair, list) or len(pair) != 2:
            raise ConfigError(p, "expected [lambda, Omega]")
        lam, omega = (_number(x, _join(p, j)) for j, x in enumerate(pair))
        if not 0 < omega < lam:
            raise ConfigError(p, f"need 0 < Omega < lambda, got {pair}")
        for x in (lam, omega, lam - omega):
            if not any(math.isclose(x, y, rel_tol=1e-12) for y in lams):
                raise ConfigError(p, f"lambda={x:g} is not in scan.lambdas")
        spec.subadditivity.append((lam, omega))
    if "family" in obj and obj["family"]:
        fam = _number_list(obj["family"], _join(path, "family"), positive=True)
        if any(b <= a for a, b in zip(fam, fam[1:])):
            raise ConfigError(_join(path, "family"), "values must be strictly increasing")
        spec.family = fam
    return spec


def _parse_evolve(obj, path: str) -> EvolveSpec:
    _check_keys(obj, ("T", "dt", "substeps_nl", "record_every", "source"), path)
    spec = EvolveSpec()
    if "T" in obj:
        spec.T = _number(obj["T"], _join(path, "T"), positive=True)
    if "dt" in obj:
        spec.dt = _number(obj["dt"], _join(path, "dt"), positive=True)
    if "substeps_nl" in obj:
        spec.substeps_nl = _integer(obj["substeps_nl"], _join(path, "substeps_nl"), 1)
    if "record_every" in obj:
        spec.record_every = _integer(obj["record_every"], _join(path, "record_every"), 0)
    if spec.T < spec.dt:
        raise ConfigError(_join(path, "T"), "must be at least dt")
    if obj.get("source") is not None:
        if not isinstance(obj["source"], str):
            raise ConfigError(_join(path, "source"), "expected a path string")
        if not Path(obj["source"]).exists():
            raise ConfigError(_join(path, "source"), f"{obj['source']} does not exist")
        spec.source = obj["source"]
    return spec


def config_from_dict(obj) -> RunConfig:
    _check_keys(obj, ("command", "params", "grid", "solve", "scan", "evolve", "output_dir", "target"), "")
    command = obj.get("command")
    if command not in COMMANDS:
        raise ConfigError("command", f"must be one of {', '.join(COMMANDS)}, got {command!r}")
    cfg = RunConfig(command=command)
    if "output_dir" in obj:
        if not isinstance(obj["output_dir"], str) or not obj["output_dir"]:
            raise ConfigError("output_dir", "expected a non-empty path string")
        cfg.output_dir = obj["output_dir"]
    if command == "validate":
        target = obj.get("target")
        if not isinstance(target, str) or not Path(target).exists():
            raise ConfigError("target", f"result directory {target!r} does not exist")
        cfg.target = target
        return cfg
    if "params" in obj:
        cfg.params = _parse_params(obj["params"], "params", need_lambda=command != "scan")
    elif command != "evolve":  # evolve takes params from its source result
        raise ConfigError("params", "required")
    cfg.L, cfg.M = _parse_grid(obj.get("grid", {}), "grid")
    cfg.solve_opts = _parse_solve(obj.get("solve", {}), "solve")
    if cfg.params is not None and not cfg.params.theorem_regime and not cfg.solve_opts.allow_non_theorem:
        raise ConfigError("params", "alpha and beta must all be negative "
                          "(set solve.allow_non_theorem to override)")
    if command == "scan":
        if "scan" not in obj:
            raise ConfigError("scan", "required for command 'scan'")
        cfg.scan = _parse_scan(obj["scan"], "scan")
    elif "scan" in obj:
        raise ConfigError("scan", f"not used by command {command!r}")
    if command == "evolve":
        cfg.evolve = _parse_evolve(obj.get("evolve", {}), "evolve")
    elif "evolve" in obj:
        raise ConfigError("evolve", f"not used by command {command!r}")
    return cfg


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON run configuration."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"malformed JSON: {exc}") from None
    return config_from_dict(obj)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())
