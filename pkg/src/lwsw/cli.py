"""Command-line entry point: ``lwsw {solve,scan,evolve,validate}``.

Each run owns one output directory holding the resolved ``config.json``,
``run.json`` (command, seed, input hash, status, outputs) and the artifacts.
Failures leave a machine-readable ``error.json`` and a nonzero exit status.

Exit codes: 0 success, 1 runtime error, 2 bad configuration,
3 finished but not converged / a structure check or validation failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, RunConfig, config_from_dict, load_config
from .evolution import evolve, synthesize_initial, traveling_error
from .grid import Grid
from .minimizer import solve
from .persist import (
    canonical_json,
    content_hash,
    find_results,
    load_result,
    save_evolution,
    save_result,
    validate_directory,
    write_scan,
)
from .scan import (
    check_monotone_and_scaling,
    check_subadditivity,
    family,
    fit_bounds,
    scan,
    solve_adaptive,
    wave_params,
)

log = logging.getLogger("lwsw")

OUTPUT_ROOT_ENV = "LWSW_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "lwsw-output"

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_UNCONVERGED = 0, 1, 2, 3


def input_hash(cfg: RunConfig) -> str:
    """sha256 of the resolved config (output location excluded) and any input fields."""
    doc = cfg.to_dict()
    doc.pop("output_dir", None)
    parts = [canonical_json(doc)]
    if cfg.command == "evolve" and cfg.evolve and cfg.evolve.source:
        src = _source_result(cfg)
        rdoc = json.loads(src.read_text())
        parts += [src.read_bytes()] + [(src.parent / f).read_bytes() for f in sorted(rdoc["fields"].values())]
    return content_hash(*parts)


def resolve_output_dir(cfg: RunConfig, digest: str) -> Path | None:
    if cfg.output_dir is not None:
        return Path(cfg.output_dir)
    if cfg.command == "validate":
        return None  # report to stdout only
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT))
    return root / f"{cfg.command}-{digest[:12]}"


def _source_result(cfg: RunConfig) -> Path:
    src = Path(cfg.evolve.source)
    if src.is_file():
        return src
    found = find_results(src)
    if cfg.params is not None:
        found = [p for p in found if json.loads(p.read_text())["params"]["lambda"] == cfg.params.lam]
    if len(found) != 1:
        raise ValueError(f"{src} holds {len(found)} matching results; point evolve.source at one JSON file")
    return found[0]


# -- commands -----------------------------------------------------------------


def _run_solve(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    if cfg.M is not None:
        result = solve(Grid(cfg.L, cfg.M), cfg.params, cfg.solve_opts)
    else:
        result = solve_adaptive(cfg.params, cfg.solve_opts, cfg.L)
    path = save_result(out, result)
    log.info("solve: E=%.12g mu=%.12g residual=%.2e (%s after %d iterations)",
             result.energy_value, result.mu, result.residual_max, result.stop_reason, result.iters)
    status = EXIT_OK if result.converged else EXIT_UNCONVERGED
    return status, {"outputs": [path.name], "converged": result.converged}


def _checks_doc(report) -> dict:
    return {
        "passed": report.passed,
        "count": len(report),
        "checks": [{"kind": ch.kind, "lambdas": list(ch.lambdas), "margin": ch.margin,
                    "ok": ch.ok, "note": ch.note} for ch in report.checks],
    }


def _run_scan(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    spec = cfg.scan
    rows = scan(spec.lambdas, cfg.params, cfg.solve_opts, spec.n_seeds, cfg.L,
                spec.min_points, spec.workers)
    report = {"monotone_and_scaling": _checks_doc(check_monotone_and_scaling(rows))}
    ok = report["monotone_and_scaling"]["passed"] and all(r.valid for r in rows)
    if spec.subadditivity:
        sub = check_subadditivity(rows, spec.subadditivity)
        report["subadditivity"] = _checks_doc(sub)
        ok = ok and sub.passed
    try:
        b = fit_bounds(rows)
        report["bounds"] = {"A_quad": b.A_quad, "lambda_star_est": b.lambda_star_est, "A_lin": b.A_lin}
    except ValueError as exc:
        report["bounds"] = {"error": str(exc)}
    if spec.family:
        fam = family(spec.family, cfg.params, cfg.solve_opts, cfg.L, rows=rows)
        report["family"] = {
            "lambdas": [res.params.lam for _, res in fam.members],
            "speeds": fam.speeds,
            "speeds_increasing": fam.speeds_increasing,
            "waves": [{"c": w.c, "k": w.k, "omega": w.omega, "sigma": w.sigma} for w, _ in fam.members],
            "diagnostics": fam.diagnostics,
        }
        ok = ok and fam.speeds_increasing and len(fam) == len(spec.family)
        for _, res in fam.members:
            if not any(res is r.result for r in rows):
                save_result(out / "family", res)
    path = write_scan(out, rows, report)
    for r in rows:
        log.info("scan: lambda=%g I=%.10g mu=%.8g residual=%.1e valid=%s",
                 r.lam, r.I_value, r.mu, r.residual_max, r.valid)
    return (EXIT_OK if ok else EXIT_UNCONVERGED), {"outputs": [path.name, "scan.csv"]}


def _run_evolve(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    src = _source_result(cfg)
    doc, profile, params = load_result(src)
    if cfg.params is not None and (params.with_lambda(cfg.params.lam) != cfg.params):
        raise ValueError(f"params in the config differ from those stored in {src}")
    w = wave_params(doc["mu"], params)
    spec = cfg.evolve
    final, snapshots = evolve(synthesize_initial(profile, w), params, spec.options())
    summary = {"source": str(src), "T": spec.T, "dt": spec.dt,
               "wave": {"c": w.c, "k": w.k, "omega": w.omega, "sigma": w.sigma}}
    try:
        shape_err, phase_err = traveling_error(final, profile, w, spec.T)
        summary.update(shape_err=shape_err, phase_err=phase_err)
    except ValueError as exc:
        summary.update(shape_err=None, phase_err=None, traveling_error_note=str(exc))
    path = save_evolution(out, snapshots, params, summary)
    log.info("evolve: c=%.6g shape_err=%s", w.c, summary["shape_err"])
    return EXIT_OK, {"outputs": [path.name, "snapshots/manifest.json"]}


def _run_validate(cfg: RunConfig, out: Path | None) -> tuple[int, dict]:
    report = validate_directory(cfg.target)
    text = canonical_json(report)
    if out is not None:
        (out / "validation.json").write_text(text)
    for r in report["reports"]:
        print(f"{'ok  ' if r['ok'] else 'FAIL'} {r['path']}")
    return (EXIT_OK if report["ok"] else EXIT_UNCONVERGED), {
        "outputs": ["validation.json"] if out is not None else [], "checked": report["checked"]}


_COMMANDS = {"solve": _run_solve, "scan": _run_scan, "evolve": _run_evolve, "validate": _run_validate}


def _write_error(out: Path | None, cfg_command: str, exc: BaseException) -> None:
    doc = {"command": cfg_command, "error_type": type(exc).__name__, "message": str(exc),
           "field": getattr(exc, "path", None),
           "traceback": traceback.format_exception(type(exc), exc, exc.__traceback__)}
    if out is None:
        print(json.dumps(doc, indent=2), file=sys.stderr)
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / "error.json").write_text(canonical_json(doc))


def run(cfg: RunConfig) -> int:
    """Execute one configured job; returns the process exit status."""
    out = Path(cfg.output_dir) if cfg.output_dir is not None else None
    try:
        digest = input_hash(cfg)
        out = resolve_output_dir(cfg, digest)
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").unlink(missing_ok=True)
            resolved = replace(cfg, output_dir=str(out)) if cfg.output_dir is None else cfg
            (out / "config.json").write_text(resolved.to_json())
        status, info = _COMMANDS[cfg.command](cfg, out)
    except Exception as exc:  # surfaced verbatim in error.json
        log.error("%s failed: %s", cfg.command, exc)
        _write_error(out, cfg.command, exc)
        return EXIT_CONFIG if isinstance(exc, ConfigError) else EXIT_ERROR
    if out is not None:
        run_doc = {"command": cfg.command, "seed": cfg.solve_opts.seed, "input_hash": digest,
                   "status": status, **info}
        (out / "run.json").write_text(canonical_json(run_doc))
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lwsw", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "scan", "evolve"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override solve.seed")
        p.add_argument("--output-dir", help=f"default: ${OUTPUT_ROOT_ENV}/<command>-<hash>")
        if name == "evolve":
            p.add_argument("--from", dest="source", help="result directory or result JSON")
    p = sub.add_parser("validate")
    p.add_argument("result_dir")
    p.add_argument("--output-dir", help="also write validation.json here")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.output_dir) if args.output_dir else None
    try:
        if args.command == "validate":
            cfg = config_from_dict({"command": "validate", "target": args.result_dir})
        else:
            cfg = load_config(args.config)
            if cfg.command != args.command:
                raise ConfigError("command", f"config is for {cfg.command!r}, invoked as {args.command!r}")
            if args.seed is not None:
                if args.seed < 0:
                    raise ConfigError("solve.seed", "must be nonnegative")
                cfg.solve_opts = replace(cfg.solve_opts, seed=args.seed)
            if args.command == "evolve" and args.source:
                cfg = config_from_dict({**cfg.to_dict(), "evolve": {**cfg.evolve.to_dict(), "source": args.source}})
            if args.command == "evolve" and cfg.evolve.source is None:
                raise ConfigError("evolve.source", "no source result; pass --from <result-dir>")
        if out is not None:
            cfg.output_dir = str(out)
    except (ConfigError, OSError) as exc:
        log.error("%s", exc)
        _write_error(out, getattr(args, "command", "?"), exc)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
