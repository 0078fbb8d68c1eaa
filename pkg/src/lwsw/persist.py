"""On-disk layout for minimizer results and scans.

A result is three files sharing one stem that embeds N, d, lambda and seed:
``<stem>.json`` (scalars and traces), ``<stem>_u.bin`` and ``<stem>_v.bin``
(field dumps). Scans add ``scan.csv`` and ``scan.json`` next to their rows.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .energy import CouplingParams, Profile, constraint, energy
from .evolution import EvolutionState, conserved, read_snapshots, write_snapshots
from .grid import read_field, write_field
from .minimizer import MinimizerResult, el_residual, lagrange_multiplier
from .scan import CSV_COLUMNS, ScanRow, _decay

RESULT_KIND = "minimizer_result"
EVOLUTION_KIND = "evolution"


def result_stem(params: CouplingParams, seed: int) -> str:
    return f"N{params.N}_d{params.d:g}_lam{params.lam:g}_seed{seed}"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True)


def content_hash(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(part if isinstance(part, bytes) else str(part).encode())
    return h.hexdigest()


def derived_scalars(p: Profile, c: CouplingParams) -> dict:
    """Quantities recomputable from stored fields; ``validate`` compares these."""
    mu = lagrange_multiplier(p, c)
    m = np.append(p.grid.integrate(p.u**2), c.d * p.grid.integrate(p.v**2))
    dominant = int(np.argmax(m[:-1]))
    return {
        "energy": energy(p, c),
        "constraint": constraint(p, c),
        "mu": mu,
        "residuals": [float(r) for r in el_residual(p, mu, c)],
        "masses": [float(x) for x in m],
        "decay_phi": _decay(p.grid, p.u[dominant]),
        "decay_psi": _decay(p.grid, p.v),
    }


def save_result(directory, result: MinimizerResult, extra: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    p, c = result.profile, result.params
    stem = result_stem(c, result.seed)
    write_field(directory / f"{stem}_u.bin", p.grid, p.u)
    write_field(directory / f"{stem}_v.bin", p.grid, p.v)
    doc = {
        "kind": RESULT_KIND,
        "params": c.to_dict(),
        "grid": {"L": p.grid.L, "M": p.grid.M},
        "seed": result.seed,
        "iters": result.iters,
        "converged": result.converged,
        "stop_reason": result.stop_reason,
        "flags": list(result.flags),
        "energy_value": result.energy_value,
        "energy_trace": [float(e) for e in result.energy_trace],
        "fields": {"u": f"{stem}_u.bin", "v": f"{stem}_v.bin"},
        **derived_scalars(p, c),
    }
    if extra:
        doc.update(extra)
    path = directory / f"{stem}.json"
    path.write_text(canonical_json(doc))
    return path


def load_result(path) -> tuple[dict, Profile, CouplingParams]:
    """Read a result JSON and its field dumps."""
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc.get("kind") != RESULT_KIND:
        raise ValueError(f"{path} is not a minimizer result")
    params = CouplingParams.from_dict(doc["params"])
    grid, u = read_field(path.parent / doc["fields"]["u"])
    grid_v, v = read_field(path.parent / doc["fields"]["v"])
    if grid != grid_v or grid.L != doc["grid"]["L"] or grid.M != doc["grid"]["M"]:
        raise ValueError(f"{path}: field grids disagree with the header")
    return doc, Profile(grid, np.atleast_2d(u), v), params


def find_results(directory) -> list[Path]:
    out = []
    for path in sorted(Path(directory).rglob("*.json")):
        try:
            if json.loads(path.read_text()).get("kind") == RESULT_KIND:
                out.append(path)
        except (json.JSONDecodeError, UnicodeDecodeError):
            continue
    return out


def _close(a, b, rtol: float) -> bool:
    if isinstance(a, list):
        return len(a) == len(b) and all(_close(x, y, rtol) for x, y in zip(a, b))
    if a is None or b is None:
        return a is b
    a, b = float(a), float(b)
    if math.isnan(a) or math.isnan(b):
        return math.isnan(a) and math.isnan(b)
    return abs(a - b) <= rtol * max(abs(a), abs(b)) or abs(a - b) <= 1e-300


def validate_result(path, rtol: float = 1e-10, abs_residual: float = 1e-14) -> dict:
    """Recompute derived scalars from stored fields and compare with the JSON.

    Residuals near rounding level are compared with an absolute floor too,
    since their relative agreement is meaningless there.
    """
    doc, p, c = load_result(path)
    fresh = derived_scalars(p, c)
    mismatches = {}
    for key, value in fresh.items():
        stored = doc.get(key)
        if key == "residuals":
            ok = len(stored) == len(value) and all(
                _close(s, v, rtol) or abs(s - v) <= abs_residual for s, v in zip(stored, value)
            )
        else:
            ok = _close(stored, value, rtol)
        if not ok:
            mismatches[key] = {"stored": stored, "recomputed": value}
    if not _close(doc["energy_value"], fresh["energy"], rtol):
        mismatches["energy_value"] = {"stored": doc["energy_value"], "recomputed": fresh["energy"]}
    lam = c.lam
    if abs(fresh["constraint"] - lam) > rtol * lam:
        mismatches["constraint_vs_lambda"] = {"stored": lam, "recomputed": fresh["constraint"]}
    return {"path": str(path), "ok": not mismatches, "mismatches": mismatches}


def write_scan(directory, rows: list[ScanRow], report: dict | None = None) -> Path:
    """``scan.csv`` (one line per row), ``scan.json`` and each row's best result."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "scan.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(float(v)) if k != "seed_best" else int(v)
                             for k, v in row.csv_record().items()})
    docs = []
    for i, row in enumerate(rows):
        entry = row.to_dict()
        if row.result is not None:
            sub = directory / "rows" / f"{i:03d}"
            entry["result"] = str(save_result(sub, row.result).relative_to(directory))
        docs.append(entry)
    path = directory / "scan.json"
    path.write_text(canonical_json({"rows": docs, "report": report or {}}))
    return path


def read_scan_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {k: (int(v) if k == "seed_best" else float(v)) for k, v in rec.items()}
            for rec in csv.DictReader(fh)
        ]


def _close_rows(csv_rows, json_rows) -> list:
    bad = []
    if len(csv_rows) != len(json_rows):
        return [f"csv has {len(csv_rows)} rows, json has {len(json_rows)}"]
    for i, (a, b) in enumerate(zip(csv_rows, json_rows)):
        for key in CSV_COLUMNS:
            if not _close(a[key], b[key], 0.0):
                bad.append(f"row {i} column {key}: csv={a[key]!r} json={b[key]!r}")
    return bad


def validate_scan(path) -> dict:
    """``scan.csv`` and ``scan.json`` agree exactly, and referenced results exist."""
    path = Path(path)
    doc = json.loads(path.read_text())
    problems = _close_rows(read_scan_csv(path.parent / "scan.csv"), doc["rows"])
    for i, row in enumerate(doc["rows"]):
        ref = row.get("result")
        if ref is None:
            continue
        stored = json.loads((path.parent / ref).read_text())
        if not (_close(stored["energy_value"], row["I"], 0.0) and _close(stored["mu"], row["mu"], 0.0)):
            problems.append(f"row {i}: scalars differ from {ref}")
    return {"path": str(path), "ok": not problems, "mismatches": problems}


# -- evolution ----------------------------------------------------------------


def evolution_summary(initial: EvolutionState, final: EvolutionState) -> dict:
    m0, v0 = conserved(initial)
    m1, v1 = conserved(final)
    drift = np.abs(m1 - m0) / np.where(m0 > 0, m0, 1.0)
    return {
        "masses_initial": [float(x) for x in m0],
        "masses_final": [float(x) for x in m1],
        "mass_drift": [float(x) for x in drift],
        "v_integral_initial": v0,
        "v_integral_final": v1,
    }


def save_evolution(directory, snapshots: list[EvolutionState], params: CouplingParams,
                   summary: dict) -> Path:
    """Snapshots under ``snapshots/`` and scalar diagnostics in ``evolution.json``."""
    directory = Path(directory)
    write_snapshots(directory / "snapshots", snapshots, params)
    doc = {"kind": EVOLUTION_KIND, "params": params.to_dict(), "snapshots": "snapshots",
           **evolution_summary(snapshots[0], snapshots[-1]), **summary}
    path = directory / "evolution.json"
    path.write_text(canonical_json(doc))
    return path


def validate_evolution(path, rtol: float = 1e-10) -> dict:
    path = Path(path)
    doc = json.loads(path.read_text())
    _, states = read_snapshots(path.parent / doc["snapshots"])
    fresh = evolution_summary(states[0], states[-1])
    mismatches = {}
    for key, value in fresh.items():
        stored = doc[key]
        if key == "mass_drift" or key.startswith("v_integral"):
            # values near zero: compare absolutely
            ok = np.allclose(stored, value, rtol=rtol, atol=1e-12)
        else:
            ok = _close(stored, value, rtol)
        if not ok:
            mismatches[key] = {"stored": stored, "recomputed": value}
    return {"path": str(path), "ok": not mismatches, "mismatches": mismatches}


def validate_directory(directory, rtol: float = 1e-10) -> dict:
    """Validate every result, scan table and evolution record below ``directory``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory} is not a directory")
    reports = [validate_result(p, rtol) for p in find_results(directory)]
    reports += [validate_scan(p) for p in sorted(directory.rglob("scan.json"))]
    reports += [validate_evolution(p, rtol) for p in sorted(directory.rglob("evolution.json"))]
    if not reports:
        raise ValueError(f"no artifacts found under {directory}")
    return {"ok": all(r["ok"] for r in reports), "checked": len(reports), "reports": reports}
