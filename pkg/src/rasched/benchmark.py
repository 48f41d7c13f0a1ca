"""Algorithm dispatch, batch generation and benchmark reports.

Seeds are derived from one top-level seed with ``derive_seed(seed, *keys)``:
instance ``i`` of a generated batch uses ``derive_seed(seed, 0, i)`` and the
search of instance ``i`` in a benchmark uses ``derive_seed(seed, 1, i)``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rasched.appointment import HeavyTrafficConfig, hybrid_objective, optimize_schedule
from rasched.errors import DomainError, RaschedError
from rasched.exact import evaluate_exact
from rasched.instance import generate_instance, load_instance, save_instance
from rasched.lns import LnsParams, lns_solve
from rasched.phasetype import FitConfig
from rasched.routing import enumerate_optimal, msvf_tour, mtsp_tour, solve_tsp

ALGORITHMS = ("lns", "tsp", "mtsp", "msvf", "enum")

CSV_COLUMNS = (
    "instance_id", "n", "regime", "omega_t", "algorithm", "seed", "budget", "objective",
    "travel_comp", "idle_comp", "wait_comp", "gap_pct", "wall_ms",
    "beta", "max_removed", "h_init", "accept_variant", "status",
)


def derive_seed(seed: int, *keys: int) -> int:
    """32-bit seed derived from ``seed`` and integer ``keys``."""
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


@dataclass(frozen=True)
class SolveResult:
    algorithm: str
    tour: tuple
    x: np.ndarray
    objective: float
    breakdown: dict
    params: dict
    converged: bool = True
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "tour": list(self.tour),
            "x": self.x.tolist(),
            "objective": self.objective,
            "objective_kind": "exact-optimized",
            "converged": self.converged,
            "breakdown": self.breakdown,
            "params": self.params,
            **self.extra,
        }


def solve(inst, algorithm: str, params: LnsParams = LnsParams(),
          config: FitConfig = FitConfig()) -> SolveResult:
    """Run one algorithm and optimise the schedule of the resulting tour."""
    if algorithm not in ALGORITHMS:
        raise DomainError(f"unknown algorithm {algorithm!r}; choose from {', '.join(ALGORITHMS)}")
    cfg = HeavyTrafficConfig(params.beta)
    extra = {}
    record = {"beta": cfg.beta}
    if algorithm == "lns":
        sol = lns_solve(inst, params, config)
        tour, x, value, converged = sol.tour, sol.schedule, sol.objective, sol.converged
        extra["iterations"] = sol.iterations
        extra["hybrid"] = sol.hybrid
        record.update(max_removed=params.max_removed, h_init=params.accept_fraction,
                      accept_variant=params.accept_variant, seed=params.seed,
                      budget=params.budget, wall_clock=params.wall_clock)
    elif algorithm == "enum":
        res = enumerate_optimal(inst, "exact", cfg, config)
        tour, x, value, converged = res.tour, res.x, res.value, True
        extra["evaluated"] = res.evaluated
    else:
        if algorithm == "tsp":
            tour = solve_tsp(inst, cfg, config)
            extra["orientations"] = {
                "chosen": hybrid_objective(inst, tour, cfg, config),
                "reversed": hybrid_objective(inst, tour[::-1], cfg, config),
            }
        elif algorithm == "mtsp":
            tour = mtsp_tour(inst, config)
        else:
            tour = msvf_tour(inst)
        opt = optimize_schedule(inst, tour, cfg, config)
        x, value, converged = opt.x, opt.value, opt.converged
    ev = evaluate_exact(inst, tour, x, config)
    breakdown = {"travel": ev.travel_component, "idle": ev.idle_component, "wait": ev.wait_component}
    return SolveResult(algorithm, tuple(tour), np.asarray(x), float(value), breakdown, record,
                       converged, extra)


# -- batch generation ----------------------------------------------------------

def generate_batch(n: int, regimes, omega_ts, count: int, seed: int, out_dir) -> dict:
    """Write ``count`` instances per (regime, travel weight) and a manifest.

    Returns the manifest, which is also written to ``out_dir/manifest.json``.
    """
    if count < 1:
        raise DomainError("count must be at least 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    index = 0
    for regime in regimes:
        for wt in omega_ts:
            for c in range(count):
                s = derive_seed(seed, 0, index)
                inst_id = f"n{n}-{regime}-w{wt:g}-{c:03d}"
                inst = generate_instance(n, regime, float(wt), s)
                path = out / f"{inst_id}.json"
                save_instance(inst, path)
                entries.append({"id": inst_id, "path": path.name, "n": n, "regime": regime,
                                "omega_t": float(wt), "seed": s})
                index += 1
    manifest = {"seed": seed, "instances": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest


def load_manifest(path) -> tuple[dict, Path]:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: invalid manifest JSON ({exc})") from exc
    if not isinstance(data, dict) or "instances" not in data:
        raise DomainError(f"{path}: manifest needs an 'instances' list")
    return data, path.parent


# -- benchmark -----------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_benchmark(manifest_path, algorithms, seed: int, iterations: int | None = None,
                  time_limit: float | None = None, beta: float = 0.5, max_removed: int = 6,
                  h_init: float = 0.05, accept_variant: str = "paper",
                  config: FitConfig = FitConfig(), record_wall: bool | None = None,
                  log=None) -> list[dict]:
    """Run every algorithm on every manifest instance.

    Gaps are relative to the best objective among the successful runs on
    the same instance.  Failures are recorded in the ``status`` column and
    the run continues.  ``wall_ms`` is left empty in iteration-budget mode
    (unless ``record_wall``) so that repeated runs give identical reports.
    """
    for a in algorithms:
        if a not in ALGORITHMS:
            raise DomainError(f"unknown algorithm {a!r}")
    manifest, root = load_manifest(manifest_path)
    wall_clock = time_limit is not None
    if record_wall is None:
        record_wall = wall_clock
    rows = []
    for i, entry in enumerate(manifest["instances"]):
        group = []
        try:
            inst = load_instance(root / entry["path"])
        except (RaschedError, OSError) as exc:
            inst, load_error = None, f"error: {exc}"
        for alg in algorithms:
            s = derive_seed(seed, 1, i)
            params = LnsParams(max_removed=max_removed, accept_fraction=h_init,
                               iterations=iterations, time_limit=time_limit, seed=s,
                               accept_variant=accept_variant, beta=beta)
            row = {
                "instance_id": entry["id"], "n": entry["n"], "regime": entry["regime"],
                "omega_t": float(entry["omega_t"]), "algorithm": alg,
                "seed": s if alg == "lns" else None,
                "budget": (params.budget if alg == "lns" else None),
                "objective": None, "travel_comp": None, "idle_comp": None, "wait_comp": None,
                "gap_pct": None, "wall_ms": None, "beta": beta,
                "max_removed": max_removed if alg == "lns" else None,
                "h_init": h_init if alg == "lns" else None,
                "accept_variant": accept_variant if alg == "lns" else None,
                "status": "ok",
            }
            if inst is None:
                row["status"] = load_error
            else:
                start = time.perf_counter()
                try:
                    res = solve(inst, alg, params, config)
                    row.update(objective=res.objective, travel_comp=res.breakdown["travel"],
                               idle_comp=res.breakdown["idle"], wait_comp=res.breakdown["wait"])
                    if not res.converged:
                        row["status"] = "ok (schedule not converged)"
                except RaschedError as exc:
                    row["status"] = f"error: {exc}"
                if record_wall:
                    row["wall_ms"] = round((time.perf_counter() - start) * 1000.0, 3)
            if log is not None:
                log(f"{entry['id']} {alg}: {row['status']} {_fmt(row['objective'])}")
            group.append(row)
        values = [r["objective"] for r in group if r["objective"] is not None]
        if values:
            best = min(values)
            for r in group:
                if r["objective"] is not None:
                    r["gap_pct"] = (r["objective"] - best) / best * 100.0 if best > 0 else 0.0
        rows.extend(group)
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


SUMMARY_COLUMNS = ("n", "omega_t", "regime", "algorithm", "instances", "failures",
                   "mean_gap_pct", "mean_objective")


def summarize(csv_text: str) -> list[dict]:
    """Mean gap and objective per (n, travel weight, regime, algorithm).

    Computed from the CSV text alone; groups appear in first-seen order.
    """
    groups: dict[tuple, list] = {}
    for r in csv.DictReader(io.StringIO(csv_text)):
        key = (int(r["n"]), float(r["omega_t"]), r["regime"], r["algorithm"])
        groups.setdefault(key, []).append(r)
    out = []
    for (n, wt, regime, alg), rs in groups.items():
        ok = [r for r in rs if r["objective"] != ""]
        gaps = [float(r["gap_pct"]) for r in ok]
        objs = [float(r["objective"]) for r in ok]
        out.append({
            "n": n, "omega_t": wt, "regime": regime, "algorithm": alg,
            "instances": len(rs), "failures": len(rs) - len(ok),
            "mean_gap_pct": sum(gaps) / len(gaps) if gaps else math.nan,
            "mean_objective": sum(objs) / len(objs) if objs else math.nan,
        })
    return out


def summary_to_csv(summary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in summary:
        w.writerow([_fmt(r[c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def format_summary(summary) -> str:
    """Fixed-width text table of a summary."""
    lines = [f"{'n':>3} {'omega_t':>7} {'regime':>6} {'algorithm':>9} {'count':>5} {'gap %':>8}"]
    for r in summary:
        lines.append(f"{r['n']:>3} {r['omega_t']:>7g} {r['regime']:>6} {r['algorithm']:>9} "
                     f"{r['instances']:>5} {r['mean_gap_pct']:>8.2f}")
    return "\n".join(lines)
