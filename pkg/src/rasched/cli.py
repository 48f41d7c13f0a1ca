"""Command-line interface: ``rasched <verb> ...``.

Verbs: generate, solve, evaluate, simulate, benchmark, verify.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from rasched import benchmark as bench
from rasched.errors import RaschedError
from rasched.exact import evaluate_exact
from rasched.instance import load_instance
from rasched.lns import ACCEPT_VARIANTS, LnsParams
from rasched.phasetype import DEFAULT_MAX_DIM, FitConfig
from rasched.simulate import simulate_solution

Z_LIMIT = 4.0


def _add_common(p: argparse.ArgumentParser, budget: bool = False):
    p.add_argument("--seed", type=int, default=0, help="top-level random seed")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--beta", type=float, default=0.5, help="variance decay rate of the heavy-traffic schedule")
    p.add_argument("--max-phase-dim", type=int, default=DEFAULT_MAX_DIM,
                   help="largest phase-type dimension a fit may use")
    if budget:
        p.add_argument("--accept-variant", choices=ACCEPT_VARIANTS, default="paper",
                       help="acceptance threshold grows (paper) or shrinks (decreasing) over the run")
        p.add_argument("--max-removed", type=int, default=6, help="most clients removed per iteration")
        p.add_argument("--h-init", type=float, default=0.05,
                       help="acceptance threshold as a fraction of the initial objective")
        g = p.add_mutually_exclusive_group()
        g.add_argument("--iters", type=int, help="iteration budget (deterministic)")
        g.add_argument("--time-limit", type=float, help="wall-clock budget in seconds")


def _add_solution_inputs(p: argparse.ArgumentParser):
    p.add_argument("instance", help="instance JSON file")
    p.add_argument("--solution", help="solution JSON written by 'solve'")
    p.add_argument("--tour", help="comma-separated client order, e.g. 3,1,2")
    p.add_argument("--schedule", help="comma-separated inter-appointment times")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rasched", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("generate", help="write random instances and a manifest")
    p.add_argument("--n", type=int, required=True, help="number of clients")
    p.add_argument("--regime", nargs="+", choices=("low", "high"), default=["low"])
    p.add_argument("--omega-t", nargs="+", type=float, default=[1.0], help="travel weight(s)")
    p.add_argument("--count", type=int, default=1, help="instances per regime and travel weight")
    _add_common(p)

    p = sub.add_parser("solve", help="solve one instance")
    p.add_argument("instance", help="instance JSON file")
    p.add_argument("--algorithm", choices=bench.ALGORITHMS, default="lns")
    _add_common(p, budget=True)

    p = sub.add_parser("evaluate", help="exact objective of a tour and schedule")
    _add_solution_inputs(p)
    p.add_argument("--check", action="store_true",
                   help="fail unless the recorded objective is reproduced within 1e-9")
    _add_common(p)

    p = sub.add_parser("simulate", help="Monte Carlo estimate of a tour and schedule")
    _add_solution_inputs(p)
    p.add_argument("--reps", type=int, default=100_000)
    _add_common(p)

    p = sub.add_parser("verify", help="compare exact evaluation with simulation")
    _add_solution_inputs(p)
    p.add_argument("--reps", type=int, default=1_000_000)
    _add_common(p)

    p = sub.add_parser("benchmark", help="run algorithms over a manifest and write a CSV")
    p.add_argument("manifest", help="manifest.json written by 'generate'")
    p.add_argument("--algorithms", nargs="+", choices=bench.ALGORITHMS,
                   default=["lns", "tsp", "mtsp", "msvf"])
    p.add_argument("--summary", help="also write the grouped summary CSV here")
    p.add_argument("--record-wall", action="store_true",
                   help="fill wall_ms even with an iteration budget")
    _add_common(p, budget=True)
    return parser


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _tour_and_schedule(args):
    recorded = None
    if args.solution:
        sol = json.loads(Path(args.solution).read_text())
        tour, x, recorded = sol["tour"], sol["x"], sol.get("objective")
    else:
        if not (args.tour and args.schedule):
            raise RaschedError("give --solution or both --tour and --schedule")
        tour = [int(v) for v in args.tour.split(",") if v.strip()]
        x = _floats(args.schedule)
    return tuple(tour), np.asarray(x, dtype=float), recorded


def _fit_config(args) -> FitConfig:
    return FitConfig(max_dim=args.max_phase_dim)


def _params(args) -> LnsParams:
    return LnsParams(max_removed=args.max_removed, accept_fraction=args.h_init,
                     iterations=args.iters, time_limit=args.time_limit, seed=args.seed,
                     accept_variant=args.accept_variant, beta=args.beta)


def cmd_generate(args) -> int:
    if not args.out:
        raise RaschedError("generate needs --out DIR")
    manifest = bench.generate_batch(args.n, args.regime, args.omega_t, args.count, args.seed, args.out)
    print(f"wrote {len(manifest['instances'])} instances and manifest.json to {args.out}")
    return 0


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    res = bench.solve(inst, args.algorithm, _params(args), _fit_config(args))
    data = {"instance": str(args.instance), **res.to_dict()}
    _emit(json.dumps(data, indent=1) + "\n", args.out)
    if not res.converged:
        print("warning: schedule optimisation hit its iteration cap", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    inst = load_instance(args.instance)
    tour, x, recorded = _tour_and_schedule(args)
    ev = evaluate_exact(inst, tour, x, _fit_config(args))
    data = {"tour": list(tour), "x": x.tolist(), "objective": ev.objective, "breakdown": ev.breakdown()}
    _emit(json.dumps(data, indent=1) + "\n", args.out)
    if args.check:
        if recorded is None:
            raise RaschedError("--check needs a solution file with a recorded objective")
        if abs(ev.objective - recorded) > 1e-9 * max(1.0, abs(recorded)):
            print(f"objective mismatch: recorded {recorded!r}, evaluated {ev.objective!r}",
                  file=sys.stderr)
            return 1
    return 0


def cmd_simulate(args) -> int:
    inst = load_instance(args.instance)
    tour, x, _ = _tour_and_schedule(args)
    est = simulate_solution(inst, tour, x, args.reps, args.seed, _fit_config(args))
    data = {
        "tour": list(tour), "x": x.tolist(), "replications": est.replications, "seed": est.seed,
        "objective_mean": est.objective_mean, "objective_stderr": est.objective_stderr,
        "idle_mean": est.idle_mean.tolist(), "idle_stderr": est.idle_stderr.tolist(),
        "wait_mean": est.wait_mean.tolist(), "wait_stderr": est.wait_stderr.tolist(),
    }
    _emit(json.dumps(data, indent=1) + "\n", args.out)
    return 0


def z_score(estimate: float, exact: float, stderr: float) -> float:
    diff = estimate - exact
    if stderr == 0.0:
        return 0.0 if abs(diff) <= 1e-12 * max(1.0, abs(exact)) else float("inf")
    return diff / stderr


def cmd_verify(args) -> int:
    inst = load_instance(args.instance)
    tour, x, _ = _tour_and_schedule(args)
    config = _fit_config(args)
    ev = evaluate_exact(inst, tour, x, config)
    est = simulate_solution(inst, tour, x, args.reps, args.seed, config)
    lines = [f"{'quantity':<12} {'exact':>14} {'simulated':>14} {'stderr':>11} {'z':>7}"]
    worst = 0.0
    rows = [("objective", ev.objective, est.objective_mean, est.objective_stderr)]
    for j in range(len(tour)):
        rows.append((f"idle[{j + 1}]", ev.per_client_idle[j], est.idle_mean[j], est.idle_stderr[j]))
        rows.append((f"wait[{j + 1}]", ev.per_client_wait[j], est.wait_mean[j], est.wait_stderr[j]))
    for name, e, s, se in rows:
        z = z_score(s, e, se)
        worst = max(worst, abs(z))
        lines.append(f"{name:<12} {e:>14.6f} {s:>14.6f} {se:>11.3e} {z:>7.2f}")
    verdict = "PASS" if worst <= Z_LIMIT else "FAIL"
    lines.append(f"{verdict}: max |z| = {worst:.2f} (limit {Z_LIMIT:g}) over {args.reps} replications")
    _emit("\n".join(lines) + "\n", args.out)
    return 0 if worst <= Z_LIMIT else 1


def cmd_benchmark(args) -> int:
    rows = bench.run_benchmark(
        args.manifest, args.algorithms, args.seed, iterations=args.iters,
        time_limit=args.time_limit, beta=args.beta, max_removed=args.max_removed,
        h_init=args.h_init, accept_variant=args.accept_variant, config=_fit_config(args),
        record_wall=args.record_wall or None, log=lambda m: print(m, file=sys.stderr),
    )
    text = bench.rows_to_csv(rows)
    _emit(text, args.out)
    summary = bench.summarize(text)
    if args.summary:
        Path(args.summary).write_text(bench.summary_to_csv(summary))
    print(bench.format_summary(summary), file=sys.stderr)
    return 0


COMMANDS = {
    "generate": cmd_generate, "solve": cmd_solve, "evaluate": cmd_evaluate,
    "simulate": cmd_simulate, "verify": cmd_verify, "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.verb](args)
    except (RaschedError, OSError, ValueError, KeyError) as exc:
        print(f"rasched {args.verb}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
