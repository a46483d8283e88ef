"""Command-line front end: solve, predict, compare, render, validate.

Exit codes: 0 success, 1 usage error, 2 pipeline failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from . import choice
from .config import RunConfig, load_config, pipeline_for
from .geometric.compile import trajectory_rows
from .physics.stability import check_stability, verdict_log
from .planner.schedule import SymbolicPlan
from .planner.search import enumerate_plans, plan_record
from .planner.symbolic import Move
from .problem_io import bundled_problem_path, load_problem_set
from .scene import Problem
from .stats import compare, load_behavior

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _map(fn: Callable, items: Sequence, jobs: int) -> List:
    """Ordered map, optionally across worker processes."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _write_csv(path: Path, rows: List[Dict[str, object]], columns: Sequence[str]):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _write_json(path: Path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=False) + "\n")


def _problems(path: Optional[str]) -> List[Problem]:
    return load_problem_set(path or bundled_problem_path())


# solve -------------------------------------------------------------------

VERDICT_COLUMNS = ("problem_id", "solution", "timestep", "label", "energy_j", "displaced")


def _solve_one(task):
    problem, mode, hands, config, seed = task
    sc = config.search
    res = enumerate_plans(problem, mode, hands, sc.search, sc.budget, sc.cap, seed)
    pipe = pipeline_for(problem, config)
    records, verdicts = [], []
    for j, plan in enumerate(res.plans):
        sol = pipe.evaluate(plan)
        rec = plan_record(plan)
        rec.update({"index": j, "feasible": bool(sol.outcome.feasible), "reason": sol.outcome.reason,
                    "accepted": sol.accepted, "recoverable": sol.recoverable_count,
                    "f": choice.solution_cost(sol) if sol.accepted else None})
        records.append(rec)
        verdicts.extend(verdict_log(problem.id, j, sol))
    entry = {"problem_id": problem.id, "depth": res.depth, "diagnostic": res.diagnostic, "solutions": records}
    return entry, verdicts


def cmd_solve(args, config: RunConfig) -> int:
    problems = _problems(args.problems)
    tasks = [(p, args.mode, args.hands, config, args.seed) for p in problems]
    results = _map(_solve_one, tasks, args.jobs)
    out = Path(args.out)
    _write_json(out, {"mode": args.mode, "hands": args.hands, "problems": [e for e, _ in results]})
    vpath = Path(args.verdicts) if args.verdicts else out.with_suffix(".verdicts.csv")
    _write_csv(vpath, [r for _, rows in results for r in rows], VERDICT_COLUMNS)
    for entry, _ in results:
        sols = entry["solutions"]
        ok = sum(s["accepted"] for s in sols)
        note = f" ({entry['diagnostic']})" if entry["diagnostic"] else ""
        print(f"problem {entry['problem_id']}: {len(sols)} solutions, {ok} accepted{note}")
    print(f"wrote {out} and {vpath}")
    return EXIT_OK


# predict -----------------------------------------------------------------

PREDICTION_COLUMNS = ("problem_id", "variant", "pr_one_hand", "n_one_hand", "n_all")


def _predict_one(task):
    problem, variants, config, seed = task
    sc = config.search
    runner = choice.ProblemRunner(problem, pipeline_for(problem, config), sc.cap, sc.search, sc.budget, seed)
    return [runner.predict(v, config.choice.temperature) for v in variants]


def _variants(name: str) -> List[choice.ModelVariant]:
    if name == "all":
        return list(choice.VARIANTS)
    try:
        return [choice.ModelVariant.parse(name)]
    except ValueError as err:
        raise UsageError(f"{err}; choose from all, {', '.join(v.name for v in choice.VARIANTS)}")


def cmd_predict(args, config: RunConfig) -> int:
    variants = _variants(args.variant)
    problems = _problems(args.problems)
    per_problem = _map(_predict_one, [(p, variants, config, args.seed) for p in problems], args.jobs)
    rows = [pred.row() for v in range(len(variants)) for preds in per_problem for pred in [preds[v]]]
    _write_csv(Path(args.out), rows, PREDICTION_COLUMNS)
    for r in rows:
        shown = r["pr_one_hand"] if r["pr_one_hand"] != "" else "no solutions"
        print(f"{r['variant']:<22} problem {r['problem_id']:>3}: {shown}")
    print(f"wrote {args.out}")
    return EXIT_OK


def load_predictions(path) -> Dict[str, Dict[int, Optional[float]]]:
    out: Dict[str, Dict[int, Optional[float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != PREDICTION_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(PREDICTION_COLUMNS)}")
        for row in reader:
            pr = row["pr_one_hand"].strip()
            out.setdefault(row["variant"], {})[int(row["problem_id"])] = float(pr) if pr else None
    return out


# compare -----------------------------------------------------------------

REPORT_COLUMNS = ("variant", "target", "pearson_r", "ci_low", "ci_high", "n_problems", "iterations",
                  "undefined_replicates")
PVALUE_COLUMNS = ("target", "variant_a", "variant_b", "p_one_sided", "replicates")


def cmd_compare(args, config: RunConfig) -> int:
    preds = load_predictions(args.predictions)
    behavior = load_behavior(args.behavior)
    reports, prows = compare(preds, behavior, args.iterations, args.seed)
    out = Path(args.out)
    _write_csv(out, [r.row() for r in reports], REPORT_COLUMNS)
    ppath = Path(args.pvalues) if args.pvalues else out.with_suffix(".pvalues.csv")
    _write_csv(ppath, prows, PVALUE_COLUMNS)
    for r in reports:
        row = r.row()
        print(f"{r.variant:<22} {r.target:<7} r={row['pearson_r']} 95% CI [{row['ci_low']}, {row['ci_high']}] n={r.n}")
    print(f"wrote {out} and {ppath} (p-values are one-sided bootstrap fractions)")
    return EXIT_OK


# render ------------------------------------------------------------------

def _plan_from_record(rec) -> SymbolicPlan:
    moves = tuple(Move(k, o, s, a, t) for k, o, s, a, t in rec["moves"])
    return SymbolicPlan(moves, tuple(rec.get("carried", ())) or tuple(0 for _ in moves))


def cmd_render(args, config: RunConfig) -> int:
    data = json.loads(Path(args.solutions).read_text())
    problems = {p.id: p for p in _problems(args.problems)}
    entry = next((e for e in data["problems"] if e["problem_id"] == args.problem_id), None)
    if entry is None or args.problem_id not in problems:
        raise UsageError(f"unknown problem id {args.problem_id}")
    sols = entry["solutions"]
    if not 0 <= args.solution < len(sols):
        raise UsageError(f"unknown solution id {args.solution} (problem {args.problem_id} has {len(sols)})")
    problem = problems[args.problem_id]
    outcome = pipeline_for(problem, config).compile(_plan_from_record(sols[args.solution]), args.samples)
    if not outcome.feasible:
        print(f"solution is geometrically infeasible: {outcome.reason}", file=sys.stderr)
        return EXIT_FAILURE
    rows = trajectory_rows(outcome)
    _write_csv(Path(args.out), rows, list(rows[0]))
    print(f"wrote {len(rows)} keyframes to {args.out}")
    return EXIT_OK


# validate ----------------------------------------------------------------

def cmd_validate(args, config: RunConfig) -> int:
    problems = _problems(args.problems)
    bad = 0
    for p in problems:
        notes = []
        for name, cfg in (("initial", p.initial), ("target", p.target)):
            v = check_stability(cfg, config.physics)
            if v.unstable:
                notes.append(f"{name} unstable ({v.measured_energy:.3g} J)")
        bad += bool(notes)
        print(f"problem {p.id}: {'ok' if not notes else '; '.join(notes)}")
    print(f"{len(problems)} problems, {bad} with issues")
    return EXIT_FAILURE if bad else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="stackrecon", description="Stack reconfiguration planner and choice model.")
    ap.add_argument("--config", help="JSON file with physics/robot/solver/search/choice settings")
    ap.add_argument("--seed", type=int, default=0, help="seed for tree search and the bootstrap")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for per-problem work")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("solve", help="enumerate, compile and stability-check solutions")
    sp.add_argument("--problems", help="problem file (default: bundled sample set)")
    sp.add_argument("--mode", choices=("efficient", "universal"), default="efficient")
    sp.add_argument("--hands", choices=("one", "two", "both"), default="both")
    sp.add_argument("--out", default="solutions.json")
    sp.add_argument("--verdicts", help="verdict log path (default: <out>.verdicts.csv)")
    sp.set_defaults(func=cmd_solve)

    pp = sub.add_parser("predict", help="one-hand probabilities per problem and variant")
    pp.add_argument("--problems", help="problem file (default: bundled sample set)")
    pp.add_argument("--variant", default="all", help="all or one of " + ", ".join(v.name for v in choice.VARIANTS))
    pp.add_argument("--out", default="predictions.csv")
    pp.set_defaults(func=cmd_predict)

    cp = sub.add_parser("compare", help="correlate predictions with behavioral data")
    cp.add_argument("--predictions", required=True)
    cp.add_argument("--behavior", required=True)
    cp.add_argument("--iterations", type=int, default=10000)
    cp.add_argument("--out", default="correlations.csv")
    cp.add_argument("--pvalues", help="pairwise p-value path (default: <out>.pvalues.csv)")
    cp.set_defaults(func=cmd_compare)

    rp = sub.add_parser("render", help="export keyframe joints and block poses of one solution")
    rp.add_argument("--solutions", required=True)
    rp.add_argument("--problems", help="problem file (default: bundled sample set)")
    rp.add_argument("--problem-id", type=int, required=True)
    rp.add_argument("--solution", type=int, required=True)
    rp.add_argument("--samples", type=int, default=20, help="interpolated samples per segment")
    rp.add_argument("--out", default="trajectory.csv")
    rp.set_defaults(func=cmd_render)

    vp = sub.add_parser("validate", help="check a problem file parses and its configurations stand")
    vp.add_argument("--problems", help="problem file (default: bundled sample set)")
    vp.set_defaults(func=cmd_validate)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    try:
        config = load_config(args.config)
        return args.func(args, config)
    except UsageError as err:
        print(f"stackrecon: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError) as err:
        print(f"stackrecon: {args.command} failed: {err}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
