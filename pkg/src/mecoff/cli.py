"""Experiment harness: single solves, parameter sweeps, oracle comparisons.

Emits one CSV row per (instance, algorithm) with a fixed column order so
sweep outputs are byte-identical across runs with the same seeds. Wall-clock
timing is opt-in for exactly that reason.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import yaml

from .baselines import grid_rounding_gap, solve_fixed_ratio, solve_local_only, solve_oracle
from .errors import BadSpec, SolverError, TooLarge
from .scenario import Instance, ScenarioSpec, generate, load_scenario, spec_from_mapping
from .solver import SolveSchedule, solve

CSV_COLUMNS = [
    "seed", "K", "N", "T_s", "algorithm", "status", "total_energy_J",
    "mean_offload_ratio", "outer_iterations", "wall_ms", "violations",
]

SEED_STRIDE = 10007  # per-point seed = base + point_index*stride + repetition

ALGORITHMS = ("PA", "LC", "FR")

AXIS_FIELDS = {
    "users": "num_users",
    "deadline": "slot_length",
    "subcarriers": "num_subcarriers",
}


def _fmt(value: float) -> str:
    return "%.12g" % value


def _violations_text(violations) -> str:
    parts = []
    for v in violations:
        who = "sys" if v.user is None else f"u{v.user}"
        parts.append(f"{who}:{v.constraint}:{v.slack:.3g}")
    return ";".join(parts)


def _run_algorithm(name: str, instance: Instance, schedule: SolveSchedule,
                   timing: bool):
    """One algorithm on one instance -> (row fields, report or None)."""
    started = time.perf_counter() if timing else 0.0
    report = None
    try:
        if name == "PA":
            report = solve(instance.tasks, instance.channel, instance.config,
                           schedule)
        elif name == "LC":
            report = solve_local_only(instance.tasks, instance.channel,
                                      instance.config)
        elif name == "FR":
            report = solve_fixed_ratio(instance.tasks, instance.channel,
                                       instance.config)
        else:
            raise ValueError(f"unknown algorithm {name!r}")
        status = "ok" if report.feasible else "infeasible"
        fields = {
            "status": status,
            "total_energy_J": _fmt(report.total_energy),
            "mean_offload_ratio": _fmt(report.mean_offload_ratio),
            "outer_iterations": str(report.outer_iterations),
            "violations": _violations_text(report.violations),
        }
    except SolverError as exc:
        fields = {
            "status": f"error:{type(exc).__name__}",
            "total_energy_J": "nan",
            "mean_offload_ratio": "nan",
            "outer_iterations": "0",
            "violations": "",
        }
    wall = (time.perf_counter() - started) * 1e3 if timing else 0.0
    fields["wall_ms"] = "%.3f" % wall
    return fields, report


def _rows_for_instance(spec: ScenarioSpec, algorithms, schedule: SolveSchedule,
                       timing: bool):
    instance = generate(spec)
    rows = []
    reports = {}
    for name in algorithms:
        fields, report = _run_algorithm(name, instance, schedule, timing)
        reports[name] = report
        rows.append({
            "seed": str(spec.rng_seed),
            "K": str(spec.num_users),
            "N": str(spec.num_subcarriers),
            "T_s": _fmt(spec.slot_length),
            "algorithm": name,
            **fields,
        })
    return rows, reports


def _write_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _schedule_from_args(args) -> SolveSchedule:
    kwargs = {}
    if args.precision is not None:
        kwargs["precision"] = args.precision
    if args.z_max is not None:
        kwargs["outer_max"] = args.z_max
    if args.dual_sign is not None:
        kwargs["dual_sign"] = args.dual_sign
    return SolveSchedule(**kwargs)


def _parse_algorithms(text, default):
    if text is None:
        return default
    names = [part.strip().upper() for part in text.split(",") if part.strip()]
    bad = [n for n in names if n not in ALGORITHMS]
    if bad or not names:
        raise BadSpec(f"algorithms must be a comma list from {ALGORITHMS}, got {text!r}")
    return tuple(names)


# ---------------------------------------------------------------------------
# solve

def _cmd_solve(args) -> int:
    spec = load_scenario(args.file)
    if args.seed is not None:
        spec = replace(spec, rng_seed=args.seed)
    algorithms = _parse_algorithms(args.algorithms, ("PA",))
    schedule = _schedule_from_args(args)
    rows, reports = _rows_for_instance(spec, algorithms, schedule, args.timing)
    for row in rows:
        name = row["algorithm"]
        report = reports[name]
        line = (f"{name}: status={row['status']} energy={row['total_energy_J']} J"
                f" mean_ratio={row['mean_offload_ratio']}")
        if report is not None and report.violations:
            line += f" violations=[{_violations_text(report.violations)}]"
        print(line)
    if args.out:
        _write_csv(args.out, rows)
        print(f"wrote {args.out}")
    return 0 if all(row["status"] == "ok" for row in rows) else 2


# ---------------------------------------------------------------------------
# sweep

@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    repetitions: int
    base: ScenarioSpec
    algorithms: tuple

    def validate(self) -> None:
        if self.axis not in AXIS_FIELDS:
            raise BadSpec(f"axis must be one of {sorted(AXIS_FIELDS)}")
        if len(self.values) == 0:
            raise BadSpec("values must be nonempty")
        diffs = np.diff(np.asarray(self.values, dtype=float))
        if not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise BadSpec("values must be strictly monotone")
        if self.repetitions < 1:
            raise BadSpec("repetitions must be >= 1")
        for name in self.algorithms:
            if name not in ALGORITHMS:
                raise BadSpec(f"unknown algorithm {name!r}")


def load_sweep(path) -> SweepSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise BadSpec(f"unparseable sweep file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise BadSpec("sweep file must contain a key/value mapping")
    known = {"axis", "values", "repetitions", "base", "algorithms"}
    unknown = set(data) - known
    if unknown:
        raise BadSpec(f"unknown sweep fields: {sorted(unknown)}")
    for required in ("axis", "values", "base"):
        if required not in data:
            raise BadSpec(f"sweep must set {required}")
    base = spec_from_mapping(data["base"])
    algorithms = tuple(str(a).upper() for a in data.get("algorithms", ALGORITHMS))
    spec = SweepSpec(
        axis=str(data["axis"]),
        values=tuple(data["values"]),
        repetitions=int(data.get("repetitions", 1)),
        base=base,
        algorithms=algorithms,
    )
    spec.validate()
    return spec


def _sweep_point(job):
    spec, algorithms, schedule, timing = job
    return _rows_for_instance(spec, algorithms, schedule, timing)[0]


def _cmd_sweep(args) -> int:
    sweep = load_sweep(args.file)
    base_seed = args.seed if args.seed is not None else sweep.base.rng_seed
    algorithms = _parse_algorithms(args.algorithms, sweep.algorithms)
    schedule = _schedule_from_args(args)
    field = AXIS_FIELDS[sweep.axis]

    jobs = []
    for idx, value in enumerate(sweep.values):
        typed = int(value) if field != "slot_length" else float(value)
        for rep in range(sweep.repetitions):
            seed = base_seed + idx * SEED_STRIDE + rep
            point = replace(sweep.base, **{field: typed, "rng_seed": seed})
            jobs.append((point, algorithms, schedule, args.timing))

    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            per_job = list(pool.map(_sweep_point, jobs))
    else:
        per_job = [_sweep_point(job) for job in jobs]

    rows = [row for rows_ in per_job for row in rows_]
    if args.out:
        _write_csv(args.out, rows)

    # per-point aggregates and savings
    reps = sweep.repetitions
    for idx, value in enumerate(sweep.values):
        chunk = [row for rows_ in per_job[idx * reps:(idx + 1) * reps] for row in rows_]
        means = {}
        ratios = {}
        for name in algorithms:
            vals = [float(r["total_energy_J"]) for r in chunk
                    if r["algorithm"] == name and r["status"] == "ok"]
            rat = [float(r["mean_offload_ratio"]) for r in chunk
                   if r["algorithm"] == name and r["status"] == "ok"]
            means[name] = float(np.mean(vals)) if vals else float("nan")
            ratios[name] = float(np.mean(rat)) if rat else float("nan")
        line = f"{sweep.axis}={value}:"
        for name in algorithms:
            line += f" {name}={_fmt(means[name])}J"
        if "PA" in algorithms:
            line += f" PA_ratio={_fmt(ratios['PA'])}"
            for other in ("LC", "FR"):
                if other in algorithms and np.isfinite(means.get(other, np.nan)) \
                        and means[other] > 0:
                    saving = 100.0 * (1.0 - means["PA"] / means[other])
                    line += f" save_vs_{other}={saving:.1f}%"
        print(line)
    if args.out:
        print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# oracle comparison

def _cmd_oracle_compare(args) -> int:
    spec = load_scenario(args.file)
    if args.seed is not None:
        spec = replace(spec, rng_seed=args.seed)
    schedule = _schedule_from_args(args)
    instance = generate(spec)
    try:
        oracle = solve_oracle(instance.tasks, instance.channel, instance.config)
    except TooLarge as exc:
        raise BadSpec(str(exc)) from exc

    fields, report = _run_algorithm("PA", instance, schedule, args.timing)
    print(f"oracle: energy={_fmt(oracle.best_energy)} J "
          f"(assignments={oracle.instances_enumerated}, "
          f"feasible={oracle.feasible_count})")
    print(f"PA: status={fields['status']} energy={fields['total_energy_J']} J")
    exit_code = 0 if fields["status"] == "ok" else 2
    if report is not None and report.feasible:
        gap = grid_rounding_gap(instance.tasks, instance.channel,
                                instance.config, report.allocation)
        ratio = report.total_energy / oracle.best_energy if oracle.best_energy > 0 \
            else float("inf")
        print(f"PA/oracle={ratio:.4f} grid_gap={_fmt(gap)} J")
    if args.out:
        rows = [{
            "seed": str(spec.rng_seed), "K": str(spec.num_users),
            "N": str(spec.num_subcarriers), "T_s": _fmt(spec.slot_length),
            "algorithm": "ORACLE", "status": "ok",
            "total_energy_J": _fmt(oracle.best_energy),
            "mean_offload_ratio": _fmt(float(np.mean(
                oracle.best_allocation.offload_ratio))
                if spec.num_users else 0.0),
            "outer_iterations": "0", "wall_ms": "0.000", "violations": "",
        }, {
            "seed": str(spec.rng_seed), "K": str(spec.num_users),
            "N": str(spec.num_subcarriers), "T_s": _fmt(spec.slot_length),
            "algorithm": "PA", **fields,
        }]
        _write_csv(args.out, rows)
        print(f"wrote {args.out}")
    return exit_code


# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mecoff",
        description="Energy-minimal partial offloading experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler, help_text in (
            ("solve", _cmd_solve, "solve one instance from a scenario file"),
            ("sweep", _cmd_sweep, "run a parameter sweep from a sweep file"),
            ("oracle-compare", _cmd_oracle_compare,
             "compare the solver against the exhaustive oracle")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("file", help="scenario or sweep file (YAML)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the base RNG seed")
        p.add_argument("--out", default=None, help="CSV output path")
        p.add_argument("--algorithms", default=None,
                       help="comma list from PA,LC,FR")
        p.add_argument("--dual-sign", choices=("paper", "ascent"), default=None,
                       help="multiplier update sign convention")
        p.add_argument("--precision", type=float, default=None,
                       help="relative convergence tolerance")
        p.add_argument("--z-max", type=int, default=None,
                       help="outer iteration cap")
        p.add_argument("--workers", type=int, default=1,
                       help="parallel sweep workers")
        p.add_argument("--timing", action="store_true",
                       help="record real wall-clock times (breaks byte-determinism)")
        p.set_defaults(handler=handler)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (BadSpec, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
