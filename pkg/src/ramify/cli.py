"""Command-line frontend for irrigation and branch-shape experiments.

Subcommands: irrigate (half-circle path plans), treeopt (branch fans),
gamma-table (smoothing-vs-exact cost table), counterexample (the
two-path lengthening paradox), gradcheck (analytic vs finite-difference
gradients). Exit codes: 0 success, 2 configuration problems, 3 failed
numerical assertions or degenerate evaluations.

Heavy numeric imports happen inside the command functions so that the
RAMIFY_THREADS cap can be applied to the BLAS thread pools first.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS")


class NumericalCheckError(RuntimeError):
    """A numerical assertion of a command failed."""


def _apply_thread_env():
    """Cap numeric thread pools from RAMIFY_THREADS; returns an error or None.

    Must run before the first numpy import, which is why this reports
    problems as a string instead of importing any package machinery.
    """
    raw = os.environ.get("RAMIFY_THREADS")
    if raw is None:
        return None
    try:
        count = int(raw)
    except ValueError:
        return f"RAMIFY_THREADS must be an integer, got {raw!r}"
    if count < 0:
        return "RAMIFY_THREADS must be nonnegative (0 = automatic)"
    if count > 0:
        for name in _THREAD_VARS:
            os.environ[name] = str(count)
    return None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ramify",
        description="Optimal ramified irrigation patterns and branch shapes.")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = (
        ("irrigate", "Minimize a mollified irrigation energy over half-circle paths."),
        ("treeopt", "Optimize branch shapes and leaf densities."),
        ("gamma-table", "Tabulate exact vs mollified energies over a smoothing grid."),
        ("counterexample", "Reproduce the two-path lengthening paradox."),
        ("gradcheck", "Compare analytic and finite-difference gradients."),
    )
    for name, help_text in specs:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", metavar="FILE", help="JSON config file")
        cmd.add_argument("--preset", metavar="NAME",
                         help="named preset layered under the config file")
        cmd.add_argument("--out", metavar="DIR", help="output directory")
        cmd.add_argument("--functional", choices=("avg", "max"),
                         help="mollified energy form for path plans")
        if name == "gradcheck":
            cmd.add_argument("--corrupt-gradient", action="store_true",
                             help="test mode: corrupt one component to force failure")
    return parser


def _write_json(path: str, payload: dict):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _resolved_merge_tol(run_cfg, plan) -> float:
    if run_cfg.merge_tol is not None:
        return run_cfg.merge_tol
    diameter = plan.diameter()
    return 1e-6 * diameter if diameter > 0.0 else 0.0


class _TraceStream:
    """Streams accepted iterations to trace.csv as they happen."""

    def __init__(self, path: str):
        from .optimizer import TRACE_HEADER

        self.handle = open(path, "w", encoding="utf-8")
        self.handle.write(TRACE_HEADER + "\n")
        self.handle.flush()

    def __call__(self, row, plan):
        self.handle.write(row.as_csv() + "\n")
        self.handle.flush()

    def close(self):
        self.handle.close()


def _run_continuation(initial_plan, factory, run_cfg, out_dir, svg_alpha, targets):
    """Shared driver: continuation, streamed trace, stage snapshots."""
    from .optimizer import eps_continuation
    from .plan_model import save_plan
    from .svg import save_svg

    stream = _TraceStream(os.path.join(out_dir, "trace.csv"))
    try:
        final_plan, trace = eps_continuation(
            initial_plan, factory, run_cfg.descent, on_iteration=stream)
    finally:
        stream.close()
    for i, plan in enumerate(trace.stage_plans):
        save_plan(plan, os.path.join(out_dir, f"plan_stage_{i}.json"))
        save_svg(plan, os.path.join(out_dir, f"stage_{i}.svg"),
                 alpha=svg_alpha, targets=targets)
    return final_plan, trace


def _kernel_payload(spec) -> dict:
    mass = spec.profile_mass
    return {
        "kind": spec.kind,
        "profile_mass": "infinite" if mass == float("inf") else mass,
        "note": "profile mass is the scale of the smoothed field; "
                "profiles are unit at zero, not unit mass",
    }


def cmd_irrigate(run_cfg, out_dir: str) -> dict:
    from .exact_cost import exact_plan_cost
    from .optimizer import path_evaluator
    from .plan_model import (TopologyError, build_star_plan, crossing_cluster_count,
                             half_circle_targets)

    measure = run_cfg.measure
    targets = half_circle_targets(measure.n, measure.radius, measure.total_mass)
    initial = build_star_plan(targets, measure.segments_per_path)
    alpha = run_cfg.objective.alpha

    def factory(eps):
        return path_evaluator(alpha, eps, run_cfg.kernel, run_cfg.functional,
                              run_cfg.quad_points)

    final_plan, trace = _run_continuation(initial, factory, run_cfg, out_dir,
                                          alpha, targets)
    clusters = [crossing_cluster_count(p) for p in trace.stage_plans]
    merge_tol = _resolved_merge_tol(run_cfg, final_plan)
    try:
        exact = exact_plan_cost(final_plan, alpha, merge_tol)
        exact_note = None
    except TopologyError as exc:
        exact = None
        exact_note = str(exc)
    summary = {
        "experiment": "irrigate",
        "functional": run_cfg.functional,
        "kernel": _kernel_payload(run_cfg.kernel),
        "alpha": alpha,
        "eps_schedule": list(run_cfg.descent.eps_schedule),
        "tau0": trace.metadata["tau0"],
        "stage_reasons": trace.stage_reasons,
        "iterations": len(trace.rows),
        "final_energy": trace.metadata["final"]["total"],
        "exact_cost": exact,
        "exact_cost_note": exact_note,
        "merge_tol": merge_tol,
        "cluster_counts": clusters,
        "atoms": measure.n,
    }
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    return summary


def cmd_treeopt(run_cfg, out_dir: str) -> dict:
    from .optimizer import branch_evaluator
    from .plan_model import build_fan_branches

    fan = run_cfg.fan
    initial = build_fan_branches(fan.n, fan.spread_angle, fan.length0,
                                 fan.segments, run_cfg.descent.m_init)

    def factory(eps):
        return branch_evaluator(run_cfg.objective, eps)

    final_plan, trace = _run_continuation(initial, factory, run_cfg, out_dir,
                                          run_cfg.objective.alpha, None)
    final = trace.metadata["final"]
    summary = {
        "experiment": "treeopt",
        "branches": fan.n,
        "alpha": run_cfg.objective.alpha,
        "c1": run_cfg.objective.c1,
        "c2": run_cfg.objective.c2,
        "penalty_kernel": run_cfg.objective.penalty_kernel,
        "f_min": run_cfg.objective.f_min,
        "eps_schedule": list(run_cfg.descent.eps_schedule),
        "tau0": trace.metadata["tau0"],
        "stage_reasons": trace.stage_reasons,
        "iterations": len(trace.rows),
        "final": final,
    }
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    return summary


def cmd_gamma_table(run_cfg, out_dir: str) -> dict:
    from .exact_cost import exact_plan_cost
    from .mollified import energy_avg, energy_max
    from .plan_model import build_star_plan, half_circle_targets

    measure = run_cfg.measure
    alpha = run_cfg.objective.alpha
    plan = build_star_plan(
        half_circle_targets(measure.n, measure.radius, measure.total_mass),
        measure.segments_per_path)
    exact = exact_plan_cost(plan, alpha, 0.0)
    gamma = run_cfg.gamma
    rows = []
    for eps in gamma.eps_values:
        e_max = energy_max(plan, alpha, eps, run_cfg.kernel).value
        e_avg = energy_avg(plan, alpha, eps, run_cfg.kernel, run_cfg.quad_points).value
        rows.append({
            "eps": eps,
            "E_exact": exact,
            "E_max": e_max,
            "E_avg": e_avg,
            "gap_max": (exact - e_max) / exact,
            "gap_avg": (exact - e_avg) / exact,
        })
    lines = ["eps,E_exact,E_max,E_avg,gap_max,gap_avg"]
    for row in rows:
        lines.append(",".join(format(row[k], ".17g") for k in
                              ("eps", "E_exact", "E_max", "E_avg", "gap_max", "gap_avg")))
    with open(os.path.join(out_dir, "gamma_table.csv"), "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")

    failures = []
    for row in rows:
        if row["E_max"] > exact * (1.0 + gamma.bound_tol):
            failures.append(f"upper bound violated at eps={row['eps']}: "
                            f"E_max={row['E_max']} > E_exact={exact}")
    for prev, cur in zip(rows, rows[1:]):
        if cur["gap_max"] > prev["gap_max"] + 1e-12:
            failures.append(f"gap_max grew from eps={prev['eps']} to eps={cur['eps']}: "
                            f"{prev['gap_max']} -> {cur['gap_max']}")
    summary = {
        "experiment": "gamma-table",
        "alpha": alpha,
        "atoms": measure.n,
        "kernel": _kernel_payload(run_cfg.kernel),
        "E_exact": exact,
        "rows": rows,
        "final_gap_max": rows[-1]["gap_max"],
        "gap_target": gamma.gap_target,
        "gap_target_met": abs(rows[-1]["gap_max"]) <= gamma.gap_target,
        "assertions_passed": not failures,
        "failures": failures,
    }
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    if failures:
        raise NumericalCheckError("; ".join(failures))
    return summary


def cmd_counterexample(run_cfg, out_dir: str) -> dict:
    from .kernels import KernelSpec
    from .mollified import (energy_avg, saturated_two_path_cost,
                            saturated_two_path_cost_dl2)
    from .plan_model import saturated_pair_plans

    fixture = run_cfg.counterexample
    cost_before = saturated_two_path_cost(fixture.m1, fixture.m2, fixture.l1,
                                          fixture.l2, fixture.alpha)
    cost_after = saturated_two_path_cost(fixture.m1, fixture.m2, fixture.l1,
                                         fixture.l2 + fixture.delta, fixture.alpha)
    derivative = saturated_two_path_cost_dl2(fixture.m1, fixture.m2, fixture.l1,
                                             fixture.l2, fixture.alpha)
    control_before = saturated_two_path_cost(fixture.m1, fixture.m2, fixture.l1,
                                             fixture.l2, 1.0)
    control_after = saturated_two_path_cost(fixture.m1, fixture.m2, fixture.l1,
                                            fixture.l2 + fixture.delta, 1.0)

    plan_short, plan_long, eps = saturated_pair_plans(
        fixture.l1, fixture.l2, fixture.delta, fixture.m1, fixture.m2)
    # A kernel with unbounded profile mass stays near 1 across the whole
    # configuration at this eps, which is what saturates the cap.
    spec = KernelSpec(kind="rational")
    energy_short = energy_avg(plan_short, fixture.alpha, eps, spec,
                              run_cfg.quad_points).value
    energy_long = energy_avg(plan_long, fixture.alpha, eps, spec,
                             run_cfg.quad_points).value

    failures = []
    if not cost_after < cost_before:
        failures.append(f"closed form: lengthened cost {cost_after} "
                        f"not below {cost_before}")
    if not derivative < 0.0:
        failures.append(f"closed form: derivative {derivative} not negative")
    if not energy_long < energy_short:
        failures.append(f"pipeline: lengthened energy {energy_long} "
                        f"not below {energy_short}")
    if not control_after > control_before:
        failures.append("alpha=1 control: lengthening did not increase cost")

    report = {
        "experiment": "counterexample",
        "fixture": {
            "m1": fixture.m1, "m2": fixture.m2, "l1": fixture.l1,
            "l2": fixture.l2, "delta": fixture.delta, "alpha": fixture.alpha,
        },
        "closed_form": {
            "cost_before": cost_before,
            "cost_after": cost_after,
            "derivative_at_l2": derivative,
        },
        "alpha1_control": {
            "cost_before": control_before,
            "cost_after": control_after,
            "lengthening_increases_cost": control_after > control_before,
        },
        "pipeline": {
            "kernel": "rational",
            "eps": eps,
            "energy_short": energy_short,
            "energy_long": energy_long,
            "lengthened_is_cheaper": energy_long < energy_short,
        },
        "assertions_passed": not failures,
        "failures": failures,
    }
    _write_json(os.path.join(out_dir, "report.json"), report)
    if failures:
        raise NumericalCheckError("; ".join(failures))
    return report


def run_gradient_check(run_cfg, corrupt: bool = False) -> dict:
    """Compare analytic and central-difference gradients on random plans."""
    import numpy as np

    from .objective import fd_gradient, tree_objective_gradient
    from .plan_model import random_branch_plan

    check = run_cfg.gradcheck
    rng = np.random.default_rng(check.seed)
    worst = 0.0
    worst_plan = None
    worst_component = None
    for index in range(check.plans):
        plan = random_branch_plan(rng, check.max_branches, check.max_segments)
        analytic = tree_objective_gradient(plan, run_cfg.objective).flatten()
        if corrupt and index == 0:
            analytic = analytic.copy()
            analytic[min(1, len(analytic) - 1)] += 1e-3
        numeric = fd_gradient(plan, run_cfg.objective, check.step).flatten()
        scale = np.maximum(np.abs(analytic), np.abs(numeric))
        relevant = scale > 1e-8
        if not np.any(relevant):
            continue
        rel = np.abs(analytic - numeric)[relevant] / scale[relevant]
        peak = float(rel.max())
        if peak > worst:
            worst = peak
            worst_plan = index
            worst_component = int(np.flatnonzero(relevant)[int(rel.argmax())])
    return {
        "experiment": "gradcheck",
        "plans": check.plans,
        "seed": check.seed,
        "max_branches": check.max_branches,
        "max_segments": check.max_segments,
        "step": check.step,
        "alpha": run_cfg.objective.alpha,
        "c1": run_cfg.objective.c1,
        "c2": run_cfg.objective.c2,
        "worst_rel_error": worst,
        "worst_plan_index": worst_plan,
        "worst_component": worst_component,
        "tolerance": check.tolerance,
        "passed": worst <= check.tolerance,
    }


def cmd_gradcheck(run_cfg, out_dir: str, corrupt: bool = False) -> dict:
    report = run_gradient_check(run_cfg, corrupt)
    _write_json(os.path.join(out_dir, "report.json"), report)
    print(f"worst relative gradient error: {report['worst_rel_error']:.3e} "
          f"(tolerance {report['tolerance']:.1e})")
    if not report["passed"]:
        raise NumericalCheckError(
            f"gradient mismatch {report['worst_rel_error']:.3e} exceeds "
            f"tolerance {report['tolerance']:.1e}")
    return report


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    env_error = _apply_thread_env()
    if env_error is not None:
        print(f"configuration error: {env_error}", file=sys.stderr)
        return 2

    from .config import ConfigError, load_config_file, resolve_config, validate_config

    try:
        file_data = load_config_file(args.config) if args.config else None
        raw = resolve_config(file_data, args.preset)
        if args.functional:
            raw["functional"] = args.functional
        run_cfg = validate_config(raw)
        if run_cfg.experiment is not None and run_cfg.experiment != args.command:
            raise ConfigError(
                f"config is for experiment {run_cfg.experiment!r} "
                f"but the {args.command!r} command was invoked")
        out_dir = args.out or run_cfg.out_dir or os.path.join("runs", args.command)
        os.makedirs(out_dir, exist_ok=True)
        if args.command == "irrigate":
            cmd_irrigate(run_cfg, out_dir)
        elif args.command == "treeopt":
            cmd_treeopt(run_cfg, out_dir)
        elif args.command == "gamma-table":
            cmd_gamma_table(run_cfg, out_dir)
        elif args.command == "counterexample":
            cmd_counterexample(run_cfg, out_dir)
        elif args.command == "gradcheck":
            cmd_gradcheck(run_cfg, out_dir, corrupt=getattr(args, "corrupt_gradient", False))
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalCheckError as exc:
        print(f"numerical check failed: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
