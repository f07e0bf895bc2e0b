"""Projected gradient descent over plans, with continuation in eps.

The descent works on the flat coordinate vector of a plan. Each
iteration takes the analytic gradient, tries steps tau * factor^j from
the largest tau downward, projects each trial onto the feasible set
(origin and fixed terminals pinned, branch heights and densities
nonnegative), and accepts the first strict decrease. Every few
iterations the plan is re-sampled to equal arc length; the remap is
applied only when it does not increase the objective, so the recorded
objective values decrease strictly until the method stops.

Continuation solves a sequence of problems with shrinking smoothing
radius, warm-starting each stage from the previous minimizer. Larger
radii let distant paths feel each other and merge into shared trunks;
smaller radii sharpen the geometry toward the unsmoothed cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import cumulative_arclength, resample_polyline, segment_lengths
from .gradients import GradientVector, free_mask, plan_to_vector, vector_to_plan
from .kernels import KernelSpec
from .mollified import energy_avg, energy_avg_gradient, energy_max, energy_max_gradient
from .objective import ObjectiveConfig, ObjectiveValue, tree_objective, tree_objective_gradient
from .plan_model import Branch, BranchPlan, Path, PathPlan

TRACE_FIELDS = ("iter", "eps", "J", "I", "P", "H", "tau", "gnorm", "backtracks")
TRACE_HEADER = ",".join(TRACE_FIELDS)


@dataclass(frozen=True)
class DescentConfig:
    """Step-size, stopping, and continuation parameters."""

    eps_schedule: tuple = (0.1,)
    tau0: Optional[float] = None
    j_max: int = 500
    backtrack_factor: float = 0.5
    backtrack_limit: int = 30
    stop_tol: float = 1e-7
    stop_patience: int = 10
    rediscretize_every: int = 5
    m_init: float = 0.1

    def __post_init__(self):
        schedule = tuple(float(e) for e in self.eps_schedule)
        object.__setattr__(self, "eps_schedule", schedule)
        if not schedule:
            raise ValueError("eps_schedule must not be empty")
        if any(e <= 0.0 for e in schedule):
            raise ValueError("eps_schedule entries must be positive")
        if any(b >= a for a, b in zip(schedule, schedule[1:])):
            raise ValueError("eps_schedule must be strictly decreasing")
        if self.tau0 is not None and not self.tau0 > 0.0:
            raise ValueError("tau0 must be positive when given")
        if self.j_max < 0:
            raise ValueError("j_max must be nonnegative")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.backtrack_limit < 1:
            raise ValueError("backtrack_limit must be at least 1")
        if not self.stop_tol > 0.0:
            raise ValueError("stop_tol must be positive")
        if self.stop_patience < 1:
            raise ValueError("stop_patience must be at least 1")
        if self.rediscretize_every < 0:
            raise ValueError("rediscretize_every must be nonnegative (0 disables)")
        if self.m_init < 0.0:
            raise ValueError("m_init must be nonnegative")


@dataclass(frozen=True)
class TraceRow:
    """One accepted descent iteration, in trace column order."""

    iteration: int
    eps: float
    total: float
    irrigation: float
    penalty: float
    payoff: float
    tau: float
    grad_norm: float
    backtracks: int

    def as_csv(self) -> str:
        values = (self.iteration, self.eps, self.total, self.irrigation,
                  self.penalty, self.payoff, self.tau, self.grad_norm, self.backtracks)
        return ",".join(format(v, ".17g") if isinstance(v, float) else str(v)
                        for v in values)


@dataclass
class RunTrace:
    """Concatenated iteration history plus per-stage snapshots."""

    rows: list = field(default_factory=list)
    stage_plans: list = field(default_factory=list)
    stage_reasons: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = [TRACE_HEADER]
        lines.extend(row.as_csv() for row in self.rows)
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Evaluator:
    """Objective and gradient callables over one plan type."""

    objective: Callable
    gradient: Callable


def path_evaluator(alpha: float, eps: float, spec: KernelSpec = KernelSpec(),
                   functional: str = "avg", quad_points: int = 32) -> Evaluator:
    """Evaluator minimizing a mollified irrigation energy over path plans."""
    if functional == "avg":
        def objective(plan):
            v = energy_avg(plan, alpha, eps, spec, quad_points).value
            return ObjectiveValue(total=v, irrigation=v, penalty=0.0, payoff=0.0)

        def gradient(plan):
            return energy_avg_gradient(plan, alpha, eps, spec, quad_points)
    elif functional == "max":
        def objective(plan):
            v = energy_max(plan, alpha, eps, spec).value
            return ObjectiveValue(total=v, irrigation=v, penalty=0.0, payoff=0.0)

        def gradient(plan):
            return energy_max_gradient(plan, alpha, eps, spec)
    else:
        raise ValueError("functional must be 'avg' or 'max'")
    return Evaluator(objective=objective, gradient=gradient)


def branch_evaluator(obj_cfg: ObjectiveConfig, eps: float) -> Evaluator:
    """Evaluator for the branch-shape objective at the given smoothing."""
    cfg = obj_cfg.with_eps(eps)
    return Evaluator(
        objective=lambda plan: tree_objective(plan, cfg),
        gradient=lambda plan: tree_objective_gradient(plan, cfg),
    )


def feasibility_project(vector: np.ndarray, template) -> np.ndarray:
    """Project a flat coordinate vector onto the feasible set.

    Pinned slots are restored from the template plan; branch heights and
    densities are clamped to zero from below. Path vertices are
    otherwise unconstrained.
    """
    base = plan_to_vector(template)
    out = np.where(free_mask(template), np.asarray(vector, dtype=float), base)
    if isinstance(template, BranchPlan):
        offset = 0
        for b in template.branches:
            count = len(b.x)
            y_block = slice(offset + count, offset + 2 * count)
            m_block = slice(offset + 2 * count, offset + 2 * count + len(b.m))
            np.maximum(out[y_block], 0.0, out=out[y_block])
            np.maximum(out[m_block], 0.0, out=out[m_block])
            offset += 2 * count + len(b.m)
    return out


def project_plan(plan):
    """Return the nearest feasible plan (identity on feasible input)."""
    return vector_to_plan(feasibility_project(plan_to_vector(plan), plan), plan)


def _rediscretize_branch(branch: Branch) -> Branch:
    vertices = branch.vertices
    arcs = cumulative_arclength(vertices)
    total = float(arcs[-1])
    if total == 0.0:
        return branch
    count = len(branch.m)
    new_vertices, new_arcs = resample_polyline(vertices, count + 1)
    new_lengths = segment_lengths(new_vertices)
    new_m = np.zeros(count)
    for p in range(count):
        lo, hi = new_arcs[p], new_arcs[p + 1]
        acc = 0.0
        for q in range(count):
            overlap = min(hi, arcs[q + 1]) - max(lo, arcs[q])
            if overlap > 0.0:
                acc += branch.m[q] * overlap
        new_m[p] = acc / new_lengths[p] if new_lengths[p] > 0.0 else 0.0
    old_mass = float((branch.m * segment_lengths(vertices)).sum())
    new_mass = float((new_m * new_lengths).sum())
    if abs(new_mass - old_mass) > 1e-9 * max(1.0, old_mass):
        return branch
    return Branch(x=new_vertices[:, 0], y=new_vertices[:, 1], m=new_m)


def rediscretize_plan(plan):
    """Re-sample every path or branch to equal arc length between knots.

    Knot counts are unchanged and endpoints are preserved exactly.
    Branch densities are remapped conservatively: the transported mass
    of each new interval equals the mass of the arc span it covers, so
    the total leaf mass is unchanged.
    """
    if isinstance(plan, PathPlan):
        paths = []
        for p in plan.paths:
            verts, _ = resample_polyline(p.vertices, p.vertices.shape[0])
            paths.append(Path(vertices=verts, mass=p.mass, terminal_fixed=p.terminal_fixed))
        return PathPlan(paths=tuple(paths))
    if isinstance(plan, BranchPlan):
        return BranchPlan(branches=tuple(_rediscretize_branch(b) for b in plan.branches))
    raise TypeError("expected a PathPlan or BranchPlan")


def backtracking_step(plan, current_total: float, grad: GradientVector, tau0: float,
                      evaluator: Evaluator, cfg: DescentConfig):
    """Largest projected step tau0 * factor^j that strictly decreases.

    Returns (plan, value, tau, trials) on success, where trials counts
    the rejected shrinks before acceptance, or (None, None, 0.0, limit)
    when every trial step fails to decrease the objective.
    """
    flat = plan_to_vector(plan)
    direction = grad.flatten()
    tau = tau0
    for j in range(cfg.backtrack_limit):
        candidate_vec = feasibility_project(flat - tau * direction, plan)
        candidate = vector_to_plan(candidate_vec, plan)
        value = evaluator.objective(candidate)
        if value.total < current_total:
            return candidate, value, tau, j
        tau *= cfg.backtrack_factor
    return None, None, 0.0, cfg.backtrack_limit


def run_descent(plan, evaluator: Evaluator, cfg: DescentConfig, eps: float, tau0: float,
                start_iteration: int = 0, on_iteration=None):
    """Projected descent at fixed eps until convergence or rejection.

    Stops after ``stop_patience`` consecutive iterations whose relative
    decrease falls below ``stop_tol``, when the line search cannot find
    any decreasing step, or at the iteration cap. Returns the final
    plan, its objective value, the accepted-iteration rows, and the stop
    reason.
    """
    plan = project_plan(plan)
    value = evaluator.objective(plan)
    if not np.isfinite(value.total):
        raise ValueError("objective is not finite at the initial plan")
    rows = []
    quiet = 0
    reason = "iteration_cap"
    for it in range(1, cfg.j_max + 1):
        grad = evaluator.gradient(plan)
        candidate, cand_value, tau, trials = backtracking_step(
            plan, value.total, grad, tau0, evaluator, cfg)
        if candidate is None:
            reason = "line_search_exhausted"
            break
        plan, new_value = candidate, cand_value
        if cfg.rediscretize_every > 0 and it % cfg.rediscretize_every == 0:
            resampled = rediscretize_plan(plan)
            resampled_value = evaluator.objective(resampled)
            if resampled_value.total <= new_value.total:
                plan, new_value = resampled, resampled_value
        row = TraceRow(
            iteration=start_iteration + it,
            eps=eps,
            total=new_value.total,
            irrigation=new_value.irrigation,
            penalty=new_value.penalty,
            payoff=new_value.payoff,
            tau=tau,
            grad_norm=grad.norm(),
            backtracks=trials,
        )
        rows.append(row)
        if on_iteration is not None:
            on_iteration(row, plan)
        relative = (value.total - new_value.total) / max(abs(value.total), 1e-300)
        value = new_value
        if relative < cfg.stop_tol:
            quiet += 1
            if quiet >= cfg.stop_patience:
                reason = "converged"
                break
        else:
            quiet = 0
    return plan, value, rows, reason


def resolve_tau0(plan, cfg: DescentConfig) -> float:
    """Configured tau0, or a tenth of the plan diameter when unset."""
    if cfg.tau0 is not None:
        return cfg.tau0
    diameter = plan.diameter()
    return 0.1 * diameter if diameter > 0.0 else 0.1


def eps_continuation(plan, evaluator_factory: Callable[[float], Evaluator],
                     cfg: DescentConfig, on_iteration=None):
    """Descend through the eps schedule with warm starts.

    ``evaluator_factory`` maps each eps to an evaluator. Returns the
    final plan and a trace whose stage_plans hold the initial plan
    followed by the minimizer of every stage; iteration numbers continue
    across stages.
    """
    plan = project_plan(plan)
    tau0 = resolve_tau0(plan, cfg)
    trace = RunTrace()
    trace.stage_plans.append(plan)
    trace.metadata["tau0"] = tau0
    trace.metadata["eps_schedule"] = list(cfg.eps_schedule)
    start = 0
    final_value = None
    for eps in cfg.eps_schedule:
        evaluator = evaluator_factory(eps)
        plan, final_value, rows, reason = run_descent(
            plan, evaluator, cfg, eps, tau0, start_iteration=start, on_iteration=on_iteration)
        trace.rows.extend(rows)
        trace.stage_plans.append(plan)
        trace.stage_reasons.append(reason)
        start += len(rows)
    if final_value is not None:
        trace.metadata["final"] = {
            "total": final_value.total,
            "irrigation": final_value.irrigation,
            "penalty": final_value.penalty,
            "payoff": final_value.payoff,
        }
    return plan, trace
