"""Mollified multiplicities and irrigation energies.

Two smoothed multiplicity estimates drive everything here. The max form
evaluates the kernel at the minimum distance from a point to each path
and is a certified upper bound for the exact multiplicity, so the
associated energy never exceeds the exact cost of the same plan. The
integral-average form integrates the scaled kernel along each path and
caps the per-path contribution at 1 before mass weighting; it is the
form minimized by the irrigation experiments and is not lower
semicontinuous, which the saturated two-path closed forms below witness.

Branch plans use a mollified downstream flux built from the same segment
integrals; its concave power discounts crowded regions of the tree.

Energies discretize the outer arc-length integral with the midpoint rule
on the plan's own intervals. Inner segment integrals are exact for the
bump kernel and Gauss-Legendre quadrature otherwise, and the gradients
differentiate exactly what the energies compute.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import point_segment_projection
from .gradients import GradientVector, apply_free_mask
from .kernels import (
    KernelSpec,
    bump_segment_integral,
    bump_segment_integral_grad,
    kernel_derivative,
    kernel_eval,
    kernel_segment_integral,
    kernel_segment_integral_grad,
)
from .plan_model import BranchPlan, PathPlan, SegmentTable, segment_table


@dataclass(frozen=True)
class MollifiedEval:
    """Energy value with its per-segment midpoint-rule breakdown."""

    value: float
    alpha: float
    eps: float
    per_segment: dict  # (owner index, interval index) -> contribution


def _check_alpha(alpha: float):
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")


def _check_eps(eps: float):
    if not eps > 0.0:
        raise ValueError("eps must be positive")


def _path_masses(plan: PathPlan) -> np.ndarray:
    return np.array([p.mass for p in plan.paths])


def _as_points(x) -> tuple:
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    return np.atleast_2d(pts), single


def _min_path_distance(points: np.ndarray, table: SegmentTable) -> np.ndarray:
    """Min distance from each point to each owner's polyline, shape (T, n)."""
    _, dist = point_segment_projection(points, table.a, table.b)
    return np.minimum.reduceat(dist, table.group_starts, axis=1)


def multiplicity_max(x, plan: PathPlan, eps: float, spec: KernelSpec = KernelSpec()) :
    """Max-form mollified multiplicity at the query points.

    Sums mass times the scaled kernel of the exact point-to-polyline
    distance over all paths. Never falls below the exact multiplicity of
    the plan at the point, and never exceeds the total transported mass.
    """
    _check_eps(eps)
    points, single = _as_points(x)
    if not plan.paths:
        out = np.zeros(len(points))
        return float(out[0]) if single else out
    table = segment_table(plan)
    min_dist = _min_path_distance(points, table)
    values = kernel_eval(spec, min_dist / eps) @ _path_masses(plan)
    return float(values[0]) if single else values


def _per_path_inner(points: np.ndarray, table: SegmentTable, eps: float,
                    spec: KernelSpec, quad_points: int) -> np.ndarray:
    """Arc-length kernel integrals along each owner's polyline, shape (T, n)."""
    if spec.kind == "bump":
        mat = bump_segment_integral(table.a[None, :, :], table.b[None, :, :],
                                    points[:, None, :], eps)
    else:
        mat = kernel_segment_integral(spec, table.a[None, :, :], table.b[None, :, :],
                                      points[:, None, :], eps, quad_points)
    return np.add.reduceat(mat, table.group_starts, axis=1)


def multiplicity_avg(x, plan: PathPlan, eps: float, spec: KernelSpec = KernelSpec(),
                     quad_points: int = 32):
    """Integral-average mollified multiplicity at the query points.

    Each path contributes its mass times min{1, arc integral of the
    scaled kernel along the path}; the cap applies per path before mass
    weighting.
    """
    _check_eps(eps)
    points, single = _as_points(x)
    if not plan.paths:
        out = np.zeros(len(points))
        return float(out[0]) if single else out
    table = segment_table(plan)
    inner = _per_path_inner(points, table, eps, spec, quad_points)
    values = np.minimum(inner, 1.0) @ _path_masses(plan)
    return float(values[0]) if single else values


def _midpoint_energy(table: SegmentTable, multiplicities: np.ndarray, masses_per_seg: np.ndarray,
                     alpha: float, eps: float, what: str) -> MollifiedEval:
    active = (masses_per_seg * table.length) > 0.0
    if np.any(active & (multiplicities <= 0.0)):
        bad = int(np.flatnonzero(active & (multiplicities <= 0.0))[0])
        raise ValueError(
            f"{what}: zero multiplicity at midpoint of segment "
            f"(owner {table.owner[bad]}, interval {table.interval[bad]}) carrying mass"
        )
    powers = np.zeros_like(multiplicities)
    np.power(multiplicities, alpha - 1.0, out=powers, where=active)
    terms = np.where(active, powers * masses_per_seg * table.length, 0.0)
    per_segment = {
        (int(table.owner[i]), int(table.interval[i])): float(terms[i])
        for i in range(table.size)
    }
    return MollifiedEval(value=float(terms.sum()), alpha=alpha, eps=eps, per_segment=per_segment)


def energy_max(plan: PathPlan, alpha: float, eps: float,
               spec: KernelSpec = KernelSpec()) -> MollifiedEval:
    """Midpoint-rule energy built on the max-form multiplicity.

    Sum over segments of w(mid)^(alpha-1) * mass * length, where w is
    :func:`multiplicity_max`. Bounded above by the exact plan cost.
    """
    _check_alpha(alpha)
    _check_eps(eps)
    if not plan.paths:
        return MollifiedEval(value=0.0, alpha=alpha, eps=eps, per_segment={})
    table = segment_table(plan)
    w = multiplicity_max(table.midpoint, plan, eps, spec)
    return _midpoint_energy(table, w, table.flux, alpha, eps, "energy_max")


def energy_avg(plan: PathPlan, alpha: float, eps: float,
               spec: KernelSpec = KernelSpec(), quad_points: int = 32) -> MollifiedEval:
    """Midpoint-rule energy built on the integral-average multiplicity."""
    _check_alpha(alpha)
    _check_eps(eps)
    if not plan.paths:
        return MollifiedEval(value=0.0, alpha=alpha, eps=eps, per_segment={})
    table = segment_table(plan)
    w = multiplicity_avg(table.midpoint, plan, eps, spec, quad_points)
    return _midpoint_energy(table, w, table.flux, alpha, eps, "energy_avg")


def _scatter_vertex_gradients(plan: PathPlan, table: SegmentTable,
                              ga, gb, gx, g_len) -> GradientVector:
    """Assemble per-vertex gradients from per-segment contributions.

    ga, gb pull on the segment endpoints, gx on the segment midpoint, and
    g_len scales the unit tangent for direct length sensitivities.
    """
    grad = GradientVector.zeros_like(plan)
    d = table.b - table.a
    # A collapsed interval has no tangent; zero is a valid subgradient of
    # the length there, so its direct length pull is dropped. Descent can
    # then pass through states where consecutive knots coincide.
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(table.length[:, None] > 0.0, d / table.length[:, None], 0.0)
    pull_a = ga + 0.5 * gx - unit * g_len[:, None]
    pull_b = gb + 0.5 * gx + unit * g_len[:, None]
    for k, start in enumerate(table.group_starts):
        stop = table.group_starts[k + 1] if k + 1 < len(table.group_starts) else table.size
        for axis, block in ((0, grad.dx[k]), (1, grad.dy[k])):
            block[:-1] += pull_a[start:stop, axis]
            block[1:] += pull_b[start:stop, axis]
    return apply_free_mask(grad, plan)


def energy_avg_gradient(plan: PathPlan, alpha: float, eps: float,
                        spec: KernelSpec = KernelSpec(), quad_points: int = 32) -> GradientVector:
    """Exact gradient of :func:`energy_avg` in the free vertex coordinates.

    Chain rules through segment lengths, midpoints, and the segment
    integrals; capped paths contribute no multiplicity derivative. Taken
    one-sidedly at cap and support boundaries.
    """
    _check_alpha(alpha)
    _check_eps(eps)
    table = segment_table(plan)
    masses = _path_masses(plan)
    points = table.midpoint
    if spec.kind == "bump":
        mat, d_a, d_b, d_x = bump_segment_integral_grad(
            table.a[None, :, :], table.b[None, :, :], points[:, None, :], eps)
    else:
        mat, d_a, d_b, d_x = kernel_segment_integral_grad(
            spec, table.a[None, :, :], table.b[None, :, :], points[:, None, :], eps, quad_points)
    inner = np.add.reduceat(mat, table.group_starts, axis=1)
    uncapped = inner < 1.0
    w = np.minimum(inner, 1.0) @ masses

    active = (table.flux * table.length) > 0.0
    if np.any(active & (w <= 0.0)):
        raise ValueError("energy_avg gradient: zero multiplicity under transported mass")
    g_pow = np.zeros_like(w)
    gw = np.zeros_like(w)
    np.power(w, alpha - 1.0, out=g_pow, where=active)
    np.power(w, alpha - 2.0, out=gw, where=active)
    gw *= (alpha - 1.0) * table.flux * table.length
    g_len = g_pow * table.flux

    # Weight of each (midpoint, source segment) pairing in the chain rule.
    weight = gw[:, None] * (masses[table.owner][None, :] * uncapped[:, table.owner])
    ga = np.einsum("ts,tsk->sk", weight, d_a)
    gb = np.einsum("ts,tsk->sk", weight, d_b)
    gx = np.einsum("ts,tsk->tk", weight, d_x)
    return _scatter_vertex_gradients(plan, table, ga, gb, gx, g_len)


def energy_max_gradient(plan: PathPlan, alpha: float, eps: float,
                        spec: KernelSpec = KernelSpec()) -> GradientVector:
    """Gradient of :func:`energy_max` in the free vertex coordinates.

    The minimum distance to each path is differentiated through its
    nearest segment; points lying on a path contribute no distance
    derivative there, which matches the flat own-path direction.
    """
    _check_alpha(alpha)
    _check_eps(eps)
    table = segment_table(plan)
    masses = _path_masses(plan)
    points = table.midpoint
    t_par, dist = point_segment_projection(points, table.a, table.b)
    min_dist = np.minimum.reduceat(dist, table.group_starts, axis=1)
    w = kernel_eval(spec, min_dist / eps) @ masses

    active = (table.flux * table.length) > 0.0
    if np.any(active & (w <= 0.0)):
        raise ValueError("energy_max gradient: zero multiplicity under transported mass")
    g_pow = np.zeros_like(w)
    gw = np.zeros_like(w)
    np.power(w, alpha - 1.0, out=g_pow, where=active)
    np.power(w, alpha - 2.0, out=gw, where=active)
    gw *= (alpha - 1.0) * table.flux * table.length
    g_len = g_pow * table.flux

    size = table.size
    ga = np.zeros((size, 2))
    gb = np.zeros((size, 2))
    gx = np.zeros((size, 2))
    rows = np.arange(size)
    for j, start in enumerate(table.group_starts):
        stop = table.group_starts[j + 1] if j + 1 < len(table.group_starts) else size
        block = dist[:, start:stop]
        local = np.argmin(block, axis=1)
        seg = start + local
        dval = block[rows, local]
        coeff = gw * masses[j] * kernel_derivative(spec, dval / eps) / eps
        positive = dval > 0.0
        if not np.any(positive):
            continue
        tp = t_par[rows, seg]
        proj = table.a[seg] + tp[:, None] * (table.b[seg] - table.a[seg])
        normal = np.zeros((size, 2))
        normal[positive] = (points[positive] - proj[positive]) / dval[positive, None]
        pull = coeff[:, None] * normal
        gx += pull
        np.add.at(ga, seg[positive], -(1.0 - tp[positive, None]) * pull[positive])
        np.add.at(gb, seg[positive], -tp[positive, None] * pull[positive])
    return _scatter_vertex_gradients(plan, table, ga, gb, gx, g_len)


def mollified_flux(plan: BranchPlan, eps: float) -> np.ndarray:
    """Smoothed downstream flux at every segment midpoint of a branch plan.

    Convolves the downstream flux field of all branches with the scaled
    bump kernel: F(mid) = sum over segments of flux * segment integral.
    Returns one value per segment table row.
    """
    _check_eps(eps)
    table = segment_table(plan)
    mat = bump_segment_integral(table.a[None, :, :], table.b[None, :, :],
                                table.midpoint[:, None, :], eps)
    return mat @ table.flux


def floored_power(multiplicity: np.ndarray, transported: np.ndarray,
                  alpha: float, f_min: float) -> np.ndarray:
    """(alpha-1) power of the multiplicity, floored and guarded.

    Entries with no transported mass yield 0. A zero multiplicity under
    transported mass is an error unless a positive floor is configured,
    in which case the floor value is raised to the power instead.
    """
    active = transported > 0.0
    floored = np.maximum(multiplicity, f_min) if f_min > 0.0 else multiplicity
    if np.any(active & (floored <= 0.0)):
        raise ValueError("zero mollified flux under transported mass; "
                         "set a positive flux floor or fix the plan")
    out = np.zeros_like(multiplicity)
    np.power(floored, alpha - 1.0, out=out, where=active)
    return out


def branch_irrigation_cost(plan: BranchPlan, alpha: float, eps: float,
                           f_min: float = 0.0) -> MollifiedEval:
    """Midpoint-rule irrigation cost of a branch plan.

    Sum over segments of F(mid)^(alpha-1) * flux * length with F the
    mollified downstream flux. ``f_min`` optionally floors F away from
    zero for optimizer robustness; without it a zero F under transported
    mass raises.
    """
    _check_alpha(alpha)
    _check_eps(eps)
    if f_min < 0.0:
        raise ValueError("f_min must be nonnegative")
    table = segment_table(plan)
    flux_mol = mollified_flux(plan, eps)
    transported = table.flux * table.length
    powers = floored_power(flux_mol, transported, alpha, f_min)
    terms = powers * transported
    per_segment = {
        (int(table.owner[i]), int(table.interval[i])): float(terms[i])
        for i in range(table.size)
    }
    return MollifiedEval(value=float(terms.sum()), alpha=alpha, eps=eps, per_segment=per_segment)


def saturated_two_path_cost(m1: float, m2: float, l1: float, l2: float, alpha: float) -> float:
    """Average-form cost of two bundled paths in the saturated-kernel regime.

    With the kernel flat across the whole configuration and l1 long
    enough to cap, the multiplicity is m1 + m2*l2 everywhere, giving
    (m1 + m2*l2)^(alpha-1) * (m1*l1 + m2*l2). Lengthening the short path
    can lower this value, the failure of lower semicontinuity that rules
    out naive minimization of the average form. At alpha = 1 the value is
    plain weighted length and lengthening always costs more.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if m1 <= 0.0 or m2 <= 0.0:
        raise ValueError("masses must be positive")
    if not 0.0 < l2 < 1.0 < l1:
        raise ValueError("need 0 < l2 < 1 < l1 for the saturated regime")
    return (m1 + m2 * l2) ** (alpha - 1.0) * (m1 * l1 + m2 * l2)


def saturated_two_path_cost_dl2(m1: float, m2: float, l1: float, l2: float, alpha: float) -> float:
    """Derivative of :func:`saturated_two_path_cost` in the short length l2."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if m1 <= 0.0 or m2 <= 0.0:
        raise ValueError("masses must be positive")
    if not 0.0 < l2 < 1.0 < l1:
        raise ValueError("need 0 < l2 < 1 < l1 for the saturated regime")
    bundle = m1 + m2 * l2
    total = m1 * l1 + m2 * l2
    return bundle ** (alpha - 1.0) * m2 * (1.0 - (1.0 - alpha) * total / bundle)
