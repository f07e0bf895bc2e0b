"""Plan-shaped gradient vectors and flat packing used by the optimizer.

The flat layout is owner-major: for each path or branch in order, first
all x coordinates, then all y coordinates, then (branch plans only) all
interval densities. Pinned coordinates keep their slots so the layout is
independent of which entries are free; gradients carry exact zeros there
and steps never move them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plan_model import Branch, BranchPlan, Path, PathPlan


@dataclass
class GradientVector:
    """Per-owner gradient blocks mirroring a plan's degrees of freedom."""

    dx: list
    dy: list
    dm: list

    @staticmethod
    def zeros_like(plan) -> "GradientVector":
        if isinstance(plan, PathPlan):
            return GradientVector(
                dx=[np.zeros(p.vertices.shape[0]) for p in plan.paths],
                dy=[np.zeros(p.vertices.shape[0]) for p in plan.paths],
                dm=[np.zeros(0) for _ in plan.paths],
            )
        if isinstance(plan, BranchPlan):
            return GradientVector(
                dx=[np.zeros(len(b.x)) for b in plan.branches],
                dy=[np.zeros(len(b.y)) for b in plan.branches],
                dm=[np.zeros(len(b.m)) for b in plan.branches],
            )
        raise TypeError("expected a PathPlan or BranchPlan")

    def flatten(self) -> np.ndarray:
        blocks = []
        for gx, gy, gm in zip(self.dx, self.dy, self.dm):
            blocks.extend([gx, gy, gm])
        return np.concatenate(blocks) if blocks else np.zeros(0)

    def norm(self) -> float:
        flat = self.flatten()
        return float(np.sqrt((flat * flat).sum()))

    def scaled(self, factor: float) -> "GradientVector":
        return GradientVector(
            dx=[factor * g for g in self.dx],
            dy=[factor * g for g in self.dy],
            dm=[factor * g for g in self.dm],
        )


def plan_to_vector(plan) -> np.ndarray:
    """Flatten a plan's coordinates (and densities) into the fixed layout."""
    blocks = []
    if isinstance(plan, PathPlan):
        for p in plan.paths:
            blocks.extend([p.vertices[:, 0], p.vertices[:, 1], np.zeros(0)])
    elif isinstance(plan, BranchPlan):
        for b in plan.branches:
            blocks.extend([b.x, b.y, b.m])
    else:
        raise TypeError("expected a PathPlan or BranchPlan")
    return np.concatenate(blocks) if blocks else np.zeros(0)


def vector_to_plan(vector: np.ndarray, template):
    """Rebuild a plan from the flat layout, carrying template metadata."""
    vector = np.asarray(vector, dtype=float)
    offset = 0
    if isinstance(template, PathPlan):
        paths = []
        for p in template.paths:
            count = p.vertices.shape[0]
            xs = vector[offset:offset + count]
            ys = vector[offset + count:offset + 2 * count]
            offset += 2 * count
            paths.append(Path(
                vertices=np.column_stack([xs, ys]),
                mass=p.mass,
                terminal_fixed=p.terminal_fixed,
            ))
        return PathPlan(paths=tuple(paths))
    if isinstance(template, BranchPlan):
        branches = []
        for b in template.branches:
            count = len(b.x)
            xs = vector[offset:offset + count]
            ys = vector[offset + count:offset + 2 * count]
            ms = vector[offset + 2 * count:offset + 2 * count + len(b.m)]
            offset += 2 * count + len(b.m)
            branches.append(Branch(x=xs, y=ys, m=ms))
        return BranchPlan(branches=tuple(branches))
    raise TypeError("expected a PathPlan or BranchPlan")


def free_mask(plan) -> np.ndarray:
    """Boolean mask over the flat layout; False marks pinned coordinates.

    The origin vertex of every path and branch is pinned. Path terminals
    are pinned when the path's ``terminal_fixed`` flag is set. Densities
    are always free (the feasibility projection clamps them).
    """
    blocks = []
    if isinstance(plan, PathPlan):
        for p in plan.paths:
            count = p.vertices.shape[0]
            coord = np.ones(count, dtype=bool)
            coord[0] = False
            if p.terminal_fixed:
                coord[-1] = False
            blocks.extend([coord, coord.copy(), np.zeros(0, dtype=bool)])
    elif isinstance(plan, BranchPlan):
        for b in plan.branches:
            count = len(b.x)
            coord = np.ones(count, dtype=bool)
            coord[0] = False
            blocks.extend([coord, coord.copy(), np.ones(len(b.m), dtype=bool)])
    else:
        raise TypeError("expected a PathPlan or BranchPlan")
    return np.concatenate(blocks) if blocks else np.zeros(0, dtype=bool)


def apply_free_mask(grad: GradientVector, plan) -> GradientVector:
    """Zero the gradient entries of pinned coordinates, in place."""
    if isinstance(plan, PathPlan):
        for p, gx, gy in zip(plan.paths, grad.dx, grad.dy):
            gx[0] = 0.0
            gy[0] = 0.0
            if p.terminal_fixed:
                gx[-1] = 0.0
                gy[-1] = 0.0
    elif isinstance(plan, BranchPlan):
        for gx, gy in zip(grad.dx, grad.dy):
            gx[0] = 0.0
            gy[0] = 0.0
    return grad


def central_difference(func, plan, step: float = 1e-6) -> GradientVector:
    """Central finite differences of a scalar plan functional.

    Differentiates only free coordinates; pinned entries stay zero. The
    step is scaled per component by max(1, |value|). Probes that would
    leave the feasible set (negative density or branch height) fall back
    to a one-sided difference on the feasible side.
    """
    base = plan_to_vector(plan)
    mask = free_mask(plan)
    flat = np.zeros_like(base)
    base_value = None
    for i in np.flatnonzero(mask):
        h = step * max(1.0, abs(base[i]))
        forward = base.copy()
        forward[i] += h
        backward = base.copy()
        backward[i] -= h
        f_plus = func(vector_to_plan(forward, plan))
        try:
            f_minus = func(vector_to_plan(backward, plan))
        except ValueError:
            if base_value is None:
                base_value = func(plan)
            flat[i] = (f_plus - base_value) / h
            continue
        flat[i] = (f_plus - f_minus) / (2.0 * h)
    grad = GradientVector.zeros_like(plan)
    offset = 0
    for j in range(len(grad.dx)):
        for block in (grad.dx[j], grad.dy[j], grad.dm[j]):
            block[:] = flat[offset:offset + len(block)]
            offset += len(block)
    return grad
