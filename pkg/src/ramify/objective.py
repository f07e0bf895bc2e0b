"""Branch-shape objective: irrigation cost plus crowding minus payoff.

The objective J = I + c1 * P - c2 * H balances three terms on a branch
plan. I is the mollified irrigation cost, whose concave flux power
rewards bundling transported mass into shared trunks. P is a pairwise
crowding penalty between segment midpoints that pushes branches apart.
H pays for total leaf mass (density times arc length), the only term
that makes growing mass worthwhile at all.

The gradient is exact for the discretized objective: every term is
chain-ruled through vertex positions, segment lengths, midpoints, and
densities, including the prefix-sum structure of downstream flux. Where
the objective has kinks (flux floor, kernel support edges) a one-sided
choice is made so projected descent with a small floor stays stable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .gradients import GradientVector, central_difference
from .kernels import bump_segment_integral_grad
from .mollified import MollifiedEval, branch_irrigation_cost, floored_power
from .plan_model import BranchPlan, segment_table

PENALTY_KERNELS = ("gaussian", "powerlaw")


@dataclass(frozen=True)
class ObjectiveConfig:
    """Weights and smoothing parameters of the branch objective."""

    alpha: float = 0.5
    eps: float = 0.1
    c1: float = 0.0
    c2: float = 0.0
    penalty_kernel: str = "gaussian"
    beta: float = 1.0
    gamma: float = 0.5
    f_min: float = 1e-12
    penalty_arclength: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not self.eps > 0.0:
            raise ValueError("eps must be positive")
        if self.c1 < 0.0 or self.c2 < 0.0:
            raise ValueError("c1 and c2 must be nonnegative")
        if self.penalty_kernel not in PENALTY_KERNELS:
            raise ValueError(f"penalty_kernel must be one of {PENALTY_KERNELS}")
        if not self.beta > 0.0:
            raise ValueError("beta must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.f_min < 0.0:
            raise ValueError("f_min must be nonnegative")

    def with_eps(self, eps: float) -> "ObjectiveConfig":
        return replace(self, eps=eps)


@dataclass(frozen=True)
class ObjectiveValue:
    """Objective total together with its three components."""

    total: float
    irrigation: float
    penalty: float
    payoff: float


def _branch_arrays(plan: BranchPlan):
    """Segment table plus per-segment density and parameter weights."""
    table = segment_table(plan)
    density = np.concatenate([br.m for br in plan.branches])
    du = np.concatenate([np.full(len(br.m), 1.0 / len(br.m)) for br in plan.branches])
    return table, density, du


def leaf_payoff(plan: BranchPlan) -> float:
    """Total leaf mass of the plan: sum of density times segment length."""
    table, density, _ = _branch_arrays(plan)
    return float((density * table.length).sum())


def _penalty_matrices(midpoints: np.ndarray, weights: np.ndarray, cfg: ObjectiveConfig):
    """Interaction matrix M and its radial-derivative companion N.

    P = w @ M @ w, and the midpoint gradient of each pair is
    2 w_s w_t N_st (mid_s - mid_t). Gaussian pairs include the diagonal;
    the power-law kernel is singular at zero distance so the diagonal is
    excluded and coincident weighted midpoints are an error.
    """
    diff = midpoints[:, None, :] - midpoints[None, :, :]
    sq = (diff * diff).sum(axis=-1)
    if cfg.penalty_kernel == "gaussian":
        m_mat = np.exp(-cfg.beta * sq)
        n_mat = -2.0 * cfg.beta * m_mat
        return m_mat, n_mat
    off = ~np.eye(len(midpoints), dtype=bool)
    coincident = off & (sq == 0.0)
    if np.any(coincident & (np.outer(weights, weights) > 0.0)):
        raise ValueError("power-law crowding penalty: coincident weighted midpoints")
    valid = off & (sq > 0.0)
    m_mat = np.zeros_like(sq)
    n_mat = np.zeros_like(sq)
    np.power(sq, -0.5 * cfg.gamma, out=m_mat, where=valid)
    np.power(sq, -0.5 * cfg.gamma - 1.0, out=n_mat, where=valid)
    n_mat *= -cfg.gamma
    return m_mat, n_mat


def _penalty_weights(table, density, du, cfg: ObjectiveConfig) -> np.ndarray:
    return density * (table.length if cfg.penalty_arclength else du)


def crowding_penalty(plan: BranchPlan, cfg: ObjectiveConfig) -> float:
    """Pairwise repulsion between segment midpoints, weighted by mass."""
    table, density, du = _branch_arrays(plan)
    weights = _penalty_weights(table, density, du, cfg)
    m_mat, _ = _penalty_matrices(table.midpoint, weights, cfg)
    return float(weights @ m_mat @ weights)


def tree_objective(plan: BranchPlan, cfg: ObjectiveConfig) -> ObjectiveValue:
    """Evaluate J = I + c1 * P - c2 * H on a branch plan."""
    irrigation = branch_irrigation_cost(plan, cfg.alpha, cfg.eps, cfg.f_min).value
    penalty = crowding_penalty(plan, cfg) if cfg.c1 != 0.0 else 0.0
    payoff = leaf_payoff(plan)
    total = irrigation + cfg.c1 * penalty - cfg.c2 * payoff
    return ObjectiveValue(total=total, irrigation=irrigation, penalty=penalty, payoff=payoff)


def _exclusive_prefix_sum(values: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values)
    np.cumsum(values[:-1], out=out[1:])
    return out


def tree_objective_gradient(plan: BranchPlan, cfg: ObjectiveConfig) -> GradientVector:
    """Exact gradient of :func:`tree_objective` in free coordinates.

    Returns sensitivities for every interior vertex coordinate and every
    density entry; the root vertex is pinned to zero by the free mask.
    """
    if not isinstance(plan, BranchPlan):
        raise TypeError("tree objective is defined on branch plans")
    table, density, du = _branch_arrays(plan)
    size = table.size
    mids = table.midpoint

    # Irrigation term: F = B @ flux at the segment midpoints.
    mat, d_a, d_b, d_x = bump_segment_integral_grad(
        table.a[None, :, :], table.b[None, :, :], mids[:, None, :], cfg.eps)
    flux_mol = mat @ table.flux
    transported = table.flux * table.length
    active = transported > 0.0
    powers = floored_power(flux_mol, transported, cfg.alpha, cfg.f_min)
    if cfg.f_min > 0.0 and not np.all(active):
        # Zero-flux cells still pay the floored rate the instant density
        # rises, so the one-sided derivative there needs the power term;
        # leaving it at zero lets descent step into the density cusp.
        idle = ~active
        powers[idle] = np.power(np.maximum(flux_mol[idle], cfg.f_min),
                                cfg.alpha - 1.0)
    slope = np.zeros(size)
    if cfg.f_min > 0.0:
        unfloored = active & (flux_mol > cfg.f_min)
    else:
        unfloored = active
    np.power(np.maximum(flux_mol, cfg.f_min), cfg.alpha - 2.0, out=slope, where=unfloored)
    slope *= (cfg.alpha - 1.0)

    g_flux_mol = slope * transported
    g_flux = mat.T @ g_flux_mol + powers * table.length
    g_len = powers * table.flux

    pair_weight = g_flux_mol[:, None] * table.flux[None, :]
    ga = np.einsum("ts,tsk->sk", pair_weight, d_a)
    gb = np.einsum("ts,tsk->sk", pair_weight, d_b)
    gx = np.einsum("ts,tsk->tk", pair_weight, d_x)

    # Downstream flux is half the local mass plus everything beyond it,
    # so the adjoint of mass-per-segment is a prefix sum of flux pulls.
    g_cell = np.zeros(size)
    for k, start in enumerate(table.group_starts):
        stop = table.group_starts[k + 1] if k + 1 < len(table.group_starts) else size
        block = g_flux[start:stop]
        g_cell[start:stop] = 0.5 * block + _exclusive_prefix_sum(block)
    g_density = g_cell * table.length
    g_len = g_len + g_cell * density

    # Crowding penalty.
    if cfg.c1 != 0.0:
        weights = _penalty_weights(table, density, du, cfg)
        m_mat, n_mat = _penalty_matrices(mids, weights, cfg)
        g_weights = 2.0 * (m_mat @ weights)
        pulled = n_mat @ (weights[:, None] * mids)
        g_mid_pen = 2.0 * weights[:, None] * ((n_mat @ weights)[:, None] * mids - pulled)
        if cfg.penalty_arclength:
            g_density = g_density + cfg.c1 * g_weights * table.length
            g_len = g_len + cfg.c1 * g_weights * density
        else:
            g_density = g_density + cfg.c1 * g_weights * du
        gx = gx + cfg.c1 * g_mid_pen

    # Leaf payoff enters with a negative sign.
    g_density = g_density - cfg.c2 * table.length
    g_len = g_len - cfg.c2 * density

    grad = _assemble_branch_gradient(plan, table, ga, gb, gx, g_len)
    pos = 0
    for k, br in enumerate(plan.branches):
        count = len(br.m)
        grad.dm[k][:] = g_density[pos:pos + count]
        pos += count
    return grad


def _assemble_branch_gradient(plan, table, ga, gb, gx, g_len) -> GradientVector:
    from .mollified import _scatter_vertex_gradients
    return _scatter_vertex_gradients(plan, table, ga, gb, gx, g_len)


def fd_gradient(plan: BranchPlan, cfg: ObjectiveConfig, step: float = 1e-6) -> GradientVector:
    """Central-difference gradient of the objective, for verification."""
    return central_difference(lambda p: tree_objective(p, cfg).total, plan, step)
