"""Time stepping and equilibrium solves under fixed-node constraints.

Two modes: semi-implicit Euler (one linearization per step, for the live
view) and a quasi-static Newton solve with field ramping (for converged
configurations). Linear systems use plain conjugate gradients on the
constrained subspace; the Newton loop falls back to a direct sparse
factorization when CG stagnates on ill-conditioned thin structures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonFiniteEncountered, SingularSystem
from .fem import (ElementRestData, MaterialParams, SimState,
                  StiffnessOperator, elastic_forces)
from .magnetics import MagneticParams, magnetic_forces


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 0.01                  # s
    cg_max_iters: int = 200
    cg_tolerance: float = 1e-6        # relative residual
    newton_max_iters: int = 50
    newton_tolerance: float = 1e-6    # |f|_inf relative to F_ref
    ramp_steps: int = 10
    gravity: tuple = (0.0, 0.0, 0.0)  # m/s^2

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")
        for name in ("cg_tolerance", "newton_tolerance"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1)")
        for name in ("cg_max_iters", "newton_max_iters", "ramp_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class ConstraintSet:
    """Nodes whose positions are pinned to their current values."""

    fixed_nodes: np.ndarray    # sorted unique node indices

    @classmethod
    def from_nodes(cls, indices) -> "ConstraintSet":
        return cls(np.unique(np.asarray(indices, dtype=np.int64)))

    def dof_mask(self, node_count: int) -> np.ndarray:
        """Boolean (3N,) mask, True on free dofs."""
        mask = np.ones(3 * node_count, dtype=bool)
        if len(self.fixed_nodes):
            if self.fixed_nodes[0] < 0 or self.fixed_nodes[-1] >= node_count:
                raise IndexError("fixed node index out of range")
            dofs = (self.fixed_nodes[:, None] * 3 + np.arange(3)).ravel()
            mask[dofs] = False
        return mask


def apply_constraints(vector: np.ndarray,
                      constraints: ConstraintSet) -> np.ndarray:
    """Zero the three components of every fixed node (idempotent)."""
    out = vector.copy()
    n = len(vector) // 3
    out[~constraints.dof_mask(n)] = 0.0
    return out


@dataclass
class CgResult:
    x: np.ndarray
    iters: int
    residual: float      # final relative residual
    converged: bool


def cg_solve(apply_a, b: np.ndarray, tol: float, max_iters: int) -> CgResult:
    """Conjugate gradients for SPD operators; returns best-effort on cap.

    `apply_a` may be a callable or a scipy sparse matrix. NaN/Inf surfaces
    through the p.Ap product, so non-finite states are caught without a
    per-iteration scan.
    """
    apply_fn = apply_a.__matmul__ if sp.issparse(apply_a) else apply_a

    b_norm = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    if b_norm == 0.0:
        return CgResult(x, 0, 0.0, True)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    for it in range(1, max_iters + 1):
        ap = apply_fn(p)
        pap = float(p @ ap)
        if not np.isfinite(pap):
            raise NonFiniteEncountered("NaN/Inf inside CG")
        if pap <= 0.0:
            # loss of positive definiteness (roundoff near convergence)
            return CgResult(x, it, np.sqrt(rs) / b_norm, False)
        alpha = rs / pap
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        if not np.isfinite(rs_new):
            raise NonFiniteEncountered("NaN/Inf inside CG")
        if np.sqrt(rs_new) <= tol * b_norm:
            return CgResult(x, it, np.sqrt(rs_new) / b_norm, True)
        p = r + (rs_new / rs) * p
        rs = rs_new
    return CgResult(x, max_iters, np.sqrt(rs) / b_norm, False)


# ---------------------------------------------------------------------------
# Dynamic stepping
# ---------------------------------------------------------------------------

@dataclass
class StepReport:
    ok: bool
    cg_iters: int = 0
    cg_residual: float = 0.0
    inverted_elements: int = 0
    rotations: np.ndarray | None = None


def implicit_euler_step(state: SimState, rest: ElementRestData,
                        material: MaterialParams, mag: MagneticParams,
                        constraints: ConstraintSet, config: SolverConfig,
                        mass: np.ndarray | None = None,
                        fallback_rotations: np.ndarray | None = None
                        ) -> tuple[SimState, StepReport]:
    """One semi-implicit Euler step.

    Solves (M + h C + h^2 K) dv = h f_total(x, v) + h^2 (df/dx) v with
    C = alpha M + beta K and df/dx = -K, fixed dofs projected out. On a
    non-finite solve the input state is returned unchanged and the report
    is marked failed.
    """
    h = config.dt
    alpha, beta = material.rayleigh_mass, material.rayleigh_stiffness
    if mass is None:
        mass = _mass_from_rest(rest, material)

    free = constraints.dof_mask(rest.node_count)
    x = state.positions
    v = np.where(free, state.velocities, 0.0)

    ela = elastic_forces(x, rest, fallback_rotations)
    f_total = ela.forces + magnetic_forces(rest, mag) + _gravity_force(
        mass, config.gravity)

    k_op = StiffnessOperator(rest, ela.rotations)
    kv = k_op(v)
    rhs = h * f_total - (h * alpha) * (mass * v) - (h * beta + h * h) * kv
    rhs[~free] = 0.0
    if not np.isfinite(rhs).all():
        return state, StepReport(ok=False, rotations=ela.rotations)

    m_eff = (1.0 + h * alpha) * mass
    coeff = h * beta + h * h
    fixed_idx = np.flatnonzero(~free)
    a = k_op.system_matrix(coeff, m_eff, fixed_idx)

    try:
        sol = cg_solve(a, rhs, config.cg_tolerance, config.cg_max_iters)
    except NonFiniteEncountered:
        return state, StepReport(ok=False, rotations=ela.rotations)
    dv = np.where(free, sol.x, 0.0)
    if not np.isfinite(dv).all():
        return state, StepReport(ok=False, rotations=ela.rotations)

    v_new = v + dv
    x_new = x + h * v_new
    new_state = SimState(x_new, v_new, state.time + h, state.step + 1)
    return new_state, StepReport(ok=True, cg_iters=sol.iters,
                                 cg_residual=sol.residual,
                                 inverted_elements=int(ela.inverted.sum()),
                                 rotations=ela.rotations)


def _gravity_force(mass: np.ndarray, gravity) -> np.ndarray:
    g = np.asarray(gravity, dtype=np.float64)
    if not g.any():
        return np.zeros_like(mass)
    return mass * np.tile(g, len(mass) // 3)


def _mass_from_rest(rest: ElementRestData, material: MaterialParams
                    ) -> np.ndarray:
    node_mass = np.bincount(
        rest.tets.ravel(),
        weights=np.repeat(material.density * rest.volumes / 4.0, 4),
        minlength=rest.node_count)
    return np.repeat(node_mass, 3)


# ---------------------------------------------------------------------------
# Quasi-static equilibrium
# ---------------------------------------------------------------------------

@dataclass
class RampStageReport:
    field_scale: float
    newton_iters: int
    residual: float          # |f|_inf / F_ref at exit


@dataclass
class QuasiStaticReport:
    converged: bool
    stages: list = field(default_factory=list)

    @property
    def total_newton_iters(self) -> int:
        return sum(s.newton_iters for s in self.stages)

    @property
    def final_residual(self) -> float:
        return self.stages[-1].residual if self.stages else 0.0


def quasi_static_solve(state: SimState, rest: ElementRestData,
                       material: MaterialParams, mag: MagneticParams,
                       constraints: ConstraintSet, config: SolverConfig,
                       mass: np.ndarray | None = None,
                       initial_field_scale: float = 0.0,
                       progress=None
                       ) -> tuple[SimState, QuasiStaticReport]:
    """Drive the system to equilibrium, ramping the field to full strength.

    The field is applied in `ramp_steps` increments from
    `initial_field_scale` (warm starts) to 1; each increment runs damped
    Newton iterations on K(x) dx = f_total(x) until the force residual
    drops below newton_tolerance * F_ref. Velocities are zeroed.
    """
    if mass is None:
        mass = _mass_from_rest(rest, material)
    free = constraints.dof_mask(rest.node_count)
    f_grav = _gravity_force(mass, config.gravity)
    f_char = material.young_modulus * _mean_face_area(rest)

    x = state.positions.copy()
    report = QuasiStaticReport(converged=True)
    fallback_r = None
    prefer_direct = False

    for k in range(1, config.ramp_steps + 1):
        scale = initial_field_scale + (1.0 - initial_field_scale) * (
            k / config.ramp_steps)
        f_mag = magnetic_forces(rest, mag.scaled(scale))
        f_ref = max(_inf_norm(f_mag), f_char)
        tol_abs = config.newton_tolerance * f_ref

        residual = np.inf
        iters = 0
        for iters in range(config.newton_max_iters + 1):
            ela = elastic_forces(x, rest, fallback_r)
            fallback_r = ela.rotations
            f_total = ela.forces + f_mag + f_grav
            residual = _inf_norm(np.where(free, f_total, 0.0))
            if residual <= tol_abs:
                break
            if iters == config.newton_max_iters:
                report.converged = False
                break

            k_op = StiffnessOperator(rest, ela.rotations)
            a = k_op.system_matrix(1.0, None, np.flatnonzero(~free))

            rhs = np.where(free, f_total, 0.0)
            dx, prefer_direct = _solve_newton_system(a, rhs, config,
                                                     prefer_direct)

            x = _line_search(x, dx, residual, rest, f_mag + f_grav,
                             free, fallback_r)
            if not np.isfinite(x).all():
                raise NonFiniteEncountered("non-finite positions in Newton")

        report.stages.append(RampStageReport(scale, iters,
                                             residual / f_ref))
        if progress is not None:
            progress(k, config.ramp_steps, iters, residual / f_ref)

    out = SimState(x, np.zeros_like(x), state.time, state.step)
    return out, report


def _solve_newton_system(a, rhs, config: SolverConfig,
                         prefer_direct: bool) -> tuple[np.ndarray, bool]:
    """Inner linear solve of a Newton iteration: CG within the configured
    budget, with a direct sparse factorization as the fallback for the
    ill-conditioned thin structures where plain CG stagnates. Once CG has
    failed, later iterations of the same solve go direct immediately. An
    exactly singular system (model not anchored) surfaces here."""
    if not prefer_direct:
        sol = cg_solve(a, rhs, config.cg_tolerance, config.cg_max_iters)
        if sol.converged:
            return sol.x, False
    try:
        dx = spla.splu(a.tocsc()).solve(rhs)
    except RuntimeError as exc:
        raise SingularSystem(
            f"stiffness factorization failed ({exc}); is the model "
            "anchored by at least one fixed node?") from None
    if not np.isfinite(dx).all():
        raise SingularSystem("non-finite Newton direction; constrained "
                             "system is singular")
    return dx, True


def _line_search(x, dx, residual0, rest, f_ext, free, rotations,
                 max_halvings=4):
    """Backtracking on the force residual with a non-monotone escape.

    The frozen-rotation tangent is not the exact Jacobian, so full steps
    overshoot on thin structures; on the other hand, insisting on a strict
    residual decrease stalls the iteration in creeping sub-steps. Taking
    the least-bad dyadic step when none improves keeps the iteration
    moving and reliably reaches the quadratic basin.
    """
    dx = np.where(free, dx, 0.0)
    best_x, best_r = None, np.inf
    step = 1.0
    for _ in range(max_halvings + 1):
        x_try = x + step * dx
        ela = elastic_forces(x_try, rest, rotations)
        r_try = _inf_norm(np.where(free, ela.forces + f_ext, 0.0))
        if np.isfinite(r_try) and r_try < residual0:
            return x_try
        if np.isfinite(r_try) and r_try < best_r:
            best_x, best_r = x_try, r_try
        step *= 0.5
    return best_x if best_x is not None else x


def _inf_norm(v: np.ndarray) -> float:
    return float(np.abs(v).max()) if len(v) else 0.0


def _mean_face_area(rest: ElementRestData) -> float:
    x = rest.rest_stack.reshape(-1, 4, 3)
    total = 0.0
    for a, b, c in ((0, 2, 1), (0, 1, 3), (1, 2, 3), (0, 3, 2)):
        n = np.cross(x[:, b] - x[:, a], x[:, c] - x[:, a])
        total += np.linalg.norm(n, axis=1).sum() / 2.0
    return total / (4.0 * rest.element_count)
