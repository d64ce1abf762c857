"""CG, constraints, implicit stepping and quasi-static equilibrium."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from magsim import errors
from magsim.fem import MaterialParams, SimState, precompute_rest
from magsim.magnetics import MU0, MagneticParams
from magsim.models import generate_beam
from magsim.solver import (ConstraintSet, SolverConfig, apply_constraints,
                           cg_solve, implicit_euler_step, quasi_static_solve)


def beam_setup(nx=40, ny=4, nz=4, nu=0.3, field=(0.0, 0.0, 0.001),
               e_mod=1e6, br=0.1):
    mesh = generate_beam(0.1, 0.01, 0.01, nx, ny, nz)
    mat = MaterialParams(e_mod, nu, 1200.0)
    rest = precompute_rest(mesh, mat)
    mag = MagneticParams(np.array([br, 0.0, 0.0]), np.array(field))
    cons = ConstraintSet.from_nodes(
        np.flatnonzero(mesh.nodes[:, 0] <= 1e-9))
    return mesh, mat, rest, mag, cons


def euler_bernoulli_tip(e_mod=1e6, br=0.1, b=0.001):
    c = (br * b / MU0) * (0.01 * 0.01)
    ei = e_mod * 0.01 * 0.01 ** 3 / 12.0
    return c * 0.1 ** 3 / (3.0 * ei)


# ---------------------------------------------------------------------------
# CG
# ---------------------------------------------------------------------------

def test_cg_2x2_hand_solution():
    a = np.array([[4.0, 1.0], [1.0, 3.0]])
    res = cg_solve(lambda v: a @ v, np.array([1.0, 2.0]), 1e-12, 10)
    assert res.converged
    assert res.iters <= 2
    assert_allclose(res.x, [1.0 / 11.0, 7.0 / 11.0], rtol=1e-10)


def test_cg_identity_one_iteration(rng):
    b = rng.normal(size=8)
    res = cg_solve(lambda v: v, b, 1e-12, 10)
    assert res.iters == 1
    assert_allclose(res.x, b)


def test_cg_zero_rhs():
    res = cg_solve(lambda v: 2.0 * v, np.zeros(5), 1e-12, 10)
    assert res.iters == 0
    assert res.converged
    assert_allclose(res.x, 0.0)


def test_cg_sparse_matrix_input(rng):
    import scipy.sparse as sp
    dense = rng.normal(size=(12, 12))
    a = sp.csr_matrix(dense @ dense.T + 12 * np.eye(12))
    b = rng.normal(size=12)
    res = cg_solve(a, b, 1e-12, 100)
    assert res.converged
    assert_allclose(a @ res.x, b, atol=1e-9 * np.abs(b).max())


def test_cg_nonfinite_raises():
    def bad(v):
        return v * np.nan
    with pytest.raises(errors.NonFiniteEncountered):
        cg_solve(bad, np.ones(3), 1e-6, 5)


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------

def test_apply_constraints_identity_when_empty(rng):
    v = rng.normal(size=9)
    out = apply_constraints(v, ConstraintSet.from_nodes([]))
    assert_allclose(out, v)


def test_apply_constraints_all_fixed(rng):
    v = rng.normal(size=9)
    out = apply_constraints(v, ConstraintSet.from_nodes([0, 1, 2]))
    assert_allclose(out, 0.0)


def test_apply_constraints_single_node(rng):
    v = rng.normal(size=15)
    out = apply_constraints(v, ConstraintSet.from_nodes([3]))
    assert_allclose(out[9:12], 0.0)
    assert_allclose(np.delete(out, [9, 10, 11]), np.delete(v, [9, 10, 11]))
    # idempotent
    assert_allclose(apply_constraints(out, ConstraintSet.from_nodes([3])),
                    out)


# ---------------------------------------------------------------------------
# Implicit Euler
# ---------------------------------------------------------------------------

def test_rest_state_is_fixed_point():
    mesh, mat, rest, _mag, cons = beam_setup(4, 2, 2)
    mag = MagneticParams(np.array([0.1, 0.0, 0.0]), np.zeros(3))
    st = SimState.rest(mesh)
    out, rep = implicit_euler_step(st, rest, mat, mag, cons,
                                   SolverConfig())
    assert rep.ok
    assert np.abs(out.positions - st.positions).max() < 1e-12
    assert np.abs(out.velocities).max() < 1e-12
    assert out.step == 1
    assert out.time == pytest.approx(0.01)


def test_free_node_closed_form():
    """A node under a constant external force with negligible stiffness
    follows the scalar implicit Euler update dv = h f / m and
    x += h (v + dv)."""
    nodes = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    from magsim.mesh_io import make_tet_mesh
    mesh = make_tet_mesh(nodes, np.array([[0, 1, 2, 3]]))
    mat = MaterialParams(1e-9, 0.3, 2400.0, rayleigh_mass=0.0,
                         rayleigh_stiffness=0.0)
    rest = precompute_rest(mesh, mat)
    mag = MagneticParams(np.zeros(3), np.zeros(3))
    g = (0.0, 0.0, -9.81)
    cfg = SolverConfig(dt=0.01, gravity=g, cg_tolerance=1e-14)
    cons = ConstraintSet.from_nodes([0, 1, 2])
    out, rep = implicit_euler_step(SimState.rest(mesh), rest, mat, mag,
                                   cons, cfg)
    assert rep.ok
    v3 = out.velocities.reshape(-1, 3)[3]
    assert v3[2] == pytest.approx(cfg.dt * g[2], rel=1e-9)
    x3 = out.positions.reshape(-1, 3)[3]
    assert x3[2] - 1.0 == pytest.approx(cfg.dt * v3[2], rel=1e-12)


def test_fixed_nodes_never_move():
    mesh, mat, rest, mag, cons = beam_setup(8, 2, 2, field=(0, 0, 0.02))
    st = SimState.rest(mesh)
    fixed_dofs = ~cons.dof_mask(mesh.node_count)
    state = st
    rot = None
    for _ in range(50):
        state, rep = implicit_euler_step(state, rest, mat, mag, cons,
                                         SolverConfig(),
                                         fallback_rotations=rot)
        assert rep.ok
        rot = rep.rotations
        assert np.array_equal(state.positions[fixed_dofs],
                              st.positions[fixed_dofs])
        assert np.array_equal(state.velocities[fixed_dofs],
                              np.zeros(fixed_dofs.sum()))
    assert state.step == 50


def test_damped_settling_kinetic_energy():
    """Beam under a transverse field: with default Rayleigh damping the
    kinetic energy after 500 steps is below 1% of its peak."""
    mesh, mat, rest, mag, cons = beam_setup(10, 2, 2)
    from magsim.fem import lumped_mass
    mass = lumped_mass(mesh, mat)
    state = SimState.rest(mesh)
    rot = None
    peak = 0.0
    ke = 0.0
    for i in range(500):
        state, rep = implicit_euler_step(state, rest, mat, mag, cons,
                                         SolverConfig(), mass=mass,
                                         fallback_rotations=rot)
        assert rep.ok
        rot = rep.rotations
        ke = 0.5 * float(mass @ (state.velocities ** 2))
        peak = max(peak, ke)
    assert peak > 0.0
    assert ke < 0.01 * peak


def test_step_determinism():
    mesh, mat, rest, mag, cons = beam_setup(6, 2, 2, field=(0, 0, 0.005))

    def run():
        state = SimState.rest(mesh)
        rot = None
        for _ in range(20):
            state, rep = implicit_euler_step(state, rest, mat, mag, cons,
                                             SolverConfig(),
                                             fallback_rotations=rot)
            rot = rep.rotations
        return state

    a, b = run(), run()
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.velocities, b.velocities)


def test_long_run_stability():
    mesh, mat, rest, mag, cons = beam_setup(10, 2, 2)
    state = SimState.rest(mesh)
    rot = None
    for _ in range(1000):
        state, rep = implicit_euler_step(state, rest, mat, mag, cons,
                                         SolverConfig(),
                                         fallback_rotations=rot)
        assert rep.ok
        rot = rep.rotations
    assert np.isfinite(state.positions).all()
    disp = np.abs(state.positions - mesh.nodes.ravel()).max()
    assert disp < 2 * 0.1                     # < 2x beam length


# ---------------------------------------------------------------------------
# Quasi-static
# ---------------------------------------------------------------------------

def test_zero_field_converges_immediately():
    mesh, mat, rest, _mag, cons = beam_setup(6, 2, 2)
    mag = MagneticParams(np.array([0.1, 0.0, 0.0]), np.zeros(3))
    out, rep = quasi_static_solve(SimState.rest(mesh), rest, mat, mag,
                                  cons, SolverConfig())
    assert rep.converged
    assert rep.total_newton_iters == 0
    assert_allclose(out.positions, mesh.nodes.ravel())


def test_beam_converges_toward_theory_with_refinement():
    """Tip deflection approaches the distributed-couple beam solution as
    the mesh refines (the pinned coarse mesh is exercised in acceptance)."""
    w_fine, _ = _beam_tip(60, 6, 6)
    w_exact = euler_bernoulli_tip()
    assert abs(w_fine - w_exact) / w_exact < 0.12


def _beam_tip(nx, ny, nz, field_z=0.001):
    mesh, mat, rest, mag, cons = beam_setup(nx, ny, nz,
                                            field=(0, 0, field_z))
    cfg = SolverConfig(newton_tolerance=1e-8, cg_tolerance=1e-8,
                       cg_max_iters=2000)
    out, rep = quasi_static_solve(SimState.rest(mesh), rest, mat, mag,
                                  cons, cfg)
    tip = np.flatnonzero(mesh.nodes[:, 0] > 0.1 - 1e-9)
    disp = (out.positions - mesh.nodes.ravel()).reshape(-1, 3)
    return disp[tip, 2].mean(), rep


def test_velocities_zeroed_after_static_solve():
    mesh, mat, rest, mag, cons = beam_setup(6, 2, 2)
    st = SimState.rest(mesh)
    st.velocities += 1.0
    out, _rep = quasi_static_solve(st, rest, mat, mag, cons, SolverConfig())
    assert_allclose(out.velocities, 0.0)


def test_scaling_invariance():
    """Scaling E and the magnetic load by the same factor leaves the
    converged displacement field unchanged."""
    w1, rep1 = _beam_tip(12, 2, 2)
    mesh, _, _, _, cons = beam_setup(12, 2, 2)
    lam = 7.3
    mat2 = MaterialParams(1e6 * lam, 0.3, 1200.0)
    rest2 = precompute_rest(mesh, mat2)
    mag2 = MagneticParams(np.array([0.1 * lam, 0.0, 0.0]),
                          np.array([0.0, 0.0, 0.001]))
    cfg = SolverConfig(newton_tolerance=1e-8, cg_tolerance=1e-8,
                       cg_max_iters=2000)
    out2, rep2 = quasi_static_solve(SimState.rest(mesh), rest2, mat2, mag2,
                                    cons, cfg)
    tip = np.flatnonzero(mesh.nodes[:, 0] > 0.1 - 1e-9)
    w2 = (out2.positions - mesh.nodes.ravel()).reshape(-1, 3)[tip, 2].mean()
    assert rep1.converged and rep2.converged
    assert w2 == pytest.approx(w1, rel=1e-8)


def test_unanchored_solve_reports_singular():
    nodes = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    from magsim.mesh_io import make_tet_mesh
    mesh = make_tet_mesh(nodes, np.array([[0, 1, 2, 3]]))
    mat = MaterialParams(1e6, 0.3, 1200.0)
    rest = precompute_rest(mesh, mat)
    mag = MagneticParams(np.array([0.1, 0.0, 0.0]),
                         np.array([0.0, 0.0, 0.05]))
    cons = ConstraintSet.from_nodes([])
    with pytest.raises(errors.SingularSystem):
        quasi_static_solve(SimState.rest(mesh), rest, mat, mag, cons,
                           SolverConfig())


def test_warm_start_matches_cold_result():
    mesh, mat, rest, mag, cons = beam_setup(10, 2, 2, field=(0, 0, 0.001))
    cfg = SolverConfig(newton_tolerance=1e-9, cg_tolerance=1e-9,
                       cg_max_iters=2000)
    cold, rep_c = quasi_static_solve(SimState.rest(mesh), rest, mat, mag,
                                     cons, cfg)
    half = MagneticParams(mag.remanence, mag.field * 0.5)
    mid, _ = quasi_static_solve(SimState.rest(mesh), rest, mat, half,
                                cons, cfg)
    warm, rep_w = quasi_static_solve(mid, rest, mat, mag, cons, cfg,
                                     initial_field_scale=0.5)
    assert rep_c.converged and rep_w.converged
    assert np.abs(warm.positions - cold.positions).max() < 1e-7 * 0.1


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(dt=0.0)
    with pytest.raises(ValueError):
        SolverConfig(cg_tolerance=1.5)
    with pytest.raises(ValueError):
        SolverConfig(ramp_steps=0)
