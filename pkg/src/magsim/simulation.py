"""Session-level simulation object shared by the CLI and the service.

Owns the state, cached rest data and the last valid element rotations
(reused for inverted elements). Parameter setters rebuild exactly the
caches they invalidate.
"""

from __future__ import annotations

import numpy as np

from .fem import MaterialParams, SimState, lumped_mass, precompute_rest
from .magnetics import MagneticParams
from .mesh_io import deformed_surface_positions
from .models import Model
from .solver import (SolverConfig, implicit_euler_step, quasi_static_solve)
from .stress import element_stress, nodal_von_mises


class Simulation:
    def __init__(self, model: Model):
        self.model = model
        self.material = model.material
        self.config = model.solver
        self.magnetics = MagneticParams(model.remanence.copy(),
                                        model.default_field.copy())
        self._rebuild_rest()
        self.state = SimState.rest(model.mesh)
        self._rotations = None

    def _rebuild_rest(self):
        self.rest = precompute_rest(self.model.mesh, self.material)
        self.mass = lumped_mass(self.model.mesh, self.material)

    # -- parameters -----------------------------------------------------

    def set_material(self, material: MaterialParams):
        self.material = material
        self._rebuild_rest()

    def set_field(self, field) -> None:
        self.magnetics = MagneticParams(self.magnetics.remanence,
                                        np.asarray(field, dtype=np.float64))

    def set_solver(self, config: SolverConfig):
        self.config = config

    # -- running ---------------------------------------------------------

    def step(self):
        """One implicit Euler step; a failed step leaves the state untouched."""
        new_state, report = implicit_euler_step(
            self.state, self.rest, self.material, self.magnetics,
            self.model.constraints, self.config, mass=self.mass,
            fallback_rotations=self._rotations)
        if report.ok:
            self.state = new_state
            self._rotations = report.rotations
        return report

    def solve_static(self, initial_field_scale: float = 0.0, progress=None):
        state, report = quasi_static_solve(
            self.state, self.rest, self.material, self.magnetics,
            self.model.constraints, self.config, mass=self.mass,
            initial_field_scale=initial_field_scale, progress=progress)
        self.state = state
        self._rotations = None
        return report

    def reset(self):
        self.state = SimState.rest(self.model.mesh)
        self._rotations = None

    # -- outputs -----------------------------------------------------------

    def stress(self):
        return element_stress(self.state.positions, self.rest, self.material)

    def frame_arrays(self) -> tuple[np.ndarray, np.ndarray, float, float]:
        """(vertex positions (V,3) f64, per-vertex von Mises, min, max).

        Embedded render surface when present, bare tet nodes otherwise.
        """
        fld = self.stress()
        surf = self.model.surface
        if surf is not None and surf.has_embedding:
            pos = deformed_surface_positions(
                surf, self.state.positions.reshape(-1, 3),
                self.model.mesh.tets)
            scal = fld.von_mises[surf.embedding_tets]
        else:
            pos = self.state.positions.reshape(-1, 3)
            scal = nodal_von_mises(fld, self.rest)
        return pos, scal, fld.vm_min, fld.vm_max

    def render_triangles(self) -> np.ndarray:
        surf = self.model.surface
        if surf is not None and surf.has_embedding:
            return surf.triangles
        return self.model.mesh.surface_tris

    def displacements(self) -> np.ndarray:
        return (self.state.positions
                - self.model.mesh.nodes.ravel()).reshape(-1, 3)

    def max_displacement(self) -> float:
        d = self.displacements()
        return float(np.linalg.norm(d, axis=1).max()) if len(d) else 0.0
