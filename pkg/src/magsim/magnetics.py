"""Magnetic loading of hard-magnetic soft material.

The remanent flux density B_r is frozen in the material frame and convects
with the deformation gradient; a uniform external field B then contributes
the potential U = -sum_e (V_e / mu0) * B . (F_e B_r,e). Because U is linear
in nodal positions, the nodal forces are constant per element and each
element's force sum is exactly zero (a pure couple).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .fem import ElementRestData, deformation_gradients

MU0 = 4.0e-7 * np.pi  # vacuum permeability, T*m/A

REMANENCE_WARN_T = 1.5   # beyond NdFeB-composite range
FIELD_WARN_T = 2.0


@dataclass
class MagneticParams:
    """Per-element remanence (Tesla, rest frame) and uniform field (Tesla)."""

    remanence: np.ndarray   # (E, 3) or (3,) broadcast to every element
    field: np.ndarray       # (3,)

    mu0 = MU0

    def __post_init__(self):
        self.remanence = np.asarray(self.remanence, dtype=np.float64)
        self.field = np.asarray(self.field, dtype=np.float64).reshape(3)
        if not np.isfinite(self.remanence).all():
            raise ValueError("remanence must be finite")
        if not np.isfinite(self.field).all():
            raise ValueError("field must be finite")
        br_max = 0.0
        if self.remanence.size:
            br_max = float(np.linalg.norm(
                np.atleast_2d(self.remanence), axis=1).max())
        if br_max > REMANENCE_WARN_T:
            warnings.warn(f"|B_r| = {br_max:.2f} T exceeds {REMANENCE_WARN_T} T",
                          stacklevel=2)
        if np.linalg.norm(self.field) > FIELD_WARN_T:
            warnings.warn(f"|B| exceeds {FIELD_WARN_T} T", stacklevel=2)

    def per_element(self, element_count: int) -> np.ndarray:
        """Remanence as an (E, 3) array."""
        if self.remanence.ndim == 1:
            return np.broadcast_to(self.remanence, (element_count, 3))
        if len(self.remanence) != element_count:
            raise ValueError(
                f"remanence rows {len(self.remanence)} != elements "
                f"{element_count}")
        return self.remanence

    def scaled(self, factor: float) -> "MagneticParams":
        return MagneticParams(self.remanence, self.field * factor)


def zeeman_energy(positions: np.ndarray, rest: ElementRestData,
                  mag: MagneticParams) -> float:
    """U = -sum_e (V_e/mu0) B . (F_e B_r,e), linear in nodal positions."""
    br = mag.per_element(rest.element_count)
    f = deformation_gradients(positions, rest)
    fbr = np.einsum("eij,ej->ei", f, br)
    return float(-(rest.volumes / MU0) @ (fbr @ mag.field))


def magnetic_forces(rest: ElementRestData, mag: MagneticParams) -> np.ndarray:
    """Nodal forces -dU/dx, assembled over elements, (3N,).

    With a = Dm^-1 B_r (edge-column convention), node j in {1,2,3} of an
    element receives (V/mu0) a_j B and node 0 the negative sum, so the
    per-element force total vanishes identically.
    """
    br = mag.per_element(rest.element_count)
    a = np.einsum("eij,ej->ei", rest.dm_inv, br)          # (E, 3)
    scale = rest.volumes / MU0                            # (E,)
    f_nodes = np.empty((rest.element_count, 4, 3))
    f_nodes[:, 1:] = (scale[:, None] * a)[:, :, None] * mag.field
    f_nodes[:, 0] = -f_nodes[:, 1:].sum(axis=1)
    return np.bincount(rest.dof_index.ravel(),
                       weights=f_nodes.reshape(-1, 12).ravel(),
                       minlength=3 * rest.node_count)


def net_wrench(positions: np.ndarray, rest: ElementRestData,
               mag: MagneticParams) -> tuple[np.ndarray, np.ndarray]:
    """(net force, torque about the current volume centroid).

    The net force is identically zero for a uniform field; the torque
    equals sum_e (V_e/mu0) (F_e B_r,e) x B.
    """
    forces = magnetic_forces(rest, mag).reshape(-1, 3)
    x = positions.reshape(-1, 3)
    tet_centroids = x[rest.tets].mean(axis=1)
    centroid = (rest.volumes @ tet_centroids) / rest.volumes.sum()
    net_force = forces.sum(axis=0)
    torque = np.cross(x - centroid, forces).sum(axis=0)
    return net_force, torque
