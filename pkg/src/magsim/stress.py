"""Per-element strain, Cauchy stress estimate and von Mises mapping.

Stress is the corotational small-strain estimate sigma = lambda tr(eps) I
+ 2 mu eps with eps = sym(R^T F - I), consistent with the force model. It
is an estimate for display, not a finite-strain Cauchy stress.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import MissingEmbedding
from .fem import ElementRestData, MaterialParams, deformation_gradients, \
    element_rotations, lame_parameters
from .mesh_io import RenderSurface


@dataclass
class StressField:
    strain: np.ndarray          # (E, 3, 3) symmetric
    cauchy: np.ndarray          # (E, 3, 3) symmetric, Pa
    von_mises: np.ndarray       # (E,) Pa, >= 0
    vm_min: float
    vm_max: float
    vertex_scalars: Optional[np.ndarray] = None   # (V,) Pa


def element_stress(positions: np.ndarray, rest: ElementRestData,
                   material: MaterialParams,
                   rotations: np.ndarray | None = None) -> StressField:
    """Strain, Cauchy estimate and von Mises for every element."""
    lam, mu = lame_parameters(material)
    f = deformation_gradients(positions, rest)
    if rotations is None:
        rotations, _ = element_rotations(positions, rest)
    rtf = np.einsum("eji,ejk->eik", rotations, f)          # R^T F
    strain = 0.5 * (rtf + np.transpose(rtf, (0, 2, 1)))
    strain[:, np.arange(3), np.arange(3)] -= 1.0
    trace = np.trace(strain, axis1=1, axis2=2)
    cauchy = 2.0 * mu * strain
    cauchy[:, np.arange(3), np.arange(3)] += lam * trace[:, None]
    vm = von_mises_batch(cauchy)
    return StressField(strain=strain, cauchy=cauchy, von_mises=vm,
                       vm_min=float(vm.min()) if len(vm) else 0.0,
                       vm_max=float(vm.max()) if len(vm) else 0.0)


def von_mises(sigma: np.ndarray) -> float:
    """sqrt(3/2 dev(sigma):dev(sigma)) for one symmetric 3x3 tensor."""
    return float(von_mises_batch(np.asarray(sigma, dtype=np.float64)[None])[0])


def von_mises_batch(sigma: np.ndarray) -> np.ndarray:
    dev = sigma - (np.trace(sigma, axis1=1, axis2=2)[:, None, None] / 3.0
                   * np.eye(3))
    return np.sqrt(1.5 * np.einsum("eij,eij->e", dev, dev))


def map_to_surface(fld: StressField, surface: RenderSurface,
                   fixed_range: tuple[float, float] | None = None
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Per-vertex scalars (embedding element's von Mises, piecewise
    constant) and normalized blue-to-red colors.

    Colors normalize over the current frame's [min, max] unless a fixed
    range is given; a degenerate range maps everything to mid-scale.
    """
    if not surface.has_embedding:
        raise MissingEmbedding("surface has no barycentric embedding")
    scalars = fld.von_mises[surface.embedding_tets]
    lo, hi = fixed_range if fixed_range is not None else (fld.vm_min,
                                                          fld.vm_max)
    return scalars, colorize(scalars, lo, hi)


def nodal_von_mises(fld: StressField, rest: ElementRestData) -> np.ndarray:
    """Volume-weighted average of incident-element von Mises per node.

    Used when a session streams bare tet nodes instead of an embedded
    render surface.
    """
    w = np.repeat(rest.volumes, 4)
    num = np.bincount(rest.tets.ravel(), weights=w * np.repeat(
        fld.von_mises, 4), minlength=rest.node_count)
    den = np.bincount(rest.tets.ravel(), weights=w,
                      minlength=rest.node_count)
    den[den == 0.0] = 1.0
    return num / den


def colorize(scalars: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Linear blue->red RGB in [0,1]; zero range degenerates to 0.5."""
    span = hi - lo
    if span <= 0.0:
        t = np.full(len(scalars), 0.5)
    else:
        t = np.clip((scalars - lo) / span, 0.0, 1.0)
    rgb = np.empty((len(scalars), 3))
    rgb[:, 0] = t
    rgb[:, 1] = 0.0
    rgb[:, 2] = 1.0 - t
    return rgb
