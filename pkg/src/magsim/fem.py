"""Corotational linear-elastic tetrahedral FEM.

Rest-state precomputation, internal forces, tangent stiffness application
and lumped mass. The element model is the classic warped-stiffness
corotational formulation on linear (constant-strain) tets: per element the
rotation R is extracted from the deformation gradient by polar
decomposition and forces are f_e = -R K_e (R^T x_e - X_e). The variation
of R is neglected in the tangent, which keeps K symmetric positive
semidefinite and CG-friendly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import DegenerateElement, InvalidMaterial, InvertedElement
from .mesh_io import TetMesh, tet_volumes

MIN_TET_VOLUME = 1e-18  # m^3


@dataclass(frozen=True)
class MaterialParams:
    """Isotropic elastic constants plus Rayleigh damping coefficients."""

    young_modulus: float          # Pa
    poisson_ratio: float
    density: float                # kg/m^3
    rayleigh_mass: float = 0.1    # 1/s
    rayleigh_stiffness: float = 0.1  # s

    def __post_init__(self):
        if not (self.young_modulus > 0.0 and np.isfinite(self.young_modulus)):
            raise InvalidMaterial("young_modulus must be positive and finite")
        if not (-1.0 < self.poisson_ratio < 0.5):
            raise InvalidMaterial(
                f"poisson_ratio {self.poisson_ratio} outside (-1, 0.5)")
        if not (self.density > 0.0 and np.isfinite(self.density)):
            raise InvalidMaterial("density must be positive and finite")
        if self.rayleigh_mass < 0.0:
            raise InvalidMaterial("rayleigh_mass must be >= 0")
        if self.rayleigh_stiffness < 0.0:
            raise InvalidMaterial("rayleigh_stiffness must be >= 0")


def lame_parameters(material: MaterialParams) -> tuple[float, float]:
    """(lambda, mu) from Young's modulus and Poisson's ratio."""
    e, nu = material.young_modulus, material.poisson_ratio
    mu = e / (2.0 * (1.0 + nu))
    lam = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return lam, mu


@dataclass
class SimState:
    """Nodal kinematic state, flattened xyz-interleaved."""

    positions: np.ndarray   # (3N,)
    velocities: np.ndarray  # (3N,)
    time: float = 0.0
    step: int = 0

    @classmethod
    def rest(cls, mesh: TetMesh) -> "SimState":
        return cls(positions=mesh.nodes.ravel().copy(),
                   velocities=np.zeros(mesh.node_count * 3))

    def copy(self) -> "SimState":
        return SimState(self.positions.copy(), self.velocities.copy(),
                        self.time, self.step)


@dataclass
class ElementRestData:
    """Per-element rest quantities, immutable after precompute."""

    tets: np.ndarray          # (E, 4)
    node_count: int
    dm_inv: np.ndarray        # (E, 3, 3), edge-column convention
    volumes: np.ndarray       # (E,)
    ke: np.ndarray            # (E, 12, 12) reference stiffness
    shape_grads: np.ndarray   # (E, 4, 3) constant shape-function gradients
    rest_stack: np.ndarray    # (E, 12) stacked rest positions
    dof_index: np.ndarray     # (E, 12) global dof of each local dof
    lam: float
    mu: float
    _csr_cache: dict = field(default_factory=dict, repr=False)

    @property
    def element_count(self) -> int:
        return len(self.tets)


def precompute_rest(mesh: TetMesh, material: MaterialParams) -> ElementRestData:
    """Shape matrices, volumes and reference stiffness for every tet."""
    lam, mu = lame_parameters(material)
    x = mesh.nodes[mesh.tets]                          # (E, 4, 3)
    dm = np.transpose(x[:, 1:] - x[:, :1], (0, 2, 1))  # (E, 3, 3) columns
    vols = tet_volumes(mesh.nodes, mesh.tets)
    if (vols <= MIN_TET_VOLUME).any():
        bad = int(np.argmin(vols))
        raise DegenerateElement(
            f"tet {bad} has volume {vols[bad]:.3e} m^3 (min {MIN_TET_VOLUME})")
    dm_inv = np.linalg.inv(dm)

    grads = np.empty((len(vols), 4, 3))
    grads[:, 1:] = dm_inv                  # row j of Dm^-1 = grad of N_j
    grads[:, 0] = -dm_inv.sum(axis=1)

    b = _strain_displacement(grads)        # (E, 6, 12)
    c = elasticity_matrix(lam, mu)
    ke = np.einsum("eia,ij,ejb,e->eab", b, c, b, vols, optimize=True)
    ke = 0.5 * (ke + np.transpose(ke, (0, 2, 1)))   # exact symmetry

    dof = (mesh.tets[:, :, None] * 3
           + np.arange(3)[None, None, :]).reshape(-1, 12)
    return ElementRestData(
        tets=mesh.tets, node_count=mesh.node_count, dm_inv=dm_inv,
        volumes=vols, ke=ke, shape_grads=grads,
        rest_stack=x.reshape(-1, 12), dof_index=dof, lam=lam, mu=mu)


def elasticity_matrix(lam: float, mu: float) -> np.ndarray:
    """6x6 isotropic elasticity in Voigt order (xx, yy, zz, xy, yz, zx)."""
    c = np.zeros((6, 6))
    c[:3, :3] = lam
    c[np.arange(3), np.arange(3)] = lam + 2.0 * mu
    c[np.arange(3, 6), np.arange(3, 6)] = mu
    return c


def _strain_displacement(grads: np.ndarray) -> np.ndarray:
    """B matrices (E, 6, 12) with engineering shear strains."""
    e = len(grads)
    b = np.zeros((e, 6, 12))
    for node in range(4):
        gx, gy, gz = grads[:, node, 0], grads[:, node, 1], grads[:, node, 2]
        col = 3 * node
        b[:, 0, col + 0] = gx
        b[:, 1, col + 1] = gy
        b[:, 2, col + 2] = gz
        b[:, 3, col + 0] = gy
        b[:, 3, col + 1] = gx
        b[:, 4, col + 1] = gz
        b[:, 4, col + 2] = gy
        b[:, 5, col + 0] = gz
        b[:, 5, col + 2] = gx
    return b


# ---------------------------------------------------------------------------
# Kinematics
# ---------------------------------------------------------------------------

def deformation_gradients(positions: np.ndarray,
                          rest: ElementRestData) -> np.ndarray:
    """F = Ds Dm^-1 for every element, (E, 3, 3)."""
    x = positions.reshape(-1, 3)[rest.tets]             # (E, 4, 3)
    ds = np.transpose(x[:, 1:] - x[:, :1], (0, 2, 1))
    return ds @ rest.dm_inv


def polar_rotation(f: np.ndarray) -> np.ndarray:
    """Rotation factor of the polar decomposition F = R S.

    SVD-based with reflection fix; requires det(F) > 0.
    """
    if np.linalg.det(f) <= 0.0:
        raise InvertedElement(f"det(F) = {np.linalg.det(f):.3e} <= 0")
    return _polar_svd(np.asarray(f, dtype=np.float64)[None])[0]


def _polar_svd(f: np.ndarray) -> np.ndarray:
    """Rotations for a batch (E, 3, 3); negates the smallest singular
    direction when the raw product would be a reflection."""
    u, _s, vt = np.linalg.svd(f)
    r = u @ vt
    det = np.linalg.det(r)
    neg = det < 0.0
    if neg.any():
        u = u.copy()
        u[neg, :, 2] *= -1.0
        r[neg] = u[neg] @ vt[neg]
    return r


def _det3(m):
    return (m[..., 0, 0] * (m[..., 1, 1] * m[..., 2, 2]
                            - m[..., 1, 2] * m[..., 2, 1])
            - m[..., 0, 1] * (m[..., 1, 0] * m[..., 2, 2]
                              - m[..., 1, 2] * m[..., 2, 0])
            + m[..., 0, 2] * (m[..., 1, 0] * m[..., 2, 1]
                              - m[..., 1, 1] * m[..., 2, 0]))


def _inv_transpose3(m, det):
    """Cofactor matrix / det, i.e. M^-T, batched and allocation-light."""
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1]
    out[..., 0, 1] = m[..., 1, 2] * m[..., 2, 0] - m[..., 1, 0] * m[..., 2, 2]
    out[..., 0, 2] = m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0]
    out[..., 1, 0] = m[..., 0, 2] * m[..., 2, 1] - m[..., 0, 1] * m[..., 2, 2]
    out[..., 1, 1] = m[..., 0, 0] * m[..., 2, 2] - m[..., 0, 2] * m[..., 2, 0]
    out[..., 1, 2] = m[..., 0, 1] * m[..., 2, 0] - m[..., 0, 0] * m[..., 2, 1]
    out[..., 2, 0] = m[..., 0, 1] * m[..., 1, 2] - m[..., 0, 2] * m[..., 1, 1]
    out[..., 2, 1] = m[..., 0, 2] * m[..., 1, 0] - m[..., 0, 0] * m[..., 1, 2]
    out[..., 2, 2] = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    return out / det[..., None, None]


def _polar_batch(f: np.ndarray, det: np.ndarray | None = None) -> np.ndarray:
    """Batched polar rotations via the scaled Newton iteration
    X <- (g X + (g X)^-T) / 2, equivalent to the SVD route to 1e-13 but an
    order of magnitude faster on many small matrices. Entries that fail to
    converge (extreme anisotropy) fall back to SVD. Inputs must have
    det > 0."""
    if det is None:
        det = _det3(f)
    x = f.copy()
    d = det.copy()
    converged = False
    for it in range(24):
        if it < 2:
            # determinant scaling accelerates the first steps a lot
            gamma = np.abs(d) ** (-1.0 / 3.0)
            xs = x * gamma[:, None, None]
            x_next = 0.5 * (xs + _inv_transpose3(xs, d * gamma ** 3))
        else:
            x_next = 0.5 * (x + _inv_transpose3(x, d))
        delta = np.abs(x_next - x).max()
        x = x_next
        d = _det3(x)
        if delta < 1e-13:
            converged = True
            break
    if not converged:
        ortho_err = np.abs(x @ x.transpose(0, 2, 1)
                           - np.eye(3)).reshape(len(x), -1).max(axis=1)
        bad = ortho_err > 1e-10
        if bad.any():
            x[bad] = _polar_svd(f[bad])
    return x


def _rot_vec(t: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Apply R to trailing 3-vectors: out[e,...,i] = sum_b r[e,i,b] t[e,...,b].

    Unrolled broadcasting; beats batched matmul dispatch for thousands of
    tiny products.
    """
    t2 = t.reshape(len(r), -1, 3)
    out = np.empty_like(t2)
    for i in range(3):
        out[:, :, i] = (t2[:, :, 0] * r[:, None, i, 0]
                        + t2[:, :, 1] * r[:, None, i, 1]
                        + t2[:, :, 2] * r[:, None, i, 2])
    return out.reshape(t.shape)


def _rot_vec_t(t: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Apply R^T to trailing 3-vectors: out[e,...,i] = sum_b r[e,b,i] t[e,...,b]."""
    t2 = t.reshape(len(r), -1, 3)
    out = np.empty_like(t2)
    for i in range(3):
        out[:, :, i] = (t2[:, :, 0] * r[:, None, 0, i]
                        + t2[:, :, 1] * r[:, None, 1, i]
                        + t2[:, :, 2] * r[:, None, 2, i])
    return out.reshape(t.shape)


@dataclass
class ElasticResult:
    forces: np.ndarray        # (3N,)
    rotations: np.ndarray     # (E, 3, 3)
    inverted: np.ndarray      # (E,) bool, elements that used a fallback R


def element_rotations(positions: np.ndarray, rest: ElementRestData,
                      fallback: np.ndarray | None = None
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Per-element corotational rotations; inverted elements reuse the
    fallback (last valid) rotation, identity if none is available."""
    f = deformation_gradients(positions, rest)
    det = _det3(f)
    inverted = det <= 0.0
    if inverted.any():
        # keep the Newton iteration away from singular matrices
        f = f.copy()
        f[inverted] = np.eye(3)
        det[inverted] = 1.0
    r = _polar_batch(f, det)
    if inverted.any():
        if fallback is None:
            fallback = np.broadcast_to(np.eye(3), r.shape)
        r[inverted] = fallback[inverted]
    return r, inverted


def elastic_forces(positions: np.ndarray, rest: ElementRestData,
                   fallback_rotations: np.ndarray | None = None
                   ) -> ElasticResult:
    """Assembled corotational internal forces and the rotations used."""
    r, inverted = element_rotations(positions, rest, fallback_rotations)
    forces = elastic_forces_with_rotations(positions, rest, r)
    return ElasticResult(forces, r, inverted)


def elastic_forces_with_rotations(positions: np.ndarray,
                                  rest: ElementRestData,
                                  rotations: np.ndarray) -> np.ndarray:
    """Forces for a fixed (frozen) rotation field: -R K_e (R^T x_e - X_e)."""
    x = positions.reshape(-1, 3)[rest.tets]                     # (E, 4, 3)
    u = _rot_vec_t(x, rotations).reshape(-1, 12) - rest.rest_stack
    f_local = -(rest.ke @ u[:, :, None])[:, :, 0]
    f = _rot_vec(f_local, rotations)
    return _assemble_vector(f, rest)


def corotational_energy(positions: np.ndarray, rest: ElementRestData,
                        rotations: np.ndarray) -> float:
    """1/2 sum u_e^T K_e u_e with u_e = R^T x_e - X_e, rotations frozen."""
    x = positions.reshape(-1, 3)[rest.tets]
    u = _rot_vec_t(x, rotations).reshape(-1, 12) - rest.rest_stack
    return 0.5 * float(np.sum(u * (rest.ke @ u[:, :, None])[:, :, 0]))


def _assemble_vector(per_element: np.ndarray, rest: ElementRestData
                     ) -> np.ndarray:
    """Deterministic scatter-add of (E, 12) blocks into a (3N,) vector."""
    return np.bincount(rest.dof_index.ravel(),
                       weights=per_element.ravel(),
                       minlength=3 * rest.node_count)


# ---------------------------------------------------------------------------
# Tangent stiffness
# ---------------------------------------------------------------------------

def rotated_element_stiffness(rest: ElementRestData,
                              rotations: np.ndarray) -> np.ndarray:
    """K_rot = R_blk K_e R_blk^T per element, (E, 12, 12).

    Grouped into two batched small-GEMM products per element instead of
    per-block 3x3 loops; the difference is an order of magnitude for
    meshes of a few thousand tets.
    """
    e = rest.element_count
    # T1[(k,p), (l,j)] = sum_q Ke[(k,p), (l,q)] R[j,q]
    t1 = _rot_vec(rest.ke.reshape(e, 48, 3), rotations).reshape(e, 4, 3, 12)
    # K_rot[k, i, (l,j)] = sum_p R[i,p] T1[(k,p), (l,j)]
    krot = np.empty_like(t1)
    for i in range(3):
        krot[:, :, i, :] = (t1[:, :, 0, :] * rotations[:, None, i, 0, None]
                            + t1[:, :, 1, :] * rotations[:, None, i, 1, None]
                            + t1[:, :, 2, :] * rotations[:, None, i, 2, None])
    return krot.reshape(e, 12, 12)


def tangent_apply(v: np.ndarray, rest: ElementRestData,
                  rotations: np.ndarray) -> np.ndarray:
    """K(x) v with the corotational approximation K = sum R K_e R^T."""
    if v.shape != (3 * rest.node_count,):
        raise ValueError(f"expected vector of length {3 * rest.node_count}")
    ve = v.reshape(-1, 3)[rest.tets]
    w = _rot_vec_t(ve, rotations).reshape(-1, 12)
    kw = (rest.ke @ w[:, :, None])[:, :, 0]
    return _assemble_vector(_rot_vec(kw, rotations), rest)


class StiffnessOperator:
    """Assembled CSR form of the corotational tangent.

    The sparsity pattern is fixed by the mesh, so the structure (indices,
    indptr, the scatter map from element entries to CSR slots, diagonal
    slots, constraint-projection masks) is built once and cached on the
    rest data; each rebuild only recomputes numeric values. Assembly order
    is fixed, so results are bit-reproducible across runs.
    """

    def __init__(self, rest: ElementRestData, rotations: np.ndarray):
        self._rest = rest
        self._ndof = 3 * rest.node_count
        cache = rest._csr_cache
        if "slots" not in cache:
            self._build_pattern(rest, cache)
        if _kernels.HAVE_NUMBA:
            self._data = _kernels.assemble_rotated(
                rest.ke, np.ascontiguousarray(rotations), cache["slots"],
                cache["nnz"])
        else:
            krot = rotated_element_stiffness(rest, rotations)
            self._data = np.bincount(cache["slots"], weights=krot.ravel(),
                                     minlength=cache["nnz"])
        self.matrix = sp.csr_matrix(
            (self._data, cache["indices"], cache["indptr"]),
            shape=(self._ndof, self._ndof))

    @staticmethod
    def _build_pattern(rest: ElementRestData, cache: dict):
        ndof = 3 * rest.node_count
        rows = np.repeat(rest.dof_index, 12, axis=1).ravel()
        cols = np.tile(rest.dof_index, (1, 12)).ravel()
        keys = rows.astype(np.int64) * ndof + cols
        uniq, slots = np.unique(keys, return_inverse=True)
        csr_rows = (uniq // ndof).astype(np.int32)
        csr_cols = (uniq % ndof).astype(np.int32)
        indptr = np.zeros(ndof + 1, dtype=np.int64)
        np.add.at(indptr, csr_rows + 1, 1)
        np.cumsum(indptr, out=indptr)
        cache["slots"] = slots
        cache["indices"] = csr_cols
        cache["indptr"] = indptr
        cache["nnz"] = len(uniq)
        cache["diag_slots"] = np.flatnonzero(csr_rows == csr_cols)
        cache["proj"] = {}

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    @property
    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def system_matrix(self, coeff: float, mass_diag: np.ndarray | None,
                      fixed_dofs: np.ndarray) -> sp.csr_matrix:
        """coeff*K (+ diag(mass)) with fixed rows/columns projected out
        (zeroed, unit diagonal). Shares the cached sparsity structure."""
        cache = self._rest._csr_cache
        data = coeff * self._data
        if mass_diag is not None:
            data[cache["diag_slots"]] += mass_diag
        if len(fixed_dofs):
            zero_slots, one_slots = self._projection_slots(fixed_dofs)
            data[zero_slots] = 0.0
            data[one_slots] = 1.0
        return sp.csr_matrix((data, cache["indices"], cache["indptr"]),
                             shape=(self._ndof, self._ndof))

    def _projection_slots(self, fixed_dofs: np.ndarray):
        cache = self._rest._csr_cache
        key = fixed_dofs.tobytes()
        hit = cache["proj"].get(key)
        if hit is not None:
            return hit
        indptr, indices = cache["indptr"], cache["indices"]
        row_slots = np.concatenate(
            [np.arange(indptr[d], indptr[d + 1]) for d in fixed_dofs])
        fixed_mask = np.zeros(self._ndof, dtype=bool)
        fixed_mask[fixed_dofs] = True
        col_slots = np.flatnonzero(fixed_mask[indices])
        zero_slots = np.union1d(row_slots, col_slots)
        one_slots = cache["diag_slots"][fixed_dofs]
        cache["proj"][key] = (zero_slots, one_slots)
        return zero_slots, one_slots


# ---------------------------------------------------------------------------
# Mass
# ---------------------------------------------------------------------------

def lumped_mass(mesh: TetMesh, material: MaterialParams) -> np.ndarray:
    """Diagonal mass vector (3N,): each tet spreads rho*V/4 to its nodes."""
    vols = tet_volumes(mesh.nodes, mesh.tets)
    node_mass = np.bincount(mesh.tets.ravel(),
                            weights=np.repeat(material.density * vols / 4.0, 4),
                            minlength=mesh.node_count)
    return np.repeat(node_mass, 3)
