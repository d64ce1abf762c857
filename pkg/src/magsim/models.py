"""Model descriptors and procedural benchmark geometry.

Four benchmark models ship as JSON descriptors (beam, gripper3, gripper4,
butterfly) backed by the generators in this module. Descriptors can also
point at user-supplied MSH/STL file pairs. All generated meshes are
deterministic: identical parameters yield bit-identical meshes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import permutations
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (InvalidDimensions, InvalidMaterial, MissingMesh,
                     OverlappingMagnetRegions, SchemaViolation, UnknownModel)
from .fem import MaterialParams
from .mesh_io import (RenderSurface, TetMesh, embed_surface, make_tet_mesh,
                      parse_msh, parse_stl)
from .solver import ConstraintSet, SolverConfig


# ---------------------------------------------------------------------------
# Axis-aligned boxes (descriptor regions)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(points)
        return np.logical_and(p >= self.lo, p <= self.hi).all(axis=1)

    def intersects(self, other: "Box") -> bool:
        """True when the open interiors overlap (touching faces do not)."""
        return bool((np.minimum(self.hi, other.hi)
                     > np.maximum(self.lo, other.lo)).all())

    def to_json(self) -> dict:
        return {"min": list(self.lo), "max": list(self.hi)}


# ---------------------------------------------------------------------------
# Grid helpers shared by the generators
# ---------------------------------------------------------------------------

# Kuhn split: one tet per permutation of the axes, walking from the cell's
# (0,0,0) corner to (1,1,1). Applied with per-cell parity reflections
# (union-jack pattern): cell (i,j,k) mirrors the template along every axis
# with an odd index, so neighbors meet as mirror images and shared face
# diagonals coincide. The reflected pattern is noticeably less stiff in
# bending than the single-diagonal variant.
_KUHN_PATHS = []
for _perm in permutations(range(3)):
    _steps = [np.zeros(3, dtype=np.int64)]
    for _axis in _perm:
        _step = _steps[-1].copy()
        _step[_axis] = 1
        _steps.append(_step)
    _KUHN_PATHS.append(np.array(_steps))


def _kuhn_cell_tets(i, j, k, nid):
    """Six tets of lattice cell (i,j,k); nid maps grid index to node id."""
    par = (i & 1, j & 1, k & 1)
    cell = []
    for path in _KUHN_PATHS:
        cell.append(tuple(
            nid(i + (s[0] ^ par[0]), j + (s[1] ^ par[1]), k + (s[2] ^ par[2]))
            for s in path))
    return cell

# Prism-to-3-tets templates (smallest global vertex rotated to slot 0).
# Each quad face ends up split along the diagonal through its smallest
# vertex, so splits agree across shared faces of any two prisms.
_PRISM_ROTATIONS = ((0, 1, 2, 3, 4, 5), (1, 2, 0, 4, 5, 3),
                    (2, 0, 1, 5, 3, 4), (3, 5, 4, 0, 2, 1),
                    (4, 3, 5, 1, 0, 2), (5, 4, 3, 2, 1, 0))


def _split_prism(v):
    """Three tets for prism (bottom v0 v1 v2, top v3 v4 v5)."""
    rot = min(_PRISM_ROTATIONS, key=lambda r: v[r[0]])
    w = [v[i] for i in rot]
    if min(w[1], w[5]) < min(w[2], w[4]):
        return [(w[0], w[1], w[2], w[5]),
                (w[0], w[1], w[5], w[4]),
                (w[0], w[4], w[5], w[3])]
    return [(w[0], w[1], w[2], w[4]),
            (w[0], w[4], w[2], w[5]),
            (w[0], w[4], w[5], w[3])]


class _NodeBank:
    """Deduplicating point store (1e-12 m grid) with insertion-order ids."""

    def __init__(self):
        self._points = []
        self._index = {}

    def add(self, point) -> int:
        key = tuple(np.round(np.asarray(point, dtype=np.float64) / 1e-12)
                    .astype(np.int64))
        idx = self._index.get(key)
        if idx is None:
            idx = len(self._points)
            self._index[key] = idx
            self._points.append(np.asarray(point, dtype=np.float64))
        return idx

    def array(self) -> np.ndarray:
        return np.array(self._points, dtype=np.float64)

    def __len__(self):
        return len(self._points)


# ---------------------------------------------------------------------------
# Beam
# ---------------------------------------------------------------------------

def generate_beam(length: float, width: float, height: float,
                  nx: int, ny: int, nz: int) -> TetMesh:
    """Regular box grid split into 6 tets per cell (conforming Kuhn split).

    Spans [0,length] x [0,width] x [0,height] with
    (nx+1)(ny+1)(nz+1) nodes and 6 nx ny nz tets.
    """
    if min(length, width, height) <= 0.0:
        raise InvalidDimensions("beam dimensions must be positive")
    if min(nx, ny, nz) < 1:
        raise InvalidDimensions("subdivisions must be >= 1")

    xs = np.linspace(0.0, length, nx + 1)
    ys = np.linspace(0.0, width, ny + 1)
    zs = np.linspace(0.0, height, nz + 1)
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    nodes = np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)

    def nid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    ci, cj, ck = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz),
                             indexing="ij")
    ci, cj, ck = ci.ravel(), cj.ravel(), ck.ravel()
    pi, pj, pk = ci & 1, cj & 1, ck & 1
    tets = np.empty((len(ci), 6, 4), dtype=np.int64)
    for t, path in enumerate(_KUHN_PATHS):
        for corner, (di, dj, dk) in enumerate(path):
            tets[:, t, corner] = nid(ci + (di ^ pi), cj + (dj ^ pj),
                                     ck + (dk ^ pk))
    return make_tet_mesh(nodes, tets.reshape(-1, 4))


# ---------------------------------------------------------------------------
# Gripper
# ---------------------------------------------------------------------------

@dataclass
class GeneratorRegions:
    """Magnetization directions and anchors produced by a generator."""

    magnet_dirs: np.ndarray          # (E, 3) unit vectors, zero rows = none
    fixed_nodes: np.ndarray          # node indices to pin


def generate_gripper(n_fingers: int, finger_length: float,
                     finger_thickness: float, palm_radius: float,
                     subdivisions: int, finger_width: float = 0.008
                     ) -> tuple[TetMesh, GeneratorRegions]:
    """Regular-polygon palm with n radial fingers sharing root nodes.

    The palm is an n-gon plate (apothem = palm_radius) fan-triangulated to
    its center; each finger is a rectangular grid growing outward from the
    middle of one side, welded to the palm through its root row. Fingers
    are index-congruent copies of each other, so the tetrahedralization is
    exactly n-fold symmetric. Each finger is magnetized along its own axis
    and the whole palm is pinned.
    """
    if n_fingers not in (3, 4):
        raise InvalidDimensions("n_fingers must be 3 or 4")
    if min(finger_length, finger_thickness, palm_radius, finger_width) <= 0.0:
        raise InvalidDimensions("gripper dimensions must be positive")
    if subdivisions < 1:
        raise InvalidDimensions("subdivisions must be >= 1")

    n = n_fingers
    side = 2.0 * palm_radius * np.tan(np.pi / n)
    if finger_width >= side:
        raise InvalidDimensions(
            f"finger_width {finger_width} must be < palm side {side:.4g}")

    nx = max(2, int(subdivisions))
    seg = finger_length / nx
    nw = max(1, round(finger_width / seg))
    nt = max(2, round(finger_thickness / seg))
    n_fill = max(1, round(((side - finger_width) / 2.0) / (finger_width / nw)))

    bank = _NodeBank()
    center = bank.add((0.0, 0.0))
    angles = np.pi / 2.0 + 2.0 * np.pi * np.arange(n) / n
    out_dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    tan_dirs = np.stack([-np.sin(angles), np.cos(angles)], axis=1)

    # cross-side offsets, fillers + root span, identical for every side
    xi = np.concatenate([
        np.linspace(-side / 2.0, -finger_width / 2.0, n_fill + 1),
        np.linspace(-finger_width / 2.0, finger_width / 2.0, nw + 1)[1:],
        np.linspace(finger_width / 2.0, side / 2.0, n_fill + 1)[1:],
    ])
    root_slice = slice(n_fill, n_fill + nw + 1)

    tris, tri_tags = [], []     # tag -1 = palm, k = finger k
    side_nodes, root_nodes = [], []
    for k in range(n):
        ids = [bank.add(palm_radius * out_dirs[k] + t * tan_dirs[k])
               for t in xi]
        side_nodes.append(ids)
        root_nodes.append(ids[root_slice])
        for a, b in zip(ids[:-1], ids[1:]):
            tris.append((center, a, b))
            tri_tags.append(-1)
    palm_node_count = len(bank)

    for k in range(n):
        rows = [list(root_nodes[k])]
        for i in range(1, nx + 1):
            r = palm_radius + i * seg
            rows.append([bank.add(r * out_dirs[k] + t * tan_dirs[k])
                         for t in np.linspace(-finger_width / 2.0,
                                              finger_width / 2.0, nw + 1)])
        for i in range(nx):
            for j in range(nw):
                a, b = rows[i][j], rows[i][j + 1]
                c, d = rows[i + 1][j], rows[i + 1][j + 1]
                tris.append((a, b, d))
                tris.append((a, d, c))
                tri_tags.extend((k, k))

    nodes2d = bank.array()
    mesh, tet_tags = _extrude(nodes2d, tris, tri_tags,
                              thickness=finger_thickness, layers=nt)

    dirs = np.zeros((mesh.tet_count, 3))
    for k in range(n):
        dirs[tet_tags == k] = (out_dirs[k, 0], out_dirs[k, 1], 0.0)
    fixed = _column_nodes(np.arange(palm_node_count), len(nodes2d), nt)
    return mesh, GeneratorRegions(dirs, fixed)


def _extrude(nodes2d: np.ndarray, tris, tri_tags, thickness: float,
             layers: int) -> tuple[TetMesh, np.ndarray]:
    """Extrude a 2D triangulation into `layers` prism layers of tets.

    The plate is centered on z = 0. Returns the mesh and a per-tet copy of
    the triangle tags.
    """
    n2d = len(nodes2d)
    zs = np.linspace(-thickness / 2.0, thickness / 2.0, layers + 1)
    nodes = np.concatenate([
        np.column_stack([nodes2d, np.full(n2d, z)]) for z in zs])
    tets, tags = [], []
    for layer in range(layers):
        lo, hi = layer * n2d, (layer + 1) * n2d
        for tri, tag in zip(tris, tri_tags):
            prism = (tri[0] + lo, tri[1] + lo, tri[2] + lo,
                     tri[0] + hi, tri[1] + hi, tri[2] + hi)
            for tet in _split_prism(prism):
                tets.append(tet)
                tags.append(tag)
    mesh = make_tet_mesh(nodes, np.array(tets, dtype=np.int64))
    return mesh, np.array(tags, dtype=np.int64)


def _column_nodes(ids2d: np.ndarray, n2d: int, layers: int) -> np.ndarray:
    return (ids2d[None, :] + n2d * np.arange(layers + 1)[:, None]).ravel()


# ---------------------------------------------------------------------------
# Butterfly
# ---------------------------------------------------------------------------

def generate_butterfly(wing_span: float, wing_chord: float, thickness: float,
                       body_width: float, subdivisions: int
                       ) -> tuple[TetMesh, GeneratorRegions]:
    """Two thin wing plates joined by a thicker central body block.

    `wing_span` is the length of each wing beyond the body. The right half
    is built on one Cartesian lattice (so the body/wing junction conforms)
    and mirrored across the body midplane x = 0, making the mesh exactly
    mirror-symmetric. Wings are magnetized outboard (+x right, -x left) so
    a +z field folds both wings up; the body is pinned.
    """
    if min(wing_span, wing_chord, thickness, body_width) <= 0.0:
        raise InvalidDimensions("butterfly dimensions must be positive")
    if subdivisions < 1:
        raise InvalidDimensions("subdivisions must be >= 1")

    nz = 2                                   # layers through the wing plate
    dz = thickness / nz
    ny = max(2, int(subdivisions))
    dy = wing_chord / ny
    half_body = body_width / 2.0
    nxb = max(1, round(half_body / dy))
    dxb = half_body / nxb
    nxw = max(2, round(wing_span / dy))
    dxw = wing_span / nxw

    # occupied cells of the right half on an (ix, iy, iz) lattice;
    # the body is 3 plate-thicknesses tall, the wing sits in its middle
    cells = []
    for ix in range(nxb + nxw):
        wing = ix >= nxb
        z_range = range(0, nz) if wing else range(-nz, 2 * nz)
        for iy in range(ny):
            for iz in z_range:
                cells.append((ix, iy, iz, wing))

    def coords(ix, iy, iz):
        x = ix * dxb if ix <= nxb else half_body + (ix - nxb) * dxw
        return (x, iy * dy, iz * dz)

    bank = _NodeBank()
    tets, tags = [], []
    for ix, iy, iz, wing in cells:
        def nid(i, j, k):
            return bank.add(coords(i, j, k))
        for tet in _kuhn_cell_tets(ix, iy, iz, nid):
            tets.append(tet)
            tags.append(1 if wing else 0)

    # mirror across x = 0, sharing the midplane nodes
    right_nodes = bank.array()
    n_right = len(right_nodes)
    mirror_id = np.empty(n_right, dtype=np.int64)
    mirrored = []
    for i, p in enumerate(right_nodes):
        if p[0] == 0.0:
            mirror_id[i] = i
        else:
            mirror_id[i] = n_right + len(mirrored)
            mirrored.append((-p[0], p[1], p[2]))
    nodes = np.concatenate([right_nodes, np.array(mirrored).reshape(-1, 3)])

    tets = np.array(tets, dtype=np.int64)
    all_tets = np.concatenate([tets, mirror_id[tets]])
    all_tags = np.array(tags + [-t for t in tags], dtype=np.int64)
    mesh = make_tet_mesh(nodes, all_tets)

    dirs = np.zeros((mesh.tet_count, 3))
    dirs[all_tags == 1] = (1.0, 0.0, 0.0)
    dirs[all_tags == -1] = (-1.0, 0.0, 0.0)
    body_nodes = np.flatnonzero(np.abs(nodes[:, 0]) <= half_body + 1e-12)
    return mesh, GeneratorRegions(dirs, body_nodes)


# ---------------------------------------------------------------------------
# Descriptors
# ---------------------------------------------------------------------------

_GENERATOR_PARAMS = {
    "beam": ("length", "width", "height", "nx", "ny", "nz"),
    "gripper": ("n_fingers", "finger_length", "finger_thickness",
                "palm_radius", "subdivisions", "finger_width"),
    "butterfly": ("wing_span", "wing_chord", "thickness", "body_width",
                  "subdivisions"),
}

_DEFAULT_MATERIAL = {"young_modulus": 1e6, "poisson_ratio": 0.45,
                     "density": 1200.0, "rayleigh_mass": 0.1,
                     "rayleigh_stiffness": 0.1}


@dataclass
class ModelDescriptor:
    name: str
    mesh_source: dict
    material: MaterialParams
    scale: float = 1.0
    remanence_magnitude: float = 0.1          # Tesla, generator models
    fixed_regions: list = field(default_factory=list)      # [Box]
    magnet_regions: list = field(default_factory=list)     # [(Box, B_r)]
    default_field: np.ndarray = field(
        default_factory=lambda: np.zeros(3))
    solver: SolverConfig = field(default_factory=SolverConfig)


def load_descriptor(text: str) -> ModelDescriptor:
    """Parse and strictly validate a JSON model descriptor."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation("", f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaViolation("", "descriptor must be a JSON object")

    allowed = {"name", "mesh_source", "scale", "material",
               "remanence_magnitude", "fixed_regions", "magnet_regions",
               "default_field", "solver"}
    for key in doc:
        if key not in allowed:
            raise SchemaViolation(key, "unknown key")

    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise SchemaViolation("name", "required non-empty string")
    mesh_source = _check_mesh_source(doc.get("mesh_source"))
    scale = _number(doc.get("scale", 1.0), "scale")
    if scale <= 0.0:
        raise SchemaViolation("scale", "must be > 0")

    material = _check_material(doc.get("material", {}))
    remanence = _number(doc.get("remanence_magnitude", 0.1),
                        "remanence_magnitude")
    if remanence < 0.0:
        raise SchemaViolation("remanence_magnitude", "must be >= 0")

    fixed = [_check_box(b, f"fixed_regions[{i}]")
             for i, b in enumerate(_list(doc.get("fixed_regions", []),
                                         "fixed_regions"))]
    magnets = []
    for i, entry in enumerate(_list(doc.get("magnet_regions", []),
                                    "magnet_regions")):
        path = f"magnet_regions[{i}]"
        if not isinstance(entry, dict) or set(entry) != {"box", "remanence"}:
            raise SchemaViolation(path, "expected {box, remanence}")
        box = _check_box(entry["box"], path + ".box")
        br = _vec3(entry["remanence"], path + ".remanence")
        magnets.append((box, br))
    for i in range(len(magnets)):
        for j in range(i + 1, len(magnets)):
            if magnets[i][0].intersects(magnets[j][0]):
                raise OverlappingMagnetRegions(
                    f"magnet_regions[{i}] and [{j}] overlap")

    fld = _vec3(doc.get("default_field", [0.0, 0.0, 0.0]), "default_field")
    solver = _check_solver(doc.get("solver", {}))

    return ModelDescriptor(name=name, mesh_source=mesh_source,
                           material=material, scale=scale,
                           remanence_magnitude=remanence,
                           fixed_regions=fixed, magnet_regions=magnets,
                           default_field=fld, solver=solver)


def serialize_descriptor(desc: ModelDescriptor) -> str:
    doc = {
        "name": desc.name,
        "mesh_source": desc.mesh_source,
        "scale": desc.scale,
        "material": {
            "young_modulus": desc.material.young_modulus,
            "poisson_ratio": desc.material.poisson_ratio,
            "density": desc.material.density,
            "rayleigh_mass": desc.material.rayleigh_mass,
            "rayleigh_stiffness": desc.material.rayleigh_stiffness,
        },
        "remanence_magnitude": desc.remanence_magnitude,
        "fixed_regions": [b.to_json() for b in desc.fixed_regions],
        "magnet_regions": [{"box": b.to_json(), "remanence": list(br)}
                           for b, br in desc.magnet_regions],
        "default_field": list(desc.default_field),
        "solver": {
            "dt": desc.solver.dt,
            "cg_max_iters": desc.solver.cg_max_iters,
            "cg_tolerance": desc.solver.cg_tolerance,
            "newton_max_iters": desc.solver.newton_max_iters,
            "newton_tolerance": desc.solver.newton_tolerance,
            "ramp_steps": desc.solver.ramp_steps,
            "gravity": list(desc.solver.gravity),
        },
    }
    return json.dumps(doc, indent=2)


def _number(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaViolation(path, "expected a number")
    return float(v)


def _list(v, path):
    if not isinstance(v, list):
        raise SchemaViolation(path, "expected a list")
    return v


def _vec3(v, path):
    if not isinstance(v, list) or len(v) != 3:
        raise SchemaViolation(path, "expected a 3-array")
    return np.array([_number(c, f"{path}[{i}]") for i, c in enumerate(v)])


def _check_box(b, path) -> Box:
    if not isinstance(b, dict) or set(b) != {"min", "max"}:
        raise SchemaViolation(path, "expected {min, max}")
    lo = _vec3(b["min"], path + ".min")
    hi = _vec3(b["max"], path + ".max")
    if not (hi > lo).all():
        raise SchemaViolation(path, "box must have positive extent")
    return Box(lo, hi)


def _check_material(m) -> MaterialParams:
    if not isinstance(m, dict):
        raise SchemaViolation("material", "expected an object")
    merged = dict(_DEFAULT_MATERIAL)
    for key, value in m.items():
        if key not in merged:
            raise SchemaViolation(f"material.{key}", "unknown key")
        merged[key] = _number(value, f"material.{key}")
    try:
        return MaterialParams(**merged)
    except InvalidMaterial as exc:
        key = "poisson_ratio" if "poisson" in str(exc) else \
            str(exc).split()[0]
        raise SchemaViolation(f"material.{key}", str(exc)) from None


def _check_solver(s) -> SolverConfig:
    if not isinstance(s, dict):
        raise SchemaViolation("solver", "expected an object")
    defaults = SolverConfig()
    kwargs = {}
    for key, value in s.items():
        if not hasattr(defaults, key):
            raise SchemaViolation(f"solver.{key}", "unknown key")
        if key == "gravity":
            kwargs[key] = tuple(_vec3(value, "solver.gravity"))
        elif key in ("cg_max_iters", "newton_max_iters", "ramp_steps"):
            kwargs[key] = int(_number(value, f"solver.{key}"))
        else:
            kwargs[key] = _number(value, f"solver.{key}")
    try:
        return SolverConfig(**kwargs)
    except ValueError as exc:
        raise SchemaViolation("solver", str(exc)) from None


def _check_mesh_source(src) -> dict:
    if not isinstance(src, dict):
        raise SchemaViolation("mesh_source", "required object")
    if "generator" in src:
        extra = set(src) - {"generator", "params"}
        if extra:
            raise SchemaViolation(f"mesh_source.{extra.pop()}", "unknown key")
        gen = src["generator"]
        if gen not in _GENERATOR_PARAMS:
            raise SchemaViolation("mesh_source.generator",
                                  f"unknown generator '{gen}'")
        params = src.get("params", {})
        if not isinstance(params, dict):
            raise SchemaViolation("mesh_source.params", "expected an object")
        for key in params:
            if key not in _GENERATOR_PARAMS[gen]:
                raise SchemaViolation(f"mesh_source.params.{key}",
                                      "unknown parameter")
        return {"generator": gen, "params": dict(params)}
    if "msh" in src:
        extra = set(src) - {"msh", "stl"}
        if extra:
            raise SchemaViolation(f"mesh_source.{extra.pop()}", "unknown key")
        out = {"msh": src["msh"]}
        if "stl" in src:
            out["stl"] = src["stl"]
        return out
    raise SchemaViolation("mesh_source", "needs 'generator' or 'msh'")


# ---------------------------------------------------------------------------
# Building a runnable model from a descriptor
# ---------------------------------------------------------------------------

@dataclass
class Model:
    """Everything a session needs: geometry, defaults and regions."""

    name: str
    mesh: TetMesh
    material: MaterialParams
    remanence: np.ndarray            # (E, 3) Tesla
    default_field: np.ndarray
    constraints: ConstraintSet
    solver: SolverConfig
    surface: Optional[RenderSurface] = None


def build_model(desc: ModelDescriptor,
                base_dir: Optional[Path] = None) -> Model:
    """Realize a descriptor: generate or load the mesh, assign regions."""
    surface = None
    gen_regions = None
    src = desc.mesh_source
    if "generator" in src:
        mesh, gen_regions = _run_generator(src["generator"],
                                           src.get("params", {}))
        if desc.scale != 1.0:
            mesh = make_tet_mesh(mesh.nodes * desc.scale, mesh.tets)
    else:
        base = Path(base_dir) if base_dir is not None else Path(".")
        msh_path = base / src["msh"]
        if not msh_path.exists():
            raise MissingMesh(f"mesh file not found: {msh_path}")
        mesh = parse_msh(msh_path.read_bytes())
        if desc.scale != 1.0:
            mesh = make_tet_mesh(mesh.nodes * desc.scale, mesh.tets)
        if "stl" in src:
            stl_path = base / src["stl"]
            if not stl_path.exists():
                raise MissingMesh(f"surface file not found: {stl_path}")
            surface = parse_stl(stl_path.read_bytes())
            if desc.scale != 1.0:
                surface = RenderSurface(surface.vertices * desc.scale,
                                        surface.triangles)
            surface = embed_surface(surface, mesh)

    remanence = np.zeros((mesh.tet_count, 3))
    if gen_regions is not None:
        remanence = gen_regions.magnet_dirs * desc.remanence_magnitude

    if desc.magnet_regions:
        centroids = mesh.nodes[mesh.tets].mean(axis=1)
        claimed = np.zeros(mesh.tet_count, dtype=bool)
        for i, (box, br) in enumerate(desc.magnet_regions):
            inside = box.contains(centroids)
            clash = inside & claimed
            if clash.any():
                raise OverlappingMagnetRegions(
                    f"magnet_regions[{i}] shares {int(clash.sum())} "
                    f"elements with an earlier region")
            remanence[inside] = br
            claimed |= inside

    fixed = set()
    if gen_regions is not None:
        fixed.update(int(i) for i in gen_regions.fixed_nodes)
    for box in desc.fixed_regions:
        fixed.update(np.flatnonzero(box.contains(mesh.nodes)).tolist())

    return Model(name=desc.name, mesh=mesh, material=desc.material,
                 remanence=remanence, default_field=desc.default_field,
                 constraints=ConstraintSet.from_nodes(sorted(fixed)),
                 solver=desc.solver, surface=surface)


def _run_generator(name: str, params: dict):
    if name == "beam":
        merged = {"length": 0.1, "width": 0.01, "height": 0.01,
                  "nx": 40, "ny": 4, "nz": 4}
        merged.update(params)
        return generate_beam(**merged), None
    if name == "gripper":
        merged = {"n_fingers": 3, "finger_length": 0.04,
                  "finger_thickness": 0.002, "palm_radius": 0.012,
                  "subdivisions": 10, "finger_width": 0.008}
        merged.update(params)
        return generate_gripper(**merged)
    if name == "butterfly":
        merged = {"wing_span": 0.03, "wing_chord": 0.02,
                  "thickness": 0.001, "body_width": 0.006,
                  "subdivisions": 10}
        merged.update(params)
        return generate_butterfly(**merged)
    raise SchemaViolation("mesh_source.generator", f"unknown '{name}'")


# ---------------------------------------------------------------------------
# Model directories
# ---------------------------------------------------------------------------

def builtin_models_dir() -> Path:
    return Path(__file__).parent / "models"


def list_model_names(models_dir: Optional[Path] = None) -> list[str]:
    d = Path(models_dir) if models_dir else builtin_models_dir()
    return sorted(p.stem for p in d.glob("*.json"))


def load_model(name: str, models_dir: Optional[Path] = None) -> Model:
    """Load a descriptor by name from a models directory and build it."""
    d = Path(models_dir) if models_dir else builtin_models_dir()
    path = d / f"{name}.json"
    if not path.exists():
        raise UnknownModel(
            f"no model '{name}' in {d} (have: {', '.join(list_model_names(d))})")
    return build_model(load_descriptor(path.read_text()), base_dir=d)
