"""STL / Gmsh MSH ingestion, mesh validation and render-surface embedding.

All coordinates are interpreted as meters. STL files carry the render
surface only; volumetric simulation meshes come from Gmsh ASCII MSH files
(versions 2.2 and 4.1, 4-node tetrahedra).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DanglingNodeTag,
    EmptyMesh,
    MalformedAscii,
    MissingSection,
    NoTetrahedra,
    TruncatedFile,
    UnsupportedVersion,
)

# STL vertices welded by exact equality after quantization to this grid (m).
WELD_GRID = 1e-9
# Barycentric slack accepted before the nearest-tet fallback kicks in.
EPS_EMBED = 1e-6
GMSH_TET = 4

# Faces of a positively oriented tet [0,1,2,3], wound with outward normals.
TET_FACES = ((0, 2, 1), (0, 1, 3), (1, 2, 3), (0, 3, 2))


@dataclass
class TetMesh:
    """Simulation geometry: nodes, tetrahedra and derived boundary faces."""

    nodes: np.ndarray        # (N, 3) float64, meters
    tets: np.ndarray         # (E, 4) int64
    surface_tris: np.ndarray  # (B, 3) int64, faces on exactly one tet

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def tet_count(self) -> int:
        return len(self.tets)


@dataclass
class RenderSurface:
    """Indexed triangle surface, optionally embedded in a TetMesh."""

    vertices: np.ndarray      # (V, 3) float64, meters
    triangles: np.ndarray     # (T, 3) int64
    embedding_tets: Optional[np.ndarray] = None      # (V,) int64
    embedding_weights: Optional[np.ndarray] = None   # (V, 4) float64

    @property
    def has_embedding(self) -> bool:
        return self.embedding_tets is not None


def tet_volumes(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Signed volumes det[x1-x0, x2-x0, x3-x0] / 6 for every tet."""
    x = nodes[tets]                       # (E, 4, 3)
    d = x[:, 1:] - x[:, :1]               # (E, 3, 3) edge rows
    return np.linalg.det(d) / 6.0


def make_tet_mesh(nodes: np.ndarray, tets: np.ndarray) -> TetMesh:
    """Build a TetMesh: fix orientations, extract the boundary surface."""
    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    tets = np.ascontiguousarray(tets, dtype=np.int64)
    vols = tet_volumes(nodes, tets)
    flip = vols < 0.0
    if flip.any():
        # negative tets are ubiquitous in exported meshes; swap 2<->3
        tets = tets.copy()
        tets[flip, 2], tets[flip, 3] = tets[flip, 3], tets[flip, 2].copy()
    return TetMesh(nodes, tets, boundary_faces(tets))


def boundary_faces(tets: np.ndarray) -> np.ndarray:
    """Oriented faces that appear in exactly one tet."""
    if len(tets) == 0:
        return np.zeros((0, 3), dtype=np.int64)
    faces = np.concatenate([tets[:, f] for f in TET_FACES])   # (4E, 3)
    keys = np.sort(faces, axis=1)
    _, inv, counts = np.unique(keys, axis=0, return_inverse=True,
                               return_counts=True)
    boundary = faces[counts[inv] == 1]
    # deterministic ordering independent of the unique() permutation
    order = np.lexsort(boundary.T[::-1])
    return np.ascontiguousarray(boundary[order])


# ---------------------------------------------------------------------------
# STL
# ---------------------------------------------------------------------------

def parse_stl(data: bytes) -> RenderSurface:
    """Parse ASCII or binary STL bytes into a welded indexed surface.

    Stored facet normals are discarded; rendering recomputes them from
    geometry. Raises TruncatedFile, MalformedAscii or EmptyMesh.
    """
    if data.startswith(b"solid") and b"facet" in data:
        soup = _parse_stl_ascii(data)
    else:
        soup = _parse_stl_binary(data)
    if len(soup) == 0:
        raise EmptyMesh("STL contains no triangles")
    return weld_triangle_soup(soup)


def _parse_stl_binary(data: bytes) -> np.ndarray:
    if len(data) < 84:
        raise TruncatedFile(f"binary STL is {len(data)} bytes, header needs 84")
    count = int(np.frombuffer(data[80:84], dtype="<u4")[0])
    expected = 84 + 50 * count
    if len(data) != expected:
        raise TruncatedFile(
            f"binary STL declares {count} facets ({expected} bytes) "
            f"but file is {len(data)} bytes")
    facet = np.dtype([("normal", "<f4", 3), ("verts", "<f4", (3, 3)),
                      ("attr", "<u2")])
    records = np.frombuffer(data[84:], dtype=facet, count=count)
    return records["verts"].astype(np.float64)


def _parse_stl_ascii(data: bytes) -> np.ndarray:
    try:
        tokens = data.decode("ascii", errors="strict").split()
    except UnicodeDecodeError as exc:
        raise MalformedAscii(f"non-ASCII byte in ASCII STL: {exc}") from None
    pos = 0

    def take(*expected):
        nonlocal pos
        if pos + len(expected) > len(tokens):
            raise MalformedAscii("unexpected end of file")
        got = tokens[pos:pos + len(expected)]
        for e, g in zip(expected, got):
            if g.lower() != e:
                raise MalformedAscii(f"expected '{e}', found '{g}'")
        pos += len(expected)

    def take_floats(n):
        nonlocal pos
        if pos + n > len(tokens):
            raise MalformedAscii("unexpected end of file")
        try:
            vals = [float(t) for t in tokens[pos:pos + n]]
        except ValueError as exc:
            raise MalformedAscii(str(exc)) from None
        pos += n
        return vals

    take("solid")
    # optional solid name: skip tokens until 'facet' or 'endsolid'
    while pos < len(tokens) and tokens[pos].lower() not in ("facet", "endsolid"):
        pos += 1

    tris = []
    while pos < len(tokens):
        word = tokens[pos].lower()
        if word == "endsolid":
            break
        take("facet", "normal")
        take_floats(3)
        take("outer", "loop")
        tri = []
        for _ in range(3):
            take("vertex")
            tri.append(take_floats(3))
        take("endloop")
        take("endfacet")
        tris.append(tri)
    return np.array(tris, dtype=np.float64).reshape(-1, 3, 3)


def weld_triangle_soup(soup: np.ndarray) -> RenderSurface:
    """Merge soup vertices that agree exactly after 1e-9 m quantization."""
    flat = soup.reshape(-1, 3)
    keys = np.round(flat / WELD_GRID).astype(np.int64)
    uniq, first, inverse = np.unique(keys, axis=0, return_index=True,
                                     return_inverse=True)
    vertices = flat[first]
    triangles = inverse.reshape(-1, 3).astype(np.int64)
    return RenderSurface(vertices, triangles)


# ---------------------------------------------------------------------------
# Gmsh MSH
# ---------------------------------------------------------------------------

def parse_msh(data: bytes) -> TetMesh:
    """Parse a Gmsh ASCII MSH file (v2.2 or v4.1) into a TetMesh.

    Non-tetrahedral elements are ignored; node tags are re-indexed densely
    in file order; negatively oriented tets are silently fixed.
    """
    text = data.decode("latin-1")
    sections = _split_sections(text)
    fmt = sections.get("MeshFormat")
    if fmt is None:
        raise MissingSection("$MeshFormat section absent")
    ftoks = fmt[0].split()
    version = ftoks[0]
    if len(ftoks) >= 2 and ftoks[1] != "0":
        raise UnsupportedVersion("binary MSH is not supported (ASCII only)")
    if version == "2.2":
        tags, coords, elems = _parse_msh22(sections)
    elif version == "4.1":
        tags, coords, elems = _parse_msh41(sections)
    else:
        raise UnsupportedVersion(f"MSH version {version} (need 2.2 or 4.1)")

    if len(elems) == 0:
        raise NoTetrahedra("no 4-node tetrahedra (element type 4) found")
    index_of = {t: i for i, t in enumerate(tags)}
    try:
        tets = np.array([[index_of[t] for t in e] for e in elems],
                        dtype=np.int64)
    except KeyError as exc:
        raise DanglingNodeTag(f"element references unknown node tag {exc}") \
            from None
    return make_tet_mesh(np.array(coords, dtype=np.float64), tets)


def _split_sections(text: str) -> dict[str, list[str]]:
    sections: dict[str, list[str]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("$End"):
            current = None
        elif line.startswith("$"):
            current = line[1:]
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
    return sections


def _require(sections, name):
    if name not in sections:
        raise MissingSection(f"${name} section absent")
    return sections[name]


def _parse_msh22(sections):
    node_lines = _require(sections, "Nodes")
    tags, coords, elems = [], [], []
    try:
        n = int(node_lines[0].split()[0])
        if len(node_lines) < 1 + n:
            raise MissingSection("$Nodes section ends prematurely")
        for line in node_lines[1:1 + n]:
            parts = line.split()
            tags.append(int(parts[0]))
            coords.append([float(parts[1]), float(parts[2]),
                           float(parts[3])])

        elem_lines = _require(sections, "Elements")
        m = int(elem_lines[0].split()[0])
        if len(elem_lines) < 1 + m:
            raise MissingSection("$Elements section ends prematurely")
        for line in elem_lines[1:1 + m]:
            parts = line.split()
            etype = int(parts[1])
            if etype != GMSH_TET:
                continue
            ntags = int(parts[2])
            conn = [int(t) for t in parts[3 + ntags:3 + ntags + 4]]
            if len(conn) != 4:
                raise MissingSection("tetrahedron line lists fewer than "
                                     "4 nodes")
            elems.append(conn)
    except (ValueError, IndexError) as exc:
        raise MissingSection(f"malformed MSH 2.2 content: {exc}") from None
    return tags, coords, elems


def _parse_msh41(sections):
    node_lines = _require(sections, "Nodes")
    tags, coords, elems = [], [], []
    try:
        toks = _TokenStream(node_lines)
        num_blocks = toks.ints(4)[0]
        for _ in range(num_blocks):
            _dim, _etag, parametric, count = toks.ints(4)
            if parametric:
                raise UnsupportedVersion(
                    "parametric node blocks not supported")
            block_tags = [toks.ints(1)[0] for _ in range(count)]
            for t in block_tags:
                tags.append(t)
                coords.append(toks.floats(3))

        elem_lines = _require(sections, "Elements")
        toks = _TokenStream(elem_lines)
        num_blocks = toks.ints(4)[0]
        for _ in range(num_blocks):
            _dim, _etag, etype, count = toks.ints(4)
            nodes_per = _GMSH_NODE_COUNTS.get(etype)
            if nodes_per is None:
                raise UnsupportedVersion(f"unknown Gmsh element type {etype}")
            for _ in range(count):
                row = toks.ints(1 + nodes_per)
                if etype == GMSH_TET:
                    elems.append(row[1:5])
    except ValueError as exc:
        raise MissingSection(f"malformed MSH 4.1 content: {exc}") from None
    return tags, coords, elems


# node counts for the Gmsh element types we expect to skip over
_GMSH_NODE_COUNTS = {1: 2, 2: 3, 3: 4, 4: 4, 5: 8, 6: 6, 7: 5, 8: 3, 9: 6,
                     10: 9, 11: 10, 15: 1}


class _TokenStream:
    def __init__(self, lines):
        self._tokens = " ".join(lines).split()
        self._pos = 0

    def _take(self, n):
        if self._pos + n > len(self._tokens):
            raise MissingSection("section ends prematurely")
        out = self._tokens[self._pos:self._pos + n]
        self._pos += n
        return out

    def ints(self, n):
        return [int(t) for t in self._take(n)]

    def floats(self, n):
        return [float(t) for t in self._take(n)]


def write_msh22(mesh: TetMesh) -> str:
    """Serialize to Gmsh ASCII v2.2 with 17-significant-digit coordinates."""
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes",
           str(mesh.node_count)]
    for i, (x, y, z) in enumerate(mesh.nodes, start=1):
        out.append(f"{i} {x:.17g} {y:.17g} {z:.17g}")
    out.append("$EndNodes")
    out.append("$Elements")
    out.append(str(mesh.tet_count))
    for i, tet in enumerate(mesh.tets, start=1):
        a, b, c, d = (int(t) + 1 for t in tet)
        out.append(f"{i} 4 2 0 0 {a} {b} {c} {d}")
    out.append("$EndElements")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass
class ValidationReport:
    node_count: int
    tet_count: int
    boundary_face_count: int
    min_volume: float
    max_volume: float
    min_quality: float                 # 6*sqrt(2)*V / longest_edge^3, 1 = regular
    duplicate_node_pairs: list
    violations: list
    warnings: list

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_mesh(mesh: TetMesh) -> ValidationReport:
    """Check TetMesh invariants; the report carries failures, never raises."""
    violations, warnings = [], []

    if not np.isfinite(mesh.nodes).all():
        violations.append("non-finite node coordinates")
    if len(mesh.tets) and (mesh.tets.min() < 0
                           or mesh.tets.max() >= mesh.node_count):
        violations.append("tet index out of range")
        return ValidationReport(mesh.node_count, mesh.tet_count,
                                len(mesh.surface_tris), np.nan, np.nan,
                                np.nan, [], violations, warnings)

    vols = tet_volumes(mesh.nodes, mesh.tets)
    n_bad = int(np.count_nonzero(vols <= 0.0))
    if n_bad:
        violations.append(f"{n_bad} tets with non-positive volume")

    x = mesh.nodes[mesh.tets]
    edges = np.concatenate([x[:, a] - x[:, b]
                            for a, b in ((0, 1), (0, 2), (0, 3),
                                         (1, 2), (1, 3), (2, 3))], axis=0)
    lmax = np.linalg.norm(edges.reshape(6, -1, 3), axis=2).max(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        quality = 6.0 * np.sqrt(2.0) * vols / lmax ** 3

    dup_pairs = []
    if mesh.node_count > 1:
        tree = cKDTree(mesh.nodes)
        dup_pairs = sorted(tree.query_pairs(1e-12))
        if dup_pairs:
            warnings.append(f"{len(dup_pairs)} node pairs closer than 1e-12 m")

    return ValidationReport(
        node_count=mesh.node_count,
        tet_count=mesh.tet_count,
        boundary_face_count=len(mesh.surface_tris),
        min_volume=float(vols.min()) if len(vols) else np.nan,
        max_volume=float(vols.max()) if len(vols) else np.nan,
        min_quality=float(quality.min()) if len(vols) else np.nan,
        duplicate_node_pairs=dup_pairs,
        violations=violations,
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# Surface embedding
# ---------------------------------------------------------------------------

def barycentric_coordinates(point, tet_nodes):
    """Weights (w0..w3) of `point` w.r.t. one tet's 4x3 node array."""
    dm = (tet_nodes[1:] - tet_nodes[0]).T
    b = np.linalg.solve(dm, point - tet_nodes[0])
    return np.concatenate([[1.0 - b.sum()], b])


def embed_surface(surface: RenderSurface, mesh: TetMesh) -> RenderSurface:
    """Attach barycentric embedding of each surface vertex into the mesh.

    Vertices inside a tet get that tet's barycentric weights. Vertices
    outside every tet fall back to the tet whose most-negative barycentric
    coordinate is largest, with weights of the closest point on that tet
    (so the reconstruction error equals the true distance to the tet).
    """
    if mesh.tet_count == 0:
        raise EmptyMesh("cannot embed into a mesh with no tetrahedra")

    x = mesh.nodes[mesh.tets]                       # (E, 4, 3)
    dm = np.transpose(x[:, 1:] - x[:, :1], (0, 2, 1))  # (E, 3, 3) columns
    dm_inv = np.linalg.inv(dm)
    x0 = x[:, 0]
    centroids = x.mean(axis=1)
    radius = np.linalg.norm(x - centroids[:, None, :], axis=2).max()
    tree = cKDTree(centroids)

    nv = len(surface.vertices)
    tet_idx = np.zeros(nv, dtype=np.int64)
    weights = np.zeros((nv, 4), dtype=np.float64)

    candidates = tree.query_ball_point(surface.vertices, r=radius * 1.0001)
    for i, p in enumerate(surface.vertices):
        cand = np.array(candidates[i], dtype=np.int64)
        best_tet, best_w = _best_tet(p, cand, dm_inv, x0)
        if best_tet is None or best_w.min() < -EPS_EMBED:
            # rare: outside every nearby tet, scan the whole mesh
            all_tets = np.arange(mesh.tet_count)
            best_tet, best_w = _best_tet(p, all_tets, dm_inv, x0)
        if best_w.min() < -EPS_EMBED:
            best_w = _clamped_weights(p, x[best_tet], dm_inv[best_tet])
        tet_idx[i] = best_tet
        weights[i] = best_w

    return RenderSurface(surface.vertices, surface.triangles,
                         embedding_tets=tet_idx, embedding_weights=weights)


def _best_tet(p, cand, dm_inv, x0):
    """Among candidate tets, the one maximizing the minimum barycentric."""
    if len(cand) == 0:
        return None, None
    b = np.einsum("eij,ej->ei", dm_inv[cand], p - x0[cand])   # (C, 3)
    w = np.concatenate([1.0 - b.sum(axis=1, keepdims=True), b], axis=1)
    k = int(np.argmax(w.min(axis=1)))
    return int(cand[k]), w[k]


def _clamped_weights(p, tet_nodes, dm_inv_e):
    """Barycentric weights of the closest point on the tet to p."""
    best_q, best_d = None, np.inf
    for f in TET_FACES:
        q = closest_point_on_triangle(p, *tet_nodes[list(f)])
        d = np.dot(p - q, p - q)
        if d < best_d:
            best_q, best_d = q, d
    b = dm_inv_e @ (best_q - tet_nodes[0])
    return np.concatenate([[1.0 - b.sum()], b])


def closest_point_on_triangle(p, a, b, c):
    """Closest point to p on triangle abc (Voronoi-region walk)."""
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = ab @ ap, ac @ ap
    if d1 <= 0.0 and d2 <= 0.0:
        return a
    bp = p - b
    d3, d4 = ab @ bp, ac @ bp
    if d3 >= 0.0 and d4 <= d3:
        return b
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        return a + ab * (d1 / (d1 - d3))
    cp = p - c
    d5, d6 = ab @ cp, ac @ cp
    if d6 >= 0.0 and d5 <= d6:
        return c
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        return a + ac * (d2 / (d2 - d6))
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b + (c - b) * w
    denom = 1.0 / (va + vb + vc)
    return a + ab * (vb * denom) + ac * (vc * denom)


def deformed_surface_positions(surface: RenderSurface,
                               positions: np.ndarray,
                               tets: np.ndarray) -> np.ndarray:
    """Map deformed node positions (N,3) through the embedding."""
    corner = positions[tets[surface.embedding_tets]]       # (V, 4, 3)
    return np.einsum("vk,vkj->vj", surface.embedding_weights, corner)
