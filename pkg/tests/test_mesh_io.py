"""STL/MSH parsing, validation, serialization and surface embedding."""

import struct

import numpy as np
import pytest
from numpy.testing import assert_allclose

from magsim import errors, mesh_io
from magsim.mesh_io import (RenderSurface, closest_point_on_triangle,
                            embed_surface, make_tet_mesh, parse_msh,
                            parse_stl, tet_volumes, validate_mesh,
                            write_msh22)

from conftest import random_valid_tet


# ---------------------------------------------------------------------------
# STL
# ---------------------------------------------------------------------------

def binary_stl(triangles, header=b"x" * 80):
    blob = header[:80].ljust(80, b"\0")
    blob += struct.pack("<I", len(triangles))
    for tri in triangles:
        blob += struct.pack("<3f", 0.0, 0.0, 1.0)
        for v in tri:
            blob += struct.pack("<3f", *v)
        blob += struct.pack("<H", 0)
    return blob


def test_binary_single_facet():
    surf = parse_stl(binary_stl([[(0, 0, 0), (1, 0, 0), (0, 1, 0)]]))
    assert len(surf.vertices) == 3
    assert len(surf.triangles) == 1


def test_ascii_cube_welds_to_8_vertices(data_dir):
    surf = parse_stl((data_dir / "cube_ascii.stl").read_bytes())
    assert len(surf.triangles) == 12
    assert len(surf.vertices) == 8
    # brute-force oracle: count distinct soup vertices by pairwise distance
    soup = surf.vertices[surf.triangles].reshape(-1, 3)
    distinct = []
    for p in soup:
        if all(np.linalg.norm(p - q) > 1e-9 for q in distinct):
            distinct.append(p)
    assert len(distinct) == 8


def test_binary_ascii_goldens_identical(data_dir):
    sa = parse_stl((data_dir / "cube_ascii.stl").read_bytes())
    sb = parse_stl((data_dir / "cube_binary.stl").read_bytes())
    assert np.array_equal(sa.vertices, sb.vertices)
    assert np.array_equal(sa.triangles, sb.triangles)


def test_truncated_binary():
    blob = binary_stl([[(0, 0, 0), (1, 0, 0), (0, 1, 0)]])
    blob = blob[:84] + struct.pack("<I", 2) + blob[88:]  # wrong count
    bad = blob[:84 - 4] + struct.pack("<I", 2) + blob[84:]
    with pytest.raises(errors.TruncatedFile):
        parse_stl(bad)
    with pytest.raises(errors.TruncatedFile):
        parse_stl(b"\0" * 100)  # declares count 0, length mismatch


def test_declared_count_mismatch_is_truncated():
    blob = b"\0" * 80 + struct.pack("<I", 2) + b"\0" * 16
    assert len(blob) == 100
    with pytest.raises(errors.TruncatedFile):
        parse_stl(blob)


def test_empty_stl():
    with pytest.raises(errors.EmptyMesh):
        parse_stl(binary_stl([]))


def test_malformed_ascii():
    with pytest.raises(errors.MalformedAscii):
        parse_stl(b"solid x\nfacet normal 0 0 1\nouter loop\n"
                  b"vertex 0 0 zero\nendloop\nendfacet\nendsolid")
    with pytest.raises(errors.MalformedAscii):
        parse_stl(b"solid x\nfacet normal 0 0 1\nouter hoop\n")


def test_weld_quantization():
    # two copies of a vertex 1e-12 apart weld; 1e-6 apart do not
    tri1 = [(0, 0, 0), (1, 0, 0), (0, 1, 0)]
    tri2 = [(0, 0, 1e-12), (1, 0, 0), (0, 0, 1)]
    surf = parse_stl(binary_stl([tri1, tri2]))
    assert len(surf.vertices) == 4
    tri3 = [(0, 0, 1e-6), (1, 0, 0), (0, 0, 1)]
    surf = parse_stl(binary_stl([tri1, tri3]))
    assert len(surf.vertices) == 5


# ---------------------------------------------------------------------------
# MSH
# ---------------------------------------------------------------------------

def test_msh22_golden(data_dir):
    mesh = parse_msh((data_dir / "single_tet_v22.msh").read_bytes())
    assert mesh.node_count == 4
    assert mesh.tet_count == 1
    assert len(mesh.surface_tris) == 4
    assert_allclose(tet_volumes(mesh.nodes, mesh.tets), [1.0 / 6.0])


def test_msh41_equivalent_to_msh22(data_dir):
    m22 = parse_msh((data_dir / "single_tet_v22.msh").read_bytes())
    m41 = parse_msh((data_dir / "single_tet_v41.msh").read_bytes())
    assert np.array_equal(m22.nodes, m41.nodes)
    assert np.array_equal(m22.tets, m41.tets)
    assert np.array_equal(m22.surface_tris, m41.surface_tris)


def test_negative_orientation_fixed(data_dir):
    text = (data_dir / "single_tet_v22.msh").read_text()
    flipped = text.replace("1 2 2 0 1 1 2 3\n2 4 2 0 1 1 2 3 4",
                           "1 2 2 0 1 1 2 3\n2 4 2 0 1 1 2 4 3")
    mesh = parse_msh(flipped.encode())
    ref = parse_msh((data_dir / "single_tet_v22.msh").read_bytes())
    vol = tet_volumes(mesh.nodes, mesh.tets)[0]
    assert vol == pytest.approx(1.0 / 6.0)
    assert set(map(tuple, np.sort(mesh.surface_tris, axis=1))) == \
        set(map(tuple, np.sort(ref.surface_tris, axis=1)))


def test_msh_errors(data_dir):
    good = (data_dir / "single_tet_v22.msh").read_text()
    with pytest.raises(errors.UnsupportedVersion):
        parse_msh(good.replace("2.2 0 8", "3.0 0 8").encode())
    with pytest.raises(errors.UnsupportedVersion):
        parse_msh(good.replace("2.2 0 8", "2.2 1 8").encode())  # binary flag
    with pytest.raises(errors.MissingSection):
        parse_msh(good.replace("$Nodes", "$Schnodes")
                  .replace("$EndNodes", "$EndSchnodes").encode())
    with pytest.raises(errors.NoTetrahedra):
        parse_msh(good.replace("2 4 2 0 1 1 2 3 4\n", "").replace(
            "$Elements\n2", "$Elements\n1").encode())
    with pytest.raises(errors.DanglingNodeTag):
        parse_msh(good.replace("1 2 3 4", "1 2 3 9").encode())


def test_corrupt_msh_raises_mesh_errors(data_dir):
    """Truncated or garbled content raises the defined error family,
    never an unclassified exception."""
    good22 = (data_dir / "single_tet_v22.msh").read_text()
    good41 = (data_dir / "single_tet_v41.msh").read_text()
    cases = [
        good22.replace("1 0 0 0", "1 0 0"),
        good22.replace("2 4 2 0 1 1 2 3 4", "2 4 2 0 1 1 2"),
        good22.replace("$Nodes\n4", "$Nodes\n9"),
        good22.replace("1 0 0 0", "1 x y z"),
        good41.replace("0 0 0", "0 0", 1),
        good41.replace("2 1 2 1", "2 1 99 1"),
    ]
    for text in cases:
        with pytest.raises(errors.MeshError):
            parse_msh(text.encode())


def test_roundtrip_serialization(rng):
    for _ in range(5):
        mesh = random_valid_tet(rng)
        text = write_msh22(mesh)
        back = parse_msh(text.encode())
        assert np.array_equal(back.nodes, mesh.nodes)   # bitwise via %.17g
        assert np.array_equal(back.tets, mesh.tets)
        assert write_msh22(back) == text


def test_all_positive_after_parse(data_dir, rng):
    nodes = rng.normal(size=(8, 3))
    tets = np.array([[0, 1, 2, 3], [4, 5, 6, 7], [0, 2, 4, 6]])
    mesh = make_tet_mesh(nodes, tets)
    assert (tet_volumes(mesh.nodes, mesh.tets) > 0).all()


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def test_validate_unit_tet(unit_tet):
    report = validate_mesh(unit_tet)
    assert report.ok
    assert report.min_volume == pytest.approx(1.0 / 6.0)
    assert not report.warnings


def test_validate_duplicate_nodes(unit_tet):
    nodes = np.vstack([unit_tet.nodes, unit_tet.nodes[0] + 5e-13])
    mesh = mesh_io.TetMesh(nodes, unit_tet.tets, unit_tet.surface_tris)
    report = validate_mesh(mesh)
    assert report.duplicate_node_pairs == [(0, 4)]
    assert report.warnings


def test_validate_degenerate_tet():
    nodes = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0.0]])
    mesh = mesh_io.TetMesh(nodes, np.array([[0, 1, 2, 3]]),
                           np.zeros((0, 3), dtype=np.int64))
    report = validate_mesh(mesh)
    assert not report.ok
    assert any("volume" in v for v in report.violations)


def test_validate_index_out_of_range(unit_tet):
    mesh = mesh_io.TetMesh(unit_tet.nodes, np.array([[0, 1, 2, 7]]),
                           unit_tet.surface_tris)
    assert not validate_mesh(mesh).ok


# ---------------------------------------------------------------------------
# Embedding
# ---------------------------------------------------------------------------

def test_embed_vertex_on_node(unit_tet):
    surf = RenderSurface(np.array([[0.0, 0.0, 1.0]]),
                         np.zeros((0, 3), dtype=np.int64))
    out = embed_surface(surf, unit_tet)
    w = np.sort(out.embedding_weights[0])
    assert_allclose(w, [0, 0, 0, 1], atol=1e-12)


def test_embed_centroid(unit_tet):
    surf = RenderSurface(np.array([[0.25, 0.25, 0.25]]),
                         np.zeros((0, 3), dtype=np.int64))
    out = embed_surface(surf, unit_tet)
    assert_allclose(out.embedding_weights[0], [0.25] * 4, atol=1e-12)


def test_embed_inside_reproduces_position(rng):
    from magsim.models import generate_beam
    mesh = generate_beam(0.1, 0.02, 0.02, 5, 2, 2)
    lo, hi = mesh.nodes.min(axis=0), mesh.nodes.max(axis=0)
    pts = rng.uniform(lo + 1e-4, hi - 1e-4, size=(40, 3))
    surf = embed_surface(RenderSurface(pts, np.zeros((0, 3), dtype=np.int64)),
                         mesh)
    rebuilt = mesh_io.deformed_surface_positions(surf, mesh.nodes, mesh.tets)
    assert np.abs(rebuilt - pts).max() < 1e-9
    assert_allclose(surf.embedding_weights.sum(axis=1), 1.0, atol=1e-9)
    assert surf.embedding_weights.min() >= -mesh_io.EPS_EMBED


def test_embed_outside_clamps_to_nearest_point(unit_tet, rng):
    # oracle: brute-force closest point on the tet via its four faces
    outside = np.array([[-1e-3, 0.3, 0.3], [0.5, 0.5, 0.5], [2.0, 2.0, 2.0]])
    surf = embed_surface(
        RenderSurface(outside, np.zeros((0, 3), dtype=np.int64)), unit_tet)
    rebuilt = mesh_io.deformed_surface_positions(surf, unit_tet.nodes,
                                                 unit_tet.tets)
    corners = unit_tet.nodes
    for p, q in zip(outside, rebuilt):
        best = min(
            (closest_point_on_triangle(p, *corners[list(face)])
             for face in mesh_io.TET_FACES),
            key=lambda c: np.linalg.norm(p - c))
        d_true = np.linalg.norm(p - best)
        assert np.linalg.norm(p - q) == pytest.approx(d_true, abs=1e-9)
    assert_allclose(surf.embedding_weights.sum(axis=1), 1.0, atol=1e-9)


def test_embed_empty_mesh():
    empty = mesh_io.TetMesh(np.zeros((0, 3)),
                            np.zeros((0, 4), dtype=np.int64),
                            np.zeros((0, 3), dtype=np.int64))
    with pytest.raises(errors.EmptyMesh):
        embed_surface(RenderSurface(np.zeros((1, 3)),
                                    np.zeros((0, 3), dtype=np.int64)), empty)


def test_closest_point_on_triangle_regions(rng):
    a, b, c = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
    # interior projection
    assert_allclose(closest_point_on_triangle(
        np.array([0.2, 0.2, 5.0]), a, b, c), [0.2, 0.2, 0.0])
    # vertex and edge regions
    assert_allclose(closest_point_on_triangle(
        np.array([-1.0, -1.0, 0.0]), a, b, c), a)
    assert_allclose(closest_point_on_triangle(
        np.array([0.5, -2.0, 0.0]), a, b, c), [0.5, 0, 0])
