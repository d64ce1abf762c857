"""Legacy-ASCII VTK unstructured grid export.

Deterministic formatting (17 significant digits) so identical runs produce
byte-identical files, which the CLI's golden-file tests rely on.
"""

from __future__ import annotations

import numpy as np

from .mesh_io import TetMesh

VTK_TETRA = 10


def write_vtk(mesh: TetMesh, positions: np.ndarray,
              von_mises: np.ndarray, title: str = "magsim output") -> str:
    """Unstructured-grid snapshot: deformed points, tets, per-cell scalars
    and per-point displacement vectors."""
    pos = positions.reshape(-1, 3)
    disp = pos - mesh.nodes
    out = ["# vtk DataFile Version 3.0", title, "ASCII",
           "DATASET UNSTRUCTURED_GRID",
           f"POINTS {len(pos)} double"]
    out.extend(_rows(pos))
    out.append(f"CELLS {mesh.tet_count} {5 * mesh.tet_count}")
    for t in mesh.tets:
        out.append(f"4 {t[0]} {t[1]} {t[2]} {t[3]}")
    out.append(f"CELL_TYPES {mesh.tet_count}")
    out.extend([str(VTK_TETRA)] * mesh.tet_count)
    out.append(f"CELL_DATA {mesh.tet_count}")
    out.append("SCALARS von_mises double 1")
    out.append("LOOKUP_TABLE default")
    out.extend(f"{v:.17g}" for v in von_mises)
    out.append(f"POINT_DATA {len(pos)}")
    out.append("VECTORS displacement double")
    out.extend(_rows(disp))
    return "\n".join(out) + "\n"


def _rows(arr: np.ndarray):
    for x, y, z in arr:
        yield f"{x:.17g} {y:.17g} {z:.17g}"
