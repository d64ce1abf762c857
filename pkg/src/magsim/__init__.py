"""Finite-element simulator for hard-magnetic soft robots.

Corotational tetrahedral FEM coupled to a convected-remanence magnetic
load under a uniform external field, with implicit dynamics for live
viewing and quasi-static Newton solves for converged configurations.
"""

from . import errors
from .fem import (ElementRestData, MaterialParams, SimState, elastic_forces,
                  lame_parameters, lumped_mass, polar_rotation,
                  precompute_rest, tangent_apply)
from .magnetics import MU0, MagneticParams, magnetic_forces, net_wrench, \
    zeeman_energy
from .mesh_io import (RenderSurface, TetMesh, embed_surface, parse_msh,
                      parse_stl, validate_mesh, write_msh22)
from .models import (Box, Model, ModelDescriptor, build_model, generate_beam,
                     generate_butterfly, generate_gripper, load_descriptor,
                     load_model)
from .simulation import Simulation
from .solver import (ConstraintSet, SolverConfig, apply_constraints, cg_solve,
                     implicit_euler_step, quasi_static_solve)
from .stress import StressField, element_stress, map_to_surface, von_mises

__version__ = "0.1.0"

__all__ = [
    "Box", "ConstraintSet", "ElementRestData", "MU0", "MagneticParams",
    "MaterialParams", "Model", "ModelDescriptor", "RenderSurface",
    "SimState", "Simulation", "SolverConfig", "StressField", "TetMesh",
    "apply_constraints", "build_model", "cg_solve", "elastic_forces",
    "element_stress", "embed_surface", "errors", "generate_beam",
    "generate_butterfly", "generate_gripper", "implicit_euler_step",
    "lame_parameters", "load_descriptor", "load_model", "lumped_mass",
    "magnetic_forces", "map_to_surface", "net_wrench", "parse_msh",
    "parse_stl", "polar_rotation", "precompute_rest", "quasi_static_solve",
    "tangent_apply", "validate_mesh", "von_mises", "write_msh22",
    "zeeman_energy",
]
