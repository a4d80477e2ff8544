"""Lowest-order mixed FEM and FOSLS for the Poisson problem with H^-1 loads,
regularized by Clement-type projectors onto piecewise constants."""

from .assembly import (FoslsSolution, MixedSolution, SolverError,
                       assemble_fosls, assemble_mixed, solve, solve_fosls,
                       solve_mixed)
from .clement import (ClementWeights, clement_interpolate, make_weights,
                      project_load, regularize, solve_convex_weights,
                      uniform_weights)
from .elements import P0Field, P1Field, RT0Field
from .loads import H1DualLoad, ManufacturedCase, catalog, get_case
from .mesh import (SimplicialMesh, make_interval_mesh, make_square_mesh,
                   refine_newest_vertex, refine_uniform)
from .postprocess import eoc, error_h1, error_l2, postprocess

__version__ = "0.1.0"
