"""dgmorph: discontinuous Galerkin solver for dispersive shallow-water
flow coupled to suspended/bed-load sediment transport and bed evolution."""

__version__ = "0.1.0"

from .backend import backend_name, get_kernels
from .mesh import Mesh, build_strip_mesh, read_mesh, write_mesh
from .discretization import Discretization
from .physics import ConservedState, SedimentParams

__all__ = [
    "Mesh",
    "build_strip_mesh",
    "read_mesh",
    "write_mesh",
    "Discretization",
    "ConservedState",
    "SedimentParams",
    "backend_name",
    "get_kernels",
    "__version__",
]
