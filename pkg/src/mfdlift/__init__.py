"""Functional lifting for manifold-valued signals and images.

Finite-element lifting of first-order variational problems with values in a
low-dimensional embedded manifold, solved by a primal-dual method and
projected back by Riemannian centers of mass.
"""

from .dataterm import DataTermSpec, convexify_all
from .geometry import (
    Triangulation,
    barycentric_locate,
    build_circle,
    build_flat_box,
    build_klein,
    build_so3,
    build_sphere2,
)
from .regularizer import RegularizerSpec
from .solver import LiftedProblem, solve, solve_lellmann_tv

__version__ = "0.1.0"
