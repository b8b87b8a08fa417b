"""Hamilton-Jacobi equations on junctions and networks with flux-limited vertex conditions."""

from .errors import HJNetError
from .flux_limiter import MINUS_INFINITY, JunctionFunction, a0, f_A, ishii_limiters, reduce_to_flux_limit
from .grid import Grid, GridFunction
from .hamiltonian import (MaxAffineHamiltonian, PiecewiseLinearHamiltonian, PowerHamiltonian,
                          QuasiConvexHamiltonian, quadratic)
from .network import Edge, Network, NetworkPoint, build_junction, geodesic_distance
from .solver import SchemeConfig, solve, solve_stationary

__version__ = "0.1.0"

__all__ = [
    "Edge", "Grid", "GridFunction", "HJNetError", "JunctionFunction", "MINUS_INFINITY", "MaxAffineHamiltonian",
    "Network", "NetworkPoint", "PiecewiseLinearHamiltonian", "PowerHamiltonian", "QuasiConvexHamiltonian",
    "SchemeConfig", "a0", "build_junction", "f_A", "geodesic_distance", "ishii_limiters", "quadratic",
    "reduce_to_flux_limit", "solve", "solve_stationary",
]
