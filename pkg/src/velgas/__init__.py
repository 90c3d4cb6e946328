"""Boundary-driven multi-velocity lattice gas toolkit.

Simulation (kinetic Monte Carlo at diffusive speed), grand-canonical
thermodynamics, the d=1 hydrodynamic PDE solver, exact tiny-system
generator checks, and the convergence harness tying them together.
"""

from ._kernel import BACKEND as KERNEL_BACKEND  # noqa: F401

__version__ = "0.1.0"
