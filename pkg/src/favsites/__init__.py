"""Simulation and exact computation for random-walk local times, range
boundaries, late points and Gaussian free fields."""

__version__ = "0.1.0"

from . import kernels  # noqa: E402,F401  (selects the kernel backend at import)
