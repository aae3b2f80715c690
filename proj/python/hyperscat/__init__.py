"""Weak asymptotics of N-particle scattering wave functions.

Thin Python layer over the C++ core: partition/Jacobi machinery,
hyperspherical harmonics, oscillatory and singular integral engines,
two-body T-matrices, and the coupled hyperradial S-matrix solver.
"""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
