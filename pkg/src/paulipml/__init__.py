"""Numerical laboratory for Berenger split-field absorbing layers on the
3D Pauli system over a rectangular box.

Subpackages / modules:

- ``algebra``     exact 2x2 algebra of the Pauli symbol
- ``geometry``    box, rounded box, boundary normals and curvatures
- ``stretching``  absorption profiles and all tau-dependent coefficients
- ``timedomain``  explicit split-field solver with dissipative boundary
- ``freqdomain``  sparse stretched-system and Helmholtz solvers
- ``verify``      identity/estimate checks with machine-readable reports
- ``cli``         config-driven experiment runner
"""

from . import algebra, geometry, stretching, timedomain, freqdomain, verify

__all__ = [
    "algebra",
    "geometry",
    "stretching",
    "timedomain",
    "freqdomain",
    "verify",
]

__version__ = "0.1.0"
