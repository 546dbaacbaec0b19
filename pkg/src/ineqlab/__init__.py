"""ineqlab: a numerical workbench for functional inequalities.

Certifies Hardy-improving potentials and weighted-pair conditions through
oscillation theory, computes best constants by bisection and discretized
Rayleigh quotients, verifies individual inequalities by quadrature on test
profiles, and checks mass-transport based inequalities (Wasserstein,
log-Sobolev, Talagrand, energy-entropy duality, Moser-type functionals).
"""

__version__ = "0.1.0"

ARTIFACT_VERSION = 1

from ._accel import backend_name  # noqa: E402,F401
