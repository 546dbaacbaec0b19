"""Hardy-improving potentials and weighted pair certification.

A nonnegative radial potential P is Hardy-improving on (0, R) when
y'' + y'/r + P y = 0 has a positive solution there; a weight couple (V, W)
is an n-dimensional pair for the Dirichlet-form inequality when

    y'' + ((n-1)/r + V_r/V) y' + (W/V) y = 0

has a positive solution on (0, R).  Both reduce to positivity certificates
from :mod:`ineqlab.radial_ode`.  The two notions are linked: P qualifies
iff (1, (n-2)^2/4 r^-2 + P) is a pair, and the shifted couple

    (r^-lam, ((n-lam-2)/2)^2 r^(-lam-2) + r^-lam P)

is again a pair for 0 <= lam <= n-2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import weights
from .radial_ode import (
    DEFAULT_TOL,
    PositivityCertificate,
    RadialCoefficients,
    certify_positive,
    hardy_ode_coefficients,
)
from .weights import WeightExpr, WeightError, differentiate

__all__ = [
    "PairSpec",
    "is_hi_potential",
    "is_bessel_pair",
    "shifted_pair",
    "nonradial_extension_check",
    "hardy_rellich_premise_check",
    "pair_ode_coefficients",
]

_GRID_POINTS = 10_000


@dataclass(frozen=True)
class PairSpec:
    """Candidate weight couple (V, W) in dimension n on (0, R)."""

    V: WeightExpr
    W: WeightExpr
    n: int
    R: float
    lam: Optional[float] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.R <= 0:
            raise ValueError("R must be positive")
        if self.lam is not None and not (0.0 <= self.lam <= self.n - 2):
            raise ValueError(f"lam must satisfy 0 <= lam <= n-2, got {self.lam}")


def _check_positive(expr: WeightExpr, R: float, what: str) -> None:
    r = np.geomspace(1e-8 * R, R * (1 - 1e-12), 400)
    v = expr(r)
    if not np.all(np.isfinite(v)):
        raise WeightError(f"{what} is not finite on (0, R)")
    if np.min(v) <= 0:
        raise WeightError(f"{what} must be strictly positive on (0, R)")


def is_hi_potential(P: WeightExpr, R: float, tol: float = DEFAULT_TOL) -> PositivityCertificate:
    """Certificate that P improves the Hardy inequality on (0, R).

    Requires P >= 0 on (0, R); the certificate is the positivity test for
    y'' + y'/r + P y = 0.
    """
    if not P.nonnegative_on(1e-8 * R, R * (1 - 1e-12)):
        raise WeightError("potential must be nonnegative on (0, R)")
    return certify_positive(hardy_ode_coefficients(P, R), tol)


def pair_ode_coefficients(spec: PairSpec) -> RadialCoefficients:
    Vr = differentiate(spec.V, 1)
    a = weights.wrap(weights.Mul(weights.Const(float(spec.n - 1)), weights.Pow(weights.Var(), -1.0)))
    a = a + Vr / spec.V
    b = spec.W / spec.V
    return RadialCoefficients(a=a, b=b, n=spec.n, R=spec.R)


def is_bessel_pair(spec: PairSpec, tol: float = DEFAULT_TOL) -> PositivityCertificate:
    """Certificate that (V, W) is an n-dimensional pair on (0, spec.R).

    W may change sign; V must be strictly positive.
    """
    _check_positive(spec.V, spec.R, "V")
    return certify_positive(pair_ode_coefficients(spec), tol)


def shifted_pair(lam: float, n: int, P: WeightExpr, R: Optional[float] = None) -> PairSpec:
    """Build the shifted couple (r^-lam, ((n-lam-2)/2)^2 r^(-lam-2) + r^-lam P).

    Valid for 0 <= lam <= n-2; R defaults to the potential's validity
    radius.
    """
    if not (0.0 <= lam <= n - 2):
        raise WeightError(f"lam out of range: need 0 <= lam <= n-2, got lam={lam}, n={n}")
    V, W = weights.builtin("pair_shift", lam=lam, n=n, P=P)
    radius = R if R is not None else P.r_max
    if not (radius and math.isfinite(radius)):
        raise WeightError("no finite radius available; pass R explicitly")
    return PairSpec(V=V, W=W, n=n, R=float(radius), lam=float(lam))


def nonradial_extension_check(spec: PairSpec, slack: float = 1e-12):
    """Pointwise condition W - 2V/r^2 + 2V_r/r - V_rr >= 0 on [r0, R).

    When it holds, the second-order pair inequality extends from radial
    functions to all compactly supported ones.  Checked on a deterministic
    10^4-point log grid; returns (ok, first_violation_radius_or_None).
    """
    Vr = differentiate(spec.V, 1)
    Vrr = differentiate(spec.V, 2)
    r = np.geomspace(1e-8 * spec.R, spec.R, _GRID_POINTS + 1)[:-1]
    vals = spec.W(r) - 2.0 * spec.V(r) / r**2 + 2.0 * Vr(r) / r - Vrr(r)
    if not np.all(np.isfinite(vals)):
        raise WeightError("condition expression not finite on the grid")
    bad = np.nonzero(vals < -slack)[0]
    if bad.size == 0:
        return True, None
    return False, float(r[bad[0]])


def hardy_rellich_premise_check(P: WeightExpr, lam: float, slack: float = 1e-12) -> bool:
    """Check P_r/P = lam/r + f with f >= 0 and r f(r) -> 0 at the origin.

    The remainder f is formed symbolically and tested on a log grid over
    [1e-8, R); the limit condition is |r f(r)| < 1e-3 at r = 1e-6.
    """
    Pr = differentiate(P, 1)
    R = P.r_max if math.isfinite(P.r_max) else 1.0
    r = np.geomspace(1e-8, R * (1 - 1e-12), _GRID_POINTS)
    with np.errstate(all="ignore"):
        f = Pr(r) / P(r) - lam / r
    if not np.all(np.isfinite(f)):
        return False
    if np.min(f) < -slack:
        return False
    r_probe = 1e-6
    f_probe = float(Pr(r_probe) / P(r_probe) - lam / r_probe)
    return abs(r_probe * f_probe) < 1e-3
