"""Singular radial ODE integration and positivity certificates.

Integrates y'' + a(r) y' + b(r) y = 0 from a regular singular point at the
origin out to r = R.  Work happens in t = log(r): near the origin the
transformed equation is asymptotically constant-coefficient with
characteristic (indicial) roots

    s^2 + (alpha - 1) s + beta = 0,   alpha = lim r a(r),  beta = lim r^2 b(r),

and the integration launches on the principal branch s+ (the distinguished
solution whose first zero decides disconjugacy on (0, R)).  When the roots
are complex every solution oscillates into the origin; the launch then uses
the real part and the trace reports whatever sign change it meets first.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import weights
from ._kernels import BAD_COEFFS, MAX_STEPS, OK, SIGN_CHANGE, STEP_UNDERFLOW, integrate_log_ode
from .weights import WeightExpr

__all__ = [
    "RadialCoefficients",
    "SolutionTrace",
    "PositivityCertificate",
    "IntegrationError",
    "integrate_singular_ode",
    "first_zero",
    "certify_positive",
    "hardy_ode_coefficients",
]

R0_FACTOR = 1e-8  # start radius r0 = R0_FACTOR * R
DEFAULT_TOL = 1e-9
_MAX_STEPS = 200_000


class IntegrationError(RuntimeError):
    """Coefficient overflow or step-size underflow during integration."""


@dataclass(frozen=True)
class RadialCoefficients:
    """Coefficients of y'' + a(r) y' + b(r) y = 0 on (0, R)."""

    a: WeightExpr
    b: WeightExpr
    n: int
    R: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension n must be >= 1")
        if not (self.R > 0 and math.isfinite(self.R)):
            raise ValueError("outer radius R must be positive and finite")
        if self.a.singular_order > 1 + 1e-9:
            raise ValueError(
                f"a(r) has singular order {self.a.singular_order:.3f} > 1; "
                "the origin must be a regular singular point"
            )


@dataclass(frozen=True)
class SolutionTrace:
    """Accepted integration nodes of one solution branch.

    ``y`` holds the renormalized branch values; sign information is exact,
    magnitudes are y * scale.
    """

    grid: np.ndarray  # radii, strictly increasing
    y: np.ndarray
    dy: np.ndarray  # dy/dr
    scale: np.ndarray  # cumulative renormalization per node
    local_error: np.ndarray
    r0: float
    tol: float
    sign_change_index: int  # first index with a sign flip, -1 if none

    def to_csv(self, path) -> None:
        data = np.column_stack([self.grid, self.y * self.scale, self.dy * self.scale])
        np.savetxt(path, data, delimiter=",", header="r,y,dy", comments="")


@dataclass(frozen=True)
class PositivityCertificate:
    status: str  # "positive" | "first_zero" | "inconclusive"
    r_star: Optional[float]
    tol: float
    settings_hash: str
    detail: str = ""

    @property
    def is_positive(self) -> bool:
        return self.status == "positive"


def _indicial_data(coeffs: RadialCoefficients, r0: float):
    """Launch data on the principal branch: (s, ydot0_in_t)."""
    with np.errstate(all="ignore"):
        alpha = float(r0 * coeffs.a(r0))
        beta = float(r0 * r0 * coeffs.b(r0))
    if not (math.isfinite(alpha) and math.isfinite(beta)):
        raise IntegrationError("coefficients not finite at the start radius")
    disc = (1.0 - alpha) ** 2 - 4.0 * beta
    if disc >= 0.0:
        s = 0.5 * ((1.0 - alpha) + math.sqrt(disc))
        # next Frobenius term: y = r^s (1 + c r^2 + ...) with the bounded
        # remainder of b; the correction is O(r0^2) and still worth keeping
        b_rem = beta_rem = float(coeffs.b(r0) - beta / (r0 * r0))
        denom = 1.0 + 2.0 * s + alpha
        c = -b_rem / (2.0 * denom) if math.isfinite(beta_rem) else 0.0
        ydot0 = s + 2.0 * c * r0 * r0
    else:
        s = 0.5 * (1.0 - alpha)
        ydot0 = s
    return s, ydot0


def _settings_hash(coeffs: RadialCoefficients, tol: float) -> str:
    text = f"v1|{coeffs.a}|{coeffs.b}|{coeffs.n}|{coeffs.R!r}|{tol!r}|{R0_FACTOR!r}"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _run(coeffs: RadialCoefficients, tol: float, stop_on_sign_change: bool):
    if not (1e-12 <= tol <= 1e-4):
        raise ValueError("tol must lie in [1e-12, 1e-4]")
    r0 = R0_FACTOR * coeffs.R
    s, ydot0 = _indicial_data(coeffs, r0)
    ops_a, args_a, consts_a, da = coeffs.a.compile()
    ops_b, args_b, consts_b, db = coeffs.b.compile()
    status, count, ts, ys, dys, errs, scales, sign_idx = integrate_log_ode(
        ops_a,
        args_a,
        consts_a,
        ops_b,
        args_b,
        consts_b,
        math.log(r0),
        math.log(coeffs.R),
        1.0,
        ydot0,
        tol,
        tol,
        _MAX_STEPS,
        stop_on_sign_change,
        max(da, db) + 2,
    )
    grid_t = ts[:count]
    grid = np.exp(grid_t)
    y = ys[:count]
    dy_dt = dys[:count]
    trace = SolutionTrace(
        grid=grid,
        y=y,
        dy=dy_dt / grid,  # dy/dr = (dy/dt) / r
        scale=scales[:count],
        local_error=errs[:count],
        r0=r0,
        tol=tol,
        sign_change_index=int(sign_idx),
    )
    return status, trace


def integrate_singular_ode(coeffs: RadialCoefficients, tol: float = DEFAULT_TOL) -> SolutionTrace:
    """Integrate the principal solution branch from r0 = 1e-8 R out to R.

    Raises IntegrationError on coefficient overflow or step underflow; the
    heuristic global error of the returned trace is <= 100 * tol.
    """
    status, trace = _run(coeffs, tol, stop_on_sign_change=False)
    if status in (BAD_COEFFS, STEP_UNDERFLOW, MAX_STEPS):
        raise IntegrationError(_status_message(status))
    return trace


def _status_message(status: int) -> str:
    return {
        BAD_COEFFS: "coefficient evaluation produced a non-finite value",
        STEP_UNDERFLOW: "step size underflow (stiffness failure)",
        MAX_STEPS: "step budget exhausted",
    }.get(status, "ok")


def _hermite_root(t0, y0, d0, t1, y1, d1) -> float:
    """Root of the cubic Hermite interpolant on [t0, t1] via bisection."""
    h = t1 - t0

    def val(t):
        x = (t - t0) / h
        h00 = (1 + 2 * x) * (1 - x) ** 2
        h10 = x * (1 - x) ** 2
        h01 = x * x * (3 - 2 * x)
        h11 = x * x * (x - 1)
        return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1

    lo, hi = t0, t1
    flo = y0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = val(mid)
        if fm == 0.0:
            return mid
        if (flo > 0) != (fm > 0):
            hi = mid
        else:
            lo, flo = mid, fm
        if hi - lo <= 1e-14 * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


def first_zero(trace: SolutionTrace) -> Optional[float]:
    """Smallest zero of the traced solution, refined to 1e-10 relative.

    Returns None when the trace has no sign change (absence is a valid
    answer).
    """
    y = trace.y
    sign = y > 0
    flips = np.nonzero(sign[1:] != sign[:-1])[0]
    if flips.size == 0:
        return None
    i = int(flips[0]) + 1
    if y[i] == 0.0:
        return float(trace.grid[i])
    t0, t1 = math.log(trace.grid[i - 1]), math.log(trace.grid[i])
    # dy/dt = r * dy/dr; interpolate in t where the step was taken
    d0 = trace.dy[i - 1] * trace.grid[i - 1]
    d1 = trace.dy[i] * trace.grid[i]
    t_star = _hermite_root(t0, y[i - 1], d0, t1, y[i], d1)
    return float(math.exp(t_star))


def certify_positive(coeffs: RadialCoefficients, tol: float = DEFAULT_TOL) -> PositivityCertificate:
    """Certify that the principal solution is positive on (0, R).

    Status is "positive" iff no zero occurs in (0, R); "first_zero" with the
    refined location otherwise.  A zero within ``tol`` of R (in radius
    units) or an integration failure yields "inconclusive".
    """
    h = _settings_hash(coeffs, tol)
    try:
        status, trace = _run(coeffs, tol, stop_on_sign_change=True)
    except IntegrationError as exc:
        return PositivityCertificate("inconclusive", None, tol, h, detail=str(exc))
    if status in (BAD_COEFFS, STEP_UNDERFLOW, MAX_STEPS):
        return PositivityCertificate("inconclusive", None, tol, h, detail=_status_message(status))
    r_star = first_zero(trace)
    if r_star is None:
        return PositivityCertificate("positive", None, tol, h)
    if coeffs.R - r_star <= tol:
        return PositivityCertificate(
            "inconclusive", float(r_star), tol, h, detail="zero within tol of the outer radius"
        )
    return PositivityCertificate("first_zero", float(r_star), tol, h)


def hardy_ode_coefficients(P: WeightExpr, R: float) -> RadialCoefficients:
    """Coefficients of y'' + y'/r + P(r) y = 0, the improvement criterion ODE."""
    a = weights.wrap(weights.Pow(weights.Var(), -1.0))
    return RadialCoefficients(a=a, b=P, n=2, R=R)
