"""Hot numeric kernels: bytecode weight evaluation and the RK5(4) stepper.

Everything here is nopython-compilable; the numba/numpy path is chosen in
:mod:`ineqlab._accel`.  The ODE is integrated in t = log(r), where a regular
singular point at the origin becomes an asymptotically constant-coefficient
problem:

    y'' + a(r) y' + b(r) y = 0   <->   d2y/dt2 + (r a(r) - 1) dy/dt + r^2 b(r) y = 0

State is renormalized when |y| drifts outside [1e-120, 1e120]; the equation
is linear, so zero locations are unaffected.
"""

import numpy as np

from ._accel import njit

# status codes returned by the integrator
OK = 0
SIGN_CHANGE = 1
STEP_UNDERFLOW = 2
BAD_COEFFS = 3
MAX_STEPS = 4

# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 0.2, 0.3, 0.8, 8.0 / 9.0
_A21 = 0.2
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (
    35.0 / 384.0 - 5179.0 / 57600.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
)


@njit(cache=True)
def eval_program(ops, args, consts, r, stack):
    """Evaluate one compiled weight expression at scalar r."""
    sp = 0
    for i in range(ops.shape[0]):
        op = ops[i]
        if op == 0:  # CONST
            stack[sp] = consts[args[i]]
            sp += 1
        elif op == 1:  # R
            stack[sp] = r
            sp += 1
        elif op == 2:  # ADD
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
        elif op == 3:  # SUB
            sp -= 1
            stack[sp - 1] = stack[sp - 1] - stack[sp]
        elif op == 4:  # MUL
            sp -= 1
            stack[sp - 1] = stack[sp - 1] * stack[sp]
        elif op == 5:  # DIV
            sp -= 1
            stack[sp - 1] = stack[sp - 1] / stack[sp]
        elif op == 6:  # POW
            stack[sp - 1] = stack[sp - 1] ** consts[args[i]]
        elif op == 7:  # LOG
            stack[sp - 1] = np.log(stack[sp - 1])
        else:  # EXP
            stack[sp - 1] = np.exp(stack[sp - 1])
    return stack[0]


@njit(cache=True)
def _rhs(t, y0, y1, ops_a, args_a, consts_a, ops_b, args_b, consts_b, stack):
    r = np.exp(t)
    a = eval_program(ops_a, args_a, consts_a, r, stack)
    b = eval_program(ops_b, args_b, consts_b, r, stack)
    A = r * a - 1.0
    B = (r * r) * b
    return y1, -A * y1 - B * y0


@njit(cache=True)
def integrate_log_ode(
    ops_a,
    args_a,
    consts_a,
    ops_b,
    args_b,
    consts_b,
    t0,
    t_end,
    y0,
    dy0,
    rtol,
    atol,
    max_steps,
    stop_on_sign_change,
    stack_size,
):
    """Adaptive Dormand-Prince 5(4) from t0 to t_end in t = log(r).

    Returns (status, n, ts, ys, dys, errs, scales, sign_index) where arrays
    are filled up to n entries; sign_index is the first index i>0 with a
    sign change between ys[i-1] and ys[i] (or -1).  ``scales`` records the
    cumulative renormalization factor applied up to each node, so the true
    solution is ys[i] * scales[i].
    """
    ts = np.empty(max_steps + 1, dtype=np.float64)
    ys = np.empty(max_steps + 1, dtype=np.float64)
    dys = np.empty(max_steps + 1, dtype=np.float64)
    errs = np.empty(max_steps + 1, dtype=np.float64)
    scales = np.empty(max_steps + 1, dtype=np.float64)
    stack = np.empty(stack_size, dtype=np.float64)

    t = t0
    y = y0
    dy = dy0
    scale = 1.0
    n = 0
    ts[0] = t
    ys[0] = y
    dys[0] = dy
    errs[0] = 0.0
    scales[0] = scale
    sign_index = -1

    span = t_end - t0
    h = min(1e-3, span)
    h_min = 1e-14 * max(1.0, abs(span))

    k1y, k1d = _rhs(t, y, dy, ops_a, args_a, consts_a, ops_b, args_b, consts_b, stack)
    if not (np.isfinite(k1y) and np.isfinite(k1d)):
        return BAD_COEFFS, n + 1, ts, ys, dys, errs, scales, sign_index

    status = OK
    while t < t_end:
        if h < h_min:
            status = STEP_UNDERFLOW
            break
        if t + h > t_end:
            h = t_end - t

        t2 = t + _C2 * h
        y2 = y + h * _A21 * k1y
        d2 = dy + h * _A21 * k1d
        k2y, k2d = _rhs(t2, y2, d2, ops_a, args_a, consts_a, ops_b, args_b, consts_b, stack)

        t3 = t + _C3 * h
        y3 = y + h * (_A31 * k1y + _A32 * k2y)
        d3 = dy + h * (_A31 * k1d + _A32 * k2d)
        k3y, k3d = _rhs(t3, y3, d3, ops_a, args_a, consts_a, ops_b, args_b, consts_b, stack)

        t4 = t + _C4 * h
        y4 = y + h * (_A41 * k1y + _A42 * k2y + _A43 * k3y)
        d4 = dy + h * (_A41 * k1d + _A42 * k2d + _A43 * k3d)
        k4y, k4d = _rhs(t4, y4, d4, ops_a, args_a, consts_a, ops_b, args_b, consts_b, stack)

        t5 = t + _C5 * h
        y5 = y + h * (_A51 * k1y + _A52 * k2y + _A53 * k3y + _A54 * k4y)
        d5 = dy + h * (_A51 * k1d + _A52 * k2d + _A53 * k3d + _A54 * k4d)
        k5y, k5d = _rhs(t5, y5, d5, ops_a, args_a, consts_a, ops_b, args_b, consts_b, stack)

        t6 = t + h
        y6 = y + h * (_A61 * k1y + _A62 * k2y + _A63 * k3y + _A64 * k4y + _A65 * k5y)
        d6 = dy + h * (_A61 * k1d + _A62 * k2d + _A63 * k3d + _A64 * k4d + _A65 * k5d)
        k6y, k6d = _rhs(t6, y6, d6, ops_a, args_a, consts_a, ops_b, args_b, consts_b, stack)

        y_new = y + h * (_B1 * k1y + _B3 * k3y + _B4 * k4y + _B5 * k5y + _B6 * k6y)
        d_new = dy + h * (_B1 * k1d + _B3 * k3d + _B4 * k4d + _B5 * k5d + _B6 * k6d)
        k7y, k7d = _rhs(t6, y_new, d_new, ops_a, args_a, consts_a, ops_b, args_b, consts_b, stack)

        if not (np.isfinite(y_new) and np.isfinite(d_new)):
            status = BAD_COEFFS
            break

        err_y = h * (_E1 * k1y + _E3 * k3y + _E4 * k4y + _E5 * k5y + _E6 * k6y + _E7 * k7y)
        err_d = h * (_E1 * k1d + _E3 * k3d + _E4 * k4d + _E5 * k5d + _E6 * k6d + _E7 * k7d)
        sc_y = atol + rtol * max(abs(y), abs(y_new))
        sc_d = atol + rtol * max(abs(dy), abs(d_new))
        err = np.sqrt(0.5 * ((err_y / sc_y) ** 2 + (err_d / sc_d) ** 2))

        if err <= 1.0:
            if n + 1 > max_steps:
                status = MAX_STEPS
                break
            t = t + h
            y_prev = y
            y = y_new
            dy = d_new
            k1y, k1d = k7y, k7d  # FSAL
            n += 1
            ts[n] = t
            ys[n] = y
            dys[n] = dy
            errs[n] = err
            scales[n] = scale
            if sign_index < 0 and (y_prev > 0.0) != (y > 0.0):
                sign_index = n
                if stop_on_sign_change:
                    status = SIGN_CHANGE
                    break
            # renormalize to dodge under/overflow of the linear solution
            ay = abs(y)
            if ay > 1e120 or (0.0 < ay < 1e-120):
                f = 1.0 / ay
                y *= f
                dy *= f
                k1y *= f
                k1d *= f
                scale /= f
                ys[n] = y
                dys[n] = dy
                scales[n] = scale
        # simple deterministic step controller
        fac = 0.9 * err ** -0.2 if err > 1e-10 else 5.0
        if fac < 0.2:
            fac = 0.2
        elif fac > 5.0:
            fac = 5.0
        h = h * fac

    return status, n + 1, ts, ys, dys, errs, scales, sign_index
