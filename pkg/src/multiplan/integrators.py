"""ODE steppers for the vehicle model and the error/stability benchmark.

Eight schemes are provided: explicit Euler, implicit Euler, trapezoidal,
Runge-Kutta of orders 3, 4 and 6 (Butcher's 7-stage tableau), the adaptive
Dormand-Prince 5(4) pair, and 4th-order Adams-Bashforth bootstrapped by RK4.
All steppers are generic over the derivative callback f(t, y) -> dy/dt,
so they can be exercised on scalar test equations as well as the bicycle
model. The benchmark compares every scheme against a tight-tolerance
Dormand-Prince reference on a constant-steer turn and reports a normalized
sup-norm error, wall time and a stability flag per (method, step) cell.
"""
from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .dynamics import VehicleParams, VehicleState, derivative_array

__all__ = [
    "IntegratorKind",
    "Trajectory",
    "BenchRow",
    "ImplicitSolveError",
    "DivergenceError",
    "step",
    "step_array",
    "integrate",
    "bench_integrators",
    "fit_convergence_order",
    "write_bench_csv",
    "integration_stress_params",
    "BENCH_CSV_HEADER",
]


class IntegratorKind(str, Enum):
    EULER_FORWARD = "euler_forward"
    EULER_BACKWARD = "euler_backward"
    TRAPEZOIDAL = "trapezoidal"
    RK3 = "rk3"
    RK4 = "rk4"
    RK6 = "rk6"
    DORMAND_PRINCE = "dormand_prince"
    ADAMS_BASHFORTH4 = "adams_bashforth4"


class ImplicitSolveError(RuntimeError):
    """Fixed-point iteration for an implicit step failed to converge."""


class DivergenceError(RuntimeError):
    """A step produced a non-finite state."""


# Damped fixed-point iteration for the implicit schemes. Relaxation factors
# are tried in order (plain iteration diverges once h * |df/dy| exceeds 1);
# each attempt warm-starts from the best iterate seen so far, otherwise the
# damping that tames stiff components starves the non-stiff ones.
_FP_TOL = 1e-10
_FP_MAX_ITER = 50
_FP_RELAXATIONS = (1.0, 0.5, 0.25, 0.125)


def _solve_fixed_point(g: Callable[[np.ndarray], np.ndarray], y0: np.ndarray) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(y0))))
    tol = _FP_TOL * scale
    best_y = y0.copy()
    best_defect = math.inf
    for omega in _FP_RELAXATIONS:
        y = best_y
        start_defect = None
        for _ in range(_FP_MAX_ITER):
            try:
                gy = g(y)
            except (ValueError, OverflowError, FloatingPointError):
                break
            if not np.all(np.isfinite(gy)):
                break
            defect = float(np.max(np.abs(gy - y)))
            if defect < best_defect:
                best_defect, best_y = defect, gy
            if defect <= tol:
                return gy
            if start_defect is None:
                start_defect = defect
            elif defect > 10.0 * start_defect:
                break  # this relaxation is diverging; try a stronger one
            y = y + omega * (gy - y)
    raise ImplicitSolveError("implicit step did not converge; step rejected")


# Butcher tableau for the 7-stage 6th-order Runge-Kutta scheme.
_RK6_A = (
    (),
    (1 / 3,),
    (0.0, 2 / 3),
    (1 / 12, 1 / 3, -1 / 12),
    (-1 / 16, 9 / 8, -3 / 16, -3 / 8),
    (0.0, 9 / 8, -3 / 8, -3 / 4, 1 / 2),
    (9 / 44, -9 / 11, 63 / 44, 18 / 11, 0.0, -16 / 11),
)
_RK6_B = (11 / 120, 0.0, 27 / 40, 27 / 40, -4 / 15, -4 / 15, 11 / 120)
_RK6_C = (0.0, 1 / 3, 2 / 3, 1 / 3, 1 / 2, 1 / 2, 1.0)

# Dormand-Prince 5(4) pair.
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)

_AB4_COEFFS = (55.0, -59.0, 37.0, -9.0)  # over f_n, f_{n-1}, f_{n-2}, f_{n-3}


def _explicit_rk(a, b, c, f, t, y, h):
    k = []
    for i in range(len(b)):
        yi = y
        for j, aij in enumerate(a[i]):
            if aij != 0.0:
                yi = yi + (h * aij) * k[j]
        k.append(f(t + c[i] * h, yi))
    out = y.astype(float, copy=True)
    for bi, ki in zip(b, k):
        if bi != 0.0:
            out = out + (h * bi) * ki
    return out


def step_array(
    kind: IntegratorKind,
    f: Callable[[float, np.ndarray], np.ndarray],
    t: float,
    y: np.ndarray,
    h: float,
    history: Sequence[np.ndarray] | None = None,
) -> np.ndarray:
    """One step of the named scheme from (t, y) with step size h.

    Adams-Bashforth requires `history`, the derivative values at the three
    previous grid points ordered oldest first. Dormand-Prince here takes a
    plain (non-adaptive) 5th-order step; adaptivity lives in integrate().
    """
    if h <= 0.0:
        raise ValueError("step size must be positive")
    if kind is IntegratorKind.EULER_FORWARD:
        return y + h * f(t, y)
    if kind is IntegratorKind.EULER_BACKWARD:
        return _solve_fixed_point(lambda u: y + h * f(t + h, u), y)
    if kind is IntegratorKind.TRAPEZOIDAL:
        f0 = f(t, y)
        return _solve_fixed_point(lambda u: y + (h / 2.0) * (f0 + f(t + h, u)), y)
    if kind is IntegratorKind.RK3:
        k1 = f(t, y)
        k2 = f(t + h / 2.0, y + (h / 2.0) * k1)
        k3 = f(t + h, y - h * k1 + 2.0 * h * k2)
        return y + (h / 6.0) * (k1 + 4.0 * k2 + k3)
    if kind is IntegratorKind.RK4:
        k1 = f(t, y)
        k2 = f(t + h / 2.0, y + (h / 2.0) * k1)
        k3 = f(t + h / 2.0, y + (h / 2.0) * k2)
        k4 = f(t + h, y + h * k3)
        return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if kind is IntegratorKind.RK6:
        return _explicit_rk(_RK6_A, _RK6_B, _RK6_C, f, t, y, h)
    if kind is IntegratorKind.DORMAND_PRINCE:
        return _explicit_rk(_DP_A, _DP_B5[:6], _DP_C[:6], f, t, y, h)
    if kind is IntegratorKind.ADAMS_BASHFORTH4:
        if history is None or len(history) != 3:
            raise ValueError("adams_bashforth4 needs the 3 previous derivative values")
        fn = f(t, y)
        c0, c1, c2, c3 = _AB4_COEFFS
        return y + (h / 24.0) * (c0 * fn + c1 * history[2] + c2 * history[1] + c3 * history[0])
    raise ValueError(f"unknown integrator kind {kind!r}")


def step(
    kind: IntegratorKind,
    state: VehicleState,
    delta: float,
    params: VehicleParams,
    h: float,
    history: Sequence[np.ndarray] | None = None,
) -> VehicleState:
    """One integration step of the bicycle model at constant steer angle."""

    def f(t, y):
        return derivative_array(y, delta, params)

    y1 = step_array(kind, f, 0.0, state.as_array(), h, history)
    if not np.all(np.isfinite(y1)):
        raise DivergenceError("integration step produced a non-finite state")
    return VehicleState.from_array(y1)


@dataclass
class Trajectory:
    """Time-stamped states of one integration run.

    times are strictly increasing starting at 0; ys holds one state row per
    time (theta unwrapped); steer_angles the steer input at each time. If the
    integration blew up, `diverged` is set and the arrays stop at the first
    non-finite state.
    """

    times: np.ndarray
    ys: np.ndarray
    steer_angles: np.ndarray
    diverged: bool = False
    note: str = ""

    @property
    def positions(self) -> np.ndarray:
        return self.ys[:, :2]

    @property
    def states(self) -> list:
        return [VehicleState.from_array(row) for row in self.ys if np.all(np.isfinite(row))]

    def final_state(self) -> VehicleState:
        return VehicleState.from_array(self.ys[-1])

    def arc_length(self) -> float:
        d = np.diff(self.positions, axis=0)
        return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


def _time_grid(horizon: float, h: float) -> np.ndarray:
    if horizon <= 0.0 or h <= 0.0 or h > horizon * (1 + 1e-12):
        raise ValueError("need horizon > 0 and 0 < h <= horizon")
    n = int(math.floor(horizon / h + 1e-9))
    times = h * np.arange(n + 1)
    if horizon - times[-1] > 1e-9 * max(1.0, horizon):
        times = np.append(times, horizon)
    else:
        times[-1] = horizon
    return times


def integrate(
    kind: IntegratorKind,
    initial: VehicleState,
    steer_schedule: Callable[[float], float],
    params: VehicleParams,
    horizon: float,
    h: float,
) -> Trajectory:
    """Integrate the bicycle model over [0, horizon] on a fixed grid.

    Fixed-step schemes step with h (last partial step shortened; for
    Adams-Bashforth the bootstrap and any partial step use RK4).
    Dormand-Prince adapts its internal step to tolerance 1e-9 and lands
    exactly on the requested grid.
    """
    times = _time_grid(horizon, h)

    def f(t, y):
        return derivative_array(y, steer_schedule(t), params)

    if kind is IntegratorKind.DORMAND_PRINCE:
        ys, ok = _dp_adaptive(f, initial.as_array(), times, rtol=1e-9, atol=1e-9)
        steer = np.array([steer_schedule(t) for t in times[: len(ys)]])
        return Trajectory(times[: len(ys)], ys, steer, diverged=not ok,
                          note="" if ok else "adaptive step underflow")
    return _integrate_fixed(kind, f, initial.as_array(), times, steer_schedule)


def _integrate_fixed(kind, f, y0, times, steer_schedule) -> Trajectory:
    ys = np.empty((len(times), len(y0)))
    ys[0] = y0
    fhist: list[np.ndarray] = []
    ab4 = kind is IntegratorKind.ADAMS_BASHFORTH4
    nominal_h = times[1] - times[0] if len(times) > 1 else 0.0
    diverged = False
    note = ""
    i = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(len(times) - 1):
            t, hi = times[i], times[i + 1] - times[i]
            y = ys[i]
            partial = hi < nominal_h * (1 - 1e-9)
            try:
                if ab4:
                    fn = f(t, y)
                    if len(fhist) < 3 or partial:
                        y1 = step_array(IntegratorKind.RK4, f, t, y, hi)
                    else:
                        y1 = step_array(kind, f, t, y, hi, history=fhist[-3:])
                    fhist.append(fn)
                else:
                    y1 = step_array(kind, f, t, y, hi)
            except (ImplicitSolveError, ValueError, OverflowError, FloatingPointError) as exc:
                diverged = True
                note = str(exc)
                break
            ys[i + 1] = y1
            if not np.all(np.isfinite(y1)):
                diverged = True
                note = "non-finite state"
                i += 1
                break
        else:
            i = len(times) - 1
    n = i + 1
    steer = np.array([steer_schedule(t) for t in times[:n]])
    return Trajectory(times[:n].copy(), ys[:n], steer, diverged=diverged, note=note)


def _dp_adaptive(f, y0, out_times, rtol, atol, h0=None):
    """Adaptive Dormand-Prince landing exactly on out_times.

    Returns (ys, ok); ys may be shorter than out_times when the step size
    underflows or the state stops being finite.
    """
    ys = np.empty((len(out_times), len(y0)))
    ys[0] = y0
    t = float(out_times[0])
    y = y0.astype(float)
    span = float(out_times[-1] - out_times[0])
    h = h0 if h0 is not None else span / 100.0
    h_min = 1e-14 * max(1.0, span)
    with np.errstate(over="ignore", invalid="ignore"):
        for idx in range(1, len(out_times)):
            t_target = float(out_times[idx])
            while t < t_target - 1e-13 * max(1.0, t_target):
                h_try = min(h, t_target - t)
                try:
                    k = []
                    for i in range(7):
                        yi = y
                        for j, aij in enumerate(_DP_A[i]):
                            if aij != 0.0:
                                yi = yi + (h_try * aij) * k[j]
                        k.append(f(t + _DP_C[i] * h_try, yi))
                except (ValueError, OverflowError, FloatingPointError):
                    return ys[:idx], False
                y5 = y.copy()
                err = np.zeros_like(y)
                for b5, b4, ki in zip(_DP_B5, _DP_B4, k):
                    y5 = y5 + (h_try * b5) * ki
                    err = err + (h_try * (b5 - b4)) * ki
                if not np.all(np.isfinite(y5)):
                    return ys[:idx], False
                scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
                ratio = float(np.sqrt(np.mean((err / scale) ** 2)))
                if ratio <= 1.0:
                    t += h_try
                    y = y5
                    grow = 0.9 * ratio ** -0.2 if ratio > 0.0 else 5.0
                    h = h_try * min(5.0, max(0.2, grow))
                else:
                    h = h_try * max(0.2, 0.9 * ratio ** -0.2)
                if h < h_min:
                    return ys[:idx], False
            ys[idx] = y
    return ys, True


# ---------------------------------------------------------------------------
# Benchmark harness
# ---------------------------------------------------------------------------

BENCH_CSV_HEADER = "method,step_size,max_error,wall_time_s,stable"

# How far a scheme's yaw rate may wander past the reference before the run is
# declared unstable.
_STABILITY_FACTOR = 10.0


@dataclass(frozen=True)
class BenchRow:
    method: IntegratorKind
    step_size: float
    max_error: float
    wall_time_s: float
    stable: bool


def integration_stress_params() -> VehicleParams:
    """A stiff, highly responsive test vehicle for the stability benchmark.

    Its lateral eigenvalues at full steer sit near -26 and -21 per second, so
    a 0.1 s step lands between the 3rd- and 4th-order Runge-Kutta stability
    boundaries: explicit Euler, RK3 and Adams-Bashforth amplify while RK4 and
    the implicit schemes stay bounded.
    """
    return VehicleParams(
        m=250.0,
        i_z=600.0,
        l_f=1.2,
        l_r=1.6,
        c_alpha_f=80000.0,
        c_alpha_r=42400.0,
        v_x=15.0,
    )


def _bench_initial() -> VehicleState:
    return VehicleState(0.0, 0.0, 0.0, 0.0, 0.0)


def reference_trajectory(params: VehicleParams, times: np.ndarray, delta: float,
                         tol: float = 1e-12) -> np.ndarray:
    """Tight-tolerance Dormand-Prince solution sampled at the given times."""

    def f(t, y):
        return derivative_array(y, delta, params)

    ys, ok = _dp_adaptive(f, _bench_initial().as_array(), times, rtol=tol, atol=tol)
    if not ok:
        raise DivergenceError("reference integration failed")
    return ys


def bench_integrators(
    params: VehicleParams,
    step_sizes: Sequence[float],
    horizon: float,
    delta: float = math.pi / 4,
    reference_tol: float = 1e-12,
    kinds: Sequence[IntegratorKind] | None = None,
) -> list[BenchRow]:
    """Error/time/stability table over every (method, step size) cell.

    The test case is a constant-steer turn from rest at the parameter set's
    longitudinal speed. Errors are sup-norm differences from the
    Dormand-Prince reference, normalized per component by the reference's
    range over the horizon. The Dormand-Prince row runs at the reference
    tolerance itself, so its error is zero by construction.
    """
    if len(step_sizes) == 0:
        raise ValueError("need at least one step size")
    kinds = tuple(kinds) if kinds is not None else tuple(IntegratorKind)
    schedule = lambda t: delta  # noqa: E731 - constant steer
    rows = []
    for h in step_sizes:
        times = _time_grid(horizon, h)
        ref = reference_trajectory(params, times, delta, tol=reference_tol)
        ref_range = np.maximum(ref.max(axis=0) - ref.min(axis=0), 1e-12)
        ref_max_r = max(float(np.max(np.abs(ref[:, 4]))), 1e-12)
        for kind in kinds:
            t0 = _time.perf_counter()
            if kind is IntegratorKind.DORMAND_PRINCE:
                def f(t, y, _d=delta):
                    return derivative_array(y, _d, params)

                ys, ok = _dp_adaptive(f, _bench_initial().as_array(), times,
                                      rtol=reference_tol, atol=reference_tol)
                traj = Trajectory(times[: len(ys)], ys,
                                  np.full(len(ys), delta), diverged=not ok)
            else:
                traj = integrate(kind, _bench_initial(), schedule, params, horizon, h)
            wall = _time.perf_counter() - t0
            if traj.diverged or len(traj.times) < len(times):
                rows.append(BenchRow(kind, float(h), math.inf, wall, False))
                continue
            err = float(np.max(np.max(np.abs(traj.ys - ref), axis=0) / ref_range))
            stable = bool(np.max(np.abs(traj.ys[:, 4])) <= _STABILITY_FACTOR * ref_max_r)
            rows.append(BenchRow(kind, float(h), err, wall, stable))
    return rows


def fit_convergence_order(rows: Sequence[BenchRow], kind: IntegratorKind) -> float:
    """Least-squares slope of log(error) against log(step) for one method."""
    pts = [
        (r.step_size, r.max_error)
        for r in rows
        if r.method == kind and r.stable and math.isfinite(r.max_error) and r.max_error > 0.0
    ]
    if len(pts) < 2:
        raise ValueError(f"not enough stable rows to fit an order for {kind.value}")
    hs = np.log([p[0] for p in pts])
    errs = np.log([p[1] for p in pts])
    slope, _ = np.polyfit(hs, errs, 1)
    return float(slope)


def write_bench_csv(rows: Sequence[BenchRow], path) -> None:
    lines = [BENCH_CSV_HEADER]
    for r in rows:
        err = "inf" if math.isinf(r.max_error) else repr(r.max_error)
        lines.append(
            f"{r.method.value},{r.step_size!r},{err},{r.wall_time_s!r},{'true' if r.stable else 'false'}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
