"""Single-track (bicycle) lateral dynamics with a linear tire model.

State is (X, Y, theta, v_y, r): planar position of the vehicle centre, yaw
angle, lateral velocity and yaw rate. Longitudinal speed v_x is held constant
and longitudinal tire forces are zero, so the state derivative is

    X'   = v_x cos(theta) - v_y sin(theta)
    Y'   = v_x sin(theta) + v_y cos(theta)
    theta' = r
    v_y' = (F_yf cos(delta) + F_yr) / m - v_x r
    r'   = (L_f F_yf cos(delta) - L_r F_yr) / I_z

with lateral forces F_yf = -C_af * a_f, F_yr = -C_ar * a_r from the slip
angles a_f = (v_y + L_f r)/v_x - delta and a_r = (v_y - L_r r)/v_x.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Point2

__all__ = [
    "VehicleState",
    "VehicleParams",
    "SlipAngles",
    "WheelForces",
    "StateDerivative",
    "DEFAULT_PARAMS",
    "wrap_angle",
    "slip_angles",
    "tire_forces",
    "state_derivative",
    "derivative_array",
    "steer_toward",
]


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


@dataclass(frozen=True)
class VehicleState:
    """Pose, lateral velocity and yaw rate; theta stored wrapped to (-pi, pi]."""

    x: float
    y: float
    theta: float
    v_y: float
    r: float

    def __post_init__(self):
        for name in ("x", "y", "theta", "v_y", "r"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"VehicleState.{name} must be finite")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def position(self) -> Point2:
        return Point2(self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.v_y, self.r])

    @staticmethod
    def from_array(y: np.ndarray) -> "VehicleState":
        return VehicleState(float(y[0]), float(y[1]), float(y[2]), float(y[3]), float(y[4]))


@dataclass(frozen=True)
class StateDerivative:
    """Time derivative of VehicleState; same five fields, per-second units."""

    x: float
    y: float
    theta: float
    v_y: float
    r: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.v_y, self.r])


@dataclass(frozen=True)
class VehicleParams:
    """Mass, yaw inertia, axle distances, cornering stiffnesses and limits.

    m               vehicle mass [kg]
    i_z             yaw moment of inertia [kg m^2]
    l_f, l_r        centre-of-mass to front/rear axle [m]
    c_alpha_f/_r    front/rear cornering stiffness [N/rad]
    v_x             constant longitudinal speed [m/s]
    delta_max       steering limit [rad], in (0, pi/2]
    footprint_radius  disc radius used for all collision checks [m]
    """

    m: float = 1500.0
    i_z: float = 2500.0
    l_f: float = 1.2
    l_r: float = 1.6
    c_alpha_f: float = 19000.0
    c_alpha_r: float = 19000.0
    v_x: float = 15.0
    delta_max: float = math.pi / 4
    footprint_radius: float = 1.5

    def __post_init__(self):
        for name in (
            "m",
            "i_z",
            "l_f",
            "l_r",
            "c_alpha_f",
            "c_alpha_r",
            "v_x",
            "delta_max",
            "footprint_radius",
        ):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"VehicleParams.{name} must be strictly positive, got {v!r}")
        if self.delta_max > math.pi / 2:
            raise ValueError("delta_max must lie in (0, pi/2]")


DEFAULT_PARAMS = VehicleParams()


@dataclass(frozen=True)
class SlipAngles:
    front: float
    rear: float


@dataclass(frozen=True)
class WheelForces:
    f_yf: float
    f_yr: float
    f_xf: float = 0.0  # zero under the constant-speed assumption
    f_xr: float = 0.0


def slip_angles(state: VehicleState, params: VehicleParams, delta: float) -> SlipAngles:
    """Front and rear tire slip angles for the given steer angle."""
    front = (state.v_y + params.l_f * state.r) / params.v_x - delta
    rear = (state.v_y - params.l_r * state.r) / params.v_x
    return SlipAngles(front, rear)


def tire_forces(slip: SlipAngles, params: VehicleParams) -> WheelForces:
    """Linear tire model: lateral force proportional to negative slip angle."""
    return WheelForces(-params.c_alpha_f * slip.front, -params.c_alpha_r * slip.rear)


def derivative_array(y: np.ndarray, delta: float, params: VehicleParams) -> np.ndarray:
    """State derivative on a raw 5-vector (x, y, theta, v_y, r). Hot path."""
    theta = y[2]
    v_y = y[3]
    r = y[4]
    vx = params.v_x
    alpha_f = (v_y + params.l_f * r) / vx - delta
    alpha_r = (v_y - params.l_r * r) / vx
    f_yf = -params.c_alpha_f * alpha_f
    f_yr = -params.c_alpha_r * alpha_r
    cos_d = math.cos(delta)
    sin_t = math.sin(theta)
    cos_t = math.cos(theta)
    return np.array(
        [
            vx * cos_t - v_y * sin_t,
            vx * sin_t + v_y * cos_t,
            r,
            (f_yf * cos_d + f_yr) / params.m - vx * r,
            (params.l_f * f_yf * cos_d - params.l_r * f_yr) / params.i_z,
        ]
    )


def state_derivative(state: VehicleState, delta: float, params: VehicleParams) -> StateDerivative:
    """Bicycle-model state derivative for steer angle delta."""
    d = derivative_array(state.as_array(), delta, params)
    return StateDerivative(float(d[0]), float(d[1]), float(d[2]), float(d[3]), float(d[4]))


def steer_toward(state: VehicleState, target: Point2, params: VehicleParams, gain: float = 1.0) -> float:
    """Saturated proportional heading controller toward a target point.

    Returns gain * (bearing error) clamped to [-delta_max, +delta_max].
    """
    bearing = math.atan2(target.y - state.y, target.x - state.x)
    err = wrap_angle(bearing - state.theta)
    return max(-params.delta_max, min(params.delta_max, gain * err))
