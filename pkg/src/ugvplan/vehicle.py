"""3DoF dynamic vehicle model with pure-slip tires and load transfer.

The model has eight states -- global position (x, y), lateral speed v,
yaw rate wz, heading psi, front steering angle sa, longitudinal speed ux
and longitudinal acceleration ax -- and two controls, the steering rate
gamma and the longitudinal jerk jx.  The same equations serve as the
plant, the prediction model inside the optimal control problem, and the
state-prediction function, so there is no model mismatch by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import _kernels

STATE_NAMES = ("x", "y", "v", "wz", "psi", "sa", "ux", "ax")
CONTROL_NAMES = ("gamma", "jx")

_DEG = math.pi / 180.0


@dataclass(frozen=True)
class VehicleState:
    """One point of the 8-dimensional vehicle state."""

    x: float = 0.0
    y: float = 0.0
    v: float = 0.0
    wz: float = 0.0
    psi: float = 0.0
    sa: float = 0.0
    ux: float = 0.01
    ax: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.v, self.wz, self.psi,
                         self.sa, self.ux, self.ax])

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> "VehicleState":
        a = [float(q) for q in arr]
        if len(a) != 8:
            raise ValueError(f"expected 8 states, got {len(a)}")
        return cls(*a)

    def __post_init__(self):
        if not all(math.isfinite(getattr(self, n)) for n in STATE_NAMES):
            raise ValueError("vehicle state must be finite")


@dataclass(frozen=True)
class ControlInput:
    gamma: float = 0.0
    jx: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.gamma, self.jx])

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and math.isfinite(self.jx)):
            raise ValueError("control input must be finite")


@dataclass(frozen=True)
class TireParams:
    """Magic-formula lateral tire coefficients.

    The peak force is mu times the vertical axle load.  The coefficients
    are representative pure-slip values, configurable per scenario.
    """

    b: float = 10.0
    c: float = 1.9
    e: float = 0.97
    mu: float = 0.8

    def __post_init__(self):
        if self.b <= 0 or self.c <= 0:
            raise ValueError("tire stiffness and shape factors must be positive")
        if not 0.0 < self.mu <= 1.5:
            raise ValueError("friction coefficient must be in (0, 1.5]")


@dataclass(frozen=True)
class AccelLimitCurve:
    """Speed-dependent bounds on longitudinal acceleration.

    Piecewise-linear in speed; queries outside the sampled range clamp to
    the endpoint values.
    """

    speeds: tuple[float, ...] = (0.01, 5.0, 29.0)
    a_min: tuple[float, ...] = (-6.0, -6.0, -6.0)
    a_max: tuple[float, ...] = (3.0, 3.0, 1.0)

    def __post_init__(self):
        n = len(self.speeds)
        if len(self.a_min) != n or len(self.a_max) != n:
            raise ValueError("accel curve arrays must have equal length")
        if any(b <= a for a, b in zip(self.speeds, self.speeds[1:])):
            raise ValueError("accel curve speeds must be strictly increasing")
        if any(lo >= 0 or hi <= 0 for lo, hi in zip(self.a_min, self.a_max)):
            raise ValueError("accel curve needs a_min < 0 < a_max at every sample")

    def limits(self, ux: float | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = np.asarray(self.speeds)
        return (np.interp(ux, s, np.asarray(self.a_min)),
                np.interp(ux, s, np.asarray(self.a_max)))

    def slopes(self, ux: float | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Local d(a)/d(ux) of both limit curves (0 outside the domain)."""
        s = np.asarray(self.speeds)
        lo = np.diff(np.asarray(self.a_min)) / np.diff(s)
        hi = np.diff(np.asarray(self.a_max)) / np.diff(s)
        idx = np.clip(np.searchsorted(s, ux, side="right") - 1, 0, len(s) - 2)
        inside = (np.asarray(ux) > s[0]) & (np.asarray(ux) < s[-1])
        return (np.where(inside, lo[idx], 0.0), np.where(inside, hi[idx], 0.0))


@dataclass(frozen=True)
class TireLoads:
    """Vertical load on each wheel, in newtons."""

    rl: float
    rr: float
    fl: float
    fr: float

    def as_array(self) -> np.ndarray:
        return np.array([self.rl, self.rr, self.fl, self.fr])

    def min(self) -> float:
        return min(self.rl, self.rr, self.fl, self.fr)


@dataclass(frozen=True)
class VehicleParams:
    """HMMWV parameters: inertia, geometry, load transfer and actuator boxes."""

    m_t: float = 2689.0
    i_zz: float = 4110.0
    l_f: float = 1.58
    l_r: float = 1.72
    k_zx: float = 806.0
    k_zyr: float = 1076.0
    k_zyf: float = 675.0
    f_z_min: float = 1000.0
    tanh_a: float = 1300.0
    tanh_b: float = 100.0
    # heading box is treated as radians (the +-2*pi range only makes sense
    # in radians given initial headings near pi/2)
    psi_bounds: tuple[float, float] = (-2.0 * math.pi, 2.0 * math.pi)
    sa_bounds: tuple[float, float] = (-30.0 * _DEG, 30.0 * _DEG)
    gamma_bounds: tuple[float, float] = (-5.0 * _DEG, 5.0 * _DEG)
    jx_bounds: tuple[float, float] = (-5.0, 5.0)
    ux_bounds: tuple[float, float] = (0.01, 29.0)
    x_bounds: tuple[float, float] = (-1.0e6, 1.0e6)
    y_bounds: tuple[float, float] = (-1.0e6, 1.0e6)
    gravity: float = 9.81
    tire: TireParams = field(default_factory=TireParams)
    accel_curve: AccelLimitCurve = field(default_factory=AccelLimitCurve)

    def __post_init__(self):
        for name in ("m_t", "i_zz", "l_f", "l_r"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("psi", "sa", "gamma", "jx", "ux", "x", "y"):
            lo, hi = getattr(self, f"{name}_bounds")
            if lo > hi:
                raise ValueError(f"{name}_bounds lower exceeds upper")
        object.__setattr__(self, "_kernel_params", self._pack_kernel_params())

    def _pack_kernel_params(self) -> np.ndarray:
        return np.array([
            self.m_t, self.i_zz, self.l_f, self.l_r,
            self.k_zx, self.k_zyr, self.k_zyf, self.gravity,
            self.tire.b, self.tire.c, self.tire.e, self.tire.mu,
            self.ux_bounds[0],
        ])

    @property
    def kernel_params(self) -> np.ndarray:
        return self._kernel_params  # type: ignore[attr-defined]

    @property
    def static_axle_loads(self) -> tuple[float, float]:
        """Static (front, rear) axle loads from the weight split."""
        wheelbase = self.l_f + self.l_r
        front = self.m_t * self.l_r * self.gravity / wheelbase
        rear = self.m_t * self.l_f * self.gravity / wheelbase
        return front, rear

    def with_tire(self, tire: TireParams) -> "VehicleParams":
        return replace(self, tire=tire)


def _require_speed(ux: float, params: VehicleParams) -> None:
    if ux < params.ux_bounds[0]:
        raise ValueError(
            f"longitudinal speed {ux} below the model floor {params.ux_bounds[0]}"
        )


def slip_angles(state: VehicleState, params: VehicleParams) -> tuple[float, float]:
    """Front and rear slip angles from the axle-velocity geometry."""
    _require_speed(state.ux, params)
    af = math.atan((state.v + params.l_f * state.wz) / state.ux) - state.sa
    ar = math.atan((state.v - params.l_r * state.wz) / state.ux)
    return af, ar


def lateral_tire_forces(
    alpha_f: float,
    alpha_r: float,
    axle_loads: tuple[float, float],
    tire: TireParams,
) -> tuple[float, float]:
    """Per-axle lateral forces from the magic formula.

    axle_loads is (front, rear) in newtons; positive slip gives a negative
    restoring force.
    """
    fzf, fzr = axle_loads
    if fzf < 0 or fzr < 0:
        raise ValueError("axle loads must be nonnegative")

    def one(alpha: float, fz: float) -> float:
        t = tire.b * alpha
        phi = t - tire.e * (t - math.atan(t))
        return -tire.mu * fz * math.sin(tire.c * math.atan(phi))

    return one(alpha_f, fzf), one(alpha_r, fzr)


def axle_loads(state: VehicleState, params: VehicleParams) -> tuple[float, float]:
    """(front, rear) axle loads including longitudinal transfer.

    The lateral-split terms cancel in each axle sum, so these do not
    depend on the tire forces.
    """
    f0, r0 = params.static_axle_loads
    shift = params.k_zx * (state.ax - state.v * state.wz)
    return f0 - shift, r0 + shift


def vertical_tire_loads(
    state: VehicleState,
    f_yf: float,
    f_yr: float,
    params: VehicleParams,
) -> TireLoads:
    """Split the axle loads into the four wheels using the lateral transfer."""
    fzf_axle, fzr_axle = axle_loads(state, params)
    lat = (f_yf + f_yr) / params.m_t
    return TireLoads(
        rl=0.5 * fzr_axle - params.k_zyr * lat,
        rr=0.5 * fzr_axle + params.k_zyr * lat,
        fl=0.5 * fzf_axle - params.k_zyf * lat,
        fr=0.5 * fzf_axle + params.k_zyf * lat,
    )


def tire_loads(state: VehicleState, params: VehicleParams) -> TireLoads:
    """Wheel loads resolved with the single load/force pass."""
    loads = _kernels.wheel_loads_batch(
        state.as_array()[None, :], params.kernel_params
    )[0]
    return TireLoads(*loads)


def dynamics(
    state: VehicleState, control: ControlInput, params: VehicleParams
) -> np.ndarray:
    """Time derivative of the state vector."""
    _require_speed(state.ux, params)
    return _kernels.dynamics_batch(
        state.as_array()[None, :], control.as_array()[None, :],
        params.kernel_params,
    )[0]


def dynamics_jacobian(
    state: VehicleState, control: ControlInput, params: VehicleParams
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians of the dynamics wrt state (8x8) and control (8x2)."""
    _require_speed(state.ux, params)
    a, b = _kernels.dynamics_jacobian_batch(
        state.as_array()[None, :], control.as_array()[None, :],
        params.kernel_params,
    )
    return a[0], b[0]


def accel_limits(ux: float, curve: AccelLimitCurve) -> tuple[float, float]:
    """(a_min, a_max) at the given speed; clamps outside the curve domain."""
    lo, hi = curve.limits(ux)
    return float(lo), float(hi)


class PiecewiseLinearControl:
    """Control signal interpolated linearly between sample times.

    Queries outside the sampled span clamp to the endpoint values, which
    lets a horizon keep executing a trajectory whose optimal duration was
    shorter than the execution horizon.
    """

    def __init__(self, times: Sequence[float], values: Sequence[Sequence[float]]):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float).reshape(len(self.times), -1)
        if self.times.ndim != 1 or self.times.size < 1:
            raise ValueError("need at least one sample time")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("sample times must be nondecreasing")

    def __call__(self, t: float) -> np.ndarray:
        return np.array([
            np.interp(t, self.times, self.values[:, j])
            for j in range(self.values.shape[1])
        ])

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])


ControlSignal = Callable[[float], Sequence[float]]


def constant_control(gamma: float = 0.0, jx: float = 0.0) -> PiecewiseLinearControl:
    """The straight-driving policy: steady steering rate and jerk (zero by default)."""
    return PiecewiseLinearControl([0.0, 1.0e9], [[gamma, jx], [gamma, jx]])


def integrate_trace(
    state: VehicleState,
    control_signal: ControlSignal,
    t0: float,
    t1: float,
    step: float,
    params: VehicleParams,
    derivative: Callable[[np.ndarray, np.ndarray, float], np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-step RK4 trace over [t0, t1]; the last step lands exactly on t1.

    Returns (times, states) including both endpoints.  A custom
    ``derivative(state, control, t)`` bypasses the vehicle model (used by
    convergence and geometry tests).
    """
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    if step <= 0:
        raise ValueError("step must be positive")

    if derivative is None and isinstance(control_signal, PiecewiseLinearControl):
        return _kernels.rk4_pwl(
            state.as_array(), params.kernel_params, t0, t1, step,
            control_signal.times, control_signal.values,
        )

    p = params.kernel_params

    def f(x: np.ndarray, u: np.ndarray, t: float) -> np.ndarray:
        if derivative is not None:
            return np.asarray(derivative(x, u, t), dtype=float)
        return _kernels.dynamics_batch(x[None, :], u[None, :], p)[0]

    span = t1 - t0
    n = max(1, int(np.ceil(span / step - 1e-12)))
    times = np.empty(n + 1)
    times[:-1] = t0 + step * np.arange(n)
    times[-1] = t1
    states = np.empty((n + 1, 8))
    states[0] = state.as_array()
    x = states[0].copy()
    for i in range(n):
        ta, tb = times[i], times[i + 1]
        h = tb - ta
        u1 = np.asarray(control_signal(ta), dtype=float)
        um = np.asarray(control_signal(ta + 0.5 * h), dtype=float)
        u2 = np.asarray(control_signal(tb), dtype=float)
        k1 = f(x, u1, ta)
        k2 = f(x + 0.5 * h * k1, um, ta + 0.5 * h)
        k3 = f(x + 0.5 * h * k2, um, ta + 0.5 * h)
        k4 = f(x + h * k3, u2, tb)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        states[i + 1] = x
    return times, states


def integrate(
    state: VehicleState,
    control_signal: ControlSignal,
    t0: float,
    t1: float,
    step: float,
    params: VehicleParams,
    derivative: Callable[[np.ndarray, np.ndarray, float], np.ndarray] | None = None,
) -> VehicleState:
    """Final state of the RK4 trace (see integrate_trace)."""
    _, states = integrate_trace(state, control_signal, t0, t1, step, params,
                                derivative=derivative)
    return VehicleState.from_array(states[-1])
