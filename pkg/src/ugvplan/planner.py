"""Receding-horizon planner assembly: cost, constraints, and one-step solve.

Builds the free-final-time optimal control problem for a single horizon:
minimum-time and goal-attraction terms, control-effort and rear-load
running costs, elliptical obstacle keep-out constraints with a
time-growing safety margin, sensing-disc limits, speed-dependent
acceleration bounds, minimum wheel loads, and soft/hard initial and
terminal condition machinery.  Four planner variants differ only in the
time weight, the control-effort weight, and whether obstacle motion is
propagated over the horizon.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels, nlp, ocp
from .vehicle import VehicleParams, VehicleState

log = logging.getLogger(__name__)

N_STATES = 8
N_CONTROLS = 2

# beyond-range sentinel for the terminal position tolerance
RELAXED_SIGMA = 1.0e6


@dataclass(frozen=True)
class PlannerConfig:
    """All planner weights, tolerances, horizons, and flags.

    Defaults are the baseline planner's values; the per-state slack
    weights multiply the common factor w_ic.
    """

    t_ex: float = 0.5
    n_intervals: int = 10
    l_range: float = 50.0
    kappa: float = 5.0
    sm1: float = 2.5
    sm2: float = 4.0
    epsilon: float = 0.01
    # cost weights
    w_t: float = 0.0
    w_g: float = 10.0
    w_ce: float = 0.0
    w_sa: float = 0.1
    w_sr: float = 1.0
    w_ax: float = 0.1
    w_jx: float = 0.01
    w_fz: float = 0.5
    w_haf: float = 1.0
    # slack weights
    w_ic: float = 100.0
    w_x0: float = 1.0
    w_y0: float = 1.0
    w_v0: float = 10.0
    w_r0: float = 10.0
    w_psi0: float = 10.0
    w_sa0: float = 2.0
    w_ux0: float = 0.1
    w_ax0: float = 0.1
    w_xf: float = 100.0
    x0_tol: tuple[float, ...] = (0.5, 0.5, 0.5, 0.005, 0.5, 0.25, 0.5, 0.5)
    # per-axis terminal box, used only when the goal carries no tolerance
    xf_tol: tuple[float, float] = (5.0, 5.0)
    moving_obstacle_avoidance: bool = False
    t_f_min: float = 0.1
    t_f_max: float = 30.0
    u0_speed: float = 17.0

    def __post_init__(self):
        if self.t_ex <= 0:
            raise ValueError("t_ex must be positive")
        if self.n_intervals < 2:
            raise ValueError("need at least 2 collocation intervals")
        if not 0.0 <= self.sm1 <= self.sm2:
            raise ValueError("need 0 <= sm1 <= sm2")
        if len(self.x0_tol) != N_STATES:
            raise ValueError("x0_tol must have 8 entries")
        weights = [getattr(self, w) for w in (
            "w_t", "w_g", "w_ce", "w_sa", "w_sr", "w_ax", "w_jx", "w_fz",
            "w_haf", "w_ic", "w_xf")]
        if any(w < 0 for w in weights):
            raise ValueError("weights must be nonnegative")
        if not 0 < self.t_f_min <= self.t_f_max:
            raise ValueError("need 0 < t_f_min <= t_f_max")

    @property
    def initial_slack_weights(self) -> np.ndarray:
        per_state = np.array([self.w_x0, self.w_y0, self.w_v0, self.w_r0,
                              self.w_psi0, self.w_sa0, self.w_ux0, self.w_ax0])
        return self.w_ic * per_state


class PlannerVariant(enum.Enum):
    P_A = "A"
    P_B = "B"
    P_C = "C"
    P_D = "D"

    @classmethod
    def from_str(cls, s: str) -> "PlannerVariant":
        key = s.strip().upper().removeprefix("P_").removeprefix("P")
        for v in cls:
            if v.value == key:
                return v
        raise ValueError(f"unknown planner variant {s!r}")


def apply_variant(config: PlannerConfig, variant: PlannerVariant) -> PlannerConfig:
    """Fold the variant deltas into a baseline config."""
    if variant is PlannerVariant.P_A:
        return config
    if variant is PlannerVariant.P_B:
        return replace(config, w_t=100.0)
    if variant is PlannerVariant.P_C:
        return replace(config, w_t=100.0, w_ce=1.0)
    return replace(config, w_t=100.0, w_ce=1.0, moving_obstacle_avoidance=True)


@dataclass(frozen=True)
class Obstacle:
    """Ellipse with linear motion: semi-axes a, b and velocity (vx, vy)."""

    a: float
    b: float
    x0: float
    y0: float
    vx: float = 0.0
    vy: float = 0.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("obstacle semi-axes must be positive")

    def position(self, t: float) -> tuple[float, float]:
        return self.x0 + self.vx * t, self.y0 + self.vy * t

    def at_time(self, t: float) -> "Obstacle":
        x, y = self.position(t)
        return replace(self, x0=x, y0=y)


@dataclass(frozen=True)
class GoalSpec:
    x: float
    y: float
    psi: float = math.pi / 2
    sigma: float = 10.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("goal tolerance must be positive")

    def distance_to(self, x: float, y: float) -> float:
        return math.hypot(x - self.x, y - self.y)


@dataclass(frozen=True)
class Environment:
    obstacles: tuple[Obstacle, ...] = ()
    goal: GoalSpec = field(default_factory=lambda: GoalSpec(0.0, 0.0))
    x_corridor: tuple[float, float] | None = None
    planner_overrides: dict = field(default_factory=dict)
    name: str = ""

    def observed_at(self, t: float) -> "Environment":
        """Environment with obstacle positions advanced to time t."""
        return replace(self, obstacles=tuple(o.at_time(t) for o in self.obstacles))


def safety_margin(t: float, t_f: float, sm1: float, sm2: float) -> float:
    """Keep-out margin growing linearly from sm1 at t=0 to sm2 at t=t_f."""
    if t_f <= 0:
        raise ValueError("t_f must be positive")
    if not 0 <= t <= t_f:
        raise ValueError("need 0 <= t <= t_f")
    return sm1 + (sm2 - sm1) * t / t_f


def obstacle_constraint(
    vehicle_xy: tuple[float, float],
    obstacle: Obstacle,
    t: float,
    t_f: float,
    config: PlannerConfig,
    moving: bool,
) -> float:
    """Ellipse keep-out expression; values above 1 are collision-free.

    With motion propagation the center advances linearly in t; otherwise
    it stays at the obstacle's held position.
    """
    sm = safety_margin(t, t_f, config.sm1, config.sm2)
    cx, cy = obstacle.position(t) if moving else (obstacle.x0, obstacle.y0)
    ex = (vehicle_xy[0] - cx) / (obstacle.a + sm)
    ey = (vehicle_xy[1] - cy) / (obstacle.b + sm)
    return ex * ex + ey * ey


@dataclass(frozen=True)
class GoalMode:
    """Effective goal-handling parameters after the range test."""

    within_range: bool
    w_g: float
    sigma_eff: float
    p1: float
    p2: float
    w_sf: tuple[float, float]


def goal_mode(x0p: np.ndarray, goal: GoalSpec, config: PlannerConfig) -> GoalMode:
    """Switch the goal machinery on whether the goal is inside the sensing disc.

    The boundary case (distance exactly equal to the range) counts as
    within range.
    """
    dist = goal.distance_to(float(x0p[0]), float(x0p[1]))
    if dist <= config.l_range:
        return GoalMode(True, 0.0, goal.sigma, 1e-6, -1e-6,
                        (config.w_xf, config.w_xf))
    p1 = (config.l_range + config.kappa) ** 2
    p2 = (config.l_range - config.kappa) ** 2
    return GoalMode(False, config.w_g, RELAXED_SIGMA, p1, p2, (0.0, 0.0))


# ---------------------------------------------------------------------------
# cost assembly
# ---------------------------------------------------------------------------

def _time_mayer(config: PlannerConfig, horizon_start: float) -> ocp.MayerTerm:
    def fn(x0, xf, tf_abs):
        return tf_abs - horizon_start

    def jac(x0, xf, t_horizon):
        return np.zeros(N_STATES), np.zeros(N_STATES), 1.0

    return ocp.MayerTerm(fn=fn, weight=config.w_t, name="time", jac=jac)


def _goal_distance_mayer(config: PlannerConfig, goal: GoalSpec,
                         w_g: float) -> ocp.MayerTerm:
    eps = config.epsilon
    gx, gy = goal.x, goal.y

    def fn(x0, xf, tf_abs):
        num = (xf[0] - gx) ** 2 + (xf[1] - gy) ** 2
        den = (x0[0] - gx) ** 2 + (x0[1] - gy) ** 2 + eps
        return num / den

    def jac(x0, xf, t_horizon):
        num = (xf[0] - gx) ** 2 + (xf[1] - gy) ** 2
        den = (x0[0] - gx) ** 2 + (x0[1] - gy) ** 2 + eps
        d0 = np.zeros(N_STATES)
        df = np.zeros(N_STATES)
        df[0] = 2.0 * (xf[0] - gx) / den
        df[1] = 2.0 * (xf[1] - gy) / den
        d0[0] = -num / den ** 2 * 2.0 * (x0[0] - gx)
        d0[1] = -num / den ** 2 * 2.0 * (x0[1] - gy)
        return d0, df, 0.0

    return ocp.MayerTerm(fn=fn, weight=w_g, name="goal_distance", jac=jac)


def _control_effort_term(config: PlannerConfig) -> ocp.LagrangeTerm:
    w_sa, w_ax, w_sr, w_jx = config.w_sa, config.w_ax, config.w_sr, config.w_jx

    def fn(x, u, t):
        return (w_sa * x[5] ** 2 + w_ax * x[7] ** 2
                + w_sr * u[0] ** 2 + w_jx * u[1] ** 2)

    def batch(s, u, tau, t_h):
        return (w_sa * s[:, 5] ** 2 + w_ax * s[:, 7] ** 2
                + w_sr * u[:, 0] ** 2 + w_jx * u[:, 1] ** 2)

    def jac_batch(s, u, tau, t_h):
        k = s.shape[0]
        d_s = np.zeros((k, N_STATES))
        d_u = np.zeros((k, N_CONTROLS))
        d_s[:, 5] = 2.0 * w_sa * s[:, 5]
        d_s[:, 7] = 2.0 * w_ax * s[:, 7]
        d_u[:, 0] = 2.0 * w_sr * u[:, 0]
        d_u[:, 1] = 2.0 * w_jx * u[:, 1]
        return d_s, d_u, np.zeros(k), np.zeros(k)

    return ocp.LagrangeTerm(fn=fn, weight=config.w_ce, name="control_effort",
                            batch=batch, jac_batch=jac_batch)


def _rear_load_term(config: PlannerConfig, vehicle: VehicleParams) -> ocp.LagrangeTerm:
    """Soft barrier discouraging rear wheel loads near the minimum limit."""
    a, b = vehicle.tanh_a, vehicle.tanh_b
    kp = vehicle.kernel_params

    def fn(x, u, t):
        loads = _kernels.wheel_loads_batch(np.asarray(x, dtype=float)[None, :], kp)[0]
        return math.tanh(-(loads[0] - a) / b) + math.tanh(-(loads[1] - a) / b)

    def batch(s, u, tau, t_h):
        loads = _kernels.wheel_loads_batch(s, kp)
        return (np.tanh(-(loads[:, 0] - a) / b)
                + np.tanh(-(loads[:, 1] - a) / b))

    def jac_batch(s, u, tau, t_h):
        k = s.shape[0]
        loads = _kernels.wheel_loads_batch(s, kp)
        jl = _kernels.wheel_loads_jacobian_batch(s, kp)
        d_rl = -(1.0 - np.tanh(-(loads[:, 0] - a) / b) ** 2) / b
        d_rr = -(1.0 - np.tanh(-(loads[:, 1] - a) / b) ** 2) / b
        d_s = d_rl[:, None] * jl[:, 0, :] + d_rr[:, None] * jl[:, 1, :]
        return d_s, np.zeros((k, N_CONTROLS)), np.zeros(k), np.zeros(k)

    return ocp.LagrangeTerm(fn=fn, weight=config.w_fz, name="rear_load",
                            batch=batch, jac_batch=jac_batch)


def _heading_line_term(config: PlannerConfig, goal: GoalSpec) -> ocp.LagrangeTerm:
    """Area between the trajectory and the line through the goal along psi_g."""
    s_g, c_g = math.sin(goal.psi), math.cos(goal.psi)
    gx, gy = goal.x, goal.y

    def fn(x, u, t):
        return (s_g * (x[0] - gx) - c_g * (x[1] - gy)) ** 2

    def batch(s, u, tau, t_h):
        return (s_g * (s[:, 0] - gx) - c_g * (s[:, 1] - gy)) ** 2

    def jac_batch(s, u, tau, t_h):
        k = s.shape[0]
        e = s_g * (s[:, 0] - gx) - c_g * (s[:, 1] - gy)
        d_s = np.zeros((k, N_STATES))
        d_s[:, 0] = 2.0 * e * s_g
        d_s[:, 1] = -2.0 * e * c_g
        return d_s, np.zeros((k, N_CONTROLS)), np.zeros(k), np.zeros(k)

    return ocp.LagrangeTerm(fn=fn, weight=config.w_haf, name="heading_line",
                            batch=batch, jac_batch=jac_batch)


def build_cost(
    config: PlannerConfig,
    goal: GoalSpec,
    x0p: np.ndarray,
    mode: GoalMode,
    vehicle: VehicleParams,
    horizon_start: float,
) -> tuple[list[ocp.LagrangeTerm], list[ocp.MayerTerm]]:
    """Cost terms for one horizon; config must already carry the variant deltas."""
    lagrange = [_rear_load_term(config, vehicle), _heading_line_term(config, goal)]
    if config.w_ce > 0:
        lagrange.append(_control_effort_term(config))
    mayer = [_time_mayer(config, horizon_start)]
    if mode.w_g > 0:
        mayer.append(_goal_distance_mayer(config, goal, mode.w_g))
    return lagrange, mayer


# ---------------------------------------------------------------------------
# constraint assembly
# ---------------------------------------------------------------------------

def _obstacle_path_constraint(obs: Obstacle, idx: int, config: PlannerConfig,
                              moving: bool, horizon_start: float) -> ocp.PathConstraint:
    """Row form 1 - ellipse_expression <= 0 at every node.

    The margin at node k depends only on the grid fraction k/N, so its
    horizon-length sensitivity vanishes on the grid; only center motion
    contributes to the time derivative.
    """
    sm1, sm2 = config.sm1, config.sm2
    a, b, vx, vy = obs.a, obs.b, obs.vx, obs.vy
    ox, oy = obs.x0, obs.y0

    def batch(s, u, tau, t_h):
        sm = sm1 + (sm2 - sm1) * tau / t_h
        cx = ox + vx * tau if moving else ox
        cy = oy + vy * tau if moving else oy
        ex = (s[:, 0] - cx) / (a + sm)
        ey = (s[:, 1] - cy) / (b + sm)
        return 1.0 - ex * ex - ey * ey

    def fn(x, u, t, tf_abs):
        return float(batch(np.asarray(x, dtype=float)[None, :], None,
                           np.array([t - horizon_start]),
                           tf_abs - horizon_start)[0])

    def jac_batch(s, u, tau, t_h):
        k = s.shape[0]
        sm = sm1 + (sm2 - sm1) * tau / t_h
        cx = ox + vx * tau if moving else ox
        cy = oy + vy * tau if moving else oy
        ra, rb = a + sm, b + sm
        ex = (s[:, 0] - cx) / ra
        ey = (s[:, 1] - cy) / rb
        d_s = np.zeros((k, N_STATES))
        d_s[:, 0] = -2.0 * ex / ra
        d_s[:, 1] = -2.0 * ey / rb
        d_tau = (2.0 * ex * vx / ra + 2.0 * ey * vy / rb) if moving else np.zeros(k)
        return d_s, np.zeros((k, N_CONTROLS)), d_tau, np.zeros(k)

    return ocp.PathConstraint(fn=fn, upper=0.0, name=f"obstacle_{idx}",
                              batch=batch, jac_batch=jac_batch)


def _lidar_region_constraint(x0p: np.ndarray, config: PlannerConfig) -> ocp.PathConstraint:
    """Planned positions stay inside the sensing disc around the start."""
    xp, yp = float(x0p[0]), float(x0p[1])
    r2 = (config.l_range + config.kappa) ** 2

    def batch(s, u, tau, t_h):
        return ((s[:, 0] - xp) ** 2 + (s[:, 1] - yp) ** 2) / r2 - 1.0

    def fn(x, u, t, tf_abs):
        return float(((x[0] - xp) ** 2 + (x[1] - yp) ** 2) / r2 - 1.0)

    def jac_batch(s, u, tau, t_h):
        k = s.shape[0]
        d_s = np.zeros((k, N_STATES))
        d_s[:, 0] = 2.0 * (s[:, 0] - xp) / r2
        d_s[:, 1] = 2.0 * (s[:, 1] - yp) / r2
        return d_s, np.zeros((k, N_CONTROLS)), np.zeros(k), np.zeros(k)

    return ocp.PathConstraint(fn=fn, upper=0.0, name="lidar_region",
                              batch=batch, jac_batch=jac_batch)


_LOAD_SCALE = 1.0e3  # wheel-load rows in kN so feasibility tolerances are O(1)


def _wheel_load_constraint(wheel: int, vehicle: VehicleParams) -> ocp.PathConstraint:
    kp = vehicle.kernel_params
    fz_min = vehicle.f_z_min
    names = ("rl", "rr", "fl", "fr")

    def batch(s, u, tau, t_h):
        loads = _kernels.wheel_loads_batch(s, kp)
        return (fz_min - loads[:, wheel]) / _LOAD_SCALE

    def fn(x, u, t, tf_abs):
        return float(batch(np.asarray(x, dtype=float)[None, :], None,
                           np.array([t]), tf_abs)[0])

    def jac_batch(s, u, tau, t_h):
        k = s.shape[0]
        jl = _kernels.wheel_loads_jacobian_batch(s, kp)
        return (-jl[:, wheel, :] / _LOAD_SCALE, np.zeros((k, N_CONTROLS)),
                np.zeros(k), np.zeros(k))

    return ocp.PathConstraint(fn=fn, upper=0.0, name=f"load_{names[wheel]}",
                              batch=batch, jac_batch=jac_batch)


def _accel_limit_constraints(vehicle: VehicleParams) -> list[ocp.PathConstraint]:
    curve = vehicle.accel_curve

    def batch_hi(s, u, tau, t_h):
        _, hi = curve.limits(s[:, 6])
        return s[:, 7] - hi

    def jac_hi(s, u, tau, t_h):
        k = s.shape[0]
        _, slope_hi = curve.slopes(s[:, 6])
        d_s = np.zeros((k, N_STATES))
        d_s[:, 6] = -slope_hi
        d_s[:, 7] = 1.0
        return d_s, np.zeros((k, N_CONTROLS)), np.zeros(k), np.zeros(k)

    def batch_lo(s, u, tau, t_h):
        lo, _ = curve.limits(s[:, 6])
        return lo - s[:, 7]

    def jac_lo(s, u, tau, t_h):
        k = s.shape[0]
        slope_lo, _ = curve.slopes(s[:, 6])
        d_s = np.zeros((k, N_STATES))
        d_s[:, 6] = slope_lo
        d_s[:, 7] = -1.0
        return d_s, np.zeros((k, N_CONTROLS)), np.zeros(k), np.zeros(k)

    hi = ocp.PathConstraint(
        fn=lambda x, u, t, tf: float(x[7] - curve.limits(x[6])[1]),
        upper=0.0, name="accel_upper", batch=batch_hi, jac_batch=jac_hi)
    lo = ocp.PathConstraint(
        fn=lambda x, u, t, tf: float(curve.limits(x[6])[0] - x[7]),
        upper=0.0, name="accel_lower", batch=batch_lo, jac_batch=jac_lo)
    return [hi, lo]


_SLACK_NAMES = tuple(f"s0_{n}" for n in
                     ("x", "y", "v", "r", "psi", "sa", "ux", "ax")) + ("sf_x", "sf_y")


def _initial_slack_events(x0p: np.ndarray) -> list[ocp.EventConstraint]:
    """|prediction - initial state| <= slack, one pair per state."""
    events = []
    for i in range(N_STATES):
        target = float(x0p[i])

        def up(x0, xf, tf, extras, i=i, target=target):
            return target - x0[i] - extras[i]

        def up_jac(x0, xf, t_h, extras, i=i):
            d0 = np.zeros(N_STATES)
            d0[i] = -1.0
            de = np.zeros(extras.size)
            de[i] = -1.0
            return d0, np.zeros(N_STATES), 0.0, de

        def dn(x0, xf, tf, extras, i=i, target=target):
            return x0[i] - target - extras[i]

        def dn_jac(x0, xf, t_h, extras, i=i):
            d0 = np.zeros(N_STATES)
            d0[i] = 1.0
            de = np.zeros(extras.size)
            de[i] = -1.0
            return d0, np.zeros(N_STATES), 0.0, de

        events.append(ocp.EventConstraint(
            fn=up, lower=-np.inf, upper=0.0, name=f"slack0_{i}_hi", jac=up_jac))
        events.append(ocp.EventConstraint(
            fn=dn, lower=-np.inf, upper=0.0, name=f"slack0_{i}_lo", jac=dn_jac))
    return events


def _terminal_slack_events(goal: GoalSpec) -> list[ocp.EventConstraint]:
    events = []
    for axis, target in ((0, goal.x), (1, goal.y)):
        slack_idx = N_STATES + axis

        def up(x0, xf, tf, extras, axis=axis, target=target, si=slack_idx):
            return target - xf[axis] - extras[si]

        def up_jac(x0, xf, t_h, extras, axis=axis, si=slack_idx):
            df = np.zeros(N_STATES)
            df[axis] = -1.0
            de = np.zeros(extras.size)
            de[si] = -1.0
            return np.zeros(N_STATES), df, 0.0, de

        def dn(x0, xf, tf, extras, axis=axis, target=target, si=slack_idx):
            return xf[axis] - target - extras[si]

        def dn_jac(x0, xf, t_h, extras, axis=axis, si=slack_idx):
            df = np.zeros(N_STATES)
            df[axis] = 1.0
            de = np.zeros(extras.size)
            de[si] = -1.0
            return np.zeros(N_STATES), df, 0.0, de

        events.append(ocp.EventConstraint(
            fn=up, lower=-np.inf, upper=0.0, name=f"slackf_{axis}_hi", jac=up_jac))
        events.append(ocp.EventConstraint(
            fn=dn, lower=-np.inf, upper=0.0, name=f"slackf_{axis}_lo", jac=dn_jac))
    return events


def _lidar_range_events(x0p: np.ndarray, mode: GoalMode,
                        config: PlannerConfig) -> list[ocp.EventConstraint]:
    """Arrive near the sensing-disc edge at the final time (beyond range only).

    Within range these rows are relaxed away entirely; the tiny p1/p2
    sentinels the mode carries would otherwise pin the final position to
    the start and defeat the terminal goal box.
    """
    if mode.within_range:
        return []
    xp, yp = float(x0p[0]), float(x0p[1])
    scale = (config.l_range + config.kappa) ** 2

    def dist2(xf):
        return (xf[0] - xp) ** 2 + (xf[1] - yp) ** 2

    def outer(x0, xf, tf, extras):
        return (dist2(xf) - mode.p1) / scale

    def outer_jac(x0, xf, t_h, extras):
        df = np.zeros(N_STATES)
        df[0] = 2.0 * (xf[0] - xp) / scale
        df[1] = 2.0 * (xf[1] - yp) / scale
        return np.zeros(N_STATES), df, 0.0, np.zeros(extras.size)

    def inner(x0, xf, tf, extras):
        return (mode.p2 - dist2(xf)) / scale

    def inner_jac(x0, xf, t_h, extras):
        df = np.zeros(N_STATES)
        df[0] = -2.0 * (xf[0] - xp) / scale
        df[1] = -2.0 * (xf[1] - yp) / scale
        return np.zeros(N_STATES), df, 0.0, np.zeros(extras.size)

    return [
        ocp.EventConstraint(fn=outer, lower=-np.inf, upper=0.0,
                            name="lidar_ring_outer", jac=outer_jac),
        ocp.EventConstraint(fn=inner, lower=-np.inf, upper=0.0,
                            name="lidar_ring_inner", jac=inner_jac),
    ]


def _vehicle_dynamics(vehicle: VehicleParams) -> ocp.Dynamics:
    kp = vehicle.kernel_params

    def fn(x, u, t):
        return _kernels.dynamics_batch(np.asarray(x, dtype=float)[None, :],
                                       np.asarray(u, dtype=float)[None, :], kp)[0]

    def batch(s, u, tau, t_h):
        return _kernels.dynamics_batch(s, u, kp)

    def jac_batch(s, u, tau, t_h):
        return _kernels.dynamics_jacobian_batch(s, u, kp)

    return ocp.Dynamics(fn=fn, batch=batch, jac_batch=jac_batch)


def build_planner_ocp(
    config: PlannerConfig,
    variant: PlannerVariant,
    env: Environment,
    goal: GoalSpec,
    x0p: np.ndarray,
    vehicle: VehicleParams | None = None,
    horizon_start: float = 0.0,
) -> ocp.OcpSpec:
    """Assemble the full horizon problem starting at horizon_start.

    Obstacles in env must be held at their observed positions (the pose
    when the solve is initiated); with motion propagation enabled they
    are advanced by t_ex to the horizon start and then move over the
    horizon, while the frozen variant keeps the observed positions.
    """
    vehicle = vehicle or VehicleParams()
    cfg = apply_variant(config, variant)
    x0p = np.asarray(x0p, dtype=float)
    mode = goal_mode(x0p, goal, cfg)
    moving = cfg.moving_obstacle_avoidance

    lagrange, mayer = build_cost(cfg, goal, x0p, mode, vehicle, horizon_start)

    path: list[ocp.PathConstraint] = []
    diagnostics: list[str] = []
    for i, obs in enumerate(env.obstacles):
        anchored = obs.at_time(cfg.t_ex) if moving else obs
        expr0 = obstacle_constraint((x0p[0], x0p[1]), anchored, 0.0, 1.0, cfg, moving)
        if expr0 <= 1.0:
            diagnostics.append(
                f"predicted start state lies inside the margin of obstacle {i}")
        path.append(_obstacle_path_constraint(anchored, i, cfg, moving,
                                              horizon_start))
    path.append(_lidar_region_constraint(x0p, cfg))
    for wheel in range(4):
        path.append(_wheel_load_constraint(wheel, vehicle))
    path.extend(_accel_limit_constraints(vehicle))

    events = _initial_slack_events(x0p)
    events.extend(_terminal_slack_events(goal))
    events.extend(_lidar_range_events(x0p, mode, cfg))

    x_bounds = vehicle.x_bounds
    if env.x_corridor is not None:
        x_bounds = (max(x_bounds[0], env.x_corridor[0]),
                    min(x_bounds[1], env.x_corridor[1]))
    amin_box = float(min(vehicle.accel_curve.a_min))
    amax_box = float(max(vehicle.accel_curve.a_max))
    state_bounds = [
        x_bounds, vehicle.y_bounds, (-np.inf, np.inf), (-np.inf, np.inf),
        vehicle.psi_bounds, vehicle.sa_bounds, vehicle.ux_bounds,
        (amin_box, amax_box),
    ]
    control_bounds = [vehicle.gamma_bounds, vehicle.jx_bounds]

    initial_box = [(float(x0p[i] - cfg.x0_tol[i]), float(x0p[i] + cfg.x0_tol[i]))
                   for i in range(N_STATES)]
    sigma = mode.sigma_eff
    final_box = [(goal.x - sigma, goal.x + sigma), (goal.y - sigma, goal.y + sigma)]
    final_box += [(-np.inf, np.inf)] * (N_STATES - 2)

    slack_w = cfg.initial_slack_weights
    extras = [ocp.ExtraVar(name=_SLACK_NAMES[i], lower=0.0, cost=float(slack_w[i]))
              for i in range(N_STATES)]
    extras.append(ocp.ExtraVar(name="sf_x", lower=0.0, cost=mode.w_sf[0]))
    extras.append(ocp.ExtraVar(name="sf_y", lower=0.0, cost=mode.w_sf[1]))

    if diagnostics:
        for msg in diagnostics:
            log.warning("planner OCP: %s", msg)

    return ocp.OcpSpec(
        state_dim=N_STATES,
        control_dim=N_CONTROLS,
        start_time=horizon_start,
        dynamics=_vehicle_dynamics(vehicle),
        lagrange=lagrange,
        mayer=mayer,
        path=path,
        events=events,
        state_bounds=state_bounds,
        control_bounds=control_bounds,
        initial_state_bounds=initial_box,
        final_state_bounds=final_box,
        extra_vars=extras,
        tf_bounds=(cfg.t_f_min, cfg.t_f_max),
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# one receding-horizon step
# ---------------------------------------------------------------------------

@dataclass
class PlanStep:
    """One horizon's problem, solution, and the inputs used to build it."""

    trajectory: ocp.CollocatedTrajectory
    solution: nlp.NlpSolution
    problem: ocp.TranscribedNlp
    spec: ocp.OcpSpec
    config: PlannerConfig
    mode: GoalMode
    x0p: np.ndarray
    obstacles: tuple[Obstacle, ...]
    moving: bool


def _cold_start(problem: ocp.TranscribedNlp, config: PlannerConfig,
                goal: GoalSpec, mode: GoalMode, x0p: np.ndarray,
                vehicle: VehicleParams) -> np.ndarray:
    """Zero-control rollout of the prediction model as the first-ever guess."""
    speed = max(float(x0p[6]), 1.0)
    target = config.l_range if not mode.within_range \
        else max(goal.distance_to(float(x0p[0]), float(x0p[1])), 1.0)
    t_guess = float(np.clip(target / speed, max(config.t_f_min, 1.0),
                            config.t_f_max))
    from .vehicle import constant_control, integrate_trace

    start = problem.spec.start_time
    _, states = integrate_trace(
        VehicleState.from_array(x0p), constant_control(), start,
        start + t_guess, t_guess / (4 * config.n_intervals), vehicle)
    idx = np.linspace(0, states.shape[0] - 1, config.n_intervals + 1).round().astype(int)
    traj = ocp.CollocatedTrajectory(
        times=start + np.linspace(0.0, t_guess, config.n_intervals + 1),
        states=states[idx], controls=np.zeros((config.n_intervals + 1, 2)),
        t_f=start + t_guess)
    return problem.pack(traj)


def shift_warm_start(prev: ocp.CollocatedTrajectory, new_start: float,
                     config: PlannerConfig) -> ocp.CollocatedTrajectory:
    """Shift the previous optimum one execution horizon forward.

    States and controls are interpolated at the shifted node times, with
    linear extrapolation of the last interval past the old final time;
    the previous horizon shrinks by the executed duration (floored).
    """
    t_h = max(prev.t_f - new_start, config.t_f_min)
    times = new_start + np.linspace(0.0, t_h, config.n_intervals + 1)

    old_t = prev.times
    dt_last = max(old_t[-1] - old_t[-2], 1e-9)

    def sample(arr: np.ndarray) -> np.ndarray:
        out = np.empty((times.size, arr.shape[1]))
        slope = (arr[-1] - arr[-2]) / dt_last
        for j in range(arr.shape[1]):
            out[:, j] = np.interp(times, old_t, arr[:, j])
        past = times > old_t[-1]
        if np.any(past):
            out[past] = arr[-1] + np.outer(times[past] - old_t[-1], slope)
        return out

    return ocp.CollocatedTrajectory(
        times=times, states=sample(prev.states), controls=sample(prev.controls),
        t_f=float(times[-1]), slack_values=dict(prev.slack_values))


def plan(
    config: PlannerConfig,
    variant: PlannerVariant,
    env: Environment,
    goal: GoalSpec,
    x0p: np.ndarray,
    vehicle: VehicleParams | None = None,
    warm: ocp.CollocatedTrajectory | None = None,
    horizon_start: float = 0.0,
    solve_options: nlp.NlpSolveOptions | None = None,
) -> PlanStep:
    """Build, transcribe and solve one horizon; surfaces the solver status."""
    vehicle = vehicle or VehicleParams()
    cfg = apply_variant(config, variant)
    x0p = np.asarray(x0p, dtype=float)
    spec = build_planner_ocp(config, variant, env, goal, x0p, vehicle,
                             horizon_start)
    problem = ocp.transcribe_trapezoidal(spec, cfg.n_intervals)
    mode = goal_mode(x0p, goal, cfg)

    if warm is not None:
        guess = problem.pack(shift_warm_start(warm, horizon_start, cfg))
    else:
        guess = _cold_start(problem, cfg, goal, mode, x0p, vehicle)

    solution = nlp.solve(problem, nlp.WarmStart(variables=guess), solve_options)
    traj = problem.unpack(solution.variables)
    moving = cfg.moving_obstacle_avoidance
    anchored = tuple(
        (o.at_time(cfg.t_ex) if moving else o) for o in env.obstacles)
    return PlanStep(trajectory=traj, solution=solution, problem=problem,
                    spec=spec, config=cfg, mode=mode, x0p=x0p,
                    obstacles=anchored, moving=moving)


@dataclass(frozen=True)
class AuditReport:
    """Independent re-evaluation of a returned trajectory."""

    max_defect: float
    min_obstacle_expr: float
    min_wheel_load: float
    max_box_violation: float
    max_lidar_excess: float
    max_weighted_slack: float
    feasibility_tol: float

    @property
    def passed(self) -> bool:
        tol = self.feasibility_tol
        return (self.max_defect <= tol
                and self.min_obstacle_expr >= 1.0 - 10 * tol
                and self.min_wheel_load >= -_LOAD_SCALE * tol
                and self.max_box_violation <= 10 * tol
                and self.max_lidar_excess <= 10 * tol
                and self.max_weighted_slack <= 1e-3)


def audit_plan_step(step: PlanStep, vehicle: VehicleParams | None = None,
                    feasibility_tol: float = 1e-6) -> AuditReport:
    """Re-check a plan against the raw constraint definitions.

    Nothing here trusts the solver: defects, keep-out expressions, wheel
    loads, boxes and the sensing disc are all recomputed from the
    trajectory itself.
    """
    vehicle = vehicle or VehicleParams()
    traj = step.trajectory
    cfg = step.config
    dyn = _vehicle_dynamics(vehicle)
    defects = ocp.evaluate_defects(traj, dyn)
    max_defect = float(np.abs(defects).max(initial=0.0))

    t_h = traj.t_f - traj.start_time
    tau = traj.times - traj.start_time
    min_expr = np.inf
    for obs in step.obstacles:
        for k in range(traj.times.size):
            expr = obstacle_constraint(
                (traj.states[k, 0], traj.states[k, 1]), obs, float(tau[k]),
                t_h, cfg, step.moving)
            min_expr = min(min_expr, expr)

    loads = _kernels.wheel_loads_batch(traj.states, vehicle.kernel_params)
    min_load = float(loads.min() - vehicle.f_z_min)

    lb, ub = step.problem.lower_bounds, step.problem.upper_bounds
    z = step.problem.pack(traj)
    box_viol = float(np.maximum(np.maximum(z - ub, lb - z), 0.0).max())

    xp, yp = float(step.x0p[0]), float(step.x0p[1])
    r = np.hypot(traj.states[:, 0] - xp, traj.states[:, 1] - yp)
    lidar_excess = float((r / (cfg.l_range + cfg.kappa)).max() - 1.0)

    slack_w = np.concatenate([cfg.initial_slack_weights, np.asarray(step.mode.w_sf)])
    slack_v = np.array([traj.slack_values.get(n, 0.0) for n in _SLACK_NAMES])
    weighted = float(np.abs(slack_v[slack_w > 0]).max(initial=0.0))

    return AuditReport(
        max_defect=max_defect,
        min_obstacle_expr=float(min_expr),
        min_wheel_load=min_load,
        max_box_violation=box_viol,
        max_lidar_excess=lidar_excess,
        max_weighted_slack=weighted,
        feasibility_tol=feasibility_tol,
    )
