"""Free-final-time optimal control problems and their trapezoidal transcription.

An OcpSpec describes a single-phase continuous problem: dynamics, weighted
running-cost integrands, terminal cost terms, path and event constraints,
variable boxes, and named extra decision scalars (slacks).  The horizon
runs from a fixed start time to a free final time.

transcribe_trapezoidal() turns the spec into a dense nonlinear program on
a uniform grid whose node times are affine in the horizon duration: state
defects become equalities, running costs become trapezoidal quadrature,
path constraints are imposed at every node.

Every term accepts plain scalar callables (derivatives then come from
central differences); terms on the hot path can supply vectorized values
and analytic Jacobians instead.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray
_FD_STEP = 1e-6


@dataclass(frozen=True)
class TimeGrid:
    """Uniform node times from start_time to t_f."""

    node_count: int
    start_time: float
    t_f: float

    def __post_init__(self):
        if self.node_count < 2:
            raise ValueError("need at least 2 nodes")
        if self.t_f <= self.start_time:
            raise ValueError("t_f must exceed start_time")

    @property
    def nodes(self) -> Array:
        return np.linspace(self.start_time, self.t_f, self.node_count)

    @property
    def spacing(self) -> float:
        return (self.t_f - self.start_time) / (self.node_count - 1)


@dataclass
class Dynamics:
    """State derivative f(state, control, t) with optional batched evaluation.

    batch(S, U, tau, T) evaluates all nodes at once (tau is time since the
    horizon start); jac_batch returns per-node Jacobians wrt state and
    control.  time_varying marks explicit t-dependence, which forces the
    finite-difference path for defect Jacobians.
    """

    fn: Callable[[Array, Array, float], Array]
    batch: Callable[[Array, Array, Array, float], Array] | None = None
    jac_batch: Callable[[Array, Array, Array, float], tuple[Array, Array]] | None = None
    time_varying: bool = False

    def values(self, states: Array, controls: Array, tau: Array, t_horizon: float,
               start_time: float) -> Array:
        if self.batch is not None:
            return np.asarray(self.batch(states, controls, tau, t_horizon))
        out = np.empty_like(states)
        for k in range(states.shape[0]):
            out[k] = self.fn(states[k], controls[k], start_time + tau[k])
        return out


@dataclass
class LagrangeTerm:
    """Weighted running-cost integrand L(state, control, t)."""

    fn: Callable[[Array, Array, float], float]
    weight: float = 1.0
    name: str = ""
    batch: Callable | None = None
    jac_batch: Callable | None = None  # -> (dS, dU, dtau, dT)

    def values(self, states, controls, tau, t_horizon, start_time) -> Array:
        if self.batch is not None:
            return np.asarray(self.batch(states, controls, tau, t_horizon), dtype=float)
        return np.array([
            self.fn(states[k], controls[k], start_time + tau[k])
            for k in range(states.shape[0])
        ], dtype=float)


@dataclass
class MayerTerm:
    """Terminal cost phi(initial_state, final_state, t_f)."""

    fn: Callable[[Array, Array, float], float]
    weight: float = 1.0
    name: str = ""
    jac: Callable | None = None  # -> (dx0, dxf, dT)


@dataclass
class PathConstraint:
    """Per-node scalar g(state, control, t, t_f) kept inside [lower, upper]."""

    fn: Callable[[Array, Array, float, float], float]
    lower: float = -np.inf
    upper: float = 0.0
    name: str = ""
    batch: Callable | None = None
    jac_batch: Callable | None = None  # -> (dS, dU, dtau, dT)

    def values(self, states, controls, tau, t_horizon, start_time) -> Array:
        if self.batch is not None:
            return np.asarray(self.batch(states, controls, tau, t_horizon), dtype=float)
        tf_abs = start_time + t_horizon
        return np.array([
            self.fn(states[k], controls[k], start_time + tau[k], tf_abs)
            for k in range(states.shape[0])
        ], dtype=float)


@dataclass
class EventConstraint:
    """Scalar h(initial_state, final_state, t_f, extras) within [lower, upper]."""

    fn: Callable[[Array, Array, float, Array], float]
    lower: float = 0.0
    upper: float = 0.0
    name: str = ""
    jac: Callable | None = None  # -> (dx0, dxf, dT, dextras)


@dataclass
class ExtraVar:
    """Named scalar decision variable (slacks, mostly) with a linear cost."""

    name: str
    lower: float = 0.0
    upper: float = np.inf
    cost: float = 0.0
    init: float = 0.0


@dataclass
class OcpSpec:
    """Continuous optimal control problem over [start_time, t_f]."""

    state_dim: int
    control_dim: int
    start_time: float
    dynamics: Dynamics
    lagrange: list[LagrangeTerm] = field(default_factory=list)
    mayer: list[MayerTerm] = field(default_factory=list)
    path: list[PathConstraint] = field(default_factory=list)
    events: list[EventConstraint] = field(default_factory=list)
    state_bounds: Sequence[tuple[float, float]] = ()
    control_bounds: Sequence[tuple[float, float]] = ()
    initial_state_bounds: Sequence[tuple[float, float]] | None = None
    final_state_bounds: Sequence[tuple[float, float]] | None = None
    extra_vars: list[ExtraVar] = field(default_factory=list)
    tf_bounds: tuple[float, float] = (0.1, 30.0)
    diagnostics: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.state_dim <= 0 or self.control_dim <= 0:
            raise ValueError("state_dim and control_dim must be positive")
        if not self.state_bounds:
            self.state_bounds = [(-np.inf, np.inf)] * self.state_dim
        if not self.control_bounds:
            self.control_bounds = [(-np.inf, np.inf)] * self.control_dim
        if len(self.state_bounds) != self.state_dim:
            raise ValueError("state_bounds length mismatch")
        if len(self.control_bounds) != self.control_dim:
            raise ValueError("control_bounds length mismatch")
        if self.tf_bounds[0] <= 0 or self.tf_bounds[0] > self.tf_bounds[1]:
            raise ValueError("tf_bounds must satisfy 0 < min <= max")
        for lo, hi in (*self.state_bounds, *self.control_bounds):
            if lo > hi:
                raise ValueError("bound box has lower > upper")


@dataclass
class CollocatedTrajectory:
    """Discrete trajectory at the collocation nodes."""

    times: Array
    states: Array
    controls: Array
    t_f: float
    slack_values: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.times)
        if self.states.shape[0] != n or self.controls.shape[0] != n:
            raise ValueError("states/controls must have one row per node")

    @property
    def start_time(self) -> float:
        return float(self.times[0])

    def control_signal(self):
        from .vehicle import PiecewiseLinearControl

        return PiecewiseLinearControl(self.times, self.controls)


def interpolate_solution(
    traj: CollocatedTrajectory, t: float
) -> tuple[Array, Array]:
    """Piecewise-linear state and control at time t within the trajectory span."""
    times = traj.times
    if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
        raise ValueError(f"t={t} outside trajectory span [{times[0]}, {times[-1]}]")
    t = min(max(t, times[0]), times[-1])
    state = np.array([np.interp(t, times, traj.states[:, j])
                      for j in range(traj.states.shape[1])])
    control = np.array([np.interp(t, times, traj.controls[:, j])
                        for j in range(traj.controls.shape[1])])
    return state, control


def trapezoid_integral(values: Sequence[float], grid: TimeGrid | Array) -> float:
    """Composite trapezoid rule over the grid nodes."""
    times = grid.nodes if isinstance(grid, TimeGrid) else np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.shape[0] != times.shape[0]:
        raise ValueError("values length must match node count")
    return float(np.trapezoid(values, times))


def evaluate_defects(traj: CollocatedTrajectory, dynamics: Dynamics) -> Array:
    """Trapezoidal defect residuals, one row per interval.

    Zero residuals mean the trajectory satisfies the transcribed dynamics.
    """
    times, states, controls = traj.times, traj.states, traj.controls
    if len(times) < 2:
        raise ValueError("need at least 2 nodes")
    tau = times - times[0]
    f = dynamics.values(states, controls, tau, float(times[-1] - times[0]),
                        float(times[0]))
    if f.shape != states.shape:
        raise ValueError("dynamics output shape does not match the states")
    h = np.diff(times)[:, None]
    return states[1:] - states[:-1] - 0.5 * h * (f[:-1] + f[1:])


@dataclass(frozen=True)
class DecisionLayout:
    """Index map for the flat decision vector of a transcribed problem."""

    node_count: int
    state_dim: int
    control_dim: int
    extra_names: tuple[str, ...]

    @property
    def n_states_flat(self) -> int:
        return self.node_count * self.state_dim

    @property
    def n_controls_flat(self) -> int:
        return self.node_count * self.control_dim

    @property
    def tf_index(self) -> int:
        return self.n_states_flat + self.n_controls_flat

    @property
    def size(self) -> int:
        return self.tf_index + 1 + len(self.extra_names)

    def state_index(self, node: int, comp: int) -> int:
        return node * self.state_dim + comp

    def control_index(self, node: int, comp: int) -> int:
        return self.n_states_flat + node * self.control_dim + comp

    def extra_index(self, name: str) -> int:
        return self.tf_index + 1 + self.extra_names.index(name)

    def blocks(self) -> dict[str, tuple[int, int]]:
        start_c = self.n_states_flat
        return {
            "states": (0, start_c),
            "controls": (start_c, self.tf_index),
            "t_f": (self.tf_index, self.tf_index + 1),
            "extras": (self.tf_index + 1, self.size),
        }

    def split(self, z: Array) -> tuple[Array, Array, float, Array]:
        states = z[: self.n_states_flat].reshape(self.node_count, self.state_dim)
        controls = z[self.n_states_flat: self.tf_index].reshape(
            self.node_count, self.control_dim)
        t_horizon = float(z[self.tf_index])
        extras = z[self.tf_index + 1:]
        return states, controls, t_horizon, extras


def _fd_term_jac(values_fn, states, controls, tau, t_horizon, eps=_FD_STEP):
    """Central differences of a per-node term over (state, control, tau, T)."""
    k, nst = states.shape
    nctr = controls.shape[1]
    d_s = np.zeros((k, nst))
    d_u = np.zeros((k, nctr))
    for j in range(nst):
        sp, sm = states.copy(), states.copy()
        sp[:, j] += eps
        sm[:, j] -= eps
        d_s[:, j] = (values_fn(sp, controls, tau, t_horizon)
                     - values_fn(sm, controls, tau, t_horizon)) / (2 * eps)
    for j in range(nctr):
        up, um = controls.copy(), controls.copy()
        up[:, j] += eps
        um[:, j] -= eps
        d_u[:, j] = (values_fn(states, up, tau, t_horizon)
                     - values_fn(states, um, tau, t_horizon)) / (2 * eps)
    d_tau = (values_fn(states, controls, tau + eps, t_horizon)
             - values_fn(states, controls, tau - eps, t_horizon)) / (2 * eps)
    d_t = (values_fn(states, controls, tau, t_horizon + eps)
           - values_fn(states, controls, tau, t_horizon - eps)) / (2 * eps)
    return d_s, d_u, d_tau, d_t


def _fd_point_jac(fn, x0, xf, tf_abs, extras, eps=_FD_STEP):
    """Central differences of a scalar endpoint function."""

    def wiggle(vec, j):
        vp, vm = vec.copy(), vec.copy()
        vp[j] += eps
        vm[j] -= eps
        return vp, vm

    d0 = np.zeros_like(x0)
    df = np.zeros_like(xf)
    de = np.zeros_like(extras)
    for j in range(x0.size):
        vp, vm = wiggle(x0, j)
        d0[j] = (fn(vp, xf, tf_abs, extras) - fn(vm, xf, tf_abs, extras)) / (2 * eps)
    for j in range(xf.size):
        vp, vm = wiggle(xf, j)
        df[j] = (fn(x0, vp, tf_abs, extras) - fn(x0, vm, tf_abs, extras)) / (2 * eps)
    dt = (fn(x0, xf, tf_abs + eps, extras) - fn(x0, xf, tf_abs - eps, extras)) / (2 * eps)
    for j in range(extras.size):
        vp, vm = wiggle(extras, j)
        de[j] = (fn(x0, xf, tf_abs, vp) - fn(x0, xf, tf_abs, vm)) / (2 * eps)
    return d0, df, dt, de


class TranscribedNlp:
    """Dense NLP image of an OcpSpec on an N-interval trapezoidal grid.

    Rows are ordered: defect equalities, then path constraints (each family
    at all nodes), then event constraints.  All evaluation is cached on the
    decision-vector bytes, so repeated objective/constraint/Jacobian calls
    at one point cost a single pass.
    """

    def __init__(self, spec: OcpSpec, n_intervals: int):
        if n_intervals < 2:
            raise ValueError("need at least 2 intervals")
        if spec.tf_bounds[0] <= 0:
            raise ValueError("tf lower bound must be positive")
        self.spec = spec
        self.n_intervals = n_intervals
        self.layout = DecisionLayout(
            node_count=n_intervals + 1,
            state_dim=spec.state_dim,
            control_dim=spec.control_dim,
            extra_names=tuple(v.name for v in spec.extra_vars),
        )
        self._build_bounds()
        self._build_rows()
        self._cache_key: bytes | None = None
        self._cache: dict[str, object] = {}
        self._jac_key: bytes | None = None
        self._jac: Array | None = None

    # -- construction ----------------------------------------------------
    def _build_bounds(self) -> None:
        spec, lay = self.spec, self.layout
        lb = np.full(lay.size, -np.inf)
        ub = np.full(lay.size, np.inf)
        for k in range(lay.node_count):
            for i, (lo, hi) in enumerate(spec.state_bounds):
                idx = lay.state_index(k, i)
                lb[idx], ub[idx] = lo, hi
            for j, (lo, hi) in enumerate(spec.control_bounds):
                idx = lay.control_index(k, j)
                lb[idx], ub[idx] = lo, hi
        if spec.initial_state_bounds is not None:
            for i, (lo, hi) in enumerate(spec.initial_state_bounds):
                idx = lay.state_index(0, i)
                lb[idx] = max(lb[idx], lo)
                ub[idx] = min(ub[idx], hi)
        if spec.final_state_bounds is not None:
            for i, (lo, hi) in enumerate(spec.final_state_bounds):
                idx = lay.state_index(lay.node_count - 1, i)
                lb[idx] = max(lb[idx], lo)
                ub[idx] = min(ub[idx], hi)
        lb[lay.tf_index], ub[lay.tf_index] = spec.tf_bounds
        for v in spec.extra_vars:
            idx = lay.extra_index(v.name)
            lb[idx], ub[idx] = v.lower, v.upper
        self.lower_bounds = lb
        self.upper_bounds = ub

    def _build_rows(self) -> None:
        spec, lay = self.spec, self.layout
        n_defect = self.n_intervals * spec.state_dim
        groups: list[tuple[str, int, float, float]] = [
            ("defects", n_defect, 0.0, 0.0)
        ]
        for pc in spec.path:
            groups.append((f"path:{pc.name or 'anon'}", lay.node_count,
                           pc.lower, pc.upper))
        for ev in spec.events:
            groups.append((f"event:{ev.name or 'anon'}", 1, ev.lower, ev.upper))

        self.row_groups: dict[str, tuple[int, int]] = {}
        lo_parts, up_parts = [], []
        cursor = 0
        for name, size, lo, hi in groups:
            self.row_groups[name] = (cursor, cursor + size)
            lo_parts.append(np.full(size, lo))
            up_parts.append(np.full(size, hi))
            cursor += size
        self.n_constraints = cursor
        self.constraint_lower = np.concatenate(lo_parts) if lo_parts else np.empty(0)
        self.constraint_upper = np.concatenate(up_parts) if up_parts else np.empty(0)
        self.equality_mask = self.constraint_lower == self.constraint_upper

    # -- evaluation ------------------------------------------------------
    @property
    def n_variables(self) -> int:
        return self.layout.size

    def _tau(self, t_horizon: float) -> Array:
        return np.linspace(0.0, t_horizon, self.layout.node_count)

    def _ensure_values(self, z: Array) -> dict:
        key = z.tobytes()
        if key == self._cache_key:
            return self._cache  # type: ignore[return-value]
        spec, lay = self.spec, self.layout
        states, controls, t_horizon, extras = lay.split(np.asarray(z, dtype=float))
        tau = self._tau(t_horizon)
        h = t_horizon / self.n_intervals
        f = spec.dynamics.values(states, controls, tau, t_horizon, spec.start_time)
        defects = (states[1:] - states[:-1]
                   - 0.5 * h * (f[:-1] + f[1:])).reshape(-1)

        cons = [defects]
        path_vals = []
        for pc in spec.path:
            vals = pc.values(states, controls, tau, t_horizon, spec.start_time)
            path_vals.append(vals)
            cons.append(vals)
        tf_abs = spec.start_time + t_horizon
        for ev in spec.events:
            cons.append(np.array([ev.fn(states[0], states[-1], tf_abs, extras)]))

        lag_vals = [term.values(states, controls, tau, t_horizon, spec.start_time)
                    for term in spec.lagrange]
        quad_w = np.ones(lay.node_count)
        quad_w[0] = quad_w[-1] = 0.5
        obj = 0.0
        for term, vals in zip(spec.lagrange, lag_vals):
            obj += term.weight * h * float(quad_w @ vals)
        for term in spec.mayer:
            obj += term.weight * term.fn(states[0], states[-1], tf_abs)
        for i, v in enumerate(spec.extra_vars):
            obj += v.cost * extras[i]

        self._cache = {
            "states": states, "controls": controls, "t_horizon": t_horizon,
            "extras": extras, "tau": tau, "h": h, "f": f,
            "constraints": np.concatenate(cons) if cons else np.empty(0),
            "lag_vals": lag_vals, "quad_w": quad_w, "objective": obj,
        }
        self._cache_key = key
        return self._cache

    def objective(self, z: Array) -> float:
        return float(self._ensure_values(np.asarray(z, dtype=float))["objective"])

    def constraint_values(self, z: Array) -> Array:
        return self._ensure_values(np.asarray(z, dtype=float))["constraints"].copy()

    def constraint_violation(self, z: Array) -> float:
        c = self.constraint_values(z)
        over = np.maximum(c - self.constraint_upper, 0.0)
        under = np.maximum(self.constraint_lower - c, 0.0)
        box_over = np.maximum(np.asarray(z) - self.upper_bounds, 0.0)
        box_under = np.maximum(self.lower_bounds - np.asarray(z), 0.0)
        parts = [over, under, box_over, box_under]
        return float(max(p.max(initial=0.0) for p in parts))

    def objective_gradient(self, z: Array) -> Array:
        z = np.asarray(z, dtype=float)
        c = self._ensure_values(z)
        spec, lay = self.spec, self.layout
        states, controls = c["states"], c["controls"]
        tau, h, t_horizon = c["tau"], c["h"], c["t_horizon"]
        quad_w = c["quad_w"]
        node_frac = np.arange(lay.node_count) / self.n_intervals
        grad = np.zeros(lay.size)

        for term, vals in zip(spec.lagrange, c["lag_vals"]):
            if term.jac_batch is not None:
                d_s, d_u, d_tau, d_t = term.jac_batch(states, controls, tau, t_horizon)
            else:
                d_s, d_u, d_tau, d_t = _fd_term_jac(
                    lambda s, u, tt, th: term.values(s, u, tt, th, spec.start_time),
                    states, controls, tau, t_horizon)
            w = term.weight
            scale = (w * h * quad_w)[:, None]
            grad[: lay.n_states_flat] += (scale * d_s).reshape(-1)
            grad[lay.n_states_flat: lay.tf_index] += (scale * d_u).reshape(-1)
            grad[lay.tf_index] += w * (
                float(quad_w @ vals) / self.n_intervals
                + h * float(quad_w @ (d_tau * node_frac + d_t))
            )

        tf_abs = spec.start_time + t_horizon
        for term in spec.mayer:
            if term.jac is not None:
                d0, df, dt = term.jac(states[0], states[-1], t_horizon)
            else:
                d0, df, dt, _ = _fd_point_jac(
                    lambda a, b, tf, e: term.fn(a, b, tf),
                    states[0], states[-1], tf_abs, np.empty(0))
            w = term.weight
            grad[: spec.state_dim] += w * np.asarray(d0)
            grad[lay.state_index(lay.node_count - 1, 0):
                 lay.state_index(lay.node_count - 1, 0) + spec.state_dim] += \
                w * np.asarray(df)
            grad[lay.tf_index] += w * float(dt)

        for i, v in enumerate(spec.extra_vars):
            grad[lay.tf_index + 1 + i] += v.cost
        return grad

    def constraint_jacobian(self, z: Array) -> Array:
        z = np.asarray(z, dtype=float)
        key = z.tobytes()
        if key == self._jac_key and self._jac is not None:
            return self._jac
        c = self._ensure_values(z)
        spec, lay = self.spec, self.layout
        states, controls = c["states"], c["controls"]
        tau, h, t_horizon, extras = c["tau"], c["h"], c["t_horizon"], c["extras"]
        f = c["f"]
        nst, nctr = spec.state_dim, spec.control_dim
        node_frac = np.arange(lay.node_count) / self.n_intervals
        jac = np.zeros((self.n_constraints, lay.size))

        # defect rows
        if spec.dynamics.jac_batch is not None and not spec.dynamics.time_varying:
            a, b = spec.dynamics.jac_batch(states, controls, tau, t_horizon)
            eye = np.eye(nst)
            for k in range(self.n_intervals):
                rows = slice(k * nst, (k + 1) * nst)
                s0 = lay.state_index(k, 0)
                s1 = lay.state_index(k + 1, 0)
                jac[rows, s0: s0 + nst] = -eye - 0.5 * h * a[k]
                jac[rows, s1: s1 + nst] = eye - 0.5 * h * a[k + 1]
                u0 = lay.control_index(k, 0)
                u1 = lay.control_index(k + 1, 0)
                jac[rows, u0: u0 + nctr] = -0.5 * h * b[k]
                jac[rows, u1: u1 + nctr] = -0.5 * h * b[k + 1]
                jac[rows, lay.tf_index] = -(f[k] + f[k + 1]) / (2 * self.n_intervals)
        else:
            self._fd_rows_into(jac, z, "defects")

        # path rows
        for pc in spec.path:
            r0, r1 = self.row_groups[f"path:{pc.name or 'anon'}"]
            if pc.jac_batch is not None:
                d_s, d_u, d_tau, d_t = pc.jac_batch(states, controls, tau, t_horizon)
                for k in range(lay.node_count):
                    row = r0 + k
                    s0 = lay.state_index(k, 0)
                    jac[row, s0: s0 + nst] = d_s[k]
                    u0 = lay.control_index(k, 0)
                    jac[row, u0: u0 + nctr] = d_u[k]
                    jac[row, lay.tf_index] = d_tau[k] * node_frac[k] + d_t[k]
            else:
                self._fd_rows_into(jac, z, f"path:{pc.name or 'anon'}")

        # event rows
        tf_abs = spec.start_time + t_horizon
        for ev in spec.events:
            r0, _ = self.row_groups[f"event:{ev.name or 'anon'}"]
            if ev.jac is not None:
                d0, df, dt, de = ev.jac(states[0], states[-1], t_horizon, extras)
            else:
                d0, df, dt, de = _fd_point_jac(ev.fn, states[0], states[-1],
                                               tf_abs, extras)
            jac[r0, :nst] += np.asarray(d0)
            last = lay.state_index(lay.node_count - 1, 0)
            jac[r0, last: last + nst] += np.asarray(df)
            jac[r0, lay.tf_index] += float(dt)
            if extras.size:
                jac[r0, lay.tf_index + 1:] += np.asarray(de)

        self._jac_key = key
        self._jac = jac
        return jac

    def _fd_rows_into(self, jac: Array, z: Array, group: str,
                      eps: float = _FD_STEP) -> None:
        r0, r1 = self.row_groups[group]
        base_key, base_cache = self._cache_key, self._cache
        for j in range(self.layout.size):
            zp, zm = z.copy(), z.copy()
            zp[j] += eps
            zm[j] -= eps
            vp = self._ensure_values(zp)["constraints"][r0:r1]
            vm = self._ensure_values(zm)["constraints"][r0:r1]
            jac[r0:r1, j] = (vp - vm) / (2 * eps)
        self._cache_key, self._cache = base_key, base_cache

    # -- packing ---------------------------------------------------------
    def pack(self, traj: CollocatedTrajectory) -> Array:
        lay = self.layout
        if traj.states.shape != (lay.node_count, lay.state_dim):
            raise ValueError("trajectory does not match the transcription layout")
        z = np.zeros(lay.size)
        z[: lay.n_states_flat] = traj.states.reshape(-1)
        z[lay.n_states_flat: lay.tf_index] = traj.controls.reshape(-1)
        z[lay.tf_index] = traj.t_f - self.spec.start_time
        for i, name in enumerate(lay.extra_names):
            z[lay.tf_index + 1 + i] = traj.slack_values.get(name, 0.0)
        return z

    def unpack(self, z: Array) -> CollocatedTrajectory:
        states, controls, t_horizon, extras = self.layout.split(
            np.asarray(z, dtype=float))
        times = self.spec.start_time + self._tau(t_horizon)
        slacks = {name: float(extras[i])
                  for i, name in enumerate(self.layout.extra_names)}
        return CollocatedTrajectory(
            times=times, states=states.copy(), controls=controls.copy(),
            t_f=float(times[-1]), slack_values=slacks)

    def default_initial_guess(self) -> Array:
        """Midpoint-of-box guess used when no warm start is supplied."""
        lo = np.where(np.isfinite(self.lower_bounds), self.lower_bounds, 0.0)
        hi = np.where(np.isfinite(self.upper_bounds), self.upper_bounds, 0.0)
        z = 0.5 * (lo + hi)
        for i, v in enumerate(self.spec.extra_vars):
            z[self.layout.tf_index + 1 + i] = v.init
        return z


def transcribe_trapezoidal(spec: OcpSpec, n_intervals: int) -> TranscribedNlp:
    """Transcribe the continuous problem onto N uniform trapezoidal intervals."""
    return TranscribedNlp(spec, n_intervals)
