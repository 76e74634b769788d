"""Pure-NumPy kernels: vehicle dynamics, Jacobians, wheel loads, RK4.

These are the reference implementations; ``ugvplan._kernels._core`` is a
compiled drop-in replacement selected at import time.  Both operate on a
flat parameter vector (see PARAM_NAMES) so the hot loops never touch
Python objects.

State layout:   x, y, v, wz, psi, sa, ux, ax
Control layout: gamma, jx
"""
from __future__ import annotations

import numpy as np

PARAM_NAMES = (
    "m_t", "i_zz", "l_f", "l_r", "k_zx", "k_zyr", "k_zyf", "gravity",
    "tire_b", "tire_c", "tire_e", "tire_mu", "u_floor",
)
N_PARAMS = len(PARAM_NAMES)


def _tire_force(alpha, fz_axle, p):
    """Lateral axle force and partials wrt slip angle and axle load.

    Positive slip produces a negative (restoring) force; peak force scales
    with the vertical axle load through the friction coefficient.
    """
    b, c, e, mu = p[8], p[9], p[10], p[11]
    t = b * alpha
    at = np.arctan(t)
    phi = t - e * (t - at)
    cat = c * np.arctan(phi)
    s, co = np.sin(cat), np.cos(cat)
    force = -mu * fz_axle * s
    dphi = b * (1.0 - e * (1.0 - 1.0 / (1.0 + t * t)))
    dalpha = -mu * fz_axle * co * c / (1.0 + phi * phi) * dphi
    dfz = -mu * s
    return force, dalpha, dfz


def _axle_quantities(states, p):
    """Slip angles, axle loads, lateral forces and all their state partials."""
    v, wz, sa, ux, ax = (states[:, i] for i in (2, 3, 5, 6, 7))
    m_t, l_f, l_r, k_zx, g = p[0], p[2], p[3], p[4], p[7]
    u = np.maximum(ux, p[12])
    clamped = ux < p[12]

    wf = v + l_f * wz
    wr = v - l_r * wz
    qf = wf / u
    qr = wr / u
    alpha_f = np.arctan(qf) - sa
    alpha_r = np.arctan(qr)
    gf = 1.0 / (1.0 + qf * qf)
    gr = 1.0 / (1.0 + qr * qr)
    du = np.where(clamped, 0.0, 1.0)  # clamp freezes the u-dependence

    # columns: d/dv, d/dwz, d/dux
    daf = np.stack([gf / u, gf * l_f / u, -gf * wf / (u * u) * du], axis=1)
    dar = np.stack([gr / u, -gr * l_r / u, -gr * wr / (u * u) * du], axis=1)

    fzf0 = m_t * l_r * g / (l_f + l_r)
    fzr0 = m_t * l_f * g / (l_f + l_r)
    shift = k_zx * (ax - v * wz)
    fzf_axle = fzf0 - shift
    fzr_axle = fzr0 + shift
    # columns: d/dv, d/dwz, d/dax
    dfzf = np.stack([k_zx * wz, k_zx * v, -k_zx * np.ones_like(v)], axis=1)
    dfzr = -dfzf

    fyf, fyf_da, fyf_dfz = _tire_force(alpha_f, fzf_axle, p)
    fyr, fyr_da, fyr_dfz = _tire_force(alpha_r, fzr_axle, p)

    # partials over (v, wz, sa, ux, ax)
    dfyf = np.zeros((states.shape[0], 5))
    dfyf[:, 0] = fyf_da * daf[:, 0] + fyf_dfz * dfzf[:, 0]
    dfyf[:, 1] = fyf_da * daf[:, 1] + fyf_dfz * dfzf[:, 1]
    dfyf[:, 2] = -fyf_da
    dfyf[:, 3] = fyf_da * daf[:, 2]
    dfyf[:, 4] = fyf_dfz * dfzf[:, 2]

    dfyr = np.zeros_like(dfyf)
    dfyr[:, 0] = fyr_da * dar[:, 0] + fyr_dfz * dfzr[:, 0]
    dfyr[:, 1] = fyr_da * dar[:, 1] + fyr_dfz * dfzr[:, 1]
    dfyr[:, 3] = fyr_da * dar[:, 2]
    dfyr[:, 4] = fyr_dfz * dfzr[:, 2]

    return {
        "alpha_f": alpha_f, "alpha_r": alpha_r,
        "fzf_axle": fzf_axle, "fzr_axle": fzr_axle,
        "dfzf": dfzf, "dfzr": dfzr,
        "fyf": fyf, "fyr": fyr, "dfyf": dfyf, "dfyr": dfyr,
    }


def dynamics_batch(states, controls, p):
    """Time derivative of the 8 vehicle states at each row."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    v, wz, psi, ux, ax = (states[:, i] for i in (2, 3, 4, 6, 7))
    l_f, l_r, m_t, i_zz = p[2], p[3], p[0], p[1]

    q = _axle_quantities(states, p)
    fyf, fyr = q["fyf"], q["fyr"]

    w = v + l_f * wz
    out = np.empty_like(states)
    out[:, 0] = ux * np.cos(psi) - w * np.sin(psi)
    out[:, 1] = ux * np.sin(psi) + w * np.cos(psi)
    out[:, 2] = (fyf + fyr) / m_t - ux * wz
    out[:, 3] = (fyf * l_f - fyr * l_r) / i_zz
    out[:, 4] = wz
    out[:, 5] = controls[:, 0]
    out[:, 6] = ax
    out[:, 7] = controls[:, 1]
    return out


def dynamics_jacobian_batch(states, controls, p):
    """Jacobians of the dynamics wrt state (K,8,8) and control (K,8,2)."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    k = states.shape[0]
    v, wz, psi, ux = (states[:, i] for i in (2, 3, 4, 6))
    l_f, l_r, m_t, i_zz = p[2], p[3], p[0], p[1]

    q = _axle_quantities(states, p)
    dfyf, dfyr = q["dfyf"], q["dfyr"]

    a = np.zeros((k, 8, 8))
    b = np.zeros((k, 8, 2))
    s, c = np.sin(psi), np.cos(psi)
    w = v + l_f * wz

    a[:, 0, 2] = -s
    a[:, 0, 3] = -l_f * s
    a[:, 0, 4] = -ux * s - w * c
    a[:, 0, 6] = c

    a[:, 1, 2] = c
    a[:, 1, 3] = l_f * c
    a[:, 1, 4] = ux * c - w * s
    a[:, 1, 6] = s

    cols = (2, 3, 5, 6, 7)
    for j, col in enumerate(cols):
        a[:, 2, col] = (dfyf[:, j] + dfyr[:, j]) / m_t
        a[:, 3, col] = (dfyf[:, j] * l_f - dfyr[:, j] * l_r) / i_zz
    a[:, 2, 3] += -ux
    a[:, 2, 6] += -wz

    a[:, 4, 3] = 1.0
    a[:, 6, 7] = 1.0
    b[:, 5, 0] = 1.0
    b[:, 7, 1] = 1.0
    return a, b


def wheel_loads_batch(states, p):
    """Vertical loads on the four wheels (rl, rr, fl, fr), one pass.

    Axle sums are independent of the lateral forces, so the loads are
    evaluated from the axle loads first and the lateral split second.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    q = _axle_quantities(states, p)
    m_t, k_zyr, k_zyf = p[0], p[5], p[6]
    lat = (q["fyf"] + q["fyr"]) / m_t
    out = np.empty((states.shape[0], 4))
    out[:, 0] = 0.5 * q["fzr_axle"] - k_zyr * lat
    out[:, 1] = 0.5 * q["fzr_axle"] + k_zyr * lat
    out[:, 2] = 0.5 * q["fzf_axle"] - k_zyf * lat
    out[:, 3] = 0.5 * q["fzf_axle"] + k_zyf * lat
    return out


def wheel_loads_jacobian_batch(states, p):
    """State Jacobian (K,4,8) of the four wheel loads."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    k = states.shape[0]
    q = _axle_quantities(states, p)
    m_t, k_zyr, k_zyf = p[0], p[5], p[6]
    dlat = (q["dfyf"] + q["dfyr"]) / m_t  # over (v, wz, sa, ux, ax)

    jac = np.zeros((k, 4, 8))
    cols = (2, 3, 5, 6, 7)
    axle_cols = {2: 0, 3: 1, 7: 2}  # axle loads depend on v, wz, ax only
    for j, col in enumerate(cols):
        dr = 0.5 * q["dfzr"][:, axle_cols[col]] if col in axle_cols else 0.0
        df = 0.5 * q["dfzf"][:, axle_cols[col]] if col in axle_cols else 0.0
        jac[:, 0, col] = dr - k_zyr * dlat[:, j]
        jac[:, 1, col] = dr + k_zyr * dlat[:, j]
        jac[:, 2, col] = df - k_zyf * dlat[:, j]
        jac[:, 3, col] = df + k_zyf * dlat[:, j]
    return jac


def rk4_pwl(x0, p, t0, t1, step, t_ctrl, u_ctrl):
    """Classical RK4 over [t0, t1] under a piecewise-linear control signal.

    The final step is shortened to land exactly on t1.  Returns the node
    times and the state at every node (including both endpoints).
    """
    x0 = np.asarray(x0, dtype=float)
    t_ctrl = np.asarray(t_ctrl, dtype=float)
    u_ctrl = np.asarray(u_ctrl, dtype=float)
    span = t1 - t0
    n = max(1, int(np.ceil(span / step - 1e-12)))
    times = np.empty(n + 1)
    times[:-1] = t0 + step * np.arange(n)
    times[-1] = t1

    def u_at(t):
        return np.array([
            np.interp(t, t_ctrl, u_ctrl[:, 0]),
            np.interp(t, t_ctrl, u_ctrl[:, 1]),
        ])

    states = np.empty((n + 1, x0.size))
    states[0] = x0
    x = x0.copy()
    for i in range(n):
        ta, tb = times[i], times[i + 1]
        h = tb - ta
        k1 = dynamics_batch(x, u_at(ta), p)[0]
        k2 = dynamics_batch(x + 0.5 * h * k1, u_at(ta + 0.5 * h), p)[0]
        k3 = dynamics_batch(x + 0.5 * h * k2, u_at(ta + 0.5 * h), p)[0]
        k4 = dynamics_batch(x + h * k3, u_at(tb), p)[0]
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        states[i + 1] = x
    return times, states
