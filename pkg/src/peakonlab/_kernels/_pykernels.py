"""Pure-numpy kernels.  Same contracts as the compiled extension; selected at
import time when the extension is unavailable or PEAKONLAB_FORCE_PYTHON is set.
"""

import numpy as np
from scipy.signal import lfilter

BACKEND = "python"


def eval_train(p, q, x):
    """Sample u and its weak derivative u_x of a peakon train on points x.

    u(x)  = sum_j p_j exp(-|x - q_j|)
    u_x(x) = sum_j p_j sgn(q_j - x) exp(-|x - q_j|),  sgn(0) = 0
    """
    x = np.asarray(x, dtype=np.float64)
    u = np.zeros_like(x)
    ux = np.zeros_like(x)
    for pj, qj in zip(p, q):
        d = x - qj
        e = np.exp(-np.abs(d))
        u += pj * e
        ux -= pj * np.sign(d) * e
    return u, ux


def ode_rhs(p, q):
    """Right-hand side of the multipeakon system:
    qdot_i = sum_j p_j e^{-|q_i-q_j|},
    pdot_i = p_i sum_j p_j sgn(q_i-q_j) e^{-|q_i-q_j|}  (sgn(0)=0).
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    d = q[:, None] - q[None, :]
    e = np.exp(-np.abs(d))
    qdot = e @ p
    pdot = p * ((np.sign(d) * e) @ p)
    return qdot, pdot


def rk4_path(p0, q0, dt, nsteps):
    """Fixed-step classical RK4 on the multipeakon system; returns the final
    (p, q).  Reference integrator for cross-checking the adaptive one."""
    p = np.array(p0, dtype=np.float64)
    q = np.array(q0, dtype=np.float64)
    half = 0.5 * dt
    sixth = dt / 6.0
    for _ in range(nsteps):
        kq1, kp1 = ode_rhs(p, q)
        kq2, kp2 = ode_rhs(p + half * kp1, q + half * kq1)
        kq3, kp3 = ode_rhs(p + half * kp2, q + half * kq2)
        kq4, kp4 = ode_rhs(p + dt * kp3, q + dt * kq3)
        q += sixth * (kq1 + 2.0 * kq2 + 2.0 * kq3 + kq4)
        p += sixth * (kp1 + 2.0 * kp2 + 2.0 * kp3 + kp4)
    return p, q


def exp_accumulate(v, dx):
    """One-sided exponential accumulators of a sampled function:

    fwd_m = sum_{j<=m} e^{-(m-j)dx} v_j     (left-to-right recursion)
    bwd_m = sum_{j>=m} e^{-(j-m)dx} v_j     (right-to-left recursion)
    """
    v = np.asarray(v, dtype=np.float64)
    a = np.exp(-dx)
    fwd = lfilter([1.0], [1.0, -a], v)
    bwd = lfilter([1.0], [1.0, -a], v[::-1])[::-1]
    return fwd, np.ascontiguousarray(bwd)
