"""Multipeakon Hamiltonian dynamics.

The ODE system

    qdot_i = sum_j p_j e^{-|q_i-q_j|}
    pdot_i = sum_j p_i p_j sgn(q_i-q_j) e^{-|q_i-q_j|}

is integrated with an embedded Dormand-Prince 5(4) pair under PI step control.
Positions are checked for ordering at every accepted step; a minimum-gap event
aborts with CollisionDetected since the ordered-train assumptions stop holding
there.  The asymptotic speeds are the eigenvalues of the kernel matrix
(p_j e^{-|q_i-q_j|/2}), computed by cyclic Jacobi on a symmetrized form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .core import PeakonTrain, h1_inner_closed_form
from .errors import CollisionDetected, NotPositiveDefinite, StepSizeUnderflow

DEFAULT_MIN_GAP = 1e-6

# Dormand-Prince 5(4) tableau; the propagated solution is 5th order and the
# first same-as-last stage doubles as the next step's k1.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_ERR = _B5 - _B4


@dataclass(frozen=True)
class IntegratorStats:
    steps: int
    rejected: int
    max_error_estimate: float


@dataclass(frozen=True)
class Trajectory:
    """States sampled at the requested output times (N constant, ordering
    verified at every accepted step)."""

    times: np.ndarray
    states: tuple
    stats: IntegratorStats

    def __post_init__(self):
        t = np.asarray(self.times, float)
        object.__setattr__(self, "times", t)
        if np.any(np.diff(t) <= 0):
            raise ValueError("output times must be strictly increasing")
        if len(self.states) != len(t):
            raise ValueError("one state per output time required")
        n = self.states[0].n
        if any(st.n != n for st in self.states):
            raise ValueError("train size must stay constant")

    @property
    def q(self) -> np.ndarray:
        return np.stack([st.q for st in self.states])

    @property
    def p(self) -> np.ndarray:
        return np.stack([st.p for st in self.states])


def ode_rhs(train: PeakonTrain):
    """(qdot, pdot) of the multipeakon system; the sgn(0)=0 convention kills
    the diagonal term of pdot."""
    return _kernels.ode_rhs(train.p, train.q)


def hamiltonian(train: PeakonTrain) -> float:
    """Conserved energy E(u) = 2 sum_{ij} p_i p_j e^{-|q_i-q_j|}."""
    return h1_inner_closed_form(train, train)


def _rhs_flat(y, n):
    qdot, pdot = _kernels.ode_rhs(y[n:], y[:n])
    return np.concatenate([qdot, pdot])


def _check_ordered(q, t, min_gap):
    gaps = np.diff(q)
    if len(gaps) and (np.any(gaps <= 0.0) or np.min(gaps) < min_gap):
        raise CollisionDetected(
            f"position gap fell below {min_gap:g} at t={t:.6g}", t=t
        )


def _hermite(t, t0, y0, f0, t1, y1, f1):
    """Cubic Hermite dense output between accepted steps."""
    h = t1 - t0
    s = (t - t0) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _initial_step(y0, f0, t_end, rel_tol, abs_tol):
    scale = abs_tol + rel_tol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    return min(h0, t_end / 10.0)


def integrate(
    train: PeakonTrain,
    t_end: float,
    rel_tol: float = 1e-10,
    abs_tol: float = 1e-12,
    output_times: Optional[Sequence[float]] = None,
    min_gap: float = DEFAULT_MIN_GAP,
    max_steps: int = 5_000_000,
) -> Trajectory:
    """Adaptive DP5(4) solution sampled at output_times.

    Raises CollisionDetected when two positions approach within min_gap and
    StepSizeUnderflow when the controller cannot meet tolerance."""
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if not (0 < rel_tol <= 1e-2 and 0 < abs_tol <= 1e-2):
        raise ValueError("tolerances must lie in (0, 1e-2]")
    if output_times is None:
        output_times = np.linspace(0.0, t_end, 201)
    tout = np.asarray(output_times, float)
    if np.any(tout < 0) or np.any(tout > t_end + 1e-12) or np.any(np.diff(tout) <= 0):
        raise ValueError("output times must be increasing within [0, t_end]")

    n = train.n
    t = 0.0
    y = np.concatenate([train.q, train.p])
    f = _rhs_flat(y, n)
    _check_ordered(y[:n], t, min_gap)

    h = _initial_step(y, f, t_end, rel_tol, abs_tol)
    err_prev = 1.0
    steps = rejected = 0
    max_err = 0.0

    out_states = []
    oi = 0
    while oi < len(tout) and tout[oi] <= t + 1e-14:
        out_states.append(PeakonTrain(y[n:], y[:n]))
        oi += 1

    k = np.empty((7, 2 * n))
    while t < t_end - 1e-14 * max(1.0, t_end):
        if steps + rejected > max_steps:
            raise StepSizeUnderflow(f"step budget exceeded at t={t:.6g}", t=t)
        h_cap = t_end - t
        if oi < len(tout):
            # land exactly on output times: sampled states then carry full
            # integrator accuracy instead of O(step^4) interpolation error
            h_cap = min(h_cap, tout[oi] - t)
        h_step = min(h, max(h_cap, 1e-14))
        if h_step < 1e-14 * max(1.0, abs(t)):
            raise StepSizeUnderflow(f"step size underflow at t={t:.6g}", t=t)

        k[0] = f
        for i in range(1, 7):
            yi = y + h_step * (_A[i] @ k[:i])
            k[i] = _rhs_flat(yi, n)
        y_new = y + h_step * (_B5 @ k)
        err_vec = h_step * (_ERR @ k)
        scale = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))

        if err <= 1.0:
            t_new = t + h_step
            _check_ordered(y_new[:n], t_new, min_gap)
            f_new = k[6]  # FSAL
            while oi < len(tout) and tout[oi] <= t_new + 1e-14:
                ts = min(tout[oi], t_new)
                ys = _hermite(ts, t, y, f, t_new, y_new, f_new)
                out_states.append(PeakonTrain(ys[n:], ys[:n]))
                oi += 1
            t, y, f = t_new, y_new, f_new
            steps += 1
            max_err = max(max_err, err)
            fac = 0.9 * err ** -0.14 * err_prev**0.08 if err > 0 else 5.0
            err_prev = max(err, 1e-10)
            h = h_step * min(5.0, max(0.2, fac))
        else:
            rejected += 1
            h = h_step * max(0.2, 0.9 * err**-0.2)

    while oi < len(tout):  # output times at (or numerically past) t_end
        out_states.append(PeakonTrain(y[n:], y[:n]))
        oi += 1

    return Trajectory(tout, tuple(out_states), IntegratorStats(steps, rejected, max_err))


def integrate_fixed_rk4(train: PeakonTrain, t_end: float, step: float) -> PeakonTrain:
    """Classical fixed-step RK4 endpoint state; the brute-force reference the
    adaptive integrator is cross-checked against."""
    nsteps = int(round(t_end / step))
    if abs(nsteps * step - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be an integer number of steps")
    p, q = _kernels.rk4_path(train.p, train.q, step, nsteps)
    return PeakonTrain(p, q)


# ---------------------------------------------------------------------------
# spectral data


@dataclass(frozen=True)
class SpectralData:
    """Kernel matrix M_ij = p_j e^{-|q_i-q_j|/2} of a train, plus its sorted
    real spectrum once computed."""

    p: np.ndarray
    q: np.ndarray
    matrix: np.ndarray
    eigenvalues: Optional[np.ndarray] = None


def asymptotic_matrix(train: PeakonTrain) -> SpectralData:
    e = np.exp(-0.5 * np.abs(train.q[:, None] - train.q[None, :]))
    return SpectralData(train.p, train.q, e * train.p[None, :])


def jacobi_eigh(a: np.ndarray, tol_factor: float = 1e-12, max_sweeps: int = 50):
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Sweeps until the off-diagonal Frobenius mass drops below
    tol_factor * ||A||_F.  Returns (eigenvalues, eigenvectors) unsorted.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    norm = np.linalg.norm(a)
    if n == 1:
        return np.array([a[0, 0]]), v
    for _ in range(max_sweeps):
        off = np.sqrt(max(0.0, np.sum(a * a) - np.sum(np.diag(a) ** 2)))
        if off <= tol_factor * max(norm, 1e-300):
            break
        for i in range(n - 1):
            for j in range(i + 1, n):
                if abs(a[i, j]) <= 1e-300:
                    continue
                tau = (a[j, j] - a[i, i]) / (2.0 * a[i, j])
                t = np.sign(tau) / (abs(tau) + np.hypot(1.0, tau)) if tau != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rot = np.array([[c, s], [-s, c]])
                rows = a[[i, j], :]
                a[[i, j], :] = rot.T @ rows
                cols = a[:, [i, j]]
                a[:, [i, j]] = cols @ rot
                a[i, j] = a[j, i] = 0.0
                v[:, [i, j]] = v[:, [i, j]] @ rot
    return np.diag(a).copy(), v


def eigenvalues_real(spec: SpectralData) -> np.ndarray:
    """Sorted real eigenvalues of the kernel matrix.

    M = E diag(p) with E_ij = e^{-|q_i-q_j|/2} symmetric positive definite, so
    M is similar to the symmetric E^{1/2} diag(p) E^{1/2}: diagonalize E by
    Jacobi, form the square root, and run Jacobi again."""
    e = np.exp(-0.5 * np.abs(spec.q[:, None] - spec.q[None, :]))
    w, v = jacobi_eigh(e)
    if np.min(w) <= 1e-12:
        raise NotPositiveDefinite(
            f"kernel matrix eigenvalue {np.min(w):.3e} <= 1e-12 "
            "(numerically coincident positions)"
        )
    root = (v * np.sqrt(w)) @ v.T
    sym = root @ (spec.p[:, None] * root)  # E^{1/2} P E^{1/2}
    vals, _ = jacobi_eigh(sym)
    return np.sort(vals)


def asymptotic_spectrum(train: PeakonTrain) -> SpectralData:
    sd = asymptotic_matrix(train)
    return SpectralData(sd.p, sd.q, sd.matrix, eigenvalues_real(sd))


# ---------------------------------------------------------------------------
# speed estimates


@dataclass(frozen=True)
class SpeedEstimates:
    """qdot along a trajectory: exact values from the right-hand side at the
    stored states, and centered differences of the positions (interior times)."""

    times: np.ndarray
    direct: np.ndarray  # (T, N)
    finite_difference: np.ndarray  # (T-2, N) at times[1:-1]


def speed_estimates(traj: Trajectory) -> SpeedEstimates:
    if len(traj.times) < 3:
        raise ValueError("need at least three output times")
    direct = np.stack([ode_rhs(st)[0] for st in traj.states])
    qs = traj.q
    dt = traj.times[2:] - traj.times[:-2]
    fd = (qs[2:] - qs[:-2]) / dt[:, None]
    return SpeedEstimates(traj.times, direct, fd)


def terminal_speeds(traj: Trajectory, window: float) -> np.ndarray:
    """Mean of the exact qdot over the trailing window of the trajectory."""
    est = speed_estimates(traj)
    mask = traj.times >= traj.times[-1] - window
    return est.direct[mask].mean(axis=0)
