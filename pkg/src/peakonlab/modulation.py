"""Modulation: recover the train shifts from the orthogonality conditions

    G_i(X) = int (u - sum_j phi_{c_j}(. - x_j)) d/dx phi_{c_i}(. - x_i) dx = 0

by damped Newton with a forward-difference Jacobian, track the bump maxima in
windows of width L/2 around each shift, and measure drift speeds and H^1
distances to the fitted train.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import _kernels
from .core import (
    GridField,
    PeakonTrain,
    h1_distance_closed_form,
    h1_inner_closed_form,
)
from .errors import EmptyWindow, NoConvergence, OrderingLost
from .functionals import trapezoid


@dataclass(frozen=True)
class NewtonStats:
    iterations: int
    residual: float
    damped_steps: int


@dataclass(frozen=True)
class ModulationPath:
    """Per-time modulation shifts and tracked maxima along a trajectory."""

    times: np.ndarray
    xtilde: np.ndarray  # (T, N)
    xmax: np.ndarray  # (T, N)
    stats: tuple

    def __post_init__(self):
        if np.any(np.diff(self.xtilde, axis=1) <= 0):
            raise OrderingLost("modulation path lost its ordering")


def _residuals(f: GridField, c, x_shift):
    """G_i via grid quadrature (one code path for trains and generic fields)."""
    x = f.grid.x
    h = f.grid.h
    n = len(c)
    r = np.zeros_like(x)
    for cj, xj in zip(c, x_shift):
        d = x - xj
        r += cj * np.exp(-np.abs(d))
    diff = f.u - r
    g = np.empty(n)
    for i in range(n):
        d = x - x_shift[i]
        dphi = -c[i] * np.sign(d) * np.exp(-np.abs(d))
        g[i] = trapezoid(diff * dphi, h)
    return g


def modulate(
    f: GridField,
    c: Sequence[float],
    guess: Sequence[float],
    tol: float = 1e-10,
    max_iter: int = 50,
    max_damping: int = 30,
) -> tuple:
    """Solve the orthogonality system for the shifts.

    Returns (xtilde, stats).  Raises NoConvergence when the residual will not
    drop below tol within budget (the field left the modulation tube) and
    OrderingLost when iterates cease to be increasing."""
    c = np.asarray(c, float)
    x = np.array(guess, dtype=float)
    if np.any(np.diff(x) <= 0):
        raise OrderingLost("initial guess must be strictly increasing")
    scale = max(1.0, float(np.sqrt(max(0.0, energy_of(f)))))
    tol_eff = tol * scale
    fd_step = 1e-7
    g = _residuals(f, c, x)
    damped_total = 0
    for it in range(1, max_iter + 1):
        gn = float(np.max(np.abs(g)))
        if gn <= tol_eff:
            return x, NewtonStats(it - 1, gn, damped_total)
        jac = np.empty((len(c), len(c)))
        for j in range(len(c)):
            xp = x.copy()
            xp[j] += fd_step
            jac[:, j] = (_residuals(f, c, xp) - g) / fd_step
        try:
            step = np.linalg.solve(jac, -g)
        except np.linalg.LinAlgError as err:
            raise NoConvergence(f"singular modulation Jacobian: {err}", residual=gn)
        lam = 1.0
        for _ in range(max_damping):
            x_try = x + lam * step
            if np.any(np.diff(x_try) <= 0):
                lam *= 0.5
                damped_total += 1
                continue
            g_try = _residuals(f, c, x_try)
            if np.max(np.abs(g_try)) < gn:
                break
            lam *= 0.5
            damped_total += 1
        else:
            raise NoConvergence(
                f"damping stalled at residual {gn:.3e}", residual=gn
            )
        x = x + lam * step
        if np.any(np.diff(x) <= 0):
            raise OrderingLost("modulation iterates lost their ordering")
        g = g_try
    gn = float(np.max(np.abs(g)))
    if gn <= tol_eff:
        return x, NewtonStats(max_iter, gn, damped_total)
    raise NoConvergence(f"no convergence after {max_iter} iterations", residual=gn)


def energy_of(f: GridField) -> float:
    return trapezoid(f.u**2 + f.ux**2, f.grid.h)


def _is_kink(f: GridField, m: int) -> bool:
    """A crest kink shows as an O(1) jump of u_x across one node, far above
    the O(h) smooth variation."""
    if m <= 0 or m >= f.grid.n - 1:
        return True
    jump = abs(f.ux[m + 1] - f.ux[m - 1])
    return jump > 20.0 * f.grid.h * (abs(f.u[m]) + 0.1)


def track_bumps(f: GridField, xtilde: Sequence[float], L: float) -> np.ndarray:
    """Argmax of |u| in the window [xtilde_i - L/4, xtilde_i + L/4].

    The grid argmax is refined by a quadratic fit through the three
    neighbouring nodes except at a peakon kink, where the raw node is kept."""
    g = f.grid
    out = np.empty(len(xtilde))
    for i, xc in enumerate(xtilde):
        lo, hi = xc - L / 4.0, xc + L / 4.0
        if lo < g.x0 or hi > g.x_end:
            raise EmptyWindow(f"window [{lo:.3g}, {hi:.3g}] exits the grid")
        a = g.index_of(lo)
        b = g.index_of(hi)
        if g.x[a] < lo - 1e-12:
            a += 1
        if g.x[b] > hi + 1e-12:
            b -= 1
        seg = np.abs(f.u[a : b + 1])
        m = a + int(np.argmax(seg))
        xm = g.x[m]
        if not _is_kink(f, m):
            y0, y1, y2 = np.abs(f.u[m - 1 : m + 2])
            denom = y0 - 2.0 * y1 + y2
            if denom < 0:
                shift = 0.5 * (y0 - y2) / denom
                if abs(shift) <= 1.0:
                    xm += shift * g.h
        out[i] = min(max(xm, lo), hi)
    return out


def drift_speeds(path: ModulationPath, c: Sequence[float]) -> np.ndarray:
    """Centered-difference estimates of dxtilde/dt minus the target speeds;
    shape (T-2, N) at the interior times."""
    if len(path.times) < 3:
        raise ValueError("need at least three times")
    dt = path.times[2:] - path.times[:-2]
    est = (path.xtilde[2:] - path.xtilde[:-2]) / dt[:, None]
    return est - np.asarray(c, float)[None, :]


def h1_distance_to_train(
    u: Union[PeakonTrain, GridField], c: Sequence[float], X: Sequence[float]
) -> float:
    """H^1 distance from u to the train with amplitudes c at shifts X: exact
    Gram evaluation for train inputs, grid quadrature for sampled fields."""
    X = np.asarray(X, float)
    if np.any(np.diff(X) <= 0):
        raise ValueError("shifts must be strictly increasing")
    ref = PeakonTrain(np.asarray(c, float), X)
    if isinstance(u, PeakonTrain):
        return h1_distance_closed_form(u, ref)
    ru, rux = _kernels.eval_train(ref.p, ref.q, u.grid.x)
    d2 = trapezoid((u.u - ru) ** 2 + (u.ux - rux) ** 2, u.grid.h)
    return float(np.sqrt(max(0.0, d2)))
