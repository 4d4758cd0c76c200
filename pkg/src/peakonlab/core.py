"""Domain types and exact geometry of the multipeakon class.

A train u(x) = sum_j p_j exp(-|x - q_j|) is the exact solution class; its H^1
inner products are closed-form through the kernel identity
int (phi_a phi_b + phi_a' phi_b') dx = 2 exp(-|a-b|), which is what makes
error-free energy bookkeeping possible alongside grid quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .errors import InvalidScenario, SignOrderViolation

DEFAULT_PAD = 25.0

PERTURBATION_MODES = (
    "amplitude-jitter",
    "position-jitter",
    "extra-small-peakons",
    "mixed",
)


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PeakonTrain:
    """Amplitudes p and strictly increasing positions q of a peakon train."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _frozen(self.p))
        object.__setattr__(self, "q", _frozen(self.q))
        if self.p.ndim != 1 or self.q.ndim != 1 or len(self.p) != len(self.q):
            raise ValueError("p and q must be 1-d arrays of equal length")
        if len(self.p) < 1:
            raise ValueError("train must contain at least one peakon")
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.q))):
            raise ValueError("train entries must be finite")
        if np.any(self.p == 0.0):
            raise ValueError("zero amplitudes are not peakons")
        if np.any(np.diff(self.q) <= 0.0):
            raise ValueError("positions must be strictly increasing")

    @property
    def n(self) -> int:
        return len(self.p)

    @property
    def sign_ordered(self) -> bool:
        """True iff all negative amplitudes sit strictly left of all positive
        ones (the admissible pattern for global existence)."""
        pos = self.p > 0
        return bool(np.all(pos[np.argmax(pos):])) if pos.any() else True

    def translated(self, s: float) -> "PeakonTrain":
        return PeakonTrain(self.p, self.q + s)

    def reflected(self) -> "PeakonTrain":
        """The image under u(t,x) -> -u(t,-x)."""
        return PeakonTrain(-self.p[::-1], -self.q[::-1])


@dataclass(frozen=True)
class Grid:
    """Uniform grid x_m = x0 + m*h, m = 0..n-1."""

    x0: float
    h: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.x0) and np.isfinite(self.h)) or self.h <= 0:
            raise ValueError("grid requires finite x0 and h > 0")
        if self.n < 2:
            raise ValueError("grid needs at least two nodes")
        if not np.isfinite(self.x0 + (self.n - 1) * self.h):
            raise ValueError("grid nodes must be finite")

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.n)

    @property
    def x_end(self) -> float:
        return self.x0 + self.h * (self.n - 1)

    def index_of(self, x: float) -> int:
        """Nearest node index, clipped to the grid."""
        return int(np.clip(round((x - self.x0) / self.h), 0, self.n - 1))


def grid_for(positions, h: float, pad: float = DEFAULT_PAD) -> Grid:
    """Grid covering [min q - pad, max q + pad]; pad 25 puts the truncated
    tails at the e^-25 ~ 1e-11 level.

    Nodes are offset half a step from the requested endpoints so that crests
    at round coordinates fall mid-cell: the sgn(0)=0 sample at an exactly
    nodal kink would degrade the kink-cell quadrature from O(h^2) to O(h)."""
    lo = float(np.min(positions)) - pad - 0.5 * h
    hi = float(np.max(positions)) + pad
    n = int(np.ceil((hi - lo) / h)) + 1
    return Grid(lo, h, n)


@dataclass(frozen=True)
class GridField:
    """Nodal samples of u and its weak derivative u_x."""

    grid: Grid
    u: np.ndarray
    ux: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", _frozen(self.u))
        object.__setattr__(self, "ux", _frozen(self.ux))
        if len(self.u) != self.grid.n or len(self.ux) != self.grid.n:
            raise ValueError("field length must match the grid")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.ux))):
            raise ValueError("field samples must be finite")


def evaluate_train(train: PeakonTrain, x):
    """u(x) = sum_j p_j exp(-|x - q_j|); accepts scalars or arrays."""
    scalar = np.isscalar(x)
    u, _ = _kernels.eval_train(train.p, train.q, np.atleast_1d(np.asarray(x, float)))
    return float(u[0]) if scalar else u


def evaluate_train_derivative(train: PeakonTrain, x):
    """Weak derivative sum_j p_j sgn(q_j - x) exp(-|x - q_j|), sgn(0) = 0.

    The crest convention sgn(0)=0 takes the midpoint of the one-sided slopes,
    which keeps trapezoid energies consistent with the closed form."""
    scalar = np.isscalar(x)
    _, ux = _kernels.eval_train(train.p, train.q, np.atleast_1d(np.asarray(x, float)))
    return float(ux[0]) if scalar else ux


def sample_on_grid(train: PeakonTrain, grid: Grid) -> GridField:
    u, ux = _kernels.eval_train(train.p, train.q, grid.x)
    return GridField(grid, u, ux)


def h1_inner_closed_form(a: PeakonTrain, b: PeakonTrain) -> float:
    """Exact H^1 inner product int (uv + u_x v_x) of two trains:
    sum_{ij} 2 p_i^a p_j^b exp(-|q_i^a - q_j^b|)."""
    d = np.abs(a.q[:, None] - b.q[None, :])
    return float(2.0 * a.p @ np.exp(-d) @ b.p)


def h1_norm(train: PeakonTrain) -> float:
    return float(np.sqrt(max(0.0, h1_inner_closed_form(train, train))))


def h1_distance_closed_form(a: PeakonTrain, b: PeakonTrain) -> float:
    """Exact H^1 distance ||a - b|| via the Gram expansion."""
    d2 = (
        h1_inner_closed_form(a, a)
        - 2.0 * h1_inner_closed_form(a, b)
        + h1_inner_closed_form(b, b)
    )
    return float(np.sqrt(max(0.0, d2)))


def merge_trains(a: PeakonTrain, b: PeakonTrain) -> PeakonTrain:
    """Superpose two trains into one (positions must not coincide)."""
    q = np.concatenate([a.q, b.q])
    p = np.concatenate([a.p, b.p])
    order = np.argsort(q)
    return PeakonTrain(p[order], q[order])


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class Scenario:
    """Experiment description: N ordered velocities c_1<..<c_k<0<c_{k+1}<..<c_N,
    initial spacing L, perturbation size epsilon (H^1 norm target eps^2),
    horizon, integrator/grid/reporting knobs."""

    velocities: tuple
    L: float
    epsilon: float = 0.0
    t_end: float = 40.0
    seed: int = 0
    perturbation_mode: str = "amplitude-jitter"
    lambda_list: Optional[tuple] = None
    K: Optional[float] = None
    grid_h: float = 0.02
    grid_pad: float = DEFAULT_PAD
    cadence: int = 200
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    z0: Optional[tuple] = None
    k: Optional[int] = None
    max_retries: int = 16

    def __post_init__(self):
        c = np.asarray(self.velocities, dtype=float)
        if c.ndim != 1 or len(c) < 1:
            raise InvalidScenario("velocities must be a nonempty sequence")
        if np.any(c == 0.0):
            raise InvalidScenario("velocities must be nonzero")
        if np.any(np.diff(c) <= 0.0):
            raise InvalidScenario("velocities must be strictly increasing")
        k = int(np.sum(c < 0))
        if k == len(c):
            raise InvalidScenario(
                "at least one positive velocity is required "
                "(antipeakons sit left of peakons)"
            )
        if self.k is not None and self.k != k:
            raise InvalidScenario(
                f"declared k={self.k} inconsistent with velocities (k={k})"
            )
        object.__setattr__(self, "velocities", tuple(float(v) for v in c))
        object.__setattr__(self, "k", k)
        if not (self.L > 0):
            raise InvalidScenario("spacing L must be positive")
        if self.epsilon < 0:
            raise InvalidScenario("epsilon must be nonnegative")
        if not (self.t_end > 0):
            raise InvalidScenario("t_end must be positive")
        if self.perturbation_mode not in PERTURBATION_MODES:
            raise InvalidScenario(
                f"unknown perturbation mode {self.perturbation_mode!r}"
            )
        if self.grid_h <= 0 or self.grid_pad <= 0:
            raise InvalidScenario("grid step and padding must be positive")
        if self.cadence < 2:
            raise InvalidScenario("cadence must be at least 2")
        if not (0 < self.rel_tol <= 1e-2 and 0 < self.abs_tol <= 1e-2):
            raise InvalidScenario("tolerances must lie in (0, 1e-2]")
        if self.K is not None and self.K <= 0:
            raise InvalidScenario("weight scale K must be positive")
        if self.z0 is not None:
            z = np.asarray(self.z0, float)
            if len(z) != len(c) or np.any(np.diff(z) < self.L):
                raise InvalidScenario("z0 must match N with gaps >= L")
            object.__setattr__(self, "z0", tuple(float(v) for v in z))
        if self.lambda_list is not None:
            lam = np.asarray(self.lambda_list, float)
            cap = self.lambda_cap
            if np.any(lam < 0) or np.any(lam > cap):
                raise InvalidScenario(f"lambda values must lie in [0, {cap}]")
            object.__setattr__(self, "lambda_list", tuple(float(v) for v in lam))

    @property
    def n_waves(self) -> int:
        return len(self.velocities)

    @property
    def lambda_cap(self) -> float:
        """Largest admissible weight coefficient, 2/c_{k+1}."""
        if self.k >= self.n_waves:
            raise InvalidScenario("no positive velocities: lambda range undefined")
        return 2.0 / self.velocities[self.k]

    def resolved_lambdas(self) -> tuple:
        """The configured lambda list, or the default sampling: 0, the
        reciprocal bump heights 1/c_i, consecutive midpoints, and the midpoint
        toward the admissible cap 2/c_{k+1}."""
        if self.lambda_list is not None:
            return self.lambda_list
        pos = [v for v in self.velocities if v > 0]
        base = sorted({0.0} | {1.0 / v for v in pos})
        mids = [(a + b) / 2.0 for a, b in zip(base, base[1:])]
        mids.append((base[-1] + self.lambda_cap) / 2.0)
        return tuple(sorted(set(base + mids)))

    def resolved_K(self) -> float:
        """Weight scale: explicit overrides must respect K >= 4; the default
        rule K = sqrt(L)/8 is allowed below that at desk scale."""
        from .errors import BadScale

        if self.K is None:
            return float(np.sqrt(self.L) / 8.0)
        if self.K < 4.0:
            raise BadScale(
                f"explicit K={self.K} below the admissible minimum 4; "
                "omit K to use the sqrt(L)/8 default"
            )
        if self.K > np.sqrt(self.L):
            raise BadScale(f"explicit K={self.K} exceeds sqrt(L)={np.sqrt(self.L):.3g}")
        return float(self.K)

    def default_positions(self) -> np.ndarray:
        if self.z0 is not None:
            return np.asarray(self.z0, float)
        n = self.n_waves
        return self.L * (np.arange(n) - (n - 1) / 2.0)

    def sign_split_position(self) -> float:
        """Midpoint between the last negative and first positive peakon (our
        recorded choice of the admissibility split point x0)."""
        z = self.default_positions()
        if self.k == 0:
            return float(z[0] - self.L)
        if self.k == self.n_waves:
            return float(z[-1] + self.L)
        return float(0.5 * (z[self.k - 1] + z[self.k]))


def reference_train(s: Scenario) -> PeakonTrain:
    """The unperturbed train: amplitude c_j at position z_j^0."""
    return PeakonTrain(np.asarray(s.velocities, float), s.default_positions())


def _delta_norm(base: PeakonTrain, candidate: PeakonTrain) -> float:
    return h1_distance_closed_form(candidate, base)


def _extra_sites_and_signs(s: Scenario):
    """Midpoint sites between consecutive bumps; each extra peakon carries the
    sign of its side of the split point so admissibility is preserved."""
    z = s.default_positions()
    x0 = s.sign_split_position()
    sites, signs = [], []
    for a, b in zip(z[:-1], z[1:]):
        m = 0.5 * (a + b)
        sites.append(m)
        signs.append(1.0 if m >= x0 else -1.0)
    if not sites:  # N = 1: a single satellite on the outward side
        c0 = s.velocities[0]
        sites = [z[0] + (s.L if c0 > 0 else -s.L) / 2.0]
        signs = [np.sign(c0)]
    return np.asarray(sites), np.asarray(signs)


def build_perturbed_scenario(s: Scenario) -> PeakonTrain:
    """Construct the initial train: exact peakons plus a perturbation scaled so
    the H^1 distance to the exact train equals eps^2 (measured with the Gram
    formula), retrying with shrunken jitter if the sign pattern breaks."""
    base = reference_train(s)
    if s.epsilon == 0.0:
        return base

    target = s.epsilon**2
    rng = np.random.default_rng(s.seed)
    shrink = 1.0
    last_err = None
    for _ in range(max(1, s.max_retries)):
        try:
            train = _draw_perturbed(s, base, target, rng, shrink)
        except (ValueError, SignOrderViolation) as err:
            last_err = err
            shrink *= 0.5
            continue
        if not train.sign_ordered:
            last_err = SignOrderViolation("perturbation broke the sign pattern")
            shrink *= 0.5
            continue
        return train
    raise SignOrderViolation(
        f"no admissible perturbation after {s.max_retries} attempts: {last_err}"
    )


def _draw_perturbed(s, base, target, rng, shrink) -> PeakonTrain:
    mode = s.perturbation_mode
    n = base.n
    c = np.asarray(s.velocities)

    dp = np.zeros(n)
    dz = np.zeros(n)
    extra_amp = np.zeros(0)
    extra_q = np.zeros(0)

    if mode in ("amplitude-jitter", "mixed"):
        dp = rng.uniform(-1.0, 1.0, n) * np.abs(c) * shrink
    if mode in ("position-jitter", "mixed"):
        dz = rng.uniform(-1.0, 1.0, n) * shrink
    if mode in ("extra-small-peakons", "mixed"):
        extra_q, signs = _extra_sites_and_signs(s)
        extra_amp = signs * rng.uniform(0.5, 1.0, len(extra_q)) * shrink

    def assemble(scale):
        p = c + scale * dp
        q = base.q + scale * dz
        train = PeakonTrain(p, q)
        if len(extra_q):
            train = merge_trains(train, PeakonTrain(scale * extra_amp, extra_q))
        return train

    if mode == "amplitude-jitter" or mode == "extra-small-peakons":
        # the defect is itself a train, so its norm is exactly linear in scale
        unit = _delta_norm(base, assemble(1e-3)) / 1e-3
        scale = target / unit
    else:
        # position shifts enter through exp(-|dz|): solve for the scale
        scale = _bisect_scale(lambda sc: _delta_norm(base, assemble(sc)), target)

    # keep jitter well inside the validity region (distance then falls short of
    # the eps^2 target, which the <= bound permits)
    if np.any(dp != 0):
        scale = min(scale, 0.25 / np.max(np.abs(dp / c)))
    if np.any(dz != 0):
        scale = min(scale, (s.L / 8.0) / np.max(np.abs(dz)))
    return assemble(scale)


def _bisect_scale(norm_of, target, hi0=1.0, iters=80):
    lo, hi = 0.0, hi0
    grow = 0
    while norm_of(hi) < target:
        hi *= 2.0
        grow += 1
        if grow > 40:
            raise ValueError("perturbation target unreachable")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if norm_of(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
