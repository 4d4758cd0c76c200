"""Experiment orchestration: build a perturbed scenario, integrate it, track
modulation paths and bump maxima, evaluate every conserved/localized
functional along the way, and verify the quantitative stability statements at
desk scale.  Reports serialize to CSV plus a JSON manifest that makes every
pass/fail flag recomputable."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace, asdict
from typing import Optional

import numpy as np

from . import __version__ as _pkg_version
from . import _kernels
from .core import (
    PeakonTrain,
    Scenario,
    build_perturbed_scenario,
    evaluate_train,
    grid_for,
    h1_inner_closed_form,
    sample_on_grid,
)
from .dynamics import (
    Trajectory,
    asymptotic_spectrum,
    hamiltonian,
    integrate,
    terminal_speeds,
)
from .errors import NotSettled
from .functionals import (
    build_weight_family,
    energy_E,
    energy_F,
    localized_functionals,
    make_weight_profile,
    sigma0,
)
from .modulation import h1_distance_to_train, modulate, track_bumps

# Constants the stability statements leave abstract, fitted once on the frozen
# calibration scenarios below (seed 0) and asserted thereafter with ~3x
# headroom.  Values are re-derived by benchmarks/calibrate.py.
FROZEN_CONSTANTS = {
    # N=3, c=(-1,1,2), L=64, K=1, eps=1e-2, t_end=60: measured need 0.0031
    "C_mono": 0.01,
    # 4x4 sweep eps x L on the N=2, c=(-1,1) base: measured fits 0.0031 / 0.0013
    "A_bound": 0.01,
    "C_drift": 0.005,
    # N=3, p0=(-1,1.2,2.5), q0=(-12,0,12), T=300: measured distance 1.9e-6
    "gamma_fit": 1e-4,
}

TERMINAL_WINDOW_FRACTION = 0.05


@dataclass(frozen=True)
class Report:
    """Everything an experiment measured, on one shared time axis."""

    scenario: Scenario
    times: np.ndarray
    q: np.ndarray  # (T, n_train)
    p: np.ndarray
    xtilde: np.ndarray  # (T, N)
    xmax: np.ndarray  # (T, N)
    E: np.ndarray  # grid quadrature
    F: np.ndarray
    E_i: np.ndarray  # (T, N-k)
    F_i: np.ndarray
    I: np.ndarray  # (T, N-k, n_lambda)
    I_left: np.ndarray  # (T,), nan when k = 0
    dist_h1: np.ndarray
    E_closed: np.ndarray
    lambdas: tuple
    K: float
    sigma0_right: float
    sigma0_left: float  # nan when k = 0
    x0_split: float
    eigenvalues: np.ndarray
    terminal_speeds: np.ndarray
    flags: dict

    @property
    def n_waves(self) -> int:
        return self.xtilde.shape[1]

    @property
    def k(self) -> int:
        return self.scenario.k

    def monotonicity_deltas(self) -> np.ndarray:
        """I_{j,lambda,K}(t) - I_{j,lambda,K}(0), shape (T, N-k, n_lambda)."""
        return self.I - self.I[0][None, :, :]


def _exact_crest_positions(state: PeakonTrain, xtilde, window_raw, L):
    """Snap each tracked maximum to the train crest that dominates its window.

    Peakon translation is only 1/2-Hoelder in H^1, so an O(h) argmax would
    inflate the fitted distances by O(sqrt(h)); the crest of the dominant
    peakon is the true maximizer of |u| and is known exactly for train states.
    """
    out = np.array(window_raw, dtype=float)
    crest_u = np.abs(evaluate_train(state, state.q))
    for i, xc in enumerate(xtilde):
        lo, hi = xc - L / 4.0, xc + L / 4.0
        inside = np.nonzero((state.q >= lo) & (state.q <= hi))[0]
        if len(inside):
            out[i] = state.q[inside[np.argmax(crest_u[inside])]]
    return out


def run_experiment(s: Scenario, constants: Optional[dict] = None) -> Report:
    """Run one scenario end to end and assemble the report."""
    constants = dict(FROZEN_CONSTANTS, **(constants or {}))
    c = np.asarray(s.velocities, float)
    train0 = build_perturbed_scenario(s)
    tout = np.linspace(0.0, s.t_end, s.cadence)
    traj = integrate(
        train0, s.t_end, s.rel_tol, s.abs_tol, tout
    )

    qs = traj.q
    grid = grid_for([qs.min(), qs.max()], s.grid_h, s.grid_pad)

    # pass 1: modulation, bump tracking, totals, distances
    T = len(tout)
    n = s.n_waves
    xtilde = np.empty((T, n))
    xmax = np.empty((T, n))
    E = np.empty(T)
    F = np.empty(T)
    dist = np.empty(T)
    E_closed = np.empty(T)
    guess = s.default_positions()
    for ti, t in enumerate(tout):
        state = traj.states[ti]
        field = sample_on_grid(state, grid)
        try:
            xt, _ = modulate(field, c, guess)
        except Exception as err:
            if hasattr(err, "t") and err.t is None:
                err.t = t
            raise
        xtilde[ti] = xt
        raw = track_bumps(field, xt, s.L)
        xmax[ti] = _exact_crest_positions(state, xt, raw, s.L)
        E[ti] = energy_E(field)
        F[ti] = energy_F(field)
        dist[ti] = h1_distance_to_train(state, c, xmax[ti])
        E_closed[ti] = hamiltonian(state)
        guess = xt

    # pass 2: localized functionals along the weight family
    profile = make_weight_profile()
    K = s.resolved_K()
    fam = build_weight_family(
        profile, K, tout, xtilde, c, s.L, allow_small_scale=(s.K is None)
    )
    lambdas = s.resolved_lambdas()
    nr = n - s.k
    E_i = np.empty((T, nr))
    F_i = np.empty((T, nr))
    I = np.empty((T, nr, len(lambdas)))
    I_left = np.full(T, math.nan)
    for ti, t in enumerate(tout):
        field = sample_on_grid(traj.states[ti], grid)
        fs = localized_functionals(field, fam, t, lambdas)
        E_i[ti] = fs.E_i
        F_i[ti] = fs.F_i
        I[ti] = fs.I
        I_left[ti] = fs.I_left

    sd = asymptotic_spectrum(train0)
    tsp = terminal_speeds(traj, TERMINAL_WINDOW_FRACTION * s.t_end)

    sig_r = sigma0(c, s.k)
    sig_l = math.nan
    if s.k >= 1:
        neg = c[: s.k]
        sig_l = 0.25 * float(min([-neg[-1]] + list(np.diff(neg))))

    report = Report(
        scenario=s,
        times=tout,
        q=qs,
        p=traj.p,
        xtilde=xtilde,
        xmax=xmax,
        E=E,
        F=F,
        E_i=E_i,
        F_i=F_i,
        I=I,
        I_left=I_left,
        dist_h1=dist,
        E_closed=E_closed,
        lambdas=tuple(lambdas),
        K=K,
        sigma0_right=sig_r,
        sigma0_left=sig_l,
        x0_split=s.sign_split_position(),
        eigenvalues=sd.eigenvalues,
        terminal_speeds=tsp,
        flags={},
    )
    object.__setattr__(report, "flags", compute_flags(report, constants))
    return report


# ---------------------------------------------------------------------------
# verification


def conservation_result(report: Report) -> dict:
    """Energy drift of the exact closed form and absolute drift of the grid F
    (whose wobble is quadrature noise as kinks cross cells)."""
    s = report.scenario
    e0 = report.E_closed[0]
    e_drift = float(np.max(np.abs(report.E_closed - e0)) / abs(e0))
    f_drift = float(np.max(np.abs(report.F - report.F[0])))
    p_scale = float(np.sum(np.abs(report.p[0]) ** 3))
    f_bound = 4.0 * s.grid_h**2 * p_scale + 10.0 * s.rel_tol * max(1.0, abs(e0))
    return {
        "e_drift": e_drift,
        "e_bound": 10.0 * s.rel_tol,
        "e_ok": e_drift <= 10.0 * s.rel_tol,
        "f_drift": f_drift,
        "f_bound": f_bound,
        "f_ok": f_drift <= f_bound,
    }


def verify_monotonicity(report: Report, c_mono: Optional[float] = None) -> dict:
    """Worst increase of every I_{j,lambda,K} against the exponential-tail
    bound c_mono * exp(-sigma0 L / (8K)), plus the mirrored left functional."""
    c_mono = FROZEN_CONSTANTS["C_mono"] if c_mono is None else c_mono
    s = report.scenario
    deltas = report.monotonicity_deltas()
    worst = deltas.max(axis=0)  # (N-k, n_lambda)
    bound = c_mono * math.exp(-report.sigma0_right * s.L / (8.0 * report.K))
    result = {
        "worst": worst,
        "bound": bound,
        "ok": bool(np.all(worst <= bound)),
        "left_ok": True,
        "left_worst": math.nan,
        "left_bound": math.nan,
    }
    if report.k >= 1 and np.isfinite(report.I_left[0]):
        lw = float(np.max(report.I_left - report.I_left[0]))
        lb = c_mono * math.exp(-report.sigma0_left * s.L / (8.0 * report.K))
        result.update(left_worst=lw, left_bound=lb, left_ok=bool(lw <= lb))
    result["ok"] = result["ok"] and result["left_ok"]
    return result


def stability_bound_unit(epsilon: float, L: float) -> float:
    """The stability bound's shape sqrt(eps) + L^{-1/8}."""
    return math.sqrt(epsilon) + L ** (-1.0 / 8.0)


def verify_stability_bound(report: Report, A: Optional[float] = None) -> dict:
    A = FROZEN_CONSTANTS["A_bound"] if A is None else A
    s = report.scenario
    sup = float(np.max(report.dist_h1))
    bound = A * stability_bound_unit(s.epsilon, s.L)
    return {"sup_dist": sup, "bound": bound, "margin": bound - sup,
            "ok": sup <= bound}


def drift_unit(epsilon: float, L: float) -> float:
    return epsilon**0.25 + L ** (-1.0 / 16.0)


def verify_drift(report: Report, c_drift: Optional[float] = None) -> dict:
    """Modulation speeds against c_j + O(eps^{1/4}) + O(L^{-1/16})."""
    c_drift = FROZEN_CONSTANTS["C_drift"] if c_drift is None else c_drift
    s = report.scenario
    dt = report.times[2:] - report.times[:-2]
    est = (report.xtilde[2:] - report.xtilde[:-2]) / dt[:, None]
    dev = float(np.max(np.abs(est - np.asarray(s.velocities)[None, :])))
    bound = c_drift * drift_unit(s.epsilon, s.L)
    return {"max_dev": dev, "bound": bound, "ok": dev <= bound}


def _golden_min(fun, lo, hi, iters=60):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c1 = b - g * (b - a)
    c2 = a + g * (b - a)
    f1, f2 = fun(c1), fun(c2)
    for _ in range(iters):
        if f1 <= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - g * (b - a)
            f1 = fun(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + g * (b - a)
            f2 = fun(c2)
    return (a + b) / 2.0


def best_fit_train_distance(train: PeakonTrain, amplitudes, seed_positions,
                            span: float = 4.0, sweeps: int = 40):
    """Smallest H^1 distance from `train` to trains with the given amplitudes,
    positions free: coordinate descent with golden-section line searches,
    seeded at the supplied ordered positions.  Gram closed forms throughout."""
    amps = np.asarray(amplitudes, float)
    Q = np.array(seed_positions, dtype=float)

    def dist2(Qv):
        ref = PeakonTrain(amps, Qv)
        return (
            h1_inner_closed_form(train, train)
            - 2.0 * h1_inner_closed_form(train, ref)
            + h1_inner_closed_form(ref, ref)
        )

    best = dist2(Q)
    for _ in range(sweeps):
        prev = best
        for i in range(len(Q)):
            lo = Q[i] - span
            hi = Q[i] + span
            if i > 0:
                lo = max(lo, Q[i - 1] + 1e-9)
            if i + 1 < len(Q):
                hi = min(hi, Q[i + 1] - 1e-9)

            def along(v, i=i):
                Qt = Q.copy()
                Qt[i] = v
                return dist2(Qt)

            Q[i] = _golden_min(along, lo, hi)
        best = dist2(Q)
        if prev - best < 1e-15:
            break
    return float(math.sqrt(max(0.0, best))), Q


def verify_spectral_asymptotics(
    traj: Trajectory,
    eigenvalues,
    gamma: Optional[float] = None,
    speed_tol: float = 1e-3,
    settle_rate_tol: float = 1e-5,
) -> dict:
    """Terminal sorted speeds against the kernel-matrix spectrum, and the
    best-fit eigen-amplitude train distance; raises NotSettled if speeds still
    drift faster than settle_rate_tol per unit time."""
    gamma = FROZEN_CONSTANTS["gamma_fit"] if gamma is None else gamma
    lam = np.sort(np.asarray(eigenvalues, float))
    t_end = traj.times[-1]
    w = max(TERMINAL_WINDOW_FRACTION * t_end, 2 * (traj.times[1] - traj.times[0]))
    late = terminal_speeds(traj, w)
    # settle check: compare against the window just before
    mask_prev = (traj.times >= t_end - 2 * w) & (traj.times < t_end - w)
    from .dynamics import speed_estimates

    est = speed_estimates(traj)
    prev = est.direct[mask_prev].mean(axis=0)
    rate = float(np.max(np.abs(np.sort(late) - np.sort(prev))) / w)
    if rate > settle_rate_tol:
        raise NotSettled(f"terminal speeds still drift at {rate:.3e} per unit time")
    speed_err = float(np.max(np.abs(np.sort(late) - lam)))
    final = traj.states[-1]
    dist, best_q = best_fit_train_distance(final, lam, final.q)
    return {
        "speed_err": speed_err,
        "speed_ok": speed_err <= speed_tol,
        "fit_dist": dist,
        "fit_ok": dist <= gamma,
        "fit_positions": best_q,
        "ok": speed_err <= speed_tol and dist <= gamma,
    }


def compute_flags(report: Report, constants: dict) -> dict:
    cons = conservation_result(report)
    mono = verify_monotonicity(report, constants["C_mono"])
    th2 = verify_stability_bound(report, constants["A_bound"])
    drift = verify_drift(report, constants["C_drift"])
    return {
        "conservation_E": bool(cons["e_ok"]),
        "conservation_F": bool(cons["f_ok"]),
        "monotonicity": bool(mono["ok"]),
        "stability": bool(th2["ok"]),
        "drift": bool(drift["ok"]),
    }


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepCell:
    epsilon: float
    L: float
    sup_dist: float
    unit: float
    drift_dev: float
    drift_unit_value: float
    error: Optional[str] = None

    @property
    def ratio(self) -> float:
        return self.sup_dist / self.unit


@dataclass(frozen=True)
class SweepResult:
    cells: tuple
    fitted_A: float
    fitted_C_drift: float

    def bound_table(self, A: Optional[float] = None):
        A = self.fitted_A if A is None else A
        rows = []
        for cell in self.cells:
            bound = A * cell.unit
            rows.append(
                {
                    "eps": cell.epsilon,
                    "L": cell.L,
                    "sup_dist": cell.sup_dist,
                    "bound": bound,
                    "margin": bound - cell.sup_dist,
                    "passed": cell.error is None and cell.sup_dist <= bound,
                }
            )
        return rows


def _run_cell(args):
    base_dict, eps, L = args
    s = replace(Scenario(**base_dict), epsilon=eps, L=L)
    try:
        rep = run_experiment(s)
    except Exception as err:  # aggregate per-cell failures without aborting
        return SweepCell(eps, L, math.nan, stability_bound_unit(eps, L), math.nan,
                         drift_unit(eps, L), error=f"{type(err).__name__}: {err}")
    dt = rep.times[2:] - rep.times[:-2]
    est = (rep.xtilde[2:] - rep.xtilde[:-2]) / dt[:, None]
    dev = float(np.max(np.abs(est - np.asarray(s.velocities)[None, :])))
    return SweepCell(
        eps, L, float(np.max(rep.dist_h1)), stability_bound_unit(eps, L), dev,
        drift_unit(eps, L)
    )


def _scenario_dict(s: Scenario) -> dict:
    d = asdict(s)
    d.pop("k", None)
    return d


def sweep(base: Scenario, eps_list, L_list, jobs: int = 1) -> SweepResult:
    """Run the (eps, L) grid, fit the smallest constants covering every cell,
    and keep per-cell margins.  Cells run as independent jobs and are merged
    by index, so the result is order-deterministic."""
    base_dict = _scenario_dict(base)
    tasks = [(base_dict, float(e), float(L)) for e in eps_list for L in L_list]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell, tasks))
    else:
        cells = [_run_cell(t) for t in tasks]
    ok = [c for c in cells if c.error is None]
    fitted_A = max((c.ratio for c in ok), default=math.nan)
    fitted_C = max((c.drift_dev / c.drift_unit_value for c in ok), default=math.nan)
    return SweepResult(tuple(cells), float(fitted_A), float(fitted_C))


# ---------------------------------------------------------------------------
# serialization


def _series_columns(report: Report):
    s = report.scenario
    n_train = report.q.shape[1]
    n = report.n_waves
    k = report.k
    cols = [("t", report.times)]
    cols += [(f"q_{j+1}", report.q[:, j]) for j in range(n_train)]
    cols += [(f"p_{j+1}", report.p[:, j]) for j in range(n_train)]
    cols += [(f"xtilde_{j+1}", report.xtilde[:, j]) for j in range(n)]
    cols += [(f"xmax_{j+1}", report.xmax[:, j]) for j in range(n)]
    cols += [("E", report.E), ("F", report.F)]
    cols += [(f"E_{k+1+j}", report.E_i[:, j]) for j in range(n - k)]
    cols += [(f"F_{k+1+j}", report.F_i[:, j]) for j in range(n - k)]
    for j in range(n - k):
        for li in range(len(report.lambdas)):
            cols.append((f"I_j{k+1+j}_lam{li}", report.I[:, j, li]))
    if k >= 1:
        cols.append(("Itilde_k", report.I_left))
    cols.append(("dist_h1", report.dist_h1))
    return cols


def write_report_csv(report: Report, path: str) -> None:
    cols = _series_columns(report)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([name for name, _ in cols])
        for row in zip(*(series for _, series in cols)):
            w.writerow([f"{v:.17g}" for v in row])


def manifest_dict(report: Report) -> dict:
    s = report.scenario
    return {
        "scenario": _scenario_dict(s),
        "lambda_list": list(report.lambdas),
        "K": report.K,
        "sigma0_right": report.sigma0_right,
        "sigma0_left": report.sigma0_left,
        "x0_split": report.x0_split,
        "eigenvalues": report.eigenvalues.tolist(),
        "terminal_speeds": report.terminal_speeds.tolist(),
        "n_train": int(report.q.shape[1]),
        "flags": report.flags,
        "constants": dict(FROZEN_CONSTANTS),
        "versions": {
            "peakonlab": _pkg_version,
            "numpy": np.__version__,
            "kernel_backend": _kernels.backend_name(),
        },
    }


def write_manifest(report: Report, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(manifest_dict(report), fh, indent=2, sort_keys=True)


def read_report(csv_path: str, manifest_path: Optional[str] = None) -> Report:
    """Rebuild a Report from its CSV and manifest (flags recomputed later by
    the caller if desired)."""
    if manifest_path is None:
        manifest_path = os.path.splitext(csv_path)[0] + ".manifest.json"
    with open(manifest_path) as fh:
        man = json.load(fh)
    sdict = man["scenario"]
    sdict["velocities"] = tuple(sdict["velocities"])
    for key in ("lambda_list", "z0"):
        if sdict.get(key) is not None:
            sdict[key] = tuple(sdict[key])
    s = Scenario(**sdict)
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    col = {name: data[:, i] for i, name in enumerate(header)}
    n_train = man["n_train"]
    n = len(s.velocities)
    k = s.k
    lambdas = tuple(man["lambda_list"])
    T = data.shape[0]
    I = np.empty((T, n - k, len(lambdas)))
    for j in range(n - k):
        for li in range(len(lambdas)):
            I[:, j, li] = col[f"I_j{k+1+j}_lam{li}"]
    report = Report(
        scenario=s,
        times=col["t"],
        q=np.stack([col[f"q_{j+1}"] for j in range(n_train)], axis=1),
        p=np.stack([col[f"p_{j+1}"] for j in range(n_train)], axis=1),
        xtilde=np.stack([col[f"xtilde_{j+1}"] for j in range(n)], axis=1),
        xmax=np.stack([col[f"xmax_{j+1}"] for j in range(n)], axis=1),
        E=col["E"],
        F=col["F"],
        E_i=np.stack([col[f"E_{k+1+j}"] for j in range(n - k)], axis=1),
        F_i=np.stack([col[f"F_{k+1+j}"] for j in range(n - k)], axis=1),
        I=I,
        I_left=col["Itilde_k"] if k >= 1 else np.full(T, math.nan),
        dist_h1=col["dist_h1"],
        E_closed=_closed_energy_series(
            np.stack([col[f"q_{j+1}"] for j in range(n_train)], axis=1),
            np.stack([col[f"p_{j+1}"] for j in range(n_train)], axis=1),
        ),
        lambdas=lambdas,
        K=man["K"],
        sigma0_right=man["sigma0_right"],
        sigma0_left=man["sigma0_left"],
        x0_split=man["x0_split"],
        eigenvalues=np.asarray(man["eigenvalues"]),
        terminal_speeds=np.asarray(man["terminal_speeds"]),
        flags=dict(man["flags"]),
    )
    return report


def _closed_energy_series(q, p):
    out = np.empty(len(q))
    for i in range(len(q)):
        out[i] = hamiltonian(PeakonTrain(p[i], q[i]))
    return out


def write_sweep_csv(result: SweepResult, path: str, A: Optional[float] = None) -> None:
    rows = result.bound_table(A)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eps", "L", "sup_dist", "bound", "margin", "passed"])
        for r in rows:
            w.writerow(
                [f"{r['eps']:.17g}", f"{r['L']:.17g}", f"{r['sup_dist']:.17g}",
                 f"{r['bound']:.17g}", f"{r['margin']:.17g}", int(r["passed"])]
            )
