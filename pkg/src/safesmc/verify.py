"""Post-hoc certificate monitors over a recorded trajectory.

Every monitor recomputes what it checks from the logged ``x``, ``z`` and
``u_smc`` columns instead of trusting logged internals, so a controller bug
cannot certify itself. Monitors never modify the trajectory.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import ChannelDegenerate, EmptyTrajectory
from .model import ChannelKind, Mode, SafeguardParams
from .safeguard import coefficients, select_channel, upsilon
from .sim import REACH_THRESHOLD, Scenario, SimResult, Trajectory, _crossing_time
from .smc import reaching_time_bound, sliding_variable

SAFETY_TOL = 1e-3
RESIDUAL_TOL = 1e-6
GRID = (-200.0, 200.0, 1e-3)
CHATTER_FACTOR = 3.0
CURVATURE_FACTOR = 10.0


@dataclass(frozen=True)
class SafetyReport:
    min_h: float
    first_violation: Optional[float]
    tol: float = SAFETY_TOL

    @property
    def passed(self) -> bool:
        return self.first_violation is None


def safety_report(traj: Trajectory, scenario: Optional[Scenario] = None, tol: float = SAFETY_TOL) -> SafetyReport:
    """Minimum of h over the log and the first time h < -tol.

    With a scenario, h is recomputed from the logged states; otherwise the
    logged column is used.
    """
    if len(traj) == 0:
        raise EmptyTrajectory("safety_report needs at least one record")
    if scenario is None:
        h = traj.h
    else:
        h = np.array([float(scenario.safety.h(x)) for x in traj.x])
    bad = np.flatnonzero(h < -tol)
    first = float(traj.t[bad[0]]) if bad.size else None
    return SafetyReport(float(h.min()), first, tol)


# ---------------------------------------------------------------------------
# Closed-form inequality


@dataclass(frozen=True)
class ResidualReport:
    """Minimum of a_j u_s - b|u_s| - c over ACTIVE samples with u_s != 0."""

    min_residual: Optional[float]
    n_samples: int
    channel: Optional[int]
    tol: float = RESIDUAL_TOL

    @property
    def vacuous(self) -> bool:
        return self.n_samples == 0

    @property
    def passed(self) -> bool:
        return self.vacuous or self.min_residual >= -self.tol


def _s_at(scenario: Scenario, x: np.ndarray) -> np.ndarray:
    m = scenario.plant.m
    return sliding_variable(scenario.sliding, x[:m], x[m:])


def _coeffs_at(scenario: Scenario, traj: Trajectory, k: int):
    x = traj.x[k]
    return coefficients(x, float(traj.z[k]), _s_at(scenario, x), traj.u_smc[k],
                        scenario.plant, scenario.sliding, scenario.safety, scenario.params)


def recover_channel(traj: Trajectory, scenario: Scenario) -> Optional[int]:
    """The safeguarded channel, re-derived from the rule rather than read from the log."""
    rule = scenario.params.channel_rule
    if len(traj) == 0:
        return None
    if rule.kind is not ChannelKind.ARGMAX_AT_ACTIVATION:
        return select_channel(rule, traj.x[0])
    active = np.flatnonzero(traj.mode == int(Mode.ACTIVE))
    if active.size == 0:
        return None
    try:
        return select_channel(rule, traj.x[0], _coeffs_at(scenario, traj, int(active[0])))
    except ChannelDegenerate:
        return None


def inequality_residuals(traj: Trajectory, scenario: Scenario, tol: float = RESIDUAL_TOL) -> ResidualReport:
    """Recompute (a, b, c) at each ACTIVE sample with u_s != 0 and evaluate the inequality."""
    idx = np.flatnonzero((traj.mode == int(Mode.ACTIVE)) & (traj.u_s != 0.0))
    j = recover_channel(traj, scenario)
    if idx.size == 0 or j is None:
        return ResidualReport(None, 0, j, tol)
    worst = math.inf
    for k in idx:
        co = _coeffs_at(scenario, traj, int(k))
        us = float(traj.u_s[k])
        worst = min(worst, float(co.a[j - 1]) * us - co.b * abs(us) - co.c)
    return ResidualReport(worst, int(idx.size), j, tol)


# ---------------------------------------------------------------------------
# Finite-difference certificates


def _reset_adjacent(traj: Trajectory) -> np.ndarray:
    """Mask of forward differences k -> k+1 touching a reset at either end."""
    r = traj.reset
    return r[:-1] | r[1:]


def _chatter_band(y: np.ndarray, dt: np.ndarray, valid: np.ndarray) -> tuple[np.ndarray, float]:
    """Mask of forward differences with an endpoint inside the switching band of ``y``.

    The band is ``eps = 3 dt max|dy/dt|`` (max over the ``valid`` differences),
    so a component outside it cannot cross zero within one step. ``y`` is
    (n,) or (n, p); for vectors any component inside the band counts.
    """
    y2 = y.reshape(len(y), -1)
    if len(y2) < 2:
        return np.zeros(0, dtype=bool), 0.0
    rate = np.max(np.abs(np.diff(y2, axis=0)), axis=1) / dt
    rate = rate[valid]
    eps = CHATTER_FACTOR * float(np.max(dt)) * (float(np.max(rate)) if rate.size else 0.0)
    near = np.min(np.abs(y2), axis=1) < eps
    return near[:-1] | near[1:], eps


def _curvature_tol(y: np.ndarray, dt: np.ndarray, keep: np.ndarray) -> tuple[float, float]:
    """(C, C*dt) with C = 10 x max |second difference| / dt^2 over retained interior samples.

    ``y`` holds n samples and ``keep`` masks its n - 1 forward differences.
    """
    if y.size < 3:
        return 0.0, 0.0
    d2 = np.abs(y[2:] - 2.0 * y[1:-1] + y[:-2])
    ok = keep[:-1] & keep[1:]
    if not np.any(ok):
        return 0.0, 0.0
    h = float(np.max(dt))
    c = CURVATURE_FACTOR * float(np.max(d2[ok])) / (h * h)
    return c, c * h


@dataclass(frozen=True)
class CertificateReport:
    """Result of a sampled barrier-function check; ``min_residual`` is None when vacuous."""

    min_residual: Optional[float]
    tol: float
    curvature: float
    n_samples: int
    n_excluded: int
    worst_time: Optional[float] = None

    @property
    def passed(self) -> bool:
        return self.min_residual is None or self.min_residual >= -self.tol


def barrier_certificate(traj: Trajectory, scenario: Scenario, *, strict: bool = False) -> CertificateReport:
    """Sampled check of d(h_ups)/dt + alpha(h_ups) >= -tol with h_ups = upsilon(z) h(x).

    Checked over ACTIVE samples, skipping steps that touch a reset. A log
    without any ACTIVE sample (safeguard disabled) is checked from its first
    entry into the risky band instead, so a baseline crossing the obstacle is
    detected. ``tol = C dt`` with C calibrated as 10x the largest second
    difference of h_ups over the checked steps.

    ``strict`` also drops steps inside the switching band of s or z. Sign
    flips there inflate the calibrated curvature, so the strict view has a
    much tighter tolerance and exposes small violations of the robust margin.
    """
    n = len(traj)
    if n < 2:
        return CertificateReport(None, 0.0, 0.0, 0, 0)
    safety, params = scenario.safety, scenario.params
    h = np.array([float(safety.h(x)) for x in traj.x])
    ups = np.array([upsilon(float(z), params) for z in traj.z])
    hu = ups * h
    dt = np.diff(traj.t)
    rate = np.diff(hu) / dt
    alpha = np.array([float(safety.alpha(v)) for v in hu[:-1]])
    resid = rate + alpha

    active = traj.mode[:-1] == int(Mode.ACTIVE)
    if not np.any(traj.mode == int(Mode.ACTIVE)):
        entered = np.flatnonzero(h <= safety.h_bar)
        active = np.zeros(n - 1, dtype=bool)
        if entered.size:
            active[entered[0]:] = True
    reset = _reset_adjacent(traj)
    keep = active & ~reset
    if strict:
        s = np.array([_s_at(scenario, x) for x in traj.x])
        s_band, _ = _chatter_band(s, dt, ~reset)
        z_band, _ = _chatter_band(np.asarray(traj.z), dt, ~reset)
        keep &= ~s_band & ~z_band
    curv, tol = _curvature_tol(hu, dt, keep)
    if not np.any(keep):
        return CertificateReport(None, tol, curv, 0, int(np.sum(active)))
    k = int(np.argmin(np.where(keep, resid, np.inf)))
    return CertificateReport(float(resid[k]), tol, curv, int(np.sum(keep)),
                             int(np.sum(active & ~keep)), float(traj.t[k]))


@dataclass
class LyapunovReport:
    """Sampled composite-Lyapunov decrease check.

    ``violations`` holds (t, excess) pairs where dV/dt exceeded the bound by
    more than ``tol``. Saturated runs are reported as exempt.
    """

    violations: list[tuple[float, float]] = field(default_factory=list)
    exempt: bool = False
    reason: str = ""
    tol: float = 0.0
    curvature: float = 0.0
    chatter_band: float = 0.0
    n_checked: int = 0
    n_chatter: int = 0
    n_reset: int = 0
    max_excess: Optional[float] = None

    @property
    def passed(self) -> bool:
        return self.exempt or not self.violations


def lyapunov_report(traj: Trajectory, scenario: Scenario) -> LyapunovReport:
    """Check dV/dt <= -g0 beta0 |s|_1 - lam sqrt|z| with V = |s|^2/2 + c_z|z|/2.

    Samples are excluded when any sliding component is inside the chattering
    band ``eps = 3 dt max|ds/dt|`` at either end of the step, and when a reset
    touches the step. Under saturation the bound is not claimed, so the run is
    reported as exempt.
    """
    sliding, params, plant = scenario.sliding, scenario.params, scenario.plant
    if not sliding.switching.is_sign:
        return LyapunovReport(exempt=True, reason=f"bound not claimed under {sliding.switching} switching")
    n = len(traj)
    if n < 2:
        return LyapunovReport()
    s = np.array([_s_at(scenario, x) for x in traj.x])
    z = traj.z
    V = 0.5 * np.sum(s * s, axis=1) + 0.5 * params.c_z * np.abs(z)
    dt = np.diff(traj.t)
    rate = np.diff(V) / dt
    bound = -plant.g0 * sliding.beta0 * np.sum(np.abs(s[:-1]), axis=1) - params.lam * np.sqrt(np.abs(z[:-1]))

    reset = _reset_adjacent(traj)
    chatter, eps = _chatter_band(s, dt, ~reset)
    keep = ~chatter & ~reset
    curv, tol = _curvature_tol(V, dt, keep)

    excess = rate - bound
    bad = np.flatnonzero(keep & (excess > tol))
    rep = LyapunovReport(
        violations=[(float(traj.t[k]), float(excess[k])) for k in bad],
        tol=tol, curvature=curv, chatter_band=eps, n_checked=int(np.sum(keep)),
        n_chatter=int(np.sum(chatter)), n_reset=int(np.sum(reset)),
        max_excess=float(np.max(excess[keep])) if np.any(keep) else None,
    )
    return rep


# ---------------------------------------------------------------------------
# Feasibility oracle


_GRID_CACHE: dict[tuple[float, float, float], np.ndarray] = {}


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    key = (lo, hi, step)
    g = _GRID_CACHE.get(key)
    if g is None:
        n = int(round((hi - lo) / step))
        g = lo + step * np.arange(n + 1)
        _GRID_CACHE[key] = g
    return g


def grid_best(a_j: float, b: float, grid=GRID) -> float:
    """max over the grid of a_j u - b|u| (brute force)."""
    u = _grid(*grid)
    return float(np.max(a_j * u - b * np.abs(u)))


def feasibility_oracle(a_j: float, b: float, c: float, grid=GRID) -> bool:
    """True iff some grid u satisfies a_j u - b|u| >= c. Independent of the closed form."""
    return grid_best(a_j, b, grid) >= c


def grid_slack(a_j: float, b: float, grid=GRID) -> float:
    """Resolution slack of the grid search: 2 step (|a_j| + |b|)."""
    return 2.0 * grid[2] * (abs(a_j) + abs(b))


# ---------------------------------------------------------------------------
# Reaching and upsilon range


@dataclass(frozen=True)
class ReachingReport:
    reach_time: Optional[float]
    bound: float

    @property
    def passed(self) -> bool:
        return self.reach_time is not None and self.reach_time <= self.bound


def reach_time_from_log(traj: Trajectory, threshold: float = REACH_THRESHOLD) -> Optional[float]:
    """First time |s|_inf drops below ``threshold``, interpolated between samples."""
    if len(traj) == 0:
        raise EmptyTrajectory("reach_time_from_log needs at least one record")
    sinf = np.abs(traj.s).max(axis=1)
    below = np.flatnonzero(sinf < threshold)
    if below.size == 0:
        return None
    k = int(below[0])
    if k == 0:
        return 0.0
    return _crossing_time(float(traj.t[k - 1]), float(sinf[k - 1]) - threshold,
                          float(traj.t[k]), float(sinf[k]) - threshold)


def reaching_report(result: SimResult) -> ReachingReport:
    """Measured reaching time against the analytic bound for the run's initial state."""
    return _reaching(result.trajectory, result.scenario, result.events.reach_time)


def _reaching(traj: Trajectory, sc: Scenario, reach_time: Optional[float]) -> ReachingReport:
    if len(traj) == 0:
        raise EmptyTrajectory("reaching_report needs at least one record")
    s0 = _s_at(sc, traj.x[0])
    bound = reaching_time_bound(s0, float(traj.z[0]), sc.plant.g0, sc.sliding.beta0, sc.params.lam, sc.params.c_z)
    return ReachingReport(reach_time, bound)


@dataclass(frozen=True)
class UpsilonReport:
    lo: float
    hi: float
    bound_lo: float
    bound_hi: float

    @property
    def passed(self) -> bool:
        return self.bound_lo < self.lo and self.hi < self.bound_hi and self.lo > 0


def upsilon_report(traj: Trajectory, params: SafeguardParams) -> UpsilonReport:
    """Range of upsilon(z) over the log against its open bound interval."""
    if len(traj) == 0:
        raise EmptyTrajectory("upsilon_report needs at least one record")
    ups = np.array([upsilon(float(z), params) for z in traj.z])
    lo, hi = params.upsilon_bounds
    return UpsilonReport(float(ups.min()), float(ups.max()), lo, hi)


# ---------------------------------------------------------------------------
# Aggregate


def verify_all(result: SimResult) -> dict:
    """Run every monitor on a finished run and return a JSON-serializable summary."""
    return verify_log(result.trajectory, result.scenario, result.status)


def verify_log(traj: Trajectory, sc: Scenario, status: str = "completed") -> dict:
    """Run every monitor on a logged trajectory, e.g. one read back from CSV.

    Only logged columns are used, so the report for a run and for its CSV
    round trip are identical.
    """
    out: dict = {"scenario": sc.name, "status": status, "records": len(traj)}
    if len(traj) == 0:
        return out
    saf = safety_report(traj, sc)
    res = inequality_residuals(traj, sc)
    bar = barrier_certificate(traj, sc)
    lya = lyapunov_report(traj, sc)
    ups = upsilon_report(traj, sc.params)
    out["safety"] = {**asdict(saf), "passed": bool(saf.passed)}
    out["inequality"] = {**asdict(res), "vacuous": res.vacuous, "passed": bool(res.passed)}
    out["barrier"] = {**asdict(bar), "passed": bool(bar.passed)}
    strict = barrier_certificate(traj, sc, strict=True)
    # diagnostic only: not part of the overall verdict
    out["barrier_strict"] = {**asdict(strict), "within_tol": bool(strict.passed)}
    out["lyapunov"] = {
        "exempt": lya.exempt, "reason": lya.reason, "violations": len(lya.violations),
        "max_excess": lya.max_excess, "tol": lya.tol, "chatter_band": lya.chatter_band,
        "checked": lya.n_checked, "excluded_chatter": lya.n_chatter, "excluded_reset": lya.n_reset,
        "passed": bool(lya.passed),
    }
    out["upsilon"] = {**asdict(ups), "passed": bool(ups.passed)}
    reach = reach_time_from_log(traj)
    if reach is not None or sc.sliding.switching.is_sign:
        rea = _reaching(traj, sc, reach)
        out["reaching"] = {**asdict(rea), "passed": bool(rea.passed)}
    out["passed"] = all(v["passed"] for v in out.values() if isinstance(v, dict) and "passed" in v)
    return out
