"""Fixed-step simulation of the closed loop with the augmented state z.

Each step: update the mode machine and the reset rule at (t, x, z), compute
u_smc and u_s once, hold them over the step (RK4 substages included), and
advance (x, z) as one coupled ODE using the plant's *true* gain and
disturbance. Only the controller maps are visible to the control computation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .errors import (
    DegenerateDenominator,
    EmptyTrajectory,
    InfeasibleSafeguard,
    InvalidParameters,
    NonFiniteState,
)
from .model import (
    ChannelKind,
    ControllerState,
    Mode,
    RegularFormPlant,
    SafeguardParams,
    SafetySpec,
    SlidingSpec,
    validate_scenario,
)
from .safeguard import (
    Z_FREEZE,
    coefficients,
    maybe_reset,
    safeguard_control,
    select_channel,
    update_mode,
    upsilon,
    z_derivative,
)
from .smc import sliding_variable, switching_term, unsafe_control

REACH_THRESHOLD = 0.05


class Integrator(enum.Enum):
    EULER = "euler"
    RK4 = "rk4"


@dataclass(frozen=True)
class Scenario:
    plant: RegularFormPlant
    sliding: SlidingSpec
    safety: SafetySpec
    params: SafeguardParams
    name: str = "scenario"


@dataclass(frozen=True)
class SimConfig:
    x0: np.ndarray
    t_end: float
    dt: float = 1e-4
    integrator: Integrator = Integrator.RK4
    record_stride: int = 1

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        problems = []
        if not self.dt > 0:
            problems.append(f"dt must be > 0, got {self.dt}")
        # t_end == 0 is the degenerate single-record horizon
        if not (self.t_end == 0 or self.dt < self.t_end):
            problems.append(f"need dt < t_end, got dt={self.dt}, t_end={self.t_end}")
        if not (isinstance(self.record_stride, int) and self.record_stride >= 1):
            problems.append(f"record_stride must be an integer >= 1, got {self.record_stride!r}")
        if problems:
            raise InvalidParameters(problems)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class TrajectoryRecord:
    t: float
    x: np.ndarray
    z: float
    s: np.ndarray
    u_smc: np.ndarray
    u_s: float
    u: np.ndarray
    h: float
    h_upsilon: float
    V_smc: float
    V_z: float
    V_total: float
    mode: Mode
    reset_flag: bool


_SCALAR_COLUMNS = ("t", "z", "u_s", "h", "h_upsilon", "V_smc", "V_z", "V_total")
_VECTOR_COLUMNS = ("x", "s", "u_smc", "u")


class Trajectory:
    """Columnar trajectory log; indexing yields TrajectoryRecord rows."""

    def __init__(self, n: int, p: int, capacity: int):
        self.n, self.p = n, p
        self._len = 0
        self.t = np.empty(capacity)
        self.x = np.empty((capacity, n))
        self.z = np.empty(capacity)
        self.s = np.empty((capacity, p))
        self.u_smc = np.empty((capacity, p))
        self.u_s = np.empty(capacity)
        self.u = np.empty((capacity, p))
        self.h = np.empty(capacity)
        self.h_upsilon = np.empty(capacity)
        self.V_smc = np.empty(capacity)
        self.V_z = np.empty(capacity)
        self.V_total = np.empty(capacity)
        self.mode = np.empty(capacity, dtype=np.int8)
        self.reset = np.zeros(capacity, dtype=bool)

    @classmethod
    def from_columns(cls, **cols) -> "Trajectory":
        n_rows = len(cols["t"])
        traj = cls(np.shape(cols["x"])[1], np.shape(cols["s"])[1], n_rows)
        for name, value in cols.items():
            getattr(traj, name)[...] = value
        traj._len = n_rows
        return traj

    def append(self, t, x, z, s, u_smc, u_s, u, h, h_ups, v_smc, v_z, mode, reset):
        k = self._len
        self.t[k] = t
        self.x[k] = x
        self.z[k] = z
        self.s[k] = s
        self.u_smc[k] = u_smc
        self.u_s[k] = u_s
        self.u[k] = u
        self.h[k] = h
        self.h_upsilon[k] = h_ups
        self.V_smc[k] = v_smc
        self.V_z[k] = v_z
        self.V_total[k] = v_smc + v_z
        self.mode[k] = int(mode)
        self.reset[k] = reset
        self._len = k + 1

    def _trim(self):
        for name in _SCALAR_COLUMNS + _VECTOR_COLUMNS + ("mode", "reset"):
            setattr(self, name, getattr(self, name)[: self._len])

    def __len__(self) -> int:
        return self._len

    def __getitem__(self, k: int) -> TrajectoryRecord:
        if k < 0:
            k += self._len
        if not 0 <= k < self._len:
            raise IndexError(k)
        return TrajectoryRecord(
            t=float(self.t[k]), x=self.x[k].copy(), z=float(self.z[k]), s=self.s[k].copy(),
            u_smc=self.u_smc[k].copy(), u_s=float(self.u_s[k]), u=self.u[k].copy(),
            h=float(self.h[k]), h_upsilon=float(self.h_upsilon[k]), V_smc=float(self.V_smc[k]),
            V_z=float(self.V_z[k]), V_total=float(self.V_total[k]), mode=Mode(int(self.mode[k])),
            reset_flag=bool(self.reset[k]),
        )

    def __iter__(self) -> Iterator[TrajectoryRecord]:
        return (self[k] for k in range(self._len))

    def fingerprint(self) -> bytes:
        """Bytes of every column, for bit-identity comparisons."""
        parts = [getattr(self, c)[: self._len].tobytes() for c in _SCALAR_COLUMNS + _VECTOR_COLUMNS]
        parts += [self.mode[: self._len].tobytes(), self.reset[: self._len].tobytes()]
        return b"".join(parts)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self._len > 1 else 0.0


@dataclass
class EventLog:
    t1: Optional[float] = None
    reset_times: list[float] = field(default_factory=list)
    t_omega: Optional[float] = None
    infeasible_at: Optional[float] = None
    min_h: float = math.inf
    reach_time: Optional[float] = None
    channel: Optional[int] = None
    omega_exits: int = 0
    fallback_steps: int = 0

    @property
    def reset_count(self) -> int:
        return len(self.reset_times)


@dataclass
class SimResult:
    scenario: Scenario
    config: SimConfig
    trajectory: Trajectory
    events: EventLog
    safeguard_enabled: bool = True
    error: Optional[Exception] = None

    def __iter__(self):
        return iter((self.trajectory, self.events))

    @property
    def status(self) -> str:
        if self.error is None:
            return "completed"
        if isinstance(self.error, (InfeasibleSafeguard, DegenerateDenominator)):
            return "infeasible"
        return "failed"


# ---------------------------------------------------------------------------


def _crossing_time(t_prev: float, g_prev: float, t_now: float, g_now: float) -> float:
    """Linear interpolation of the zero of g between two samples."""
    if g_prev == g_now:
        return t_now
    return t_prev + (t_now - t_prev) * g_prev / (g_prev - g_now)


class _Dynamics:
    """Right-hand side of the coupled (x, z) ODE with controls held.

    Built once per run; ``hold`` installs the controls for the next step.
    """

    def __init__(self, sc: Scenario):
        plant = sc.plant
        self.plant = plant
        self.sliding = sc.sliding
        self.params = sc.params
        self.m = plant.m
        self.E = plant._E_const
        self.unit_E = self.E is not None and np.array_equal(self.E, np.eye(plant.p))
        self.fb_zero = plant._fb_zero
        self.z_gain = 2.0 * sc.params.lam / sc.params.c_z
        self.z_sign = sc.params.z_switching.is_sign
        self._no_eta = np.zeros(0)
        self.hold(np.zeros(plant.p), 0.0, None)

    def hold(self, u: np.ndarray, u_s: float, j: Optional[int]) -> "_Dynamics":
        self.u = u
        self.u_s = u_s
        self.j = j
        if self.unit_E:
            self.Eu = u
        else:
            self.Eu = None if self.E is None else self.E @ u
        return self

    def __call__(self, t: float, x: np.ndarray, z: float) -> tuple[np.ndarray, float]:
        plant = self.plant
        m = self.m
        if m:
            eta, zeta = x[:m], x[m:]
        else:
            eta, zeta = self._no_eta, x
        Eu = self.Eu if self.Eu is not None else plant.E_at(x) @ self.u
        xdot = plant.G_true(t, x) * Eu + plant.delta_true(t, x)
        if not self.fb_zero:
            xdot += plant.f_b(eta, zeta)
        if m:
            xdot = np.concatenate([np.asarray(plant.f_a(eta, zeta), dtype=float), xdot])
        if self.u_s != 0.0:
            s = sliding_variable(self.sliding, eta, zeta)
            return xdot, z_derivative(x, s, z, self.u_s, self.j, plant, self.sliding, self.params)
        # u_s = 0: only the lam sqrt|z| drain remains
        if self.z_sign:
            sw = 1.0 if z >= 0 else -1.0
        else:
            sw = float(switching_term(z, self.params.z_switching))
        return xdot, -self.z_gain * math.sqrt(abs(z)) * sw


_RK4_WEIGHTS = np.array([1.0, 2.0, 2.0, 1.0]) / 6.0


def _integrate(f: _Dynamics, t: float, x: np.ndarray, z: float, dt: float, integrator: Integrator):
    k1x, k1z = f(t, x, z)
    if integrator is Integrator.EULER:
        return x + dt * k1x, z + dt * k1z
    h2 = 0.5 * dt
    k2x, k2z = f(t + h2, x + h2 * k1x, z + h2 * k1z)
    k3x, k3z = f(t + h2, x + h2 * k2x, z + h2 * k2z)
    k4x, k4z = f(t + dt, x + dt * k3x, z + dt * k3z)
    x_new = x + (dt * _RK4_WEIGHTS) @ np.array((k1x, k2x, k3x, k4x))
    z_new = z + (dt / 6.0) * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
    return x_new, z_new


def _guard_z(z_old: float, z_new: float, mode: Mode) -> float:
    # |z| is driven monotonically toward 0 when it shrinks; a sign flip inside
    # one step is an integration artifact
    if z_old != 0.0 and z_new * z_old < 0.0:
        return 0.0
    if mode is Mode.DONE and abs(z_new) < Z_FREEZE:
        return 0.0
    return z_new


@dataclass
class _Controls:
    s: np.ndarray
    u_smc: np.ndarray
    u_s: float
    u: np.ndarray


def _compute_controls(sc: Scenario, state: ControllerState, x: np.ndarray, t: float, x0: np.ndarray,
                      enabled: bool, s: Optional[np.ndarray] = None) -> _Controls:
    out = unsafe_control(sc.plant, sc.sliding, x, s=s)
    u_smc, s = out.u_smc, out.s
    if state.fallback:
        return _Controls(s, u_smc, 0.0, np.zeros_like(u_smc))
    u_s = 0.0
    if enabled and state.mode is Mode.ACTIVE:
        co = coefficients(x, state.z, s, u_smc, sc.plant, sc.sliding, sc.safety, sc.params)
        if state.j is None:
            state.j = select_channel(sc.params.channel_rule, x0, co)
        try:
            u_s = safeguard_control(co, state.j, s, state.mode, sc.safety)
        except (InfeasibleSafeguard, DegenerateDenominator) as exc:
            exc.t = t
            raise
    if u_s == 0.0:
        return _Controls(s, u_smc, 0.0, u_smc)
    u = u_smc.copy()
    u[state.j - 1] += u_s
    return _Controls(s, u_smc, u_s, u)


def step(sc: Scenario, state: ControllerState, x: np.ndarray, t: float, dt: float,
         integrator: Integrator = Integrator.RK4, x0: Optional[np.ndarray] = None,
         safeguard_enabled: bool = True) -> tuple[np.ndarray, float, TrajectoryRecord]:
    """One closed-loop step from (t, x, state.z); the mode must already be current.

    Returns (x', z', record) where the record holds start-of-step values.
    ``state.z`` is not modified.
    """
    x = np.asarray(x, dtype=float)
    x0 = x if x0 is None else x0
    ctl = _compute_controls(sc, state, x, t, x0, safeguard_enabled)
    dyn = _Dynamics(sc).hold(ctl.u, ctl.u_s, state.j)
    x_new, z_new = _integrate(dyn, t, x, state.z, dt, integrator)
    z_new = _guard_z(state.z, z_new, state.mode)
    if not np.all(np.isfinite(x_new)):
        raise NonFiniteState(t + dt, "x")
    if not math.isfinite(z_new):
        raise NonFiniteState(t + dt, "z")
    h = float(sc.safety.h(x))
    ups = upsilon(state.z, sc.params)
    v_smc = 0.5 * float(ctl.s @ ctl.s)
    v_z = 0.5 * sc.params.c_z * abs(state.z)
    rec = TrajectoryRecord(
        t=t, x=x.copy(), z=state.z, s=ctl.s, u_smc=ctl.u_smc, u_s=ctl.u_s, u=ctl.u, h=h,
        h_upsilon=ups * h, V_smc=v_smc, V_z=v_z, V_total=v_smc + v_z, mode=state.mode, reset_flag=False,
    )
    return x_new, z_new, rec


def run(sc: Scenario, config: SimConfig, *, safeguard_enabled: bool = True,
        remark3_fallback: bool = False, validate: bool = True) -> SimResult:
    """Simulate t in [0, t_end]. Deterministic: identical inputs give bit-identical logs.

    Raises InfeasibleSafeguard, DegenerateDenominator or NonFiniteState with
    the partial run attached as ``exc.result``. With ``remark3_fallback`` an
    infeasible safeguard instead zeroes the whole input until the state leaves
    the risky band.
    """
    plant, safety, params = sc.plant, sc.safety, sc.params
    x0 = config.x0
    if validate:
        problems = validate_scenario(plant, sc.sliding, safety, params, x0)
        if problems:
            raise InvalidParameters(problems)

    dt = config.dt
    n_steps = config.n_steps
    stride = config.record_stride
    traj = Trajectory(plant.n, plant.p, n_steps // stride + 1)
    ev = EventLog()
    state = ControllerState(z=float(params.z0))
    if params.channel_rule.kind is not ChannelKind.ARGMAX_AT_ACTIVATION:
        state.j = select_channel(params.channel_rule, x0)
    ev.channel = state.j

    x = x0.copy()
    dyn = _Dynamics(sc)
    m = plant.m
    t_prev = None
    h_prev = s2_prev = sinf_prev = None
    result = SimResult(sc, config, traj, ev, safeguard_enabled)

    for k in range(n_steps + 1):
        t = k * dt
        h = float(safety.h(x))
        s_now = sliding_variable(sc.sliding, x[:m], x[m:])
        s2 = math.sqrt(float(s_now @ s_now))
        sinf = float(abs(s_now).max())

        # mode machine and reset rule, before the control computation
        mode_before = state.mode
        if safeguard_enabled:
            update_mode(state, x, s_now, safety, t, h=h)
        if mode_before is Mode.PRE and state.mode is not Mode.PRE:
            state.t1 = 0.0 if h_prev is None else _crossing_time(t_prev, h_prev - safety.h_bar, t, h - safety.h_bar)
            ev.t1 = state.t1
        if mode_before is not Mode.DONE and state.mode is Mode.DONE:
            ev.t_omega = t if s2_prev is None else _crossing_time(
                t_prev, s2_prev - safety.omega_radius, t, s2 - safety.omega_radius)
        if state.mode is Mode.DONE and s2 >= safety.omega_radius:
            ev.omega_exits += 1
        reset = False
        if state.mode is Mode.ACTIVE:
            _, reset = maybe_reset(state, x, safety, params, h=h)
            if reset:
                ev.reset_times.append(t)
        if state.fallback and h > safety.h_bar:
            state.fallback = False
        if ev.reach_time is None and sinf < REACH_THRESHOLD:
            ev.reach_time = 0.0 if sinf_prev is None else _crossing_time(
                t_prev, sinf_prev - REACH_THRESHOLD, t, sinf - REACH_THRESHOLD)
        ev.min_h = min(ev.min_h, h)

        try:
            ctl = _compute_controls(sc, state, x, t, x0, safeguard_enabled, s_now)
        except (InfeasibleSafeguard, DegenerateDenominator) as exc:
            ev.infeasible_at = t
            if not remark3_fallback:
                exc.result = result
                result.error = exc
                traj._trim()
                raise
            state.fallback = True
            ctl = _compute_controls(sc, state, x, t, x0, safeguard_enabled, s_now)
        if state.fallback:
            ev.fallback_steps += 1
        if ev.channel is None and state.j is not None:
            ev.channel = state.j

        z = state.z
        if k % stride == 0:
            ups = upsilon(z, params)
            traj.append(t, x, z, ctl.s, ctl.u_smc, ctl.u_s, ctl.u, h, ups * h,
                        0.5 * float(ctl.s @ ctl.s), 0.5 * params.c_z * abs(z), state.mode, reset)
        if k == n_steps:
            break

        dyn.hold(ctl.u, ctl.u_s, state.j)
        x_new, z_new = _integrate(dyn, t, x, z, dt, config.integrator)
        z_new = _guard_z(z, z_new, state.mode)
        # a non-finite entry makes the sum non-finite
        if not (math.isfinite(float(x_new.sum())) and math.isfinite(z_new)):
            exc = NonFiniteState(t + dt, "x" if not np.isfinite(x_new).all() else "z")
            exc.result = result
            result.error = exc
            traj._trim()
            raise exc
        t_prev, h_prev, s2_prev, sinf_prev = t, h, s2, sinf
        x, state.z = x_new, z_new

    traj._trim()
    return result


def energy_series(traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(V_smc, V_z, V_total) series of a logged run."""
    if len(traj) == 0:
        raise EmptyTrajectory("energy_series needs at least one record")
    return traj.V_smc.copy(), traj.V_z.copy(), traj.V_total.copy()


def invasiveness(traj: Trajectory) -> float:
    """Left-Riemann integral of |u_s| dt, matching the zero-order hold."""
    if len(traj) < 2:
        return 0.0
    return float(np.sum(np.abs(traj.u_s[:-1]) * np.diff(traj.t)))


def total_variation(traj: Trajectory) -> float:
    """Summed total variation of every input channel."""
    if len(traj) < 2:
        return 0.0
    return float(np.sum(np.abs(np.diff(traj.u, axis=0))))
