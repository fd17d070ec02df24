"""Domain types: the plant in regular form, sliding manifold, safety set and tuning.

Nothing in this module integrates dynamics. The plant is described in regular
coordinates ``x = [eta, zeta]`` where the input only enters the ``zeta`` block::

    eta'  = f_a(eta, zeta)
    zeta' = f_b(eta, zeta) + G(t, x) E(x) u + delta(t, x)

``G`` is diagonal with unknown entries bounded below by ``g0``. The controller
only ever sees the estimate ``G_hat`` and the bounds ``rho1``, ``rho2`` and
``rho``; ``G_true`` and ``delta_true`` exist so the simulator can play the
role of the real system.
"""

from __future__ import annotations

import enum
import math
import warnings
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Union

import numpy as np

from .errors import InvalidParameters, SingularMatrix

RCOND_MIN = 1e-12

ArrayLike = Union[np.ndarray, list, tuple]
MatrixMap = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]
ScalarMap = Union[float, Callable[[np.ndarray], float]]


class RobustnessWarning(UserWarning):
    """The scenario is runnable but outside the setting of the robustness argument."""


def checked_inverse(A: np.ndarray, which: str) -> np.ndarray:
    """Invert ``A`` after checking its reciprocal condition number."""
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(A)
    rcond = 0.0 if not np.isfinite(cond) or cond == 0 else 1.0 / cond
    if rcond < RCOND_MIN:
        raise SingularMatrix(which, rcond)
    return np.linalg.inv(A)


def _zero_drift(eta, zeta):
    return np.zeros(0)


@dataclass(frozen=True)
class _ZeroDrift:
    size: int

    def __call__(self, eta, zeta):
        return np.zeros(self.size)


# ---------------------------------------------------------------------------
# Plant


@dataclass(frozen=True)
class RegularFormPlant:
    """Uncertain input-affine plant already written in regular form.

    ``E`` and ``G_hat`` may be constant arrays or maps of ``x``; constant
    matrices are checked and inverted once. ``rho1``, ``rho2`` and ``rho`` may
    likewise be floats or maps of ``x``. ``G_true(t, x)`` returns the diagonal
    of the true gain matrix as a length-``p`` vector. ``f_b=None`` declares a
    drift-free input block, which lets the simulator skip the call.
    """

    n: int
    p: int
    f_b: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]]
    E: MatrixMap
    G_hat: MatrixMap
    g0: float
    rho1: ScalarMap
    rho2: ScalarMap
    rho: ScalarMap
    G_true: Callable[[float, np.ndarray], np.ndarray]
    delta_true: Callable[[float, np.ndarray], np.ndarray]
    f_a: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    check_truth_bounds: bool = True
    name: str = "plant"

    _E_const: Optional[np.ndarray] = field(default=None, init=False, repr=False, compare=False)
    _E_inv_const: Optional[np.ndarray] = field(default=None, init=False, repr=False, compare=False)
    _Gh_const: Optional[np.ndarray] = field(default=None, init=False, repr=False, compare=False)
    _Gh_inv_const: Optional[np.ndarray] = field(default=None, init=False, repr=False, compare=False)
    _unit_gain: bool = field(default=False, init=False, repr=False, compare=False)
    _fb_zero: bool = field(default=False, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.f_a is None:
            object.__setattr__(self, "f_a", _zero_drift)
        if self.f_b is None:
            object.__setattr__(self, "f_b", _ZeroDrift(self.p))
            object.__setattr__(self, "_fb_zero", True)
        if not callable(self.E):
            E = np.array(self.E, dtype=float).reshape(self.p, self.p)
            object.__setattr__(self, "_E_const", E)
            try:
                object.__setattr__(self, "_E_inv_const", checked_inverse(E, "E"))
            except SingularMatrix:
                pass  # reported by validate_scenario, raised on use
        if not callable(self.G_hat):
            Gh = np.array(self.G_hat, dtype=float).reshape(self.p, self.p)
            object.__setattr__(self, "_Gh_const", Gh)
            try:
                object.__setattr__(self, "_Gh_inv_const", checked_inverse(Gh, "G_hat"))
            except SingularMatrix:
                pass
        eye = np.eye(self.p)
        unit = (self._E_const is not None and self._Gh_const is not None
                and np.array_equal(self._E_const, eye) and np.array_equal(self._Gh_const, eye))
        object.__setattr__(self, "_unit_gain", bool(unit))

    @property
    def unit_gain(self) -> bool:
        """True when E and G_hat are both the constant identity."""
        return self._unit_gain

    @property
    def m(self) -> int:
        return self.n - self.p

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return x[: self.m], x[self.m:]

    def drift(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        eta, zeta = self.split(x)
        return np.asarray(self.f_a(eta, zeta), dtype=float), np.asarray(self.f_b(eta, zeta), dtype=float)

    def E_at(self, x: np.ndarray) -> np.ndarray:
        if self._E_const is not None:
            return self._E_const
        return np.asarray(self.E(x), dtype=float)

    def E_inv_at(self, x: np.ndarray) -> np.ndarray:
        if self._E_inv_const is not None:
            return self._E_inv_const
        return checked_inverse(self.E_at(x), "E")

    def G_hat_at(self, x: np.ndarray) -> np.ndarray:
        if self._Gh_const is not None:
            return self._Gh_const
        return np.asarray(self.G_hat(x), dtype=float)

    def G_hat_inv_at(self, x: np.ndarray) -> np.ndarray:
        if self._Gh_inv_const is not None:
            return self._Gh_inv_const
        return checked_inverse(self.G_hat_at(x), "G_hat")

    def rho1_at(self, x: np.ndarray) -> float:
        return float(self.rho1(x)) if callable(self.rho1) else float(self.rho1)

    def rho2_at(self, x: np.ndarray) -> float:
        return float(self.rho2(x)) if callable(self.rho2) else float(self.rho2)

    def rho_at(self, x: np.ndarray) -> float:
        return float(self.rho(x)) if callable(self.rho) else float(self.rho)


# ---------------------------------------------------------------------------
# Sliding manifold


class SwitchingKind(enum.Enum):
    SIGN = "sign"
    SAT = "sat"


@dataclass(frozen=True)
class Switching:
    """Switching nonlinearity used in the reaching law: sign or sat(., epsilon)."""

    kind: SwitchingKind = SwitchingKind.SIGN
    epsilon: float = 0.0

    @classmethod
    def sign(cls) -> "Switching":
        return cls(SwitchingKind.SIGN)

    @classmethod
    def sat(cls, epsilon: float) -> "Switching":
        return cls(SwitchingKind.SAT, float(epsilon))

    @property
    def is_sign(self) -> bool:
        return self.kind is SwitchingKind.SIGN

    def __str__(self) -> str:
        return "sign" if self.is_sign else f"sat({self.epsilon:g})"


SIGN = Switching.sign()


def _zero_phi(eta):
    return np.zeros(0)


@dataclass(frozen=True)
class SlidingSpec:
    """Sliding variable ``s = M (zeta - phi(eta))`` and the reaching law settings.

    ``phi`` and ``jac_phi`` may be omitted when the plant has no ``eta`` block;
    they then default to zero maps of the right shape.
    """

    p: int
    beta0: float
    M: Optional[np.ndarray] = None
    phi: Optional[Callable[[np.ndarray], np.ndarray]] = None
    jac_phi: Optional[Callable[[np.ndarray], np.ndarray]] = None
    switching: Switching = SIGN

    _M_inv: Optional[np.ndarray] = field(default=None, init=False, repr=False, compare=False)
    _M_is_identity: bool = field(default=True, init=False, repr=False, compare=False)

    def __post_init__(self):
        M = np.eye(self.p) if self.M is None else np.array(self.M, dtype=float)
        object.__setattr__(self, "M", M)
        if self.phi is None:
            p = self.p
            object.__setattr__(self, "phi", lambda eta: np.zeros(p))
        if self.jac_phi is None:
            p = self.p
            object.__setattr__(self, "jac_phi", lambda eta: np.zeros((p, len(eta))))
        object.__setattr__(self, "_M_is_identity", M.shape == (self.p, self.p) and np.array_equal(M, np.eye(self.p)))
        if M.shape == (self.p, self.p):
            try:
                object.__setattr__(self, "_M_inv", checked_inverse(M, "M"))
            except SingularMatrix:
                pass

    @property
    def M_is_identity(self) -> bool:
        return self._M_is_identity

    @property
    def M_inv(self) -> np.ndarray:
        if self._M_inv is None:
            M = self.M
            if M.shape != (self.p, self.p):
                raise SingularMatrix("M", 0.0)
            return checked_inverse(M, "M")
        return self._M_inv

    def problems(self) -> list[str]:
        out = []
        if self.M.shape != (self.p, self.p):
            out.append(f"M must be {self.p}x{self.p}, got shape {self.M.shape}")
        elif self._M_inv is None:
            out.append("M must be nonsingular")
        if not self.beta0 > 0:
            out.append(f"beta0 must be > 0, got {self.beta0}")
        if not self.switching.is_sign and not self.switching.epsilon > 0:
            out.append(f"sat epsilon must be > 0, got {self.switching.epsilon}")
        return out


# ---------------------------------------------------------------------------
# Safety set


@dataclass(frozen=True)
class LinearAlpha:
    """Linear class-K function ``r -> gain * r``."""

    gain: float = 10.0

    def __call__(self, r: float) -> float:
        return self.gain * r


@dataclass(frozen=True)
class SafetySpec:
    """Safe set ``{h >= 0}``, its risky band ``{0 <= h <= h_bar}`` and the Omega ball radius."""

    h: Callable[[np.ndarray], float]
    grad_h: Callable[[np.ndarray], np.ndarray]
    h_bar: float
    omega_radius: float
    alpha: Callable[[float], float] = LinearAlpha(10.0)

    def problems(self) -> list[str]:
        out = []
        if not self.h_bar > 0:
            out.append(f"h_bar must be > 0, got {self.h_bar}")
        if not self.omega_radius > 0:
            out.append(f"omega_radius must be > 0, got {self.omega_radius}")
        try:
            a0 = float(self.alpha(0.0))
            grid = np.concatenate([-np.logspace(3, -3, 25), [0.0], np.logspace(-3, 3, 25)])
            vals = np.array([float(self.alpha(r)) for r in grid])
            if a0 != 0.0:
                out.append(f"alpha(0) must be 0, got {a0}")
            if not np.all(np.diff(vals) > 0):
                out.append("alpha must be strictly increasing")
        except Exception as exc:  # user map
            out.append(f"alpha not evaluable: {exc!r}")
        return out


# ---------------------------------------------------------------------------
# Safeguard tuning


class ChannelKind(enum.Enum):
    FIXED = "fixed"
    INITIAL_CONDITION = "initial_condition"
    ARGMAX_AT_ACTIVATION = "argmax"


@dataclass(frozen=True)
class ChannelRule:
    """How the single safeguarded input channel ``j`` (1-based) is chosen."""

    kind: ChannelKind = ChannelKind.ARGMAX_AT_ACTIVATION
    j: Optional[int] = None
    predicate: Optional[Callable[[np.ndarray], int]] = None

    @classmethod
    def fixed(cls, j: int) -> "ChannelRule":
        return cls(ChannelKind.FIXED, j=int(j))

    @classmethod
    def initial_condition(cls, predicate: Callable[[np.ndarray], int]) -> "ChannelRule":
        return cls(ChannelKind.INITIAL_CONDITION, predicate=predicate)

    @classmethod
    def argmax(cls) -> "ChannelRule":
        return cls(ChannelKind.ARGMAX_AT_ACTIVATION)


class ResetBand(enum.Enum):
    """Where a reset may fire: the original risky band, or anywhere in the safe set."""

    RISKY = "risky"
    SAFE_SET = "safe_set"


@dataclass(frozen=True)
class SafeguardParams:
    """The seven safeguard tuning parameters plus reset and channel options.

    ``upsilon(z) = h1 + h2*atan(h3*z)`` must stay positive, so the constructor
    rejects ``h1 <= (pi/2) h2``. ``z_reset_threshold=None`` disables resets.
    ``z_switching`` replaces sign(z) in the augmented dynamics (and in psi);
    it defaults to sign. ``reset_band`` keeps resets inside the original
    risky band by default; SAFE_SET treats the band as unbounded once active.
    """

    h1: float
    h2: float
    c_z: float
    lam: float
    z0: float
    h3: float = 1.0
    z_reset_threshold: Optional[float] = None
    channel_rule: ChannelRule = ChannelRule()
    z_switching: Switching = SIGN
    reset_band: ResetBand = ResetBand.RISKY

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise InvalidParameters(problems)

    def problems(self) -> list[str]:
        out = []
        for name in ("h1", "h2", "h3", "c_z", "lam"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                out.append(f"{name} must be a finite real > 0, got {v!r}")
        if not out and not self.h1 > 0.5 * math.pi * self.h2:
            out.append(
                f"h1 > (pi/2)*h2 violated: h1={self.h1:g} <= {0.5 * math.pi * self.h2:.6g}"
            )
        if not math.isfinite(self.z0):
            out.append(f"z0 must be finite, got {self.z0!r}")
        if self.z_reset_threshold is not None and not self.z_reset_threshold > 0:
            out.append(f"z_reset_threshold must be > 0 or absent, got {self.z_reset_threshold!r}")
        rule = self.channel_rule
        if rule.kind is ChannelKind.FIXED and (rule.j is None or rule.j < 1):
            out.append(f"fixed channel must be a 1-based index, got {rule.j!r}")
        if rule.kind is ChannelKind.INITIAL_CONDITION and rule.predicate is None:
            out.append("initial_condition channel rule needs a predicate")
        if not self.z_switching.is_sign and not self.z_switching.epsilon > 0:
            out.append("z_switching sat epsilon must be > 0")
        return out

    @property
    def upsilon_bounds(self) -> tuple[float, float]:
        half = 0.5 * math.pi * self.h2
        return self.h1 - half, self.h1 + half


# ---------------------------------------------------------------------------
# Controller state


class Mode(enum.IntEnum):
    PRE = 0
    ACTIVE = 1
    DONE = 2


@dataclass
class ControllerState:
    """Mutable per-run controller state. Owned by exactly one simulation."""

    z: float
    mode: Mode = Mode.PRE
    j: Optional[int] = None
    reset_count: int = 0
    t1: Optional[float] = None
    fallback: bool = False


# ---------------------------------------------------------------------------
# Validation


def _vec(v, size: int, name: str, out: list[str]) -> Optional[np.ndarray]:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (size,):
        out.append(f"{name} must return shape ({size},), got {arr.shape}")
        return None
    if not np.all(np.isfinite(arr)):
        out.append(f"{name} returned non-finite values")
        return None
    return arr


def _try(out: list[str], name: str, fn, *args):
    try:
        return fn(*args)
    except Exception as exc:  # user-supplied maps may fail arbitrarily
        out.append(f"{name} not evaluable at x0: {exc!r}")
        return None


def validate_scenario(
    plant: RegularFormPlant,
    sliding: SlidingSpec,
    safety: SafetySpec,
    params: Union[SafeguardParams, Mapping[str, Any]],
    x0: ArrayLike,
    t0: float = 0.0,
) -> list[str]:
    """Check every constructor invariant and evaluate all maps at ``x0``.

    Returns the list of violated invariants; an empty list means valid.
    ``params`` may be a mapping of raw fields, in which case constructor
    rejections are reported instead of raised. Inputs are never mutated.
    """
    out: list[str] = []
    x0 = np.asarray(x0, dtype=float)

    if isinstance(params, Mapping):
        try:
            params = SafeguardParams(**params)
        except InvalidParameters as exc:
            out.extend(exc.problems)
            params = None
        except TypeError as exc:
            out.append(f"safeguard parameters: {exc}")
            params = None
    elif params is not None:
        out.extend(params.problems())

    n, p = plant.n, plant.p
    if not (n >= 1 and p >= 1 and p <= n):
        out.append(f"need 1 <= p <= n, got n={n}, p={p}")
        return out
    if x0.shape != (n,):
        out.append(f"x0 must have shape ({n},), got {x0.shape}")
        return out
    if not plant.g0 > 0:
        out.append(f"g0 must be > 0, got {plant.g0}")

    eta, zeta = plant.split(x0)
    _try(out, "f_a", lambda: _vec(plant.f_a(eta, zeta), plant.m, "f_a", out))
    _try(out, "f_b", lambda: _vec(plant.f_b(eta, zeta), p, "f_b", out))

    for name, getter in (("E", plant.E_at), ("G_hat", plant.G_hat_at)):
        mat = _try(out, name, getter, x0)
        if mat is None:
            continue
        mat = np.asarray(mat, dtype=float)
        if mat.shape != (p, p):
            out.append(f"{name} must be {p}x{p}, got {mat.shape}")
            continue
        try:
            checked_inverse(mat, name)
        except SingularMatrix as exc:
            out.append(f"{name}(x0) must be nonsingular ({exc})")

    bounds = {}
    for name, getter in (("rho1", plant.rho1_at), ("rho2", plant.rho2_at), ("rho", plant.rho_at)):
        v = _try(out, name, getter, x0)
        if v is not None:
            if not (math.isfinite(v) and v >= 0):
                out.append(f"{name}(x0) must be finite and >= 0, got {v}")
            bounds[name] = v

    g = _try(out, "G_true", lambda: _vec(plant.G_true(t0, x0), p, "G_true", out))
    d = _try(out, "delta_true", lambda: _vec(plant.delta_true(t0, x0), p, "delta_true", out))
    if g is not None and np.any(g < plant.g0):
        out.append(f"G_true diagonal {g} below g0={plant.g0}")
    if plant.check_truth_bounds:
        tol = 1e-12
        if d is not None and "rho1" in bounds and np.max(np.abs(d), initial=0.0) > bounds["rho1"] + tol:
            out.append("|delta_true(t0, x0)|_inf exceeds rho1(x0)")
        Gh = _try(out, "G_hat", plant.G_hat_at, x0)
        if g is not None and Gh is not None and "rho2" in bounds and np.shape(Gh) == (p, p):
            dev = np.max(np.sum(np.abs(np.diag(g) - Gh), axis=1))
            if dev > bounds["rho2"] + tol:
                out.append("|G_true - G_hat|_inf exceeds rho2(x0)")

    if sliding.p != p:
        out.append(f"sliding spec has p={sliding.p}, plant has p={p}")
    else:
        out.extend(sliding.problems())
        if plant.m > 0:
            phi0 = _try(out, "phi", sliding.phi, np.zeros(plant.m))
            if phi0 is not None and not np.allclose(phi0, 0.0):
                out.append("phi(0) must be 0")
            _try(out, "phi", lambda: _vec(sliding.phi(eta), p, "phi", out))
            jac = _try(out, "jac_phi", sliding.jac_phi, eta)
            if jac is not None and np.shape(jac) != (p, plant.m):
                out.append(f"jac_phi must be {p}x{plant.m}, got {np.shape(jac)}")

    out.extend(safety.problems())
    h_origin = _try(out, "h", safety.h, np.zeros(n))
    if h_origin is not None and not float(h_origin) > 0:
        out.append(f"origin must lie strictly inside the safe set, h(0)={float(h_origin):g}")
    _try(out, "h", safety.h, x0)
    _try(out, "grad_h", lambda: _vec(safety.grad_h(x0), n, "grad_h", out))

    if params is not None and params.channel_rule.kind is ChannelKind.FIXED:
        if not 1 <= (params.channel_rule.j or 0) <= p:
            out.append(f"fixed channel j={params.channel_rule.j} outside 1..{p}")
    if params is not None and params.channel_rule.kind is ChannelKind.INITIAL_CONDITION:
        j = _try(out, "channel predicate", params.channel_rule.predicate, x0)
        if j is not None and not 1 <= int(j) <= p:
            out.append(f"channel predicate returned j={j} outside 1..{p}")

    if not out and not sliding.M_is_identity and bounds.get("rho2", 0.0) > 0:
        warnings.warn(
            "M != I with rho2 > 0: the gain-uncertainty robustness argument assumes s = zeta - phi(eta)",
            RobustnessWarning,
            stacklevel=2,
        )
    return out
