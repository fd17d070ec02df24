"""Outer loop: augmented state z, closed-form safeguard u_s and the mode machine.

The safeguard acts on a single input channel ``j`` (1-based). With
``h_ups = upsilon(z) * h(x)`` as barrier for the augmented state, the safety
condition reduces to the scalar inequality ``a_j u - b |u| >= c`` which is
solved in closed form with equality.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ChannelDegenerate, DegenerateDenominator, InfeasibleSafeguard
from .model import (
    ChannelKind,
    ChannelRule,
    ControllerState,
    Mode,
    RegularFormPlant,
    ResetBand,
    SafeguardParams,
    SafetySpec,
    SlidingSpec,
)
from .smc import switching_term

log = logging.getLogger(__name__)

DENOMINATOR_MIN = 1e-9
CHANNEL_MIN = 1e-9
Z_FREEZE = 1e-12


def _z_switch(z: float, params: SafeguardParams) -> float:
    return float(switching_term(z, params.z_switching))


def upsilon(z: float, params: SafeguardParams) -> float:
    """h1 + h2*atan(h3*z), a positive bounded weight on the barrier."""
    return params.h1 + params.h2 * math.atan(params.h3 * z)


def psi_from_h(h: float, z: float, params: SafeguardParams) -> float:
    return params.h2 * params.h3 * h * _z_switch(z, params) / (params.c_z * (1.0 + (params.h3 * z) ** 2))


def psi(x: np.ndarray, z: float, safety: SafetySpec, params: SafeguardParams) -> float:
    """d(upsilon)/dz * h / (c_z * sign(z)) rearranged; see psi_from_h."""
    return psi_from_h(float(safety.h(x)), z, params)


def _inf_norm_matrix(A: np.ndarray) -> float:
    return float(np.max(np.sum(np.abs(A), axis=1)))


def gammas(x: np.ndarray, plant: RegularFormPlant, safety: SafetySpec, grad: Optional[np.ndarray] = None) -> tuple[float, float]:
    """Robustness margins for the additive and the gain uncertainty.

    gamma1 = |dh/dx B|_inf rho1 and gamma2 = |dh/dx B|_inf |E|_inf rho2, where
    ``dh/dx B`` is the zeta-block of the gradient and the vector norm is max-abs.
    """
    g = np.asarray(safety.grad_h(x), dtype=float) if grad is None else grad
    gB = np.max(np.abs(g[plant.m:]))
    return gB * plant.rho1_at(x), gB * _inf_norm_matrix(plant.E_at(x)) * plant.rho2_at(x)


def input_gain(plant: RegularFormPlant, sliding: SlidingSpec, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(G_hat E, M G_hat E): certain gains from u to zeta' and to s'."""
    GE = plant.G_hat_at(x) @ plant.E_at(x)
    if sliding.M_is_identity:
        return GE, GE
    return GE, sliding.M @ GE


@dataclass(frozen=True)
class SafeguardCoefficients:
    a: np.ndarray
    b: float
    c: float
    psi: float
    upsilon: float
    gamma1: float
    gamma2: float
    h: float


def coefficients(
    x: np.ndarray,
    z: float,
    s: np.ndarray,
    u_smc: np.ndarray,
    plant: RegularFormPlant,
    sliding: SlidingSpec,
    safety: SafetySpec,
    params: SafeguardParams,
) -> SafeguardCoefficients:
    """Coefficients of ``a u_s - b |u_s|_inf >= c`` at (x, z)."""
    h = float(safety.h(x))
    grad = np.asarray(safety.grad_h(x), dtype=float)
    ups = upsilon(z, params)
    ps = psi_from_h(h, z, params)
    GE, P = input_gain(plant, sliding, x)
    m = plant.m
    gz = grad[m:]
    L_hat = gz @ GE
    g1, g2 = gammas(x, plant, safety, grad)
    fa, fb = plant.drift(x)
    Lf = float(gz @ fb) + (float(grad[:m] @ fa) if m else 0.0)

    a = -2.0 * ps * (s @ P) + ups * L_hat
    b = 2.0 * float(np.max(np.abs(s))) * _inf_norm_matrix(plant.E_at(x)) * ps * plant.rho2_at(x) + ups * g2
    c = (
        -float(safety.alpha(ups * h))
        + 2.0 * params.lam * math.sqrt(abs(z)) * ps
        - ups * (Lf + float(L_hat @ u_smc) - g1)
    )
    return SafeguardCoefficients(a=a, b=b, c=c, psi=ps, upsilon=ups, gamma1=g1, gamma2=g2, h=h)


def select_channel(rule: ChannelRule, x0: np.ndarray, coeffs: Optional[SafeguardCoefficients] = None) -> int:
    """Return the 1-based safeguarded channel."""
    if rule.kind is ChannelKind.FIXED:
        return int(rule.j)
    if rule.kind is ChannelKind.INITIAL_CONDITION:
        return int(rule.predicate(np.asarray(x0, dtype=float)))
    if coeffs is None:
        raise ValueError("argmax channel selection needs the coefficients at activation")
    mags = np.abs(coeffs.a)
    i = int(np.argmax(mags))
    if mags[i] < CHANNEL_MIN:
        raise ChannelDegenerate(f"all |a_i| < {CHANNEL_MIN:g} at activation: {coeffs.a}")
    return i + 1


def safeguard_control(coeffs: SafeguardCoefficients, j: int, s: np.ndarray, mode: Mode, safety: SafetySpec) -> float:
    """Closed-form scalar u_s on channel ``j``.

    Zero unless ACTIVE, outside Omega and c > 0. Otherwise solves
    ``a_j u - b |u| = c``; if both branches apply (only possible for b < 0)
    the smaller |u| is returned.
    """
    if mode is not Mode.ACTIVE:
        return 0.0
    c = coeffs.c
    if c <= 0.0 or math.sqrt(float(s @ s)) < safety.omega_radius:
        return 0.0
    a_j = float(coeffs.a[j - 1])
    b = coeffs.b
    candidates = []
    if a_j > b:
        candidates.append(a_j - b)
    if a_j < -b:
        candidates.append(a_j + b)
    if not candidates:
        raise InfeasibleSafeguard(a_j, b, c, j)
    den = max(candidates, key=abs)  # largest |denominator| gives the smallest |u_s|
    if abs(den) < DENOMINATOR_MIN:
        raise DegenerateDenominator(den, j)
    return c / den


def z_derivative(
    x: np.ndarray,
    s: np.ndarray,
    z: float,
    u_s: float,
    j: Optional[int],
    plant: RegularFormPlant,
    sliding: SlidingSpec,
    params: SafeguardParams,
) -> float:
    """Augmented-state dynamics for a safeguard acting on channel j alone.

    z' = -2 (lam sqrt|z| + (s^T P e_j) u_s + |s_j| |E e_j|_inf rho2 |u_s|) / c_z * sign(z),
    with P = M G_hat E. For diagonal P the middle term is s_j P_jj u_s.
    """
    drive = params.lam * math.sqrt(abs(z))
    if u_s != 0.0:
        _, P = input_gain(plant, sliding, x)
        k = j - 1
        E_col = plant.E_at(x)[:, k]
        drive += float(s @ P[:, k]) * u_s
        drive += abs(float(s[k])) * float(np.max(np.abs(E_col))) * plant.rho2_at(x) * abs(u_s)
    return -2.0 * drive / params.c_z * _z_switch(z, params)


def update_mode(
    state: ControllerState,
    x: np.ndarray,
    s: np.ndarray,
    safety: SafetySpec,
    t: float,
    h: Optional[float] = None,
) -> ControllerState:
    """Advance the PRE -> ACTIVE -> DONE machine in place and return ``state``.

    Activation is a single switch: once ACTIVE the risky threshold no longer
    matters. Leaving Omega while DONE is logged, never reversed.
    """
    if h is None:
        h = float(safety.h(x))
    in_omega = math.sqrt(float(s @ s)) < safety.omega_radius
    if state.mode is Mode.PRE and h <= safety.h_bar:
        state.mode = Mode.ACTIVE
        state.t1 = t
    if state.mode is Mode.ACTIVE and in_omega:
        state.mode = Mode.DONE
    elif state.mode is Mode.DONE and not in_omega:
        log.warning("trajectory left Omega at t=%.6g s after the safeguard was retired", t)
    return state


def maybe_reset(
    state: ControllerState,
    x: np.ndarray,
    safety: SafetySpec,
    params: SafeguardParams,
    h: Optional[float] = None,
) -> tuple[float, bool]:
    """Reinject energy: z := z0 when |z| < threshold inside the risky band.

    The band is the original ``0 <= h <= h_bar`` unless ``params.reset_band``
    is SAFE_SET, in which case any ``h >= 0`` qualifies.
    """
    thr = params.z_reset_threshold
    if state.mode is not Mode.ACTIVE or thr is None:
        return state.z, False
    if h is None:
        h = float(safety.h(x))
    in_band = h >= 0.0 if params.reset_band is ResetBand.SAFE_SET else h <= safety.h_bar
    if abs(state.z) < thr and in_band:
        state.z = params.z0
        state.reset_count += 1
        return state.z, True
    return state.z, False
