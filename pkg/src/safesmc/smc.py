"""Inner loop: the conventional (possibly unsafe) sliding mode controller."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import RegularFormPlant, SlidingSpec, Switching


def sign(y):
    """Signum with the convention sign(0) = 1 (scalars and arrays)."""
    if isinstance(y, np.ndarray) and y.ndim:
        return np.where(y >= 0, 1.0, -1.0)
    if np.ndim(y) == 0:
        return 1.0 if y >= 0 else -1.0
    return np.where(np.asarray(y) >= 0, 1.0, -1.0)


def sat(y, epsilon: float):
    """sign(y) when |y| >= epsilon, y/epsilon otherwise."""
    if np.ndim(y) == 0:
        return sign(y) if abs(y) >= epsilon else y / epsilon
    return np.minimum(np.maximum(np.asarray(y, dtype=float) / epsilon, -1.0), 1.0)


def switching_term(s, switching: Switching):
    if switching.is_sign:
        return sign(s)
    return sat(s, switching.epsilon)


def sliding_variable(sliding: SlidingSpec, eta: np.ndarray, zeta: np.ndarray) -> np.ndarray:
    """s = M (zeta - phi(eta))."""
    e = np.asarray(zeta, dtype=float) - np.asarray(sliding.phi(eta), dtype=float)
    if sliding.M_is_identity:
        return e
    return sliding.M @ e


@dataclass(frozen=True)
class UnsafeControlOutput:
    u_smc: np.ndarray
    s: np.ndarray
    beta: float
    v: np.ndarray


def unsafe_control(plant: RegularFormPlant, sliding: SlidingSpec, x: np.ndarray,
                   s: Optional[np.ndarray] = None) -> UnsafeControlOutput:
    """Evaluate the sliding mode law at ``x``.

    u = E^-1 ( -G_hat^-1 (f_b - dphi/deta f_a) + M^-1 v ),  v_i = -beta sigma(s_i),
    with beta = rho(x) + beta0. Raises SingularMatrix if E, G_hat or M is singular.
    A precomputed sliding variable ``s`` may be passed to skip its evaluation.
    """
    eta, zeta = plant.split(x)
    if s is None:
        s = sliding_variable(sliding, eta, zeta)
    if plant.m > 0:
        fa, fb = plant.drift(x)
        fb = fb - np.asarray(sliding.jac_phi(eta), dtype=float) @ fa
    elif plant._fb_zero:
        fb = None
    else:
        fb = np.asarray(plant.f_b(eta, zeta), dtype=float)
    beta = plant.rho_at(x) + sliding.beta0
    v = -beta * switching_term(s, sliding.switching)
    reach = v if sliding.M_is_identity else sliding.M_inv @ v
    if fb is None:
        u = reach.copy() if plant.unit_gain else plant.E_inv_at(x) @ reach
    elif plant.unit_gain:
        u = reach - fb
    else:
        u = plant.E_inv_at(x) @ (reach - plant.G_hat_inv_at(x) @ fb)
    return UnsafeControlOutput(u_smc=u, s=s, beta=beta, v=v)


def reaching_time_bound(s0, z0: float, g0: float, beta0: float, lam: float, c_z: float) -> float:
    """Upper bound on the time to reach (s, z) = (0, 0) from the composite Lyapunov function.

    V(0) = |s0|^2/2 + c_z|z0|/2 and mu = min(g0*beta0, lam/sqrt(c_z)); the bound
    is sqrt(2 V(0)) / mu.
    """
    s0 = np.asarray(s0, dtype=float)
    v0 = 0.5 * float(s0 @ s0) + 0.5 * c_z * abs(z0)
    mu = min(g0 * beta0, lam / math.sqrt(c_z))
    return math.sqrt(2.0 * v0) / mu
