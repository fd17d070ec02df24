"""Built-in planar mobile robot with a circular obstacle.

    x1' = (1 + theta1) u1 + delta1
    x2' = (1 + theta2) u2 + delta2

The robot is already in regular form with zeta = x (no eta block), E = G_hat = I.
The truth model uses theta1 = 0.5 sin t, theta2 = 0.5 exp(-t) cos t,
delta1 = 4 cos t and delta2 = 3 sin x2, scaled to the configured bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import LinearAlpha, RegularFormPlant, SafetySpec


@dataclass(frozen=True)
class RobotTruth:
    """Picklable truth model; bounds of zero switch the corresponding term off."""

    theta_bound: float = 0.5
    delta_bounds: tuple[float, float] = (4.0, 3.0)

    def gain(self, t: float, x: np.ndarray) -> np.ndarray:
        th = self.theta_bound
        if th == 0.0:
            return np.ones(2)
        return np.array([1.0 + th * math.sin(t), 1.0 + th * math.exp(-t) * math.cos(t)])

    def disturbance(self, t: float, x: np.ndarray) -> np.ndarray:
        d1, d2 = self.delta_bounds
        return np.array([d1 * math.cos(t), d2 * math.sin(x[1])])


def robot_plant(
    g0: float = 0.5,
    delta_bounds: tuple[float, float] = (4.0, 3.0),
    theta_bound: float = 0.5,
) -> RegularFormPlant:
    """The uncertain robot; rho = max(delta bounds)/g0, rho1 = max(delta bounds), rho2 = theta bound."""
    d = tuple(float(v) for v in delta_bounds)
    truth = RobotTruth(float(theta_bound), d)
    return RegularFormPlant(
        n=2,
        p=2,
        f_b=None,
        E=np.eye(2),
        G_hat=np.eye(2),
        g0=float(g0),
        rho1=max(d),
        rho2=float(theta_bound),
        rho=max(d) / g0,
        G_true=truth.gain,
        delta_true=truth.disturbance,
        name="robot",
    )


@dataclass(frozen=True)
class DiskObstacle:
    """h(x) = |x - center|^2 - radius^2, positive outside the disk."""

    center: tuple[float, float]
    radius: float

    def h(self, x: np.ndarray) -> float:
        d0 = x[0] - self.center[0]
        d1 = x[1] - self.center[1]
        return d0 * d0 + d1 * d1 - self.radius * self.radius

    def grad(self, x: np.ndarray) -> np.ndarray:
        return np.array([2.0 * (x[0] - self.center[0]), 2.0 * (x[1] - self.center[1])])

    def clearance(self) -> float:
        """Distance from the origin to the obstacle boundary."""
        return math.hypot(*self.center) - self.radius


def obstacle_safety(
    center=(5.0, 3.0),
    radius: float = 2.0,
    alpha_gain: float = 10.0,
    h_bar: float = 1.0,
    omega_radius: float = 3.83,
) -> SafetySpec:
    obs = DiskObstacle((float(center[0]), float(center[1])), float(radius))
    return SafetySpec(h=obs.h, grad_h=obs.grad, h_bar=float(h_bar), omega_radius=float(omega_radius),
                      alpha=LinearAlpha(float(alpha_gain)))


@dataclass(frozen=True)
class DiagonalChannelRule:
    """j = 2 when x2(0) >= x1(0) - offset, else j = 1."""

    offset: float = 2.0

    def __call__(self, x0: np.ndarray) -> int:
        return 2 if x0[1] >= x0[0] - self.offset else 1
