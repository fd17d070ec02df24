"""Programmatic robot scenarios for unit tests (no config files involved)."""

from __future__ import annotations

import numpy as np

from safesmc.model import ChannelRule, SafeguardParams, SlidingSpec, Switching
from safesmc.robot import DiagonalChannelRule, obstacle_safety, robot_plant
from safesmc.sim import Scenario, SimConfig


def params(**kw) -> SafeguardParams:
    base = dict(h1=1.0, h2=0.2, h3=1.0, c_z=2.0, lam=1.0, z0=-10.0, z_reset_threshold=1.0,
                channel_rule=ChannelRule.initial_condition(DiagonalChannelRule(2.0)))
    base.update(kw)
    return SafeguardParams(**base)


def robot(switching: Switching = Switching.sign(), M=None, uncertain: bool = True,
          center=(5.0, 3.0), radius: float = 2.0, omega_radius: float = 3.83, **kw) -> Scenario:
    plant = robot_plant() if uncertain else robot_plant(delta_bounds=(0.0, 0.0), theta_bound=0.0)
    sliding = SlidingSpec(p=2, beta0=0.1, M=None if M is None else np.array(M, float), switching=switching)
    safety = obstacle_safety(center=center, radius=radius, omega_radius=omega_radius)
    return Scenario(plant, sliding, safety, params(**kw), name="test-robot")


def sim(x0=(7.0, 7.0), t_end: float = 0.3, dt: float = 1e-3, **kw) -> SimConfig:
    return SimConfig(x0=np.array(x0, float), t_end=t_end, dt=dt, **kw)
