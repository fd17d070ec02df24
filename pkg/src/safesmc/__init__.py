"""Safe sliding mode control: an SMC inner loop with a barrier-function safeguard.

The inner loop is a conventional sliding mode controller for uncertain plants
in regular form. The outer loop adds a scalar correction on one input channel,
computed in closed form from a barrier function weighted by an augmented
energy state ``z``.
"""

from .errors import (
    ChannelDegenerate,
    ConfigError,
    DegenerateDenominator,
    EmptyTrajectory,
    InfeasibleSafeguard,
    InvalidParameters,
    NonFiniteState,
    SafeSMCError,
    SingularMatrix,
)
from .model import (
    ChannelRule,
    ControllerState,
    LinearAlpha,
    Mode,
    RegularFormPlant,
    ResetBand,
    SafeguardParams,
    SafetySpec,
    SlidingSpec,
    Switching,
    validate_scenario,
)
from .sim import Integrator, Scenario, SimConfig, SimResult, run

__version__ = "0.1.0"

__all__ = [
    "ChannelDegenerate",
    "ChannelRule",
    "ConfigError",
    "ControllerState",
    "DegenerateDenominator",
    "EmptyTrajectory",
    "InfeasibleSafeguard",
    "Integrator",
    "InvalidParameters",
    "LinearAlpha",
    "Mode",
    "NonFiniteState",
    "RegularFormPlant",
    "ResetBand",
    "SafeSMCError",
    "SafeguardParams",
    "SafetySpec",
    "Scenario",
    "SimConfig",
    "SimResult",
    "SingularMatrix",
    "SlidingSpec",
    "Switching",
    "run",
    "validate_scenario",
]
