"""Security analysis of binary coherent-state CV-QKD with postselection under
the amplification-beam-splitting (ABS) attack.
"""

__version__ = "0.1.0"

from .ber import ProtocolParams, bob_ber, eve_ber, eve_ber_upper_bound
from .channel import AttackParams, ChannelParams, attack_from_channel, channel_from_attack
from .errors import (
    AmpbsaError,
    ConvergenceError,
    CTLViolationError,
    DomainError,
    EmptyAcceptanceError,
    ParameterError,
)
from .infotheory import PostselectionWindow, info_advantage, ps_mutual_info
from .security import Verdict, boundary_curve, classify_point, ps_advantage_exists, solve_boundary

__all__ = [
    "__version__",
    "ProtocolParams",
    "ChannelParams",
    "AttackParams",
    "PostselectionWindow",
    "Verdict",
    "attack_from_channel",
    "channel_from_attack",
    "bob_ber",
    "eve_ber",
    "eve_ber_upper_bound",
    "ps_mutual_info",
    "info_advantage",
    "ps_advantage_exists",
    "solve_boundary",
    "boundary_curve",
    "classify_point",
    "AmpbsaError",
    "ParameterError",
    "CTLViolationError",
    "DomainError",
    "ConvergenceError",
    "EmptyAcceptanceError",
]
