"""Gaussian channel model and its amplify-then-split realisation.

A coherent state ``|alpha>`` sent through the channel arrives as a
Gaussian mixture of coherent states centred on ``sqrt(eta) * alpha`` with
excess quadrature noise ``delta``: Bob's quadrature variance is
``(1 + delta) / 4``. Eve can produce exactly this channel with a
phase-insensitive amplifier of gain ``g`` followed by a beam splitter of
transmission ``kappa``; the copy she keeps differs from Bob's by the
amplitude factor ``xi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import CTLViolationError, ParameterError

__all__ = [
    "ChannelParams",
    "AttackParams",
    "attack_from_channel",
    "channel_from_attack",
    "observed_variance",
    "within_ctl",
    "require_ctl",
    "gaussian_protocol_secure",
    "xi_thermal",
    "VACUUM_VARIANCE",
]

#: Quadrature variance of a coherent state.
VACUUM_VARIANCE = 0.25

# g * kappa may overshoot 1 by rounding when eta = 1 is round-tripped
_ETA_SLACK = 1e-12


@dataclass(frozen=True)
class ChannelParams:
    """Line transmission ``eta`` in (0, 1] and excess noise ``delta >= 0``."""

    eta: float
    delta: float

    def __post_init__(self):
        eta, delta = float(self.eta), float(self.delta)
        if not (math.isfinite(eta) and 0.0 < eta <= 1.0):
            raise ParameterError(f"eta must lie in (0, 1], got {self.eta!r}")
        if not (math.isfinite(delta) and delta >= 0.0):
            raise ParameterError(f"delta must be finite and >= 0, got {self.delta!r}")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "delta", delta)


@dataclass(frozen=True)
class AttackParams:
    """Amplifier gain ``g``, beam-splitter transmission ``kappa`` and Eve's amplitude ratio ``xi``."""

    g: float
    kappa: float
    xi: float

    def __post_init__(self):
        if not (math.isfinite(self.g) and self.g >= 1.0):
            raise ParameterError(f"gain g must be >= 1, got {self.g!r}")
        if not (0.0 < self.kappa <= 1.0):
            raise ParameterError(f"kappa must lie in (0, 1], got {self.kappa!r}")
        if not (math.isfinite(self.xi) and self.xi >= 0.0):
            raise ParameterError(f"xi must be finite and >= 0, got {self.xi!r}")


def within_ctl(ch: ChannelParams) -> bool:
    """True iff ``delta < 2 eta`` (strictly inside the classical teleportation limit)."""
    return ch.delta < 2.0 * ch.eta


def require_ctl(ch: ChannelParams) -> None:
    if not within_ctl(ch):
        raise CTLViolationError(ch.eta, ch.delta)


def attack_from_channel(ch: ChannelParams) -> AttackParams:
    """Amplifier/beam-splitter settings that reproduce the channel ``ch``.

    Raises
    ------
    CTLViolationError
        For ``delta >= 2 eta``, where the required gain is infinite.
    """
    require_ctl(ch)
    kappa = ch.eta - ch.delta / 2.0
    g = ch.eta / kappa
    # 1 - kappa = 1 - eta + delta/2
    xi = math.sqrt((1.0 - kappa) / kappa)
    return AttackParams(g=g, kappa=kappa, xi=xi)


def channel_from_attack(g: float, kappa: float) -> ChannelParams:
    """Channel seen by Bob when Eve amplifies by ``g`` then transmits ``kappa``.

    Raises
    ------
    ParameterError
        If ``g < 1``, ``kappa`` is outside (0, 1], or ``g * kappa > 1``.
    """
    g, kappa = float(g), float(kappa)
    if not (math.isfinite(g) and g >= 1.0):
        raise ParameterError(f"gain g must be >= 1, got {g!r}")
    if not (0.0 < kappa <= 1.0):
        raise ParameterError(f"kappa must lie in (0, 1], got {kappa!r}")
    eta = g * kappa
    if eta > 1.0 + _ETA_SLACK:
        raise ParameterError(f"g*kappa = {eta!r} > 1: unphysical transmission")
    return ChannelParams(eta=min(eta, 1.0), delta=2.0 * (g - 1.0) * kappa)


def observed_variance(ch: ChannelParams) -> float:
    """Bob's quadrature variance ``(1 + delta) / 4``."""
    return (1.0 + ch.delta) * VACUUM_VARIANCE


def gaussian_protocol_secure(ch: ChannelParams) -> bool:
    """Whether Bob's copy is at least as strong as Eve's (``xi <= 1``).

    Equivalent to ``delta <= 2 eta - 1``; at ``delta = 0`` this is the
    3 dB loss limit ``eta >= 1/2``. The boundary ``xi = 1`` counts as secure.
    """
    return attack_from_channel(ch).xi <= 1.0


def xi_thermal(eta: float) -> float:
    """Eve's amplitude ratio when Alice sends thermal states and Eve only splits the beam."""
    eta = float(eta)
    if not (0.0 < eta <= 1.0):
        raise ParameterError(f"eta must lie in (0, 1], got {eta!r}")
    return math.sqrt((1.0 - eta) / eta)
