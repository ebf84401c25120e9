"""Binary-symmetric-channel information and postselected mutual information.

For a postselection window ``x0 <= |x| < x1`` the information Alice shares
with party P is::

    I_P = 1/2 * int_{x0 <= |x| < x1} P_B(x) i(q_P(|x|)) dx
        = int_{x0}^{x1} P_B(x) i(q_P(x)) dx

where ``P_B`` is Bob's (symmetric) outcome density and ``i`` is the BSC
information. The leading 1/2 is kept as is. An optional ``sifting``
factor multiplies both parties' information alike.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .ber import ProtocolParams, bob_ber, bob_marginal_pdf, eve_ber
from .channel import ChannelParams, observed_variance, require_ctl
from .errors import ParameterError
from .gaussmath import DEFAULT_TOLERANCE, ToleranceConfig, erfc, integrate_semi_infinite

__all__ = [
    "Party",
    "PostselectionWindow",
    "InfoResult",
    "bsc_info",
    "ps_mutual_info",
    "info_advantage",
    "acceptance_probability",
]


class Party(str, enum.Enum):
    BOB = "bob"
    EVE = "eve"


@dataclass(frozen=True)
class PostselectionWindow:
    """Accepted outcome magnitudes ``x0 <= |x| < x1``; ``x1 = inf`` keeps everything above ``x0``."""

    x0: float = 0.0
    x1: float = math.inf

    def __post_init__(self):
        x0, x1 = float(self.x0), float(self.x1)
        if not (math.isfinite(x0) and x0 >= 0.0):
            raise ParameterError(f"x0 must be finite and >= 0, got {self.x0!r}")
        if math.isnan(x1) or not x1 > x0:
            raise ParameterError(f"x1 must exceed x0, got x0={x0!r}, x1={self.x1!r}")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "x1", x1)

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.x1)

    def contains(self, abs_x):
        abs_x = np.asarray(abs_x)
        return (abs_x >= self.x0) & (abs_x < self.x1)


@dataclass(frozen=True)
class InfoResult:
    i_ab: float
    i_ae: float
    advantage: float
    acceptance_prob: float


def bsc_info(q):
    """Capacity ``1 + q log2 q + (1-q) log2 (1-q)`` of a binary symmetric channel, in bits."""
    q = np.asarray(q, dtype=float)
    if np.any(np.isnan(q)) or np.any((q < 0.0) | (q > 1.0)):
        raise ParameterError("BSC error probability must lie in [0, 1]")
    p = 1.0 - q
    with np.errstate(divide="ignore", invalid="ignore"):
        hq = np.where(q > 0.0, q * np.log2(np.where(q > 0.0, q, 1.0)), 0.0)
        hp = np.where(p > 0.0, p * np.log2(np.where(p > 0.0, p, 1.0)), 0.0)
    out = 1.0 + hq + hp
    return out[()] if out.ndim == 0 else out


def acceptance_probability(w: PostselectionWindow, pp: ProtocolParams, ch: ChannelParams) -> float:
    """Closed-form probability that Bob's ``|x|`` lands in the window."""
    m = math.sqrt(ch.eta) * pp.alpha
    sd = math.sqrt(observed_variance(ch))
    r = math.sqrt(2.0) * sd

    def tail(t):
        # P(|X| >= t) for X ~ N(m, sd^2), averaged with the mirrored signal (same value)
        if math.isinf(t):
            return 0.0
        return 0.5 * (erfc((t - m) / r) + erfc((t + m) / r))

    return tail(w.x0) - tail(w.x1)


def _integrand(parties, pp, ch):
    def f(x):
        x = np.abs(x)
        dens = bob_marginal_pdf(x, pp, ch)
        rows = []
        for party in parties:
            q = bob_ber(x, pp, ch) if party is Party.BOB else eve_ber(x, pp, ch)
            rows.append(dens * bsc_info(np.clip(q, 0.0, 1.0)))
        rows.append(2.0 * dens)
        return np.vstack(rows)

    return f


def _integrate(parties, w, pp, ch, cfg):
    m = math.sqrt(ch.eta) * pp.alpha
    sd = math.sqrt(observed_variance(ch))
    return integrate_semi_infinite(
        _integrand(parties, pp, ch), w.x0, cfg, envelope=(m, sd), b=w.x1
    )


def ps_mutual_info(
    party,
    w: PostselectionWindow,
    pp: ProtocolParams,
    ch: ChannelParams,
    cfg: ToleranceConfig = DEFAULT_TOLERANCE,
    *,
    sifting: float = 1.0,
) -> float:
    """Postselected mutual information (bits per sent signal) between Alice and ``party``.

    Raises
    ------
    CTLViolationError
        For ``party='eve'`` on a channel beyond the classical teleportation limit.
    ConvergenceError
        If the quadrature does not converge.
    """
    party = Party(party)
    if party is Party.EVE:
        require_ctl(ch)
    value = _integrate([party], w, pp, ch, cfg)[0]
    return sifting * max(float(value), 0.0)


def info_advantage(
    w: PostselectionWindow,
    pp: ProtocolParams,
    ch: ChannelParams,
    cfg: ToleranceConfig = DEFAULT_TOLERANCE,
    *,
    sifting: float = 1.0,
) -> InfoResult:
    """Bob's and Eve's postselected information for one window.

    Both informations and the acceptance probability are integrated
    together on one shared adaptive panel set.
    """
    require_ctl(ch)
    i_ab, i_ae, acc = _integrate([Party.BOB, Party.EVE], w, pp, ch, cfg)
    i_ab = sifting * max(float(i_ab), 0.0)
    i_ae = sifting * max(float(i_ae), 0.0)
    return InfoResult(
        i_ab=i_ab,
        i_ae=i_ae,
        advantage=i_ab - i_ae,
        acceptance_prob=min(max(float(acc), 0.0), 1.0),
    )
