"""Conditional bit-error rates of Bob and Eve given Bob's homodyne outcome.

Alice sends ``|+alpha>`` or ``|-alpha>`` with real ``alpha > 0`` and Bob
decides the bit from the sign of his ``x1`` quadrature outcome ``x``. Eve
measures the same quadrature on her copy and also decides by sign.

``q_bob(x)`` is the probability that Alice sent the opposite sign to the
one Bob decoded. ``q_eve(x)`` is the probability that Eve's sign disagrees
with Bob's at outcome magnitude ``x``. Both equal 1/2 at ``x = 0``.

All functions accept scalars or numpy arrays for ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .channel import ChannelParams, observed_variance, require_ctl
from .errors import DomainError, ParameterError
from .gaussmath import erfc, gauss_pdf, log_erfc

__all__ = [
    "ProtocolParams",
    "BerPoint",
    "bob_quadrature_pdf",
    "bob_marginal_pdf",
    "posterior_alpha",
    "bob_ber",
    "log_bob_ber",
    "lambda_param",
    "eve_ber",
    "log_eve_ber",
    "eve_bound_domain",
    "eve_ber_upper_bound",
    "log_eve_ber_upper_bound",
    "ber_curve",
]

_SQRT2 = math.sqrt(2.0)
_LOG_HALF = math.log(0.5)


@dataclass(frozen=True)
class ProtocolParams:
    """Signal amplitude ``alpha > 0``; ``n = alpha**2`` is the mean photon number."""

    alpha: float

    def __post_init__(self):
        a = float(self.alpha)
        if not (math.isfinite(a) and a > 0.0):
            raise ParameterError(f"alpha must be finite and > 0, got {self.alpha!r}")
        object.__setattr__(self, "alpha", a)

    @classmethod
    def from_photon_number(cls, n: float) -> "ProtocolParams":
        n = float(n)
        if not (math.isfinite(n) and n > 0.0):
            raise ParameterError(f"mean photon number n must be > 0, got {n!r}")
        return cls(alpha=math.sqrt(n))

    @property
    def n(self) -> float:
        return self.alpha * self.alpha


@dataclass(frozen=True)
class BerPoint:
    x: float
    q_bob: float
    q_eve: float
    q_eve_bound: Optional[float] = None


def _mean(pp: ProtocolParams, ch: ChannelParams) -> float:
    return math.sqrt(ch.eta) * pp.alpha


def _logit(x, pp, ch):
    # log P(+alpha|x) - log P(-alpha|x)
    return 8.0 * _mean(pp, ch) * np.asarray(x, dtype=float) / (1.0 + ch.delta)


def _out(v):
    v = np.asarray(v)
    return v[()] if v.ndim == 0 else v


def bob_quadrature_pdf(x, sign: int, pp: ProtocolParams, ch: ChannelParams):
    """Density of Bob's outcome given Alice sent ``sign * alpha``."""
    if sign not in (1, -1):
        raise ParameterError("sign must be +1 or -1")
    return gauss_pdf(x, sign * _mean(pp, ch), observed_variance(ch))


def bob_marginal_pdf(x, pp: ProtocolParams, ch: ChannelParams):
    """Unconditional density of Bob's outcome for equiprobable signs."""
    return 0.5 * (bob_quadrature_pdf(x, 1, pp, ch) + bob_quadrature_pdf(x, -1, pp, ch))


def posterior_alpha(x, pp: ProtocolParams, ch: ChannelParams):
    """Probability that Alice sent ``+alpha`` given Bob's outcome ``x``."""
    return _out(expit(_logit(x, pp, ch)))


def _check_nonneg(x):
    if np.any(np.asarray(x) < 0):
        raise DomainError("conditional BERs are defined for x >= 0; use |x|")


def bob_ber(x, pp: ProtocolParams, ch: ChannelParams):
    """Bob's error probability at outcome magnitude ``x >= 0``: ``1 / (1 + exp(8 sqrt(eta) alpha x / (1 + delta)))``."""
    _check_nonneg(x)
    return _out(expit(-_logit(x, pp, ch)))


def log_bob_ber(x, pp: ProtocolParams, ch: ChannelParams):
    _check_nonneg(x)
    return _out(-np.logaddexp(0.0, _logit(x, pp, ch)))


def lambda_param(ch: ChannelParams) -> float:
    """Scale factor in Eve's error-function arguments.

    ``sqrt(((1 - eta) + delta/2) / ((eta + delta/2) (1 + delta)))``; zero
    only on the ideal channel.
    """
    eta, delta = ch.eta, ch.delta
    return math.sqrt(((1.0 - eta) + delta / 2.0) / ((eta + delta / 2.0) * (1.0 + delta)))


def eve_ber(x, pp: ProtocolParams, ch: ChannelParams):
    """Probability that Eve's sign decision disagrees with Bob's at magnitude ``x``.

    Evaluated as::

        1/2 P(+a|x) erfc(s (delta x + m)) + 1/2 P(-a|x) erfc(s (delta x - m))

    with ``m = sqrt(eta) alpha`` and ``s = sqrt(2) lambda``. The second term
    is rewritten through ``erfc(-u) = 2 - erfc(u)`` while its argument is
    negative, which keeps ``eve_ber(0) == 0.5`` exact.
    """
    require_ctl(ch)
    _check_nonneg(x)
    lam = lambda_param(ch)
    x = np.asarray(x, dtype=float)
    if lam == 0.0:
        return _out(np.full(x.shape, 0.5))
    m = _mean(pp, ch)
    s = _SQRT2 * lam
    z = _logit(x, pp, ch)
    pa, pm = expit(z), expit(-z)
    a_plus = s * (ch.delta * x + m)
    a_minus = s * (ch.delta * x - m)
    first = pa * erfc(a_plus)
    low = a_minus < 0
    # for a_minus < 0: q = pm + (pa erfc(a+) - pm erfc(-a-)) / 2, which
    # cancels exactly at x = 0
    q = np.where(
        low,
        pm + 0.5 * (first - pm * erfc(np.where(low, -a_minus, 0.0))),
        0.5 * (first + pm * erfc(np.where(low, 0.0, a_minus))),
    )
    return _out(q)


def log_eve_ber(x, pp: ProtocolParams, ch: ChannelParams):
    """Natural log of :func:`eve_ber`, accurate where the BER underflows."""
    require_ctl(ch)
    _check_nonneg(x)
    lam = lambda_param(ch)
    x = np.asarray(x, dtype=float)
    if lam == 0.0:
        return _out(np.full(x.shape, _LOG_HALF))
    m = _mean(pp, ch)
    s = _SQRT2 * lam
    z = _logit(x, pp, ch)
    log_pa = -np.logaddexp(0.0, -z)
    log_pm = -np.logaddexp(0.0, z)
    a_plus = s * (ch.delta * x + m)
    a_minus = s * (ch.delta * x - m)
    low = a_minus < 0
    log_second = np.where(
        low,
        np.log1p(-0.5 * erfc(np.where(low, -a_minus, 0.0))),
        _LOG_HALF + log_erfc(np.where(low, 0.0, a_minus)),
    )
    return _out(np.logaddexp(_LOG_HALF + log_pa + log_erfc(a_plus), log_pm + log_second))


def eve_bound_domain(x, pp: ProtocolParams, ch: ChannelParams):
    """Mask of outcomes where the Gaussian tail bound on Eve's BER is valid.

    The bound needs ``delta > 0``, ``sqrt(2) lambda (delta x - m) > 1`` and
    ``x > 4 m / delta``.
    """
    x = np.asarray(x, dtype=float)
    if ch.delta <= 0.0:
        return _out(np.zeros(x.shape, dtype=bool))
    m = _mean(pp, ch)
    lam = lambda_param(ch)
    ok = (_SQRT2 * lam * (ch.delta * x - m) > 1.0) & (x > 4.0 * m / ch.delta)
    return _out(ok)


def _bound_preconditions(x, pp, ch):
    require_ctl(ch)
    if ch.delta <= 0.0:
        raise DomainError("tail bound requires delta > 0")
    x = np.asarray(x, dtype=float)
    m = _mean(pp, ch)
    lam = lambda_param(ch)
    if np.any(x <= 4.0 * m / ch.delta):
        raise DomainError(
            f"tail bound requires x > 4*sqrt(eta)*alpha/delta = {4.0 * m / ch.delta!r}"
        )
    if np.any(_SQRT2 * lam * (ch.delta * x - m) <= 1.0):
        raise DomainError("tail bound requires sqrt(2)*lambda*(delta*x - sqrt(eta)*alpha) > 1")
    return x, m, lam


def log_eve_ber_upper_bound(x, pp: ProtocolParams, ch: ChannelParams):
    x, m, lam = _bound_preconditions(x, pp, ch)
    lam2 = lam * lam
    return _out(-2.0 * lam2 * m * m - 0.5 * math.log(math.pi) - lam2 * ch.delta**2 * x * x)


def eve_ber_upper_bound(x, pp: ProtocolParams, ch: ChannelParams):
    """Gaussian tail bound ``exp(-2 lambda^2 m^2) / sqrt(pi) * exp(-lambda^2 delta^2 x^2)`` on Eve's BER.

    Raises
    ------
    DomainError
        If ``delta == 0`` or ``x`` violates either large-``x`` precondition.
    """
    return _out(np.exp(log_eve_ber_upper_bound(x, pp, ch)))


def ber_curve(x_grid: Sequence[float], pp: ProtocolParams, ch: ChannelParams) -> list[BerPoint]:
    """Bob's and Eve's BER (and the tail bound where valid) on a grid of ``x >= 0``."""
    x = np.asarray(x_grid, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ParameterError("x_grid must be a non-empty 1-D sequence")
    if np.any(x < 0):
        raise ParameterError("x_grid must be non-negative")
    if np.any(np.diff(x) <= 0):
        raise ParameterError("x_grid must be strictly increasing")
    qb = np.atleast_1d(bob_ber(x, pp, ch))
    qe = np.atleast_1d(eve_ber(x, pp, ch))
    dom = np.atleast_1d(eve_bound_domain(x, pp, ch))
    bound = np.full(x.size, np.nan)
    if dom.any():
        bound[dom] = eve_ber_upper_bound(x[dom], pp, ch)
    return [
        BerPoint(float(xi), float(b), float(e), float(u) if d else None)
        for xi, b, e, u, d in zip(x, qb, qe, bound, dom)
    ]

