"""Special functions, Gaussian densities, quadrature and root finding.

Quadrature amplitudes use the convention in which a coherent state has
quadrature variance 1/4, so the vacuum-limited density is
``sqrt(2/pi) * exp(-2 (x - mean)**2)``.

The error functions are thin wrappers over :mod:`scipy.special`; the
integrator and the bracketing solvers are implemented here because the
callers need their exact stopping rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .errors import ConvergenceError, ParameterError

__all__ = [
    "ToleranceConfig",
    "DEFAULT_TOLERANCE",
    "ENVELOPE_SIGMAS",
    "erfc",
    "erfcx",
    "log_erfc",
    "gauss_pdf",
    "integrate_interval",
    "integrate_semi_infinite",
    "find_root_bisect",
    "golden_section_max",
]

#: Gaussian-dominated integrands are truncated this many standard
#: deviations beyond the envelope mean.
ENVELOPE_SIGMAS = 12.0


@dataclass(frozen=True)
class ToleranceConfig:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 2**20

    def __post_init__(self):
        if not (self.abs_tol >= 0 and self.rel_tol >= 0):
            raise ParameterError("tolerances must be non-negative")
        if self.abs_tol + self.rel_tol <= 0:
            raise ParameterError("abs_tol + rel_tol must be positive")
        if int(self.max_subdivisions) < 1:
            raise ParameterError("max_subdivisions must be a positive integer")


DEFAULT_TOLERANCE = ToleranceConfig()


def erfc(s):
    """Complementary error function ``2/sqrt(pi) * int_s^inf exp(-t^2) dt``."""
    return special.erfc(s)


def erfcx(s):
    """Scaled complementary error function ``exp(s^2) * erfc(s)``."""
    return special.erfcx(s)


def log_erfc(s):
    """Natural log of ``erfc(s)``, finite far into the upper tail.

    For positive arguments the value is assembled from the scaled form so
    that ``erfc(s)`` underflowing to zero (``s`` above ~26.5) does not
    turn the logarithm into ``-inf``.
    """
    s = np.asarray(s, dtype=float)
    pos = s > 0
    with np.errstate(divide="ignore"):
        out = np.where(
            pos,
            np.log(special.erfcx(np.where(pos, s, 0.0))) - np.where(pos, s, 0.0) ** 2,
            np.log(special.erfc(np.where(pos, 0.0, s))),
        )
    return out[()] if out.ndim == 0 else out


def gauss_pdf(x, mean, variance):
    """Normal density with the given mean and variance.

    Raises
    ------
    ParameterError
        If ``variance`` is not strictly positive.
    """
    if not np.all(np.asarray(variance) > 0):
        raise ParameterError("variance must be > 0")
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * (x - mean) ** 2 / variance) / np.sqrt(2.0 * math.pi * variance)
    return out[()] if out.ndim == 0 else out


def _as_rows(values, n):
    v = np.asarray(values, dtype=float)
    if v.ndim == 0:
        v = np.full(n, float(v))
    return v.reshape(-1, n)


def integrate_interval(f: Callable, a: float, b: float, cfg: ToleranceConfig = DEFAULT_TOLERANCE):
    """Adaptive Simpson quadrature of ``f`` over the finite interval [a, b].

    ``f`` must be vectorised: it receives a 1-D array of abscissae and
    returns either an array of the same length or an array of shape
    ``(k, len(x))`` for ``k`` simultaneous integrands, all of which are
    refined on one shared panel set. Panels are refined breadth-first and
    accepted once the Richardson error estimate of every component falls
    below its share of ``max(abs_tol, rel_tol * |I|)``.

    Returns a float, or an array of ``k`` floats for vector integrands.

    Raises
    ------
    ConvergenceError
        When more than ``cfg.max_subdivisions`` panels would be needed.
    """
    a = float(a)
    b = float(b)
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ParameterError("integrate_interval needs finite limits")
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0

    probe = np.asarray(f(np.array([a])), dtype=float)
    scalar_out = probe.ndim <= 1
    k = 1 if scalar_out else probe.shape[0]
    if a == b:
        return 0.0 if scalar_out else np.zeros(k)

    def ev(x):
        return _as_rows(f(x), x.size)

    edges = np.linspace(a, b, 17)
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    n = lo.size
    fv = ev(np.concatenate([lo, mid, hi]))
    fa, fm, fb = fv[:, :n], fv[:, n : 2 * n], fv[:, 2 * n :]
    whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb)

    width = b - a
    accepted = np.zeros(k)
    panels = n
    while lo.size:
        estimate = accepted + whole.sum(axis=1)
        target = np.maximum(cfg.abs_tol, cfg.rel_tol * np.abs(estimate))

        mid = 0.5 * (lo + hi)
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        n = lo.size
        fv = ev(np.concatenate([lm, rm]))
        flm, frm = fv[:, :n], fv[:, n:]
        left = (mid - lo) / 6.0 * (fa + 4.0 * flm + fm)
        right = (hi - mid) / 6.0 * (fm + 4.0 * frm + fb)
        diff = left + right - whole

        share = (hi - lo) / width
        ok = np.all(np.abs(diff) <= 15.0 * target[:, None] * share, axis=0)
        # panels at floating-point resolution cannot be split further
        ok |= (lm <= lo) | (rm >= hi)
        if not np.all(np.isfinite(diff)):
            raise ConvergenceError(f"integrand is not finite on [{a}, {b}]")
        accepted += (left + right + diff / 15.0)[:, ok].sum(axis=1)

        keep = ~ok
        if not keep.any():
            break
        panels += int(keep.sum())
        if panels > cfg.max_subdivisions:
            raise ConvergenceError(
                f"adaptive Simpson did not converge within {cfg.max_subdivisions} "
                f"subdivisions on [{a}, {b}]"
            )
        lo_k, mid_k, hi_k = lo[keep], mid[keep], hi[keep]
        lo = np.concatenate([lo_k, mid_k])
        hi = np.concatenate([mid_k, hi_k])
        fa_new = np.concatenate([fa[:, keep], fm[:, keep]], axis=1)
        fm_new = np.concatenate([flm[:, keep], frm[:, keep]], axis=1)
        fb_new = np.concatenate([fm[:, keep], fb[:, keep]], axis=1)
        whole = np.concatenate([left[:, keep], right[:, keep]], axis=1)
        fa, fm, fb = fa_new, fm_new, fb_new

    result = sign * accepted
    return float(result[0]) if scalar_out else result


def _mapped_tail(f, a):
    # x = a + t / (1 - t) maps [0, 1) onto [a, inf)
    def g(t):
        t = np.asarray(t, dtype=float)
        inside = t < 1.0
        tt = np.where(inside, t, 0.0)
        x = a + tt / (1.0 - tt)
        val = np.asarray(f(x), dtype=float) / (1.0 - tt) ** 2
        return np.where(inside, val, 0.0)

    return g


def integrate_semi_infinite(
    f: Callable,
    a: float,
    cfg: ToleranceConfig = DEFAULT_TOLERANCE,
    *,
    envelope: tuple[float, float] | None = None,
    b: float = math.inf,
):
    """Integrate ``f`` over [a, b] where either limit may be infinite.

    With ``envelope=(mean, sd)`` the integrand is taken to be dominated by
    that Gaussian and infinite limits are replaced by
    ``mean +/- ENVELOPE_SIGMAS * sd``. Without an envelope, infinite
    ranges are mapped onto a finite interval, which needs ``f`` to decay
    faster than ``1/x**2``.
    """
    a = float(a)
    b = float(b)
    if b < a:
        raise ParameterError("integration limits must satisfy a <= b")
    if envelope is not None:
        mean, sd = envelope
        if not sd > 0:
            raise ParameterError("envelope standard deviation must be > 0")
        top = mean + ENVELOPE_SIGMAS * sd
        bottom = mean - ENVELOPE_SIGMAS * sd
        if math.isinf(b):
            b = max(top, a)
        if math.isinf(a):
            a = min(bottom, b)
        return integrate_interval(f, a, b, cfg)

    if math.isinf(a) and math.isinf(b):
        right = integrate_semi_infinite(f, 0.0, cfg)
        left = integrate_semi_infinite(lambda x: f(-x), 0.0, cfg)
        return right + left
    if math.isinf(a):
        return integrate_semi_infinite(lambda x: f(-x), -b, cfg)
    if math.isinf(b):
        return integrate_interval(_mapped_tail(f, a), 0.0, 1.0, cfg)
    return integrate_interval(f, a, b, cfg)


def find_root_bisect(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float,
    *,
    max_iter: int = 10_000,
    full_output: bool = False,
):
    """Bisection on a sign-changing bracket.

    Stops when the bracket is no wider than ``tol`` (or an exact zero is
    hit) and returns its midpoint. With ``full_output=True`` returns
    ``(root, iterations)``.

    Raises
    ------
    ParameterError
        If ``f(lo)`` and ``f(hi)`` have the same strict sign, or ``tol <= 0``.
    """
    if not tol > 0:
        raise ParameterError("tol must be > 0")
    lo, hi = float(lo), float(hi)
    if lo > hi:
        lo, hi = hi, lo
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise ParameterError(f"root not bracketed: f({lo})={flo}, f({hi})={fhi}")

    def done(root, it):
        return (root, it) if full_output else root

    if flo == 0:
        return done(lo, 0)
    if fhi == 0:
        return done(hi, 0)
    it = 0
    while hi - lo > tol and it < max_iter:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        it += 1
        fm = f(mid)
        if fm == 0:
            return done(mid, it)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return done(0.5 * (lo + hi), it)


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f: Callable[[float], float], a: float, b: float, tol: float = 1e-12, max_iter: int = 200):
    """Locate a maximum of a unimodal ``f`` on [a, b]; returns ``(x, f(x))``."""
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    # endpoints are never evaluated by the iteration above
    return (c, fc) if fc >= fd else (d, fd)
