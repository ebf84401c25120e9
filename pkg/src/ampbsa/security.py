"""Where does postselection stop helping Bob?

Postselection can only produce a key at outcomes where Eve's conditional
BER exceeds Bob's. This module scans the gap ``q_eve(x) - q_bob(x)`` over
``x > 0``, locates the final crossover beyond which Eve is always better
informed, and solves for the excess noise ``delta*(eta)`` above which the
gap is never positive. The region ``delta <= 2 eta - 1`` needs no
postselection at all (``xi <= 1``), so ``delta*`` is searched inside the
band ``[max(0, 2 eta - 1), 2 eta)``.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .ber import ProtocolParams, bob_ber, eve_ber, lambda_param, log_bob_ber, log_eve_ber
from .channel import ChannelParams, gaussian_protocol_secure, observed_variance, require_ctl, within_ctl
from .errors import AmpbsaError, ConvergenceError, ParameterError
from .gaussmath import find_root_bisect, golden_section_max

__all__ = [
    "GRID_TOL",
    "CTL_MARGIN",
    "Verdict",
    "CrossoverReport",
    "BoundaryPoint",
    "BoundaryCurve",
    "scan_grid",
    "certified_crossover_bound",
    "ps_advantage_exists",
    "solve_boundary",
    "boundary_delta",
    "boundary_curve",
    "classify_point",
]

GRID_TOL = 1e-10
#: The upper end of the delta search sits CTL_MARGIN * eta below the CTL.
CTL_MARGIN = 1e-6
_SCAN_POINTS = 512
_REFINE_MAXIMA = 3
_PROFILE_POINTS = 9


class Verdict(str, enum.Enum):
    GAUSSIAN_SECURE = "gaussian_secure"
    PS_SECURE = "ps_secure"
    PS_INSECURE = "ps_insecure"
    BEYOND_CTL = "beyond_ctl"


@dataclass(frozen=True)
class CrossoverReport:
    """Outcome of the gap scan for one (eta, delta, n).

    ``x_c`` is the crossover after which ``q_eve < q_bob`` for every
    larger ``x``: ``0.0`` when Eve is ahead already just above the origin,
    ``None`` when the gap never turns negative (``delta = 0``).
    ``x_certified`` is the point beyond which the Gaussian tail bound
    proves ``q_eve < q_bob``.
    """

    x_c: Optional[float]
    advantage_exists: bool
    max_gap: float
    x_at_max: float
    x_certified: Optional[float] = None


@dataclass(frozen=True)
class BoundaryPoint:
    eta: float
    n: float
    delta_star: float
    iterations: int
    on_xi_line: bool = False
    monotone: bool = True
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class BoundaryCurve:
    n: float
    points: list[BoundaryPoint] = field(default_factory=list)
    solver_tol: float = 1e-4

    @property
    def etas(self) -> np.ndarray:
        return np.array([p.eta for p in self.points])

    @property
    def deltas(self) -> np.ndarray:
        return np.array([p.delta_star for p in self.points])

    @property
    def failures(self) -> list[BoundaryPoint]:
        return [p for p in self.points if not p.ok]


def scan_grid(pp: ProtocolParams, ch: ChannelParams, density: int = 1) -> np.ndarray:
    """Log-spaced plus linear outcome grid on which the gap is scanned.

    Both halves have ``512 * density`` points and end at
    ``x_hi = sqrt(eta) alpha / max(delta, 1e-3) + 20 sigma_B``.
    """
    if density < 1:
        raise ParameterError("density must be >= 1")
    sb = math.sqrt(observed_variance(ch))
    m = math.sqrt(ch.eta) * pp.alpha
    x_hi = m / max(ch.delta, 1e-3) + 20.0 * sb
    n = _SCAN_POINTS * int(density)
    return np.unique(
        np.concatenate([np.geomspace(1e-3 * sb, x_hi, n), np.linspace(x_hi / n, x_hi, n)])
    )


def certified_crossover_bound(pp: ProtocolParams, ch: ChannelParams) -> Optional[float]:
    """Outcome beyond which ``q_eve < q_bob`` follows from the tail bound.

    Combines the bound's preconditions with
    ``C exp(-lambda^2 delta^2 x^2) <= exp(-k x) / 2 <= q_bob`` where
    ``k = 8 sqrt(eta) alpha / (1 + delta)``. ``None`` for ``delta = 0``.
    """
    if ch.delta <= 0.0:
        return None
    m = math.sqrt(ch.eta) * pp.alpha
    lam = lambda_param(ch)
    a = (lam * ch.delta) ** 2
    k = 8.0 * m / (1.0 + ch.delta)
    log_2c = math.log(2.0) - 2.0 * lam * lam * m * m - 0.5 * math.log(math.pi)
    disc = k * k + 4.0 * a * log_2c
    root = (k + math.sqrt(disc)) / (2.0 * a) if disc >= 0 else 0.0
    domain = max(4.0 * m / ch.delta, (1.0 / (math.sqrt(2.0) * lam) + m) / ch.delta)
    return max(root, domain) * (1.0 + 1e-9)


def _gap_fn(pp, ch):
    def gap(x):
        return eve_ber(x, pp, ch) - bob_ber(x, pp, ch)

    return gap


def _max_gap(pp, ch, density):
    x = scan_grid(pp, ch, density)
    gap = _gap_fn(pp, ch)
    g = gap(x)
    i_best = int(np.argmax(g))
    best_x, best = float(x[i_best]), float(g[i_best])

    interior = np.nonzero((g[1:-1] >= g[:-2]) & (g[1:-1] >= g[2:]))[0] + 1
    if interior.size:
        top = interior[np.argsort(g[interior])[::-1][:_REFINE_MAXIMA]]
        for i in top:
            xr, gr = golden_section_max(lambda t: float(gap(t)), float(x[i - 1]), float(x[i + 1]))
            if gr > best:
                best_x, best = xr, gr
    return best, best_x


def _last_crossover(pp, ch, density):
    certified = certified_crossover_bound(pp, ch)
    grid = scan_grid(pp, ch, density)
    if certified is not None:
        sb = math.sqrt(observed_variance(ch))
        extra = 2048 * int(density)
        grid = np.unique(
            np.concatenate(
                [grid, np.geomspace(1e-3 * sb, certified, extra), np.linspace(0.0, certified, extra)[1:]]
            )
        )

    def d(x):
        return log_eve_ber(x, pp, ch) - log_bob_ber(x, pp, ch)

    dv = d(grid)
    nonneg = np.nonzero(dv >= 0.0)[0]
    if nonneg.size == 0:
        return 0.0, certified
    j = int(nonneg[-1])
    if j == grid.size - 1:
        return None, certified
    x_c = find_root_bisect(lambda t: float(d(t)), float(grid[j]), float(grid[j + 1]), 1e-12 * float(grid[j + 1]))
    return float(x_c), certified


def ps_advantage_exists(
    pp: ProtocolParams,
    ch: ChannelParams,
    *,
    density: int = 1,
    grid_tol: float = GRID_TOL,
    crossover: bool = True,
) -> CrossoverReport:
    """Scan ``q_eve - q_bob`` over ``x > 0``.

    ``max_gap`` is the supremum from the grid scan after golden-section
    refinement of the three largest local maxima; an advantage exists
    when it exceeds ``grid_tol``. The crossover search runs in the log
    domain out to the point certified by the tail bound, and can be
    skipped with ``crossover=False``.
    """
    require_ctl(ch)
    best, best_x = _max_gap(pp, ch, density)
    x_c, certified = _last_crossover(pp, ch, density) if crossover else (None, None)
    return CrossoverReport(
        x_c=x_c,
        advantage_exists=best > grid_tol,
        max_gap=best,
        x_at_max=best_x,
        x_certified=certified,
    )


def solve_boundary(
    eta: float,
    n: float,
    tol: float = 1e-4,
    *,
    density: int = 1,
    grid_tol: float = GRID_TOL,
) -> BoundaryPoint:
    """Smallest ``delta`` from which no outcome gives Bob a BER advantage, up to the CTL.

    A coarse profile of ``max_gap`` across the band locates a single sign
    change, which bisection then narrows to ``tol``. When the advantage is
    already gone on the ``xi = 1`` line the result is that line
    (``on_xi_line=True``, zero iterations).

    Raises
    ------
    ConvergenceError
        If the sampled gap profile changes sign more than once or the
        advantage persists up to the CTL; the message lists the profile.
    """
    if not (0.0 < eta <= 1.0):
        raise ParameterError(f"eta must lie in (0, 1], got {eta!r}")
    if not tol > 0:
        raise ParameterError("tol must be > 0")
    pp = ProtocolParams.from_photon_number(n)
    lo = max(0.0, 2.0 * eta - 1.0)
    hi = 2.0 * eta - CTL_MARGIN * eta

    def gap_at(delta):
        best, _ = _max_gap(pp, ChannelParams(eta, delta), density)
        return best - grid_tol

    ds = np.linspace(lo, hi, _PROFILE_POINTS)
    gs = np.array([gap_at(d) for d in ds])
    positive = gs > 0
    # max_gap should fall as delta grows; allow for rounding in the comparison
    monotone = bool(np.all(np.diff(gs) <= 1e-12))
    profile = ", ".join(f"({d:.6g}, {g + grid_tol:.3e})" for d, g in zip(ds, gs))
    changes = int(np.count_nonzero(positive[1:] != positive[:-1]))

    if not positive[0]:
        if changes:
            raise ConvergenceError(f"max_gap is not single-signed across the band; profile: {profile}")
        return BoundaryPoint(eta, n, lo, 0, on_xi_line=lo > 0.0, monotone=monotone)
    if positive[-1]:
        raise ConvergenceError(f"postselection advantage persists up to the CTL; profile: {profile}")
    if changes != 1:
        raise ConvergenceError(f"max_gap changes sign {changes} times across the band; profile: {profile}")

    k = int(np.nonzero(positive)[0][-1])
    root, iters = find_root_bisect(gap_at, float(ds[k]), float(ds[k + 1]), tol, full_output=True)
    return BoundaryPoint(eta, n, float(root), int(iters) + _PROFILE_POINTS, monotone=monotone)


def boundary_delta(eta: float, n: float, tol: float = 1e-4, *, density: int = 1) -> float:
    return solve_boundary(eta, n, tol, density=density).delta_star


def _solve_safe(args):
    eta, n, tol, density = args
    try:
        return solve_boundary(eta, n, tol, density=density)
    except AmpbsaError as exc:
        return BoundaryPoint(eta, n, math.nan, 0, error=str(exc))


def boundary_curve(
    eta_grid: Sequence[float],
    n: float,
    tol: float = 1e-4,
    *,
    density: int = 1,
    workers: int = 1,
) -> BoundaryCurve:
    """Boundary ``delta*(eta)`` for one photon number over an increasing ``eta`` grid.

    Failed points keep their place in the curve with ``delta_star = nan``
    and the error text. Output order follows the grid for any ``workers``.
    """
    etas = [float(e) for e in eta_grid]
    if any(not (0.0 < e <= 1.0) for e in etas):
        raise ParameterError("eta grid must lie in (0, 1]")
    if any(b <= a for a, b in zip(etas, etas[1:])):
        raise ParameterError("eta grid must be strictly increasing")
    tasks = [(e, float(n), tol, density) for e in etas]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_solve_safe, tasks))
    else:
        points = [_solve_safe(t) for t in tasks]
    return BoundaryCurve(n=float(n), points=points, solver_tol=tol)


def classify_point(eta: float, delta: float, n: float, *, density: int = 1) -> Verdict:
    ch = ChannelParams(eta, delta)
    if not within_ctl(ch):
        return Verdict.BEYOND_CTL
    if gaussian_protocol_secure(ch):
        return Verdict.GAUSSIAN_SECURE
    pp = ProtocolParams.from_photon_number(n)
    report = ps_advantage_exists(pp, ch, density=density, crossover=False)
    return Verdict.PS_SECURE if report.advantage_exists else Verdict.PS_INSECURE
