"""Seeded Monte Carlo of protocol rounds under the amplify-then-split attack.

Each round draws Alice's sign, a complex channel displacement ``beta``
with independent ``N(0, delta/4)`` components, and one homodyne outcome
each for Bob and Eve::

    x_bob ~ N(sqrt(eta) s alpha + Re beta, 1/4)
    x_eve ~ N(xi (sqrt(eta) s alpha + Re beta), 1/4)

The displacement is shared, which is what couples Eve's decisions to
Bob's outcome. Bob errs when ``sign(x_bob) != s``; Eve errs when
``sign(x_eve) != sign(x_bob)``. Both are tallied per ``|x_bob|`` bin.

Rounds are split across ``stream_count`` independent generators spawned
from one :class:`numpy.random.SeedSequence`, so the result depends only on
``(seed, rounds, stream_count, chunk_size)`` and not on how many worker
threads run the streams.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ber import ProtocolParams, bob_ber, bob_marginal_pdf, eve_ber
from .channel import ChannelParams, VACUUM_VARIANCE, attack_from_channel, observed_variance, require_ctl
from .errors import EmptyAcceptanceError, ParameterError
from .gaussmath import integrate_semi_infinite
from .infotheory import PostselectionWindow, bsc_info

__all__ = [
    "McConfig",
    "TrialRecord",
    "BinStats",
    "McEstimate",
    "MutualInfoEstimate",
    "Check",
    "VerificationReport",
    "TAIL_SIGMAS",
    "stream_generators",
    "sample_rounds",
    "sample_round",
    "estimate_conditional_bers",
    "estimate_mutual_info_mc",
    "verify_against_analytic",
]

#: Outcomes beyond this many of Bob's standard deviations share one tail bin.
TAIL_SIGMAS = 8.0
_BOOT_KEY = 0xB0075


@dataclass(frozen=True)
class McConfig:
    seed: int = 0
    rounds: int = 1_000_000
    bin_width: float = 0.05
    stream_count: int = 8
    chunk_size: int = 1 << 20
    workers: int = 1

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise ParameterError("seed must be a 64-bit unsigned integer")
        if int(self.rounds) < 1:
            raise ParameterError("rounds must be >= 1")
        if not (self.bin_width > 0 and math.isfinite(self.bin_width)):
            raise ParameterError("bin_width must be > 0")
        if int(self.stream_count) < 1:
            raise ParameterError("stream_count must be >= 1")
        if int(self.chunk_size) < 1 or int(self.workers) < 1:
            raise ParameterError("chunk_size and workers must be >= 1")


@dataclass(frozen=True)
class TrialRecord:
    bit: int
    beta_re: float
    beta_im: float
    x_bob: float
    x_eve: float


def stream_generators(cfg: McConfig) -> list[np.random.Generator]:
    children = np.random.SeedSequence(int(cfg.seed)).spawn(int(cfg.stream_count))
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def _stream_rounds(cfg: McConfig) -> list[int]:
    q, r = divmod(int(cfg.rounds), int(cfg.stream_count))
    return [q + (1 if k < r else 0) for k in range(int(cfg.stream_count))]


def sample_rounds(
    rng: np.random.Generator,
    size: int,
    pp: ProtocolParams,
    ch: ChannelParams,
    *,
    xi_scale: float = 1.0,
) -> dict[str, np.ndarray]:
    """Draw ``size`` rounds; returns arrays ``bit, beta_re, beta_im, x_bob, x_eve``.

    ``xi_scale`` multiplies Eve's amplitude factor and exists only to build
    deliberately wrong simulations for sensitivity checks.
    """
    require_ctl(ch)
    xi = attack_from_channel(ch).xi * xi_scale
    m = math.sqrt(ch.eta) * pp.alpha
    sd = math.sqrt(VACUUM_VARIANCE)
    bit = 2 * rng.integers(0, 2, size=size, dtype=np.int8) - 1
    if ch.delta > 0.0:
        beta_sd = math.sqrt(ch.delta / 4.0)
        beta_re = rng.normal(0.0, beta_sd, size)
        beta_im = rng.normal(0.0, beta_sd, size)
    else:
        beta_re = np.zeros(size)
        beta_im = np.zeros(size)
    centre = m * bit + beta_re
    x_bob = centre + rng.normal(0.0, sd, size)
    x_eve = xi * centre + rng.normal(0.0, sd, size)
    return {"bit": bit, "beta_re": beta_re, "beta_im": beta_im, "x_bob": x_bob, "x_eve": x_eve}


def sample_round(rng: np.random.Generator, pp: ProtocolParams, ch: ChannelParams) -> TrialRecord:
    r = sample_rounds(rng, 1, pp, ch)
    return TrialRecord(
        bit=int(r["bit"][0]),
        beta_re=float(r["beta_re"][0]),
        beta_im=float(r["beta_im"][0]),
        x_bob=float(r["x_bob"][0]),
        x_eve=float(r["x_eve"][0]),
    )


# ---------------------------------------------------------------- tallies


@dataclass
class _Tally:
    """Per-stream accumulators; merged in stream order."""

    edges: np.ndarray
    counts: np.ndarray = field(init=False)
    bob_err: np.ndarray = field(init=False)
    eve_err: np.ndarray = field(init=False)
    # per bit class (index 0: bit=-1, 1: bit=+1); columns:
    # n, sum r, r^2, r^3, r^4, e, e^2, r*e   with r, e shifted by the expected means
    moments: np.ndarray = field(init=False)

    def __post_init__(self):
        nb = self.edges.size  # regular bins plus one tail bin
        self.counts = np.zeros(nb, dtype=np.int64)
        self.bob_err = np.zeros(nb, dtype=np.int64)
        self.eve_err = np.zeros(nb, dtype=np.int64)
        self.moments = np.zeros((2, 8))

    def add(self, batch, m, xi_nominal):
        ax = np.abs(batch["x_bob"])
        idx = np.searchsorted(self.edges, ax, side="right") - 1
        idx = np.clip(idx, 0, self.edges.size - 1)
        bob_wrong = np.sign(batch["x_bob"]) != batch["bit"]
        eve_wrong = np.sign(batch["x_eve"]) != np.sign(batch["x_bob"])
        nb = self.edges.size
        self.counts += np.bincount(idx, minlength=nb)
        self.bob_err += np.bincount(idx[bob_wrong], minlength=nb)
        self.eve_err += np.bincount(idx[eve_wrong], minlength=nb)
        for c, s in enumerate((-1, 1)):
            sel = batch["bit"] == s
            r = batch["x_bob"][sel] - s * m
            e = batch["x_eve"][sel] - s * xi_nominal * m
            r2 = r * r
            self.moments[c] += (
                r.size,
                r.sum(),
                r2.sum(),
                (r2 * r).sum(),
                (r2 * r2).sum(),
                e.sum(),
                (e * e).sum(),
                (r * e).sum(),
            )

    def merge(self, other: "_Tally"):
        self.counts += other.counts
        self.bob_err += other.bob_err
        self.eve_err += other.eve_err
        self.moments += other.moments


def _bin_edges(ch: ChannelParams, width: float) -> np.ndarray:
    tail = TAIL_SIGMAS * math.sqrt(observed_variance(ch))
    nb = max(1, int(math.ceil(tail / width - 1e-9)))
    return np.arange(nb + 1) * width  # last edge opens the tail bin


def _run_stream(rng, rounds, cfg, pp, ch, edges, xi_scale):
    t = _Tally(edges)
    m = math.sqrt(ch.eta) * pp.alpha
    xi = attack_from_channel(ch).xi
    left = rounds
    while left > 0:
        size = min(left, int(cfg.chunk_size))
        t.add(sample_rounds(rng, size, pp, ch, xi_scale=xi_scale), m, xi)
        left -= size
    return t


def _simulate(cfg, pp, ch, edges, xi_scale=1.0):
    require_ctl(ch)
    gens = stream_generators(cfg)
    jobs = list(zip(gens, _stream_rounds(cfg)))
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=int(cfg.workers)) as pool:
            tallies = list(pool.map(lambda j: _run_stream(j[0], j[1], cfg, pp, ch, edges, xi_scale), jobs))
    else:
        tallies = [_run_stream(g, r, cfg, pp, ch, edges, xi_scale) for g, r in jobs]
    total = tallies[0]
    for t in tallies[1:]:
        total.merge(t)
    return total


# ---------------------------------------------------------------- estimates


@dataclass(frozen=True)
class BinStats:
    lo: np.ndarray
    hi: np.ndarray
    counts: np.ndarray
    q_bob_hat: np.ndarray
    q_eve_hat: np.ndarray
    se_bob: np.ndarray
    se_eve: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        # the open tail bin is reported at its lower edge
        return np.where(np.isfinite(self.hi), 0.5 * (self.lo + self.hi), self.lo)

    @property
    def populated(self) -> np.ndarray:
        return self.counts > 0


@dataclass(frozen=True)
class McEstimate:
    """Binned conditional BERs plus second-moment summaries of one simulation.

    Empty bins carry ``nan`` estimates. ``bob_var`` and ``eve_var`` are
    the sign-conditional variances pooled over both signs; ``bob_mean``
    is the mean of ``x_bob`` given ``+alpha`` (from the ``-alpha`` rounds
    mirrored). ``i_ab_hat`` and ``i_ae_hat`` are plug-in informations
    without postselection.
    """

    rounds: int
    bins: BinStats
    bob_mean: float
    bob_mean_se: float
    bob_var: float
    bob_var_se: float
    eve_var: float
    eve_var_se: float
    cov_be: float
    cov_be_se: float
    i_ab_hat: float
    i_ae_hat: float


def _rate_and_se(errors, counts):
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(counts > 0, errors / np.maximum(counts, 1), np.nan)
        se = np.where(counts > 0, np.sqrt(q * (1.0 - q) / np.maximum(counts, 1)), np.nan)
    return q, se


def _moment_summary(mom):
    # pooled over sign classes, with the x_bob residual of the -alpha class mirrored
    n = mom[:, 0].sum()
    sr = mom[1, 1] - mom[0, 1]
    mean_r = sr / n
    var_parts, var_se_parts = [], []
    eve_parts, eve_se_parts, cov_parts, cov_se_parts = [], [], [], []
    for c in range(2):
        k, s1, s2, s3, s4, e1, e2, re = mom[c]
        mu = s1 / k
        m2 = s2 / k - mu * mu
        m4 = s4 / k - 4 * mu * s3 / k + 6 * mu * mu * s2 / k - 3 * mu**4
        var_parts.append((k, m2 * k / (k - 1)))
        var_se_parts.append(max(m4 - m2 * m2, 0.0) / k)
        mu_e = e1 / k
        var_e = e2 / k - mu_e * mu_e
        eve_parts.append((k, var_e * k / (k - 1)))
        eve_se_parts.append(2.0 * var_e * var_e / (k - 1))
        cov = re / k - mu * mu_e
        cov_parts.append((k, cov * k / (k - 1)))
        cov_se_parts.append((m2 * var_e + cov * cov) / (k - 1))

    def pool(parts, se_parts):
        w = np.array([p[0] for p in parts]) / n
        val = float(sum(wi * p[1] for wi, p in zip(w, parts)))
        se = float(math.sqrt(sum(wi * wi * s for wi, s in zip(w, se_parts))))
        return val, se

    bob_var, bob_var_se = pool(var_parts, var_se_parts)
    eve_var, eve_var_se = pool(eve_parts, eve_se_parts)
    cov, cov_se = pool(cov_parts, cov_se_parts)
    return mean_r, math.sqrt(bob_var / n), bob_var, bob_var_se, eve_var, eve_var_se, cov, cov_se


def _plugin_info(counts, bob_err, eve_err, rounds):
    # 1/2 * sum over bins of (bin fraction) * i(q_hat)
    q_b, _ = _rate_and_se(bob_err, counts)
    q_e, _ = _rate_and_se(eve_err, counts)
    used = counts > 0
    frac = counts[used] / rounds
    return (
        0.5 * float(np.sum(frac * bsc_info(q_b[used]))),
        0.5 * float(np.sum(frac * bsc_info(q_e[used]))),
    )


def estimate_conditional_bers(cfg: McConfig, pp: ProtocolParams, ch: ChannelParams, *, xi_scale: float = 1.0) -> McEstimate:
    """Simulate ``cfg.rounds`` rounds and bin the BERs by ``|x_bob|``."""
    edges = _bin_edges(ch, cfg.bin_width)
    t = _simulate(cfg, pp, ch, edges, xi_scale)
    m = math.sqrt(ch.eta) * pp.alpha
    q_b, se_b = _rate_and_se(t.bob_err, t.counts)
    q_e, se_e = _rate_and_se(t.eve_err, t.counts)
    hi = np.append(edges[1:], math.inf)
    bins = BinStats(edges.copy(), hi, t.counts.copy(), q_b, q_e, se_b, se_e)
    mean_r, mean_se, bv, bv_se, ev, ev_se, cov, cov_se = _moment_summary(t.moments)
    i_ab, i_ae = _plugin_info(t.counts, t.bob_err, t.eve_err, int(cfg.rounds))
    return McEstimate(
        rounds=int(cfg.rounds),
        bins=bins,
        bob_mean=m + mean_r,
        bob_mean_se=mean_se,
        bob_var=bv,
        bob_var_se=bv_se,
        eve_var=ev,
        eve_var_se=ev_se,
        cov_be=cov,
        cov_be_se=cov_se,
        i_ab_hat=i_ab,
        i_ae_hat=i_ae,
    )


@dataclass(frozen=True)
class MutualInfoEstimate:
    i_ab: float
    i_ae: float
    se_ab: float
    se_ae: float
    accepted: int
    rounds: int


def _window_edges(w: PostselectionWindow, ch: ChannelParams, width: float):
    """Bin edges over all of ``|x| >= 0`` and the slice of accepted bins.

    A leading bin ``[0, x0)`` is added when ``x0 > 0``; the last bin is
    open-ended and is rejected for bounded windows.
    """
    tail = max(TAIL_SIGMAS * math.sqrt(observed_variance(ch)), w.x0 + width)
    top = min(w.x1, tail)
    nb = max(1, int(math.ceil((top - w.x0) / width - 1e-9)))
    regular = w.x0 + np.arange(nb + 1) * width
    regular[-1] = top
    parts = [[0.0]] if w.x0 > 0 else []
    parts.append(regular)
    if w.bounded and w.x1 > top:
        parts.append([w.x1])
    edges = np.concatenate(parts)
    first = 1 if w.x0 > 0 else 0
    stop = edges.size - 1 if w.bounded else edges.size
    return edges, slice(first, stop)


def estimate_mutual_info_mc(
    cfg: McConfig,
    w: PostselectionWindow,
    pp: ProtocolParams,
    ch: ChannelParams,
    *,
    n_boot: int = 200,
) -> MutualInfoEstimate:
    """Plug-in postselected informations with bootstrap standard errors.

    Accepted rounds are binned by ``|x_bob|`` from ``w.x0`` in steps of
    ``cfg.bin_width``. The bootstrap resamples all rounds with
    replacement; since the estimator depends on the rounds only through
    the (bin, Bob wrong, Eve wrong) cell counts, each resample is one
    multinomial draw over those cells.

    Raises
    ------
    EmptyAcceptanceError
        If no simulated round falls inside the window.
    """
    edges, accepted_bins = _window_edges(w, ch, cfg.bin_width)
    cells = _joint_cells(cfg, pp, ch, edges)
    accepted = int(cells[accepted_bins].sum())
    if accepted == 0:
        raise EmptyAcceptanceError(f"no rounds accepted in window [{w.x0}, {w.x1})")

    def info(c):
        c = c[accepted_bins]
        counts = c.sum(axis=1)
        return _plugin_info(counts, c[:, 1] + c[:, 3], c[:, 2] + c[:, 3], int(cfg.rounds))

    i_ab, i_ae = info(cells)
    boot_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(cfg.seed), _BOOT_KEY])))
    # trailing zero-probability cell absorbs rounding in the probabilities
    pvals = np.append(cells.ravel() / cfg.rounds, 0.0)
    pvals[-1] = max(0.0, 1.0 - pvals[:-1].sum())
    draws = np.empty((n_boot, 2))
    for b in range(n_boot):
        sample = boot_rng.multinomial(int(cfg.rounds), pvals)[:-1].reshape(cells.shape)
        draws[b] = info(sample)
    se = draws.std(axis=0, ddof=1) if n_boot > 1 else np.full(2, math.nan)
    return MutualInfoEstimate(i_ab, i_ae, float(se[0]), float(se[1]), accepted, int(cfg.rounds))


def _joint_cells(cfg, pp, ch, edges):
    """Counts per (|x| bin, 2*eve_wrong + bob_wrong) over all rounds."""
    require_ctl(ch)
    nb = edges.size
    out = np.zeros((nb, 4), dtype=np.int64)
    for rng, rounds in zip(stream_generators(cfg), _stream_rounds(cfg)):
        left = rounds
        while left > 0:
            size = min(left, int(cfg.chunk_size))
            r = sample_rounds(rng, size, pp, ch)
            idx = np.clip(np.searchsorted(edges, np.abs(r["x_bob"]), side="right") - 1, 0, nb - 1)
            bob_wrong = np.sign(r["x_bob"]) != r["bit"]
            eve_wrong = np.sign(r["x_eve"]) != np.sign(r["x_bob"])
            cell = idx * 4 + bob_wrong.astype(np.int64) + 2 * eve_wrong.astype(np.int64)
            out += np.bincount(cell, minlength=nb * 4).reshape(nb, 4)
            left -= size
    return out


# ---------------------------------------------------------------- verification


@dataclass(frozen=True)
class Check:
    name: str
    max_z: float
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple[Check, ...]
    estimate: Optional[McEstimate] = None
    z_limit: float = 3.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _weighted_bers(pp, ch):
    def f(x):
        dens = bob_marginal_pdf(x, pp, ch)
        return np.vstack([dens, dens * bob_ber(x, pp, ch), dens * eve_ber(x, pp, ch)])

    return f


def _bin_averages(pp, ch, lo, hi):
    """Density-weighted analytic BERs over each ``|x|`` bin."""
    nodes, weights = np.polynomial.legendre.leggauss(24)
    q_b = np.empty(lo.size)
    q_e = np.empty(lo.size)
    m = math.sqrt(ch.eta) * pp.alpha
    sd = math.sqrt(observed_variance(ch))
    for k, (a, b) in enumerate(zip(lo, hi)):
        if math.isinf(b):
            top = max(m + 40.0 * sd, a + 1.0)
            p, pb, pe = integrate_semi_infinite(_weighted_bers(pp, ch), a, b=top)
        else:
            x = 0.5 * (b - a) * nodes + 0.5 * (a + b)
            wts = 0.5 * (b - a) * weights
            dens = bob_marginal_pdf(x, pp, ch)
            p = float(np.sum(wts * dens))
            pb = float(np.sum(wts * dens * bob_ber(x, pp, ch)))
            pe = float(np.sum(wts * dens * eve_ber(x, pp, ch)))
        q_b[k] = pb / p if p > 0 else math.nan
        q_e[k] = pe / p if p > 0 else math.nan
    return q_b, q_e


def verify_against_analytic(
    cfg: McConfig,
    pp: ProtocolParams,
    ch: ChannelParams,
    *,
    xi_scale: float = 1.0,
    min_count: int = 1000,
    min_expected: float = 5.0,
    z_limit: float = 3.0,
) -> VerificationReport:
    """Compare one simulation with the closed-form model.

    Per-bin BERs are compared with their density-weighted analytic bin
    averages, for bins holding at least ``min_count`` rounds; the
    standard error of each bin uses the analytic rate. A rate is only
    z-tested in a bin where both the expected error and non-error counts
    reach ``min_expected``, since the normal approximation to the binomial
    fails below that (one stray event in a bin expecting 0.03 reads as
    z > 5). ``min_expected=0`` tests every bin with ``min_count`` rounds. Moment checks
    cover Bob's conditional mean and variance, Eve's conditional variance
    and the Bob-Eve covariance. ``xi_scale != 1`` corrupts the simulated
    Eve while the analytic side keeps the true model.
    """
    est = estimate_conditional_bers(cfg, pp, ch, xi_scale=xi_scale)
    xi = attack_from_channel(ch).xi
    m = math.sqrt(ch.eta) * pp.alpha
    checks = []

    def scalar(name, value, se, expected):
        z = abs(value - expected) / se if se > 0 else (0.0 if value == expected else math.inf)
        checks.append(Check(name, float(z), bool(z <= z_limit), f"estimate={value:.6g} expected={expected:.6g} se={se:.3g}"))

    scalar("bob_mean", est.bob_mean, est.bob_mean_se, m)
    scalar("bob_variance", est.bob_var, est.bob_var_se, observed_variance(ch))
    scalar("eve_variance", est.eve_var, est.eve_var_se, (xi * xi * ch.delta + 1.0) * VACUUM_VARIANCE)
    scalar("bob_eve_covariance", est.cov_be, est.cov_be_se, xi * ch.delta * VACUUM_VARIANCE)

    bins = est.bins
    use = bins.counts >= min_count
    q_b, q_e = _bin_averages(pp, ch, bins.lo[use], bins.hi[use])
    n = bins.counts[use]
    centers = bins.centers[use]
    for name, hat, ref in (("q_bob_bins", bins.q_bob_hat[use], q_b), ("q_eve_bins", bins.q_eve_hat[use], q_e)):
        ok = np.minimum(n * ref, n * (1.0 - ref)) >= min_expected
        hat, ref, nk = hat[ok], ref[ok], n[ok]
        se = np.sqrt(ref * (1.0 - ref) / nk)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, np.abs(hat - ref) / se, np.where(hat == ref, 0.0, np.inf))
        worst = float(z.max()) if z.size else 0.0
        where = float(centers[ok][int(np.argmax(z))]) if z.size else math.nan
        checks.append(Check(name, worst, worst <= z_limit, f"{int(ok.sum())} bins, worst at |x|~{where:.4g}"))
    return VerificationReport(tuple(checks), est, z_limit)

