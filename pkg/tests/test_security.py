import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq
from scipy.special import erfc as sp_erfc

from ampbsa import security
from ampbsa.ber import ProtocolParams, log_bob_ber, log_eve_ber
from ampbsa.channel import ChannelParams, gaussian_protocol_secure, within_ctl
from ampbsa.errors import ConvergenceError, CTLViolationError, ParameterError
from ampbsa.security import (
    CTL_MARGIN,
    Verdict,
    boundary_curve,
    boundary_delta,
    certified_crossover_bound,
    classify_point,
    ps_advantage_exists,
    scan_grid,
    solve_boundary,
)

# (eta, n) -> delta*, from the origin-slope root below (brentq, xtol 1e-14)
BOUNDARY_REFERENCE = {
    (0.5, 1.0): 0.682332060591533,
    (1.0, 1.0): 1.4300222149661534,
    (0.5, 10.0): 0.9232690845743363,
    (0.5, 0.001): 0.05277787434800835,
    (0.3, 0.1): 0.20284525133220402,
}


def gap_slope_at_origin(delta, eta, n):
    """d/dx (q_eve - q_bob) at x = 0, written out by hand."""
    m = math.sqrt(eta * n)
    lam = math.sqrt(((1 - eta) + delta / 2) / ((eta + delta / 2) * (1 + delta)))
    s = math.sqrt(2) * lam * m
    return 2 * m * sp_erfc(s) / (1 + delta) - math.sqrt(2 / math.pi) * lam * delta * math.exp(-s * s)


def slope_boundary(eta, n):
    lo, hi = max(0.0, 2 * eta - 1), 2 * eta - CTL_MARGIN * eta
    if gap_slope_at_origin(lo, eta, n) <= 0:
        return None
    return brentq(gap_slope_at_origin, lo, hi, args=(eta, n), xtol=1e-14)


def test_reference_values_are_slope_roots():
    for (eta, n), ref in BOUNDARY_REFERENCE.items():
        assert slope_boundary(eta, n) == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("eta, n", sorted(BOUNDARY_REFERENCE))
def test_boundary_reference(eta, n):
    bp = solve_boundary(eta, n, tol=1e-7)
    assert bp.ok and not bp.on_xi_line
    assert bp.delta_star == pytest.approx(BOUNDARY_REFERENCE[(eta, n)], abs=1e-5)


@pytest.mark.parametrize("n", [0.001, 0.01, 0.1, 1.0, 10.0])
@pytest.mark.parametrize("eta", [0.15, 0.45, 0.65, 0.85, 1.0])
def test_boundary_matches_slope_oracle(eta, n):
    bp = solve_boundary(eta, n, tol=1e-7)
    ref = slope_boundary(eta, n)
    if ref is None:
        # already no advantage on the xi = 1 line
        assert bp.on_xi_line and bp.iterations == 0
        assert bp.delta_star == pytest.approx(2 * eta - 1, abs=1e-15)
    else:
        assert bp.delta_star == pytest.approx(ref, abs=1e-5)


def test_boundary_small_n_on_xi_line():
    bp = solve_boundary(0.7, 0.001)
    assert bp.on_xi_line and bp.delta_star == pytest.approx(0.4, abs=1e-15)


def test_boundary_density_stability_at_half():
    a = boundary_delta(0.5, 1.0, 1e-4)
    b = boundary_delta(0.5, 1.0, 1e-4, density=2)
    assert 0.0 < a < 1.0
    assert abs(a - b) < 2e-4


def test_boundary_bracket_width():
    bp = solve_boundary(0.4, 1.0, tol=1e-4)
    # the reported point is the bracket midpoint, within tol/2 of the true root
    assert abs(bp.delta_star - slope_boundary(0.4, 1.0)) < 0.5e-4 + 1e-5
    assert bp.iterations > security._PROFILE_POINTS


@pytest.mark.parametrize("eta, n, tol", [(0.0, 1.0, 1e-4), (1.2, 1.0, 1e-4), (0.5, 0.0, 1e-4), (0.5, 1.0, 0.0)])
def test_boundary_rejects(eta, n, tol):
    with pytest.raises(ParameterError):
        solve_boundary(eta, n, tol)


def test_boundary_reports_non_monotone_profile(monkeypatch):
    calls = []

    def fake(pp, ch, density):
        calls.append(ch.delta)
        return (math.sin(12 * ch.delta), 0.1)

    monkeypatch.setattr(security, "_max_gap", fake)
    with pytest.raises(ConvergenceError, match="profile"):
        solve_boundary(0.5, 1.0)


def test_boundary_reports_advantage_up_to_ctl(monkeypatch):
    monkeypatch.setattr(security, "_max_gap", lambda pp, ch, density: (1.0, 0.1))
    with pytest.raises(ConvergenceError, match="persists up to the CTL"):
        solve_boundary(0.5, 1.0)


def test_boundary_curve_records_failures(monkeypatch):
    real = security._max_gap

    def flaky(pp, ch, density):
        if abs(ch.eta - 0.4) < 1e-12:
            return (1.0, 0.1)
        return real(pp, ch, density)

    monkeypatch.setattr(security, "_max_gap", flaky)
    curve = boundary_curve([0.2, 0.4, 0.6], 1.0)
    assert [p.eta for p in curve.points] == [0.2, 0.4, 0.6]
    assert len(curve.failures) == 1 and math.isnan(curve.deltas[1])
    assert "CTL" in curve.failures[0].error
    assert np.all(np.isfinite(curve.deltas[[0, 2]]))


@pytest.mark.parametrize("grid", [[0.5, 0.4], [0.0, 0.5], [0.5, 1.1]])
def test_boundary_curve_rejects_grid(grid):
    with pytest.raises(ParameterError):
        boundary_curve(grid, 1.0)


def test_boundary_curve_parallel_matches_serial():
    etas = [0.3, 0.55, 0.8]
    a = boundary_curve(etas, 1.0, workers=1)
    b = boundary_curve(etas, 1.0, workers=2)
    assert a.points == b.points


def test_boundary_curve_ordering_in_n():
    etas = np.linspace(0.05, 1.0, 12)
    lo = boundary_curve(etas, 0.001).deltas
    hi = boundary_curve(etas, 10.0).deltas
    assert np.all(hi >= lo - 1e-4)


def test_scan_grid():
    pp, ch = ProtocolParams(1.0), ChannelParams(0.8, 0.4)
    g = scan_grid(pp, ch)
    sb = math.sqrt(1.4 / 4)
    assert g[0] == pytest.approx(1e-3 * sb)
    assert g[-1] == pytest.approx(math.sqrt(0.8) / 0.4 + 20 * sb)
    assert np.all(np.diff(g) > 0)
    assert scan_grid(pp, ch, density=2).size > g.size
    with pytest.raises(ParameterError):
        scan_grid(pp, ch, density=0)


def test_advantage_at_zero_noise():
    pp = ProtocolParams(1.0)
    for eta in (0.1, 0.3, 0.5, 0.9, 0.99):
        r = ps_advantage_exists(pp, ChannelParams(eta, 0.0))
        assert r.advantage_exists and r.max_gap > 1e-3
        assert r.x_c is None


def test_no_advantage_just_below_ctl():
    r = ps_advantage_exists(ProtocolParams(1.0), ChannelParams(0.5, 1.0 - 1e-6))
    assert not r.advantage_exists
    assert r.max_gap <= security.GRID_TOL


def test_crossover_small_noise():
    pp, ch = ProtocolParams(1.0), ChannelParams(0.9, 0.01)
    r = ps_advantage_exists(pp, ch)
    assert r.advantage_exists and r.x_c is not None and math.isfinite(r.x_c)
    assert r.x_c > r.x_at_max
    x = r.x_c * np.geomspace(1.0 + 1e-9, 50.0, 2000)
    assert np.all(log_eve_ber(x, pp, ch) < log_bob_ber(x, pp, ch))
    # just below x_c Eve is still ahead of Bob
    assert log_eve_ber(r.x_c * (1 - 1e-6), pp, ch) > log_bob_ber(r.x_c * (1 - 1e-6), pp, ch)


def test_crossover_certified_bound():
    pp, ch = ProtocolParams(1.0), ChannelParams(0.7, 0.1)
    r = ps_advantage_exists(pp, ch)
    xb = certified_crossover_bound(pp, ch)
    assert xb is not None and r.x_certified == xb and r.x_c <= xb
    assert certified_crossover_bound(pp, ChannelParams(0.7, 0.0)) is None


def test_crossover_zero_when_no_advantage():
    r = ps_advantage_exists(ProtocolParams(0.1 ** 0.5), ChannelParams(0.5, 0.5))
    assert not r.advantage_exists and r.x_c == 0.0


def test_advantage_exists_iff_gap_above_threshold():
    for eta, delta in [(0.5, 0.3), (0.5, 0.8), (0.9, 1.2), (0.2, 0.1)]:
        r = ps_advantage_exists(ProtocolParams(1.0), ChannelParams(eta, delta), crossover=False)
        assert r.advantage_exists == (r.max_gap > security.GRID_TOL)


def test_advantage_ctl():
    with pytest.raises(CTLViolationError):
        ps_advantage_exists(ProtocolParams(1.0), ChannelParams(0.3, 0.6))


@pytest.mark.parametrize(
    "eta, delta, allowed",
    [
        (0.8, 0.7, {Verdict.PS_SECURE, Verdict.PS_INSECURE}),
        (0.75, 0.5, {Verdict.GAUSSIAN_SECURE}),
        (0.3, 0.6, {Verdict.BEYOND_CTL}),
        (0.5, 0.0, {Verdict.GAUSSIAN_SECURE}),
        (0.4, 0.0, {Verdict.PS_SECURE}),
        (0.5, 0.99, {Verdict.PS_INSECURE}),
    ],
)
def test_classify_examples(eta, delta, allowed):
    assert classify_point(eta, delta, 1.0) in allowed


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 1.0), st.floats(0.0, 2.5), st.sampled_from([0.01, 1.0, 10.0]))
def test_classify_partition(eta, delta, n):
    v = classify_point(eta, delta, n)
    ch = ChannelParams(eta, delta)
    if not within_ctl(ch):
        assert v is Verdict.BEYOND_CTL
    elif gaussian_protocol_secure(ch):
        assert v is Verdict.GAUSSIAN_SECURE
    else:
        exists = ps_advantage_exists(ProtocolParams.from_photon_number(n), ch, crossover=False).advantage_exists
        assert v is (Verdict.PS_SECURE if exists else Verdict.PS_INSECURE)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 1.0), st.sampled_from([0.001, 0.1, 1.0, 10.0]))
def test_classify_agrees_with_boundary(eta, n):
    bp = solve_boundary(eta, n, tol=1e-6)
    hi = 2 * eta - CTL_MARGIN * eta
    above = min(bp.delta_star + 1e-4, hi)
    assert classify_point(eta, above, n) in (Verdict.PS_INSECURE, Verdict.GAUSSIAN_SECURE)
    below = bp.delta_star - 1e-4
    if below > max(0.0, 2 * eta - 1):
        assert classify_point(eta, below, n) is Verdict.PS_SECURE
