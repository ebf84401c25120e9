import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import integrate

from ampbsa.ber import (
    ProtocolParams,
    ber_curve,
    bob_ber,
    bob_marginal_pdf,
    bob_quadrature_pdf,
    eve_ber,
    eve_ber_upper_bound,
    eve_bound_domain,
    lambda_param,
    log_bob_ber,
    log_eve_ber,
    log_eve_ber_upper_bound,
    posterior_alpha,
)
from ampbsa.channel import ChannelParams, attack_from_channel
from ampbsa.errors import CTLViolationError, DomainError, ParameterError

# Eve's BER from a 40-digit joint model: average over the posterior of the
# shared displacement given Bob's outcome, no closed-form algebra involved.
# (x, eta, delta, alpha) -> q_eve
EVE_REFERENCE = [
    ((2.0, 0.8, 0.4, 1.0), 0.035056386685868137),
    ((0.5, 0.5, 0.5, 1.0), 0.15300207344462977),
    ((1.3, 0.3, 0.2, 0.5), 0.12070060145910194),
    ((3.0, 0.9, 0.1, 2.0), 0.047954174989036319),
    ((0.7, 0.5, 0.0, 1.0), 0.094416719751618742),
    ((10.0, 0.5, 0.5, 1.0), 5.8353361275697317e-21),
]


def _params():
    return st.floats(1e-3, 1.0).flatmap(
        lambda eta: st.tuples(
            st.just(eta),
            st.floats(0.0, 2 * eta * (1 - 1e-6)),
            st.floats(1e-2, 4.0),
        )
    )


def _eve_oracle(x, eta, delta, alpha):
    """Joint-model q_eve by quadrature over the displacement, using only stdlib erfc."""
    xi = attack_from_channel(ChannelParams(eta, delta)).xi
    m = math.sqrt(eta) * alpha
    var_b = (1 + delta) / 4
    w = {s: math.exp(-((x - s * m) ** 2) / (2 * var_b)) for s in (1, -1)}
    total = 0.0
    for s in (1, -1):
        post = w[s] / (w[1] + w[-1])
        if delta == 0:
            pe = 0.5 * math.erfc(math.sqrt(2) * xi * s * m)
        else:
            mu = delta / (1 + delta) * (x - s * m)
            sd = math.sqrt(delta / (4 * (1 + delta)))
            f = lambda b: math.exp(-0.5 * ((b - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi)) * 0.5 * math.erfc(
                math.sqrt(2) * xi * (s * m + b)
            )
            pe, _ = integrate.quad(f, mu - 12 * sd, mu + 12 * sd, points=[mu], epsabs=1e-15, epsrel=1e-12, limit=200)
        total += post * pe
    return total


def test_bob_pdf_examples():
    pp = ProtocolParams(1.0)
    ch = ChannelParams(0.64, 0.0)
    assert bob_quadrature_pdf(0.8, 1, pp, ch) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-15)
    ch = ChannelParams(0.6, 0.3)
    assert bob_quadrature_pdf(0.37, 1, pp, ch) == pytest.approx(bob_quadrature_pdf(-0.37, -1, pp, ch), rel=1e-15)
    pp, ch = ProtocolParams(0.1), ChannelParams(0.5, 0.8)
    val, _ = integrate.quad(lambda x: bob_quadrature_pdf(x, 1, pp, ch), -np.inf, np.inf)
    assert val == pytest.approx(1.0, abs=1e-10)


def test_bob_pdf_rejects_sign():
    with pytest.raises(ParameterError):
        bob_quadrature_pdf(0.0, 0, ProtocolParams(1.0), ChannelParams(0.5, 0.0))


def test_protocol_params():
    assert ProtocolParams.from_photon_number(4.0).alpha == 2.0
    assert ProtocolParams(3.0).n == 9.0
    for bad in (0.0, -1.0, math.inf):
        with pytest.raises(ParameterError):
            ProtocolParams(bad)
    with pytest.raises(ParameterError):
        ProtocolParams.from_photon_number(0.0)


def test_posterior_examples():
    pp, ch = ProtocolParams(1.0), ChannelParams(1.0, 0.0)
    assert posterior_alpha(0.0, pp, ch) == 0.5
    assert posterior_alpha(1.0, pp, ch) == pytest.approx(1 / (1 + math.exp(-8)), rel=1e-15)
    assert posterior_alpha(1e4, pp, ch) == 1.0
    assert posterior_alpha(-1e4, pp, ch) == 0.0


def test_posterior_is_bayes_rule():
    pp, ch = ProtocolParams(0.7), ChannelParams(0.6, 0.3)
    x = np.linspace(-3, 3, 61)
    p = bob_quadrature_pdf(x, 1, pp, ch)
    q = bob_quadrature_pdf(x, -1, pp, ch)
    np.testing.assert_allclose(posterior_alpha(x, pp, ch), p / (p + q), rtol=1e-13)


def test_bob_ber_examples():
    ch1, pp1 = ChannelParams(1.0, 0.0), ProtocolParams(1.0)
    assert bob_ber(0.0, pp1, ch1) == 0.5
    assert bob_ber(1.0, pp1, ch1) == pytest.approx(1 / (1 + math.exp(8)), rel=1e-14)
    assert bob_ber(0.5, ProtocolParams(1.0), ChannelParams(0.64, 0.2)) == pytest.approx(
        1 / (1 + math.exp(8 / 3)), rel=1e-14
    )


def test_bob_ber_rejects_negative_x():
    with pytest.raises(DomainError):
        bob_ber(-0.1, ProtocolParams(1.0), ChannelParams(0.5, 0.0))
    with pytest.raises(DomainError):
        eve_ber(np.array([0.1, -0.1]), ProtocolParams(1.0), ChannelParams(0.5, 0.0))


def test_log_bob_ber_deep():
    pp, ch = ProtocolParams(1.0), ChannelParams(1.0, 0.0)
    x = np.array([0.0, 1.0, 50.0, 1e3])
    np.testing.assert_allclose(log_bob_ber(x, pp, ch), -np.logaddexp(0, 8 * x), rtol=1e-15)


@pytest.mark.parametrize(
    "eta, delta, lam", [(0.5, 0.0, 1.0), (1.0, 0.0, 0.0), (0.5, 1.0, math.sqrt(0.5)), (0.5, 0.5, math.sqrt(2 / 3))]
)
def test_lambda_examples(eta, delta, lam):
    assert lambda_param(ChannelParams(eta, delta)) == pytest.approx(lam, abs=1e-15)


@pytest.mark.parametrize("args, ref", EVE_REFERENCE)
def test_eve_ber_reference_values(args, ref):
    x, eta, delta, alpha = args
    assert eve_ber(x, ProtocolParams(alpha), ChannelParams(eta, delta)) == pytest.approx(ref, rel=1e-13)


@settings(max_examples=60, deadline=None)
@given(_params(), st.floats(0.0, 4.0))
def test_eve_ber_matches_joint_model(p, x):
    eta, delta, alpha = p
    q = eve_ber(x, ProtocolParams(alpha), ChannelParams(eta, delta))
    ref = _eve_oracle(x, eta, delta, alpha)
    assert q == pytest.approx(ref, rel=1e-8, abs=1e-13)


def test_eve_ber_ideal_channel_is_half():
    ch = ChannelParams(1.0, 0.0)
    for alpha in (0.01, 1.0, 30.0):
        np.testing.assert_array_equal(eve_ber(np.linspace(0, 50, 11), ProtocolParams(alpha), ch), 0.5)


def test_eve_ber_ctl():
    with pytest.raises(CTLViolationError):
        eve_ber(1.0, ProtocolParams(1.0), ChannelParams(0.3, 0.6))


@settings(max_examples=300, deadline=None)
@given(_params())
def test_half_at_origin_exactly(p):
    eta, delta, alpha = p
    pp, ch = ProtocolParams(alpha), ChannelParams(eta, delta)
    assert bob_ber(0.0, pp, ch) == 0.5
    assert eve_ber(0.0, pp, ch) == 0.5


@settings(max_examples=100, deadline=None)
@given(_params())
def test_bob_ber_strictly_decreasing(p):
    eta, delta, alpha = p
    pp, ch = ProtocolParams(alpha), ChannelParams(eta, delta)
    # stop before the logistic underflows to exactly zero
    x_top = min(20.0, 600 * (1 + delta) / (8 * math.sqrt(eta) * alpha))
    x = np.linspace(0, x_top, 400)
    q = bob_ber(x, pp, ch)
    assert np.all(np.diff(q) < 0)
    assert np.all(q <= 0.5)


@settings(max_examples=100, deadline=None)
@given(_params(), st.floats(0.0, 30.0))
def test_eve_ber_range_and_log(p, x):
    eta, delta, alpha = p
    pp, ch = ProtocolParams(alpha), ChannelParams(eta, delta)
    q = eve_ber(x, pp, ch)
    assert 0.0 <= q < 1.0
    lq = log_eve_ber(x, pp, ch)
    if q > 1e-300:
        assert lq == pytest.approx(math.log(q), rel=1e-10, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(_params(), st.floats(0.0, 50.0))
def test_posterior_reflection(p, x):
    eta, delta, alpha = p
    pp, ch = ProtocolParams(alpha), ChannelParams(eta, delta)
    assert posterior_alpha(x, pp, ch) + posterior_alpha(-x, pp, ch) == pytest.approx(1.0, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.05, 3.0), st.floats(0.0, 30.0))
def test_zero_noise_approach_to_limit(eta, alpha, x):
    # at delta = 0 the distance to the plateau is q_bob(x) * (1 - erfc(a))
    pp, ch = ProtocolParams(alpha), ChannelParams(eta, 0.0)
    a = math.sqrt(2) * lambda_param(ch) * math.sqrt(eta) * alpha
    limit = 0.5 * math.erfc(a)
    gap = eve_ber(x, pp, ch) - limit
    assert gap == pytest.approx(bob_ber(x, pp, ch) * (1 - math.erfc(a)), rel=1e-9, abs=1e-16)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.1, 1.0), st.floats(0.0, 1.0))
def test_zero_noise_limit_at_twenty_sigma(eta, u):
    # amplitudes for which q_bob(20 sigma_B) is below 1e-10
    m_min = 23.1 / 80.0
    alpha = m_min / math.sqrt(eta) * (1.0 + 9.0 * u)
    pp, ch = ProtocolParams(alpha), ChannelParams(eta, 0.0)
    limit = 0.5 * math.erfc(math.sqrt(2) * lambda_param(ch) * math.sqrt(eta) * alpha)
    sb = 0.5
    assert abs(eve_ber(20 * sb, pp, ch) - limit) <= 1e-10
    assert abs(bob_ber(20 * sb, pp, ch)) <= 1e-10


def test_bound_example_in_domain():
    pp, ch = ProtocolParams(1.0), ChannelParams(0.5, 0.5)
    lam2 = 2 / 3
    expected = math.exp(-2 * lam2 * 0.5) / math.sqrt(math.pi) * math.exp(-lam2 * 0.25 * 100)
    assert eve_bound_domain(10.0, pp, ch)
    assert eve_ber_upper_bound(10.0, pp, ch) == pytest.approx(expected, rel=1e-14)
    assert eve_ber(10.0, pp, ch) < expected


def test_bound_domain_errors_name_precondition():
    pp = ProtocolParams(1.0)
    with pytest.raises(DomainError, match=r"x > 4\*sqrt\(eta\)\*alpha/delta"):
        eve_ber_upper_bound(1.0, pp, ChannelParams(0.5, 0.5))
    with pytest.raises(DomainError, match="delta > 0"):
        eve_ber_upper_bound(10.0, pp, ChannelParams(0.5, 0.0))
    # x past 4m/delta but erfc argument below 1: small lambda near the ideal channel
    ch = ChannelParams(0.999, 0.001)
    x = 4 * math.sqrt(0.999) / 0.001 * 1.01
    assert not eve_bound_domain(x, pp, ch)
    with pytest.raises(DomainError, match=r"sqrt\(2\)\*lambda"):
        eve_ber_upper_bound(x, pp, ch)


@settings(max_examples=200, deadline=None)
@given(_params(), st.floats(1.0, 20.0))
def test_bound_dominates_in_domain(p, scale):
    eta, delta, alpha = p
    assume(delta > 1e-3)
    pp, ch = ProtocolParams(alpha), ChannelParams(eta, delta)
    m = math.sqrt(eta) * alpha
    lam = lambda_param(ch)
    x_min = max(4 * m / delta, (1 / (math.sqrt(2) * lam) + m) / delta)
    x = x_min * (1 + 1e-6) * scale
    assert eve_bound_domain(x, pp, ch)
    assert log_eve_ber(x, pp, ch) < log_eve_ber_upper_bound(x, pp, ch)


def test_ber_curve():
    pp, ch = ProtocolParams(1.0), ChannelParams(0.5, 0.5)
    (pt,) = ber_curve([0.0], pp, ch)
    assert (pt.q_bob, pt.q_eve, pt.q_eve_bound) == (0.5, 0.5, None)
    pts = ber_curve(np.linspace(0, 12, 49), pp, ch)
    assert all(b.q_bob < a.q_bob for a, b in zip(pts, pts[1:]))
    with_bound = [p for p in pts if p.q_eve_bound is not None]
    assert with_bound and all(p.q_eve < p.q_eve_bound for p in with_bound)
    assert all(p.x > 4 * math.sqrt(0.5) / 0.5 for p in with_bound)


def test_ber_curve_zero_noise_plateau():
    pp, ch = ProtocolParams(1.0), ChannelParams(0.5, 0.0)
    pts = ber_curve(np.linspace(5, 30, 26), pp, ch)
    qe = np.array([p.q_eve for p in pts])
    assert np.ptp(qe) < 1e-12 and qe[0] > 0.05
    assert pts[-1].q_bob < 1e-30


@pytest.mark.parametrize("grid", [[], [0.0, -1.0], [1.0, 1.0], [2.0, 1.0]])
def test_ber_curve_rejects(grid):
    with pytest.raises(ParameterError):
        ber_curve(grid, ProtocolParams(1.0), ChannelParams(0.5, 0.0))


def test_marginal_is_average():
    pp, ch = ProtocolParams(0.8), ChannelParams(0.7, 0.2)
    x = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(
        bob_marginal_pdf(x, pp, ch),
        0.5 * (bob_quadrature_pdf(x, 1, pp, ch) + bob_quadrature_pdf(x, -1, pp, ch)),
    )
