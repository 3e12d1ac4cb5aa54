import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autoquantile import (
    DomainError,
    LossParams,
    UnsupportedError,
    moreau_oracle,
    quantile_huber,
    quantile_huber_dr,
    quantile_loss,
    tau_calculus,
    total_loss,
)

taus = st.floats(0.01, 0.99)
kappas = st.floats(0.01, 2.0)
residuals = st.floats(-10, 10, allow_nan=False)


@pytest.mark.parametrize("r, tau, expected", [(0.0, 0.3, 0.0), (1.0, 0.3, 0.7), (-1.0, 0.3, 0.3)])
def test_quantile_loss_examples(r, tau, expected):
    assert quantile_loss(r, tau) == pytest.approx(expected, abs=1e-15)


def test_quantile_loss_is_half_absolute_at_median():
    r = np.linspace(-3, 3, 61)
    np.testing.assert_allclose(quantile_loss(r, 0.5), 0.5 * np.abs(r))


@pytest.mark.parametrize("bad", [(np.nan, 0.3), (1.0, 1.5), (1.0, -0.1), (np.inf, 0.5)])
def test_quantile_loss_domain(bad):
    with pytest.raises(DomainError):
        quantile_loss(*bad)


def test_loss_params_validation():
    with pytest.raises(DomainError):
        LossParams(0.5, -1.0)
    with pytest.raises(DomainError):
        LossParams(1.2, 1.0)


@pytest.mark.parametrize(
    "r, tau, kappa, expected",
    [(0.0, 0.5, 1.0, 0.0), (0.5, 0.3, 1.0, 0.125), (-2.0, 0.3, 1.0, 0.555)],
)
def test_quantile_huber_examples(r, tau, kappa, expected):
    p = LossParams(tau, kappa)
    assert quantile_huber(r, p) == pytest.approx(expected, abs=1e-12)
    if kappa > 0:
        # the Moreau envelope oracle agrees independently
        assert moreau_oracle(r, p) == pytest.approx(expected, abs=1e-6)


def test_kappa_zero_is_quantile_loss():
    r = np.linspace(-4, 4, 81)
    np.testing.assert_array_equal(quantile_huber(r, LossParams(0.3, 0.0)), quantile_loss(r, 0.3))


def test_breakpoint_ties_use_quadratic_branch():
    p = LossParams(0.3, 1.0)
    for b in (p.left, p.right):
        assert quantile_huber(b, p) == b * b / 2.0
        assert quantile_huber_dr(b, p) == b / 1.0
        assert tau_calculus(b, p).d2_tau == 0.0


@pytest.mark.parametrize("r, expected", [(0.0, 0.0), (-2.0, -0.3), (2.0, 0.7)])
def test_dr_examples(r, expected):
    assert quantile_huber_dr(r, LossParams(0.3, 1.0)) == pytest.approx(expected, abs=1e-15)


def test_dr_rejects_kappa_zero():
    with pytest.raises(UnsupportedError):
        quantile_huber_dr(1.0, LossParams(0.3, 0.0))


def test_dr_matches_finite_differences():
    rng = np.random.default_rng(1)
    h = 1e-6
    for _ in range(200):
        p = LossParams(rng.uniform(0.05, 0.95), rng.uniform(0.05, 2))
        r = rng.uniform(-5, 5)
        if min(abs(r - p.left), abs(r - p.right)) < 1e-3:
            continue
        fd = (quantile_huber(r + h, p) - quantile_huber(r - h, p)) / (2 * h)
        assert quantile_huber_dr(r, p) == pytest.approx(fd, rel=1e-5, abs=1e-9)


@pytest.mark.parametrize(
    "r, d_tau, d2_tau",
    [(0.5, 0.0, 0.0), (-2.0, 1.7, -1.0), (2.0, -1.3, -1.0)],
)
def test_tau_calculus_examples(r, d_tau, d2_tau):
    tc = tau_calculus(r, LossParams(0.3, 1.0))
    assert tc.d_tau == pytest.approx(d_tau, abs=1e-12)
    assert tc.d2_tau == d2_tau


def test_tau_calculus_matches_finite_differences():
    rng = np.random.default_rng(2)
    h = 1e-5
    for _ in range(200):
        tau, kappa = rng.uniform(0.1, 0.9), rng.uniform(0.05, 1.5)
        r = rng.uniform(-5, 5)
        p = LossParams(tau, kappa)
        if min(abs(r - p.left), abs(r - p.right)) < 1e-2:
            continue
        f = lambda t: quantile_huber(r, LossParams(t, kappa))
        fd1 = (f(tau + h) - f(tau - h)) / (2 * h)
        fd2 = (f(tau + h) - 2 * f(tau) + f(tau - h)) / h**2
        tc = tau_calculus(r, p)
        assert tc.d_tau == pytest.approx(fd1, rel=1e-5, abs=1e-8)
        assert tc.d2_tau == pytest.approx(fd2, abs=1e-3)


@pytest.mark.parametrize(
    "rv, p, value",
    [
        ([0.0, 0.0, 0.0], LossParams(0.7, 0.4), 0.0),
        ([-2.0, 2.0], LossParams(0.5, 0.0), 2.0),
        ([0.5, -2.0], LossParams(0.3, 1.0), 0.680),
    ],
)
def test_total_loss_examples(rv, p, value):
    assert total_loss(rv, p).value == pytest.approx(value, abs=1e-12)


def test_total_loss_rejects_empty():
    with pytest.raises(DomainError):
        total_loss([], LossParams(0.5, 1.0))


def test_total_loss_rejects_nan():
    with pytest.raises(DomainError):
        total_loss([1.0, np.nan], LossParams(0.5, 1.0))


def test_moreau_oracle_domain():
    with pytest.raises(DomainError):
        moreau_oracle(1.0, LossParams(0.5, 0.0))
    with pytest.raises(DomainError):
        moreau_oracle(1.0, LossParams(0.5, 1.0), grid_resolution=100)


def test_moreau_oracle_origin():
    assert moreau_oracle(0.0, LossParams(0.5, 1.0), 10_000) == pytest.approx(0.0, abs=1e-12)


@given(r=residuals, tau=taus)
def test_kappa_to_zero_converges_monotonically(r, tau):
    gaps = [abs(quantile_huber(r, LossParams(tau, k)) - quantile_loss(r, tau)) for k in (1, 0.1, 0.01, 0.001)]
    assert all(a >= b - 1e-15 for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] <= 0.001 / 2 + 1e-15


@given(r=residuals, kappa=kappas)
def test_symmetry_at_median(r, kappa):
    p = LossParams(0.5, kappa)
    assert quantile_huber(r, p) == pytest.approx(quantile_huber(-r, p), rel=1e-14, abs=1e-15)


@given(r=residuals, tau=taus, kappa=kappas)
def test_concave_in_tau_outside_interval(r, tau, kappa):
    p = LossParams(tau, kappa)
    d2 = tau_calculus(r, p).d2_tau
    if r < p.left or r > p.right:
        assert d2 == -kappa
    else:
        assert d2 == 0.0


@settings(max_examples=50)
@given(tau=taus, kappa=kappas)
def test_c1_at_breakpoints(tau, kappa):
    p = LossParams(tau, kappa)
    for b, side_slope in ((p.left, -tau), (p.right, 1 - tau)):
        quad_val, quad_slope = b * b / (2 * kappa), b / kappa
        if b == p.left:
            lin_val = -tau * b - 0.5 * kappa * tau**2
        else:
            lin_val = (1 - tau) * b - 0.5 * kappa * (1 - tau) ** 2
        assert abs(quad_val - lin_val) <= 1e-12
        assert abs(quad_slope - side_slope) <= 1e-12
