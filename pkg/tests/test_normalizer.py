import math

import numpy as np
import pytest
from scipy import integrate

from autoquantile import (
    DomainError,
    LossParams,
    c_quadrature_oracle,
    convexity_certificate,
    normalization,
    normalized_loss,
    std_normal_cdf,
)
from autoquantile.normalizer import default_certificate_grid

# quadrature values, frozen
PHI_HALF = 0.6914624612740131
C_HALF_ONE = 4.489838048258149
C_03_ONE = 5.24716892310347


def test_std_normal_cdf():
    assert std_normal_cdf(0.0) == 0.5
    assert std_normal_cdf(8.0) > 1 - 1e-14
    assert std_normal_cdf(0.5) == pytest.approx(PHI_HALF, abs=1e-15)


def test_std_normal_cdf_against_quadrature():
    pdf = lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi)
    for x in np.linspace(-6, 6, 25):
        lo = integrate.quad(pdf, -40, min(x, 0.0), epsabs=1e-14, epsrel=1e-13)[0]
        ref = lo + (integrate.quad(pdf, 0.0, x, epsabs=1e-14, epsrel=1e-13)[0] if x > 0 else 0.0)
        assert abs(std_normal_cdf(x) - ref) <= 1e-12


def test_std_normal_cdf_rejects_nonfinite():
    with pytest.raises(DomainError):
        std_normal_cdf(float("nan"))


def test_normalization_examples():
    ne = normalization(LossParams(0.5, 0.0))
    assert ne.c == 4.0 and ne.c_prime == 0.0
    assert normalization(LossParams(0.5, 1.0)).c == pytest.approx(C_HALF_ONE, rel=1e-12)
    assert normalization(LossParams(0.3, 0.0)).c_prime == pytest.approx(-9.070294784580497, rel=1e-12)


@pytest.mark.parametrize("tau", [0.0, 1.0])
def test_normalization_diverges_at_endpoints(tau):
    with pytest.raises(DomainError):
        normalization(LossParams(tau, 1.0))


def test_quadrature_oracle_examples():
    assert c_quadrature_oracle(LossParams(0.5, 0.0), 1e-10) == pytest.approx(4.0, abs=1e-8)
    assert c_quadrature_oracle(LossParams(0.5, 1.0), 1e-10) == pytest.approx(C_HALF_ONE, abs=1e-9)
    assert c_quadrature_oracle(LossParams(0.2, 0.0), 1e-10) == pytest.approx(6.25, abs=1e-8)
    with pytest.raises(DomainError):
        c_quadrature_oracle(LossParams(1.0, 1.0))


GRID = [(t, k) for t in np.round(np.arange(0.05, 0.951, 0.05), 2) for k in (0.0, 0.05, 0.5, 1.0)]


@pytest.mark.parametrize("tau, kappa", GRID)
def test_closed_form_matches_quadrature(tau, kappa):
    p = LossParams(tau, kappa)
    c = normalization(p).c
    assert abs(c - c_quadrature_oracle(p, 1e-8)) / c <= 1e-6


@pytest.mark.parametrize("tau, kappa", GRID)
def test_derivatives_match_finite_differences(tau, kappa):
    h = 1e-5
    c = lambda t: normalization(LossParams(t, kappa)).c
    logc = lambda t: math.log(c(t))
    ne = normalization(LossParams(tau, kappa))
    assert ne.c_prime == pytest.approx((c(tau + h) - c(tau - h)) / (2 * h), rel=1e-5, abs=1e-7)
    cp = lambda t: normalization(LossParams(t, kappa)).c_prime
    assert ne.c_double_prime == pytest.approx((cp(tau + h) - cp(tau - h)) / (2 * h), rel=1e-5)
    h2 = 1e-4
    fd2 = (logc(tau + h2) - 2 * logc(tau) + logc(tau - h2)) / h2**2
    assert ne.d2log_c == pytest.approx(fd2, rel=1e-4)
    assert ne.d2log_c == pytest.approx((ne.c * ne.c_double_prime - ne.c_prime**2) / ne.c**2, rel=1e-15)


@pytest.mark.parametrize("kappa", [0.0, 0.05, 0.3, 1.0, 3.0])
def test_symmetry(kappa):
    for t in (0.1, 0.27, 0.4):
        assert normalization(LossParams(t, kappa)).c == pytest.approx(normalization(LossParams(1 - t, kappa)).c, rel=1e-14)
    assert normalization(LossParams(0.5, kappa)).c_prime == 0.0


def test_normalized_loss_examples():
    assert normalized_loss([0.0], LossParams(0.5, 0.0)).value == pytest.approx(math.log(4), rel=1e-15)
    for k in (0.0, 0.3, 1.0):
        assert normalized_loss([0.0], LossParams(0.5, k)).d_tau == 0.0
    v = normalized_loss([-2.0, 0.5], LossParams(0.3, 1.0)).value
    assert v == pytest.approx(0.680 + 2 * math.log(C_03_ONE), rel=1e-12)


def test_normalized_loss_tau_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    h = 1e-6
    for _ in range(20):
        rv = rng.laplace(size=30) * rng.uniform(0.5, 3)
        kappa = rng.uniform(0.0, 1.0)
        tau = rng.uniform(0.1, 0.9)
        f = lambda t: normalized_loss(rv, LossParams(t, kappa)).value
        fd = (f(tau + h) - f(tau - h)) / (2 * h)
        assert normalized_loss(rv, LossParams(tau, kappa)).d_tau == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_certificate_values():
    assert convexity_certificate(0.0) == pytest.approx(8.0, abs=1e-9)
    assert 6.0 <= convexity_certificate(1.0) <= 6.1
    assert convexity_certificate(0.0, [0.5]) == 8.0


def test_certificate_positive_on_unit_kappa_range():
    for k in np.linspace(0, 1, 11):
        assert convexity_certificate(k) > 0


def test_certificate_domain():
    with pytest.raises(DomainError):
        convexity_certificate(1.0, [])
    with pytest.raises(DomainError):
        convexity_certificate(1.0, [0.0, 0.5])


def test_default_grid():
    g = default_certificate_grid()
    assert g[0] == 0.01 and g[-1] == 0.99 and g.size == 981
