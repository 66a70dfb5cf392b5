"""Tests for the market-price-of-risk integrability module."""

import numpy as np
import pytest
from dataclasses import replace
from scipy import stats

from curvarb.credit import LGDProcess, build_thm1_market
from curvarb.errors import ConfigurationError, DomainError
from curvarb.novikov import (
    DensitySpec,
    capped_lgd_driver,
    capped_lgd_tq,
    novikov_mc,
    novikov_quadrature,
    q2_statistic,
    tail_diagnostics,
)
from curvarb.paths import TimeGrid, simulate_brownian


@pytest.fixture(scope="module")
def base_market():
    return build_thm1_market(0.02, 0.4, horizon=30.0, steps=120, n_paths=30_000, seed=3)


def test_q2_statistic_chi_square_law():
    grid = TimeGrid.regular(2.0, 8)
    n = 50_000
    for k in (1, 4, 16):
        driver = simulate_brownian(grid, n, k, seed=5)
        q = q2_statistic(driver, 2.0)
        se_mean = np.sqrt(2.0 * k / n)
        # fourth central moment of a chi-square is 12k(k+4)
        se_var = np.sqrt((12.0 * k * (k + 4) - (2.0 * k) ** 2) / n)
        assert abs(q.mean() - k) < 3 * se_mean
        assert abs(q.var(ddof=1) - 2.0 * k) < 3 * se_var
        ks = stats.kstest(q, lambda x: stats.chi2.cdf(x, k))
        assert ks.pvalue > 0.01


def test_q2_statistic_forms():
    grid = TimeGrid.regular(1.0, 4)
    driver = simulate_brownian(grid, 100, 3, seed=1)
    q = q2_statistic(driver, 1.0)
    r = q2_statistic(driver, 1.0, q_form="printed")
    assert r**2 == pytest.approx(q, rel=1e-14)
    with pytest.raises(DomainError):
        q2_statistic(driver, 0.0)
    with pytest.raises(ConfigurationError):
        q2_statistic(driver, 1.0, q_form="fancy")


def test_tail_diagnostics_pareto():
    rng = np.random.default_rng(7)
    u = rng.random(20_000)
    heavy = u ** (-2.0)  # survival x^{-1/2}: no finite mean
    diag = tail_diagnostics(heavy)
    assert diag.verdict == "divergence_evidence"
    assert abs(diag.tail_index - 0.5) < 0.1
    light = u ** (-1.0 / 3.0)  # survival x^{-3}
    diag2 = tail_diagnostics(light)
    assert diag2.verdict == "finite_evidence"
    assert diag2.ci_low > 1


def test_tail_diagnostics_degenerate_and_errors():
    flat = tail_diagnostics(np.ones(1000))
    assert flat.verdict == "finite_evidence"
    assert np.isinf(flat.tail_index)
    with pytest.raises(ConfigurationError):
        tail_diagnostics(np.ones(100), log_samples=np.zeros(100))
    with pytest.raises(ConfigurationError):
        tail_diagnostics(np.array([1.0, -1.0] * 50))


def test_novikov_mc_constant_lgd_diverges(base_market):
    est = novikov_mc(base_market, k=4)
    assert est.verdict == "divergence_evidence"
    assert est.tail.ci_high < 1
    assert est.estimate > 1e6
    # censoring matches the horizon default mass 1 - e^{-0.6}
    assert abs(est.censored_fraction - np.exp(-0.6)) < 0.01


def test_novikov_mc_zero_lgd_is_unit(base_market):
    market = replace(base_market, lgd=LGDProcess("constant", value=0.0))
    est = novikov_mc(market, k=4)
    assert est.estimate == 1.0
    assert est.se == 0.0
    assert est.verdict == "finite_evidence"


def test_novikov_mc_monotone_in_lgd(base_market):
    lo = novikov_mc(replace(base_market, lgd=LGDProcess("constant", value=0.2)), k=4)
    hi = novikov_mc(base_market, k=4)
    # same paths, larger loss: every exponent moves up
    assert np.all(hi.exponents >= lo.exponents)
    assert hi.estimate >= lo.estimate


def test_novikov_mc_printed_form_still_diverges(base_market):
    est = novikov_mc(base_market, k=4, q_form="printed")
    assert est.verdict == "divergence_evidence"


def test_capped_family_mc_quadrature_cross_check():
    market = build_thm1_market(0.02, 0.4, horizon=30.0, steps=120, n_paths=60_000, seed=9)
    market = replace(market, lgd=LGDProcess("driver_linked", fn=capped_lgd_driver(0.1)))
    mc = novikov_mc(market, k=4)
    assert mc.verdict == "finite_evidence"
    assert mc.estimate < np.exp(0.1) + 1e-12
    dens = DensitySpec.truncated_exponential(
        0.02, horizon=30.0, k=4, lgd_given_tq=capped_lgd_tq(0.1)
    )
    quad = novikov_quadrature(dens)
    assert quad.converged and not quad.diverged
    assert abs(mc.estimate - quad.value) < 3 * mc.se


def test_quadrature_divergence_certificate():
    dens = DensitySpec.truncated_exponential(0.02, k=4, lgd_value=0.4)
    result = novikov_quadrature(dens)
    assert result.diverged and not result.converged
    assert result.value == np.inf
    assert result.growth > np.log(1e6)
    levels = [v for _, v in result.trace]
    assert all(b >= a for a, b in zip(levels, levels[1:]))


def test_quadrature_printed_form_diverges_too():
    dens = DensitySpec.truncated_exponential(
        0.02, k=4, lgd_value=0.4, q_form="printed"
    )
    result = novikov_quadrature(dens, halvings=14)
    assert result.diverged


def test_quadrature_zero_lgd_recovers_unit_mass():
    dens = DensitySpec.truncated_exponential(0.02, horizon=30.0, k=4, lgd_value=0.0)
    result = novikov_quadrature(dens)
    assert result.converged
    assert abs(result.value - 1.0) < 1e-3


def test_density_spec_validation():
    bad_pdf = lambda t: 0.5 * np.exp(-t)  # noqa: E731  integrates to 1/2
    with pytest.raises(ConfigurationError):
        DensitySpec(k=4, tau_pdf=bad_pdf, t_max=50.0, lgd_value=0.4)
    ok_pdf = lambda t: np.exp(-t) / -np.expm1(-50.0)  # noqa: E731
    with pytest.raises(ConfigurationError):
        DensitySpec(k=4, tau_pdf=ok_pdf, t_max=50.0)
    with pytest.raises(ConfigurationError):
        DensitySpec(
            k=4, tau_pdf=ok_pdf, t_max=50.0, lgd_value=0.4, lgd_given_tq=capped_lgd_tq()
        )
    with pytest.raises(ConfigurationError):
        DensitySpec(k=0, tau_pdf=ok_pdf, t_max=50.0, lgd_value=0.4)
    with pytest.raises(ConfigurationError):
        DensitySpec(k=4, tau_pdf=ok_pdf, t_max=50.0, lgd_value=0.4, q_form="guess")
    spec = DensitySpec(k=4, tau_pdf=ok_pdf, t_max=50.0, lgd_value=0.4)
    assert spec.t_max == 50.0


def test_lgd_density_mode_runs():
    # uniform loss on [0.2, 0.6] stays integrable once the exponent is capped
    lgd_pdf = lambda v: np.full_like(np.asarray(v, dtype=float), 2.5)  # noqa: E731
    dens = DensitySpec.truncated_exponential(
        0.05, horizon=20.0, k=8, lgd_pdf=lgd_pdf, lgd_support=(0.2, 0.6)
    )
    result = novikov_quadrature(dens, halvings=10)
    # constant positive LGD mass keeps the q -> 0 blowup: no convergence
    assert not result.converged


def test_capped_rule_shapes():
    rule = capped_lgd_tq(0.1)
    t = np.array([1.0, 2.0])[:, None]
    q = np.array([0.5, 5.0, 500.0])[None, :]
    l = rule(t, q)
    assert l.shape == (2, 3)
    u = 2.0 * l / (2.0 - l)
    expo = u**2 * (t / q)
    assert np.all(expo <= 0.1 + 1e-12)
    fn = capped_lgd_driver(0.1)
    w = np.array([0.3, -0.4])
    assert fn(2.0, w) == pytest.approx(rule(2.0, float(w @ w) / 2.0))
