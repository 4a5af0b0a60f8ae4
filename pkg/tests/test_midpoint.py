import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from uld_kit.errors import ContractViolation
from uld_kit.midpoint import MidpointLaw, sample_pair, sample_u, sample_v, unbiasedness_weights_check

GAMMA_H = [1e-6, 0.1, 1.0, 10.0]


def test_v_quantile_endpoints_and_midpoint():
    law = MidpointLaw(1.0, 1.0)
    assert 0 < law.quantile_v(1e-15) < 1e-12
    assert 1 - 1e-12 < law.quantile_v(1 - 1e-15) < 1
    F = (np.exp(-0.5) - np.exp(-1.0)) / (1 - np.exp(-1.0))
    assert law.quantile_v(F) == pytest.approx(0.5, abs=1e-14)
    # the same F by quadrature of the density
    Fq = integrate.quad(law.density_v, 0, 0.5, epsabs=0, epsrel=1e-13)[0]
    assert Fq == pytest.approx(F, rel=1e-12)


def test_u_quantile_small_gh_limit():
    # the density tends to 2(1 - s), so F = 1 - (1 - s)^2
    law = MidpointLaw(1e-7, 1.0)
    assert law.quantile_u(0.25) == pytest.approx(1 - np.sqrt(0.75), abs=1e-6)
    assert law.density_u(0.25) == pytest.approx(1.5, rel=1e-6)
    assert 0 <= law.quantile_u(1e-15) < 1e-7


@pytest.mark.parametrize("gh", [1e-6, 1e-3, 0.1, 1.0, 10.0, 50.0])
def test_quantiles_invert_cdfs(gh):
    law = MidpointLaw(gh, 1.0)
    F = np.linspace(0.001, 0.999, 101)
    np.testing.assert_allclose(law.cdf_u(law.quantile_u(F)), F, atol=1e-11)
    np.testing.assert_allclose(law.cdf_v(law.quantile_v(F)), F, atol=1e-12)


@pytest.mark.parametrize("gh", GAMMA_H)
def test_densities_integrate_to_one(gh):
    law = MidpointLaw(gh, 1.0)
    for dens in (law.density_u, law.density_v):
        assert integrate.quad(dens, 0, 1, epsabs=0, epsrel=1e-13)[0] == pytest.approx(1.0, rel=1e-11)


@pytest.mark.parametrize("gh", GAMMA_H)
def test_ks_against_analytic_cdf(gh):
    law = MidpointLaw(gh, 1.0)
    n = 100_000
    rng = np.random.default_rng(int(gh * 1e6) + 1)
    for sampler, cdf in ((sample_u, law.cdf_u), (sample_v, law.cdf_v)):
        assert stats.kstest(sampler(law, rng, n), cdf).statistic < 1.63 / np.sqrt(n)


@pytest.mark.parametrize("gh", GAMMA_H)
@pytest.mark.parametrize("g", [lambda s: 1.0, lambda s: s, lambda s: s * s, np.exp], ids=["1", "s", "s2", "exp"])
def test_unbiasedness_identities(gh, g):
    assert unbiasedness_weights_check(MidpointLaw(gh, 1.0), g).passed


def test_unbiasedness_spec_examples():
    law = MidpointLaw(1.0, 1.0)
    rep = unbiasedness_weights_check(law, lambda s: 1.0)
    assert rep.lhs_u == pytest.approx(law.normalizer_u / law.gamma, rel=1e-12)
    assert rep.lhs_v == pytest.approx(law.normalizer_v / law.gamma, rel=1e-12)
    assert unbiasedness_weights_check(law, lambda s: s).passed
    assert unbiasedness_weights_check(MidpointLaw(np.sqrt(32.0), 0.1), np.exp).passed


def test_newton_converges_over_documented_range():
    F = np.random.default_rng(0).random(2000)
    for gh in np.geomspace(1e-6, 50, 30):
        u = MidpointLaw(gh, 1.0).quantile_u(F)
        assert np.all((u >= 0) & (u <= 1))


def test_invalid_law_parameters():
    with pytest.raises(ContractViolation):
        MidpointLaw(0.0, 1.0)
    with pytest.raises(ContractViolation):
        MidpointLaw(1.0, -0.1)


def test_pair_draw_order_is_fixed():
    law = MidpointLaw(2.0, 0.3)
    a = sample_pair(law, np.random.default_rng(5), 10)
    rng = np.random.default_rng(5)
    u = sample_u(law, rng, 10)
    v = sample_v(law, rng, 10)
    np.testing.assert_array_equal(a.u, u)
    np.testing.assert_array_equal(a.v, v)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 50.0), st.floats(1e-9, 1 - 1e-9))
def test_quantiles_monotone_and_in_range(gh, F):
    law = MidpointLaw(gh, 1.0)
    for q in (law.quantile_u, law.quantile_v):
        lo, hi = q(F * 0.5), q(F)
        assert 0.0 <= lo <= hi <= 1.0
