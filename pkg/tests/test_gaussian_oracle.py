import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uld_kit.errors import ContractViolation, InstabilityError, UnsupportedModelError
from uld_kit.gaussian_oracle import (
    AffineStepMap,
    GaussianLaw,
    coordinate_kl,
    coordinate_maps,
    coordinate_stationary_cov,
    kl_gaussian,
    map_power,
    propagate_law,
    stationary_law,
    target_law,
    ulmc_affine_map,
    w2_gaussian,
)
from uld_kit.potential import logistic_smoke, quadratic
from uld_kit.samplers import StepCoefficients


def random_law(rng, k):
    B = rng.normal(size=(k, k))
    return GaussianLaw(rng.normal(size=k), B @ B.T + 0.1 * np.eye(k))


def test_free_particle_map():
    step = ulmc_affine_map(np.zeros((2, 2)), 1.0, 0.3)
    c = StepCoefficients(1.0, 0.3)
    I = np.eye(2)
    np.testing.assert_allclose(step.A, np.block([[I, c.c1 * I], [0 * I, c.e_gh * I]]))


def test_small_step_limit():
    step = ulmc_affine_map(np.eye(3), 2.0, 1e-9)
    np.testing.assert_allclose(step.A, np.eye(6), atol=1e-8)
    assert np.max(np.abs(step.noise_cov)) < 1e-8


def test_one_dimensional_hand_map():
    step = ulmc_affine_map(np.eye(1), 1.0, 0.1)
    c1 = 1 - np.exp(-0.1)
    c2 = 0.1 - c1
    np.testing.assert_allclose(step.A, [[1 - c2, c1], [-c1, np.exp(-0.1)]], rtol=1e-13)


def test_propagate_trivial_cases():
    law = random_law(np.random.default_rng(0), 4)
    step = ulmc_affine_map(np.eye(2), 3.0, 0.1)
    same = propagate_law(law, step, 0)
    np.testing.assert_array_equal(same.mean, law.mean)
    ident = AffineStepMap(np.eye(4), np.zeros((4, 4)), np.zeros(4))
    out = propagate_law(law, ident, 25)
    np.testing.assert_allclose(out.cov, law.cov)


def test_propagate_matches_map_power():
    law = random_law(np.random.default_rng(1), 4)
    step = ulmc_affine_map(np.diag([1.0, 0.3]), np.sqrt(32.0), 0.2, minimizer=[1.0, -2.0])
    a = propagate_law(law, step, 37)
    b = map_power(step, 37).apply(law)
    np.testing.assert_allclose(a.mean, b.mean, rtol=1e-10)
    np.testing.assert_allclose(a.cov, b.cov, rtol=1e-9, atol=1e-12)


def test_unstable_map_raises():
    step = ulmc_affine_map(np.eye(1), 0.01, 5.0)
    with pytest.raises(InstabilityError):
        propagate_law(GaussianLaw.point_mass([1.0]), step, 2000)
    with pytest.raises(InstabilityError):
        stationary_law(step)


def test_kl_examples():
    p = GaussianLaw([0.0], [[1.0]])
    q = GaussianLaw([0.0], [[np.e]])
    assert kl_gaussian(p, p) == 0.0
    assert kl_gaussian(p, q) == pytest.approx(1 / (2 * np.e), rel=1e-14)


def test_w2_examples():
    p = GaussianLaw([0.0], [[1.0]])
    q = GaussianLaw([0.0], [[4.0]])
    assert w2_gaussian(p, p) == pytest.approx(0.0, abs=1e-7)
    assert w2_gaussian(p, q) == pytest.approx(1.0, rel=1e-12)


def test_kl_w2_dimension_mismatch():
    with pytest.raises(ContractViolation):
        kl_gaussian(GaussianLaw([0.0], [[1.0]]), GaussianLaw([0.0, 0.0], np.eye(2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_talagrand_inequality(seed, d):
    rng = np.random.default_rng(seed)
    Q = np.linalg.qr(rng.normal(size=(d, d)))[0]
    S = Q @ np.diag(rng.uniform(0.2, 3.0, d)) @ Q.T
    model = quadratic(S)
    pi = target_law(model)
    mu = random_law(rng, 2 * d)
    alpha = min(model.alpha, 1.0)  # momentum marginal is N(0, I)
    assert w2_gaussian(mu, pi) ** 2 <= (2 / alpha) * kl_gaussian(mu, pi) * (1 + 1e-9) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_kl_nonnegative_and_zero_on_self(seed):
    rng = np.random.default_rng(seed)
    p, q = random_law(rng, 3), random_law(rng, 3)
    assert kl_gaussian(p, q) >= 0
    assert kl_gaussian(p, p) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("d", [2, 8, 20])
def test_stationary_two_ways(d):
    rng = np.random.default_rng(d)
    step = ulmc_affine_map(np.diag(rng.uniform(0.2, 1.0, d)), np.sqrt(32.0), 0.05)
    a, b = stationary_law(step, "iterate"), stationary_law(step, "solve")
    np.testing.assert_allclose(a.cov, b.cov, atol=1e-10)
    np.testing.assert_allclose(step.apply(a).cov, a.cov, atol=1e-10)


def test_stationary_converges_to_target_as_h_shrinks():
    model = quadratic(np.eye(16))
    pi = target_law(model)
    kls = [kl_gaussian(stationary_law(ulmc_affine_map(model.precision, np.sqrt(32.0), h)), pi)
           for h in (0.004, 0.002)]
    assert kls[1] < kls[0] < 1e-3
    assert np.log(kls[0] / kls[1]) / np.log(2) == pytest.approx(2.0, abs=0.1)


def test_target_law_needs_quadratic():
    with pytest.raises(UnsupportedModelError):
        target_law(logistic_smoke([[1.0]], [1.0], 1.0))


def test_coordinate_form_matches_dense():
    eigs = np.array([0.25, 0.5, 1.0])
    gamma, h = np.sqrt(32.0), 0.07
    maps = coordinate_maps(eigs, gamma, h)
    dense = stationary_law(ulmc_affine_map(eigs, gamma, h), "solve")
    cov = coordinate_stationary_cov(maps)
    d = eigs.size
    for i in range(d):
        idx = [i, d + i]
        np.testing.assert_allclose(cov[i], dense.cov[np.ix_(idx, idx)], rtol=1e-9, atol=1e-14)
    pi = target_law(quadratic(eigs))
    assert coordinate_kl(np.zeros((d, 2)), cov, eigs) == pytest.approx(kl_gaussian(dense, pi), rel=1e-6)

    P = maps.power(13)
    D = map_power(ulmc_affine_map(eigs, gamma, h), 13)
    np.testing.assert_allclose(P.A[1], D.A[np.ix_([1, 4], [1, 4])], rtol=1e-12, atol=1e-15)
