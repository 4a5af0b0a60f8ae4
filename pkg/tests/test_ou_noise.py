import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uld_kit.errors import ContractViolation
from uld_kit.ou_noise import (
    compose_noise,
    compose_segments,
    draw_step_noise,
    noise_block,
    quadrature_moments,
)

GAMMAS = [0.1, 1.0, float(np.sqrt(32.0)), 10.0]
DTS = [1e-6, 1e-3, 0.1, 1.0]


def mp_moments(gamma, dt):
    """High-precision closed forms written independently of the package."""
    mp.mp.dps = 50
    g, t = mp.mpf(gamma), mp.mpf(dt)
    e1, e2 = mp.exp(-g * t), mp.exp(-2 * g * t)
    var_p = 1 - e2
    cov_xp = (1 - e1) ** 2 / g
    var_x = (2 / g**2) * (g * t - 2 * (1 - e1) + (1 - e2) / 2)
    return float(var_x), float(var_p), float(cov_xp)


@pytest.mark.parametrize("gamma", GAMMAS)
@pytest.mark.parametrize("dt", DTS)
def test_closed_form_matches_quadrature(gamma, dt):
    blk = noise_block(gamma, dt)
    q = quadrature_moments(gamma, dt)
    np.testing.assert_allclose([blk.var_x, blk.var_p, blk.cov_xp], q, rtol=1e-10)


@pytest.mark.parametrize("gamma", GAMMAS)
@pytest.mark.parametrize("dt", DTS + [1e-5 / 1.0, 0.099, 0.101, 3.0])
def test_closed_form_matches_high_precision(gamma, dt):
    blk = noise_block(gamma, dt)
    np.testing.assert_allclose([blk.var_x, blk.var_p, blk.cov_xp], mp_moments(gamma, dt), rtol=1e-12)


def test_gamma_one_dt_one_quadrature():
    blk = noise_block(1.0, 1.0)
    np.testing.assert_allclose([blk.var_x, blk.var_p, blk.cov_xp], quadrature_moments(1.0, 1.0), rtol=1e-12)


def test_zero_segment_and_long_time_limit():
    blk = noise_block(1.0, 0.0)
    assert blk.var_x == blk.var_p == blk.cov_xp == 0.0
    assert noise_block(1.0, 60.0).var_p == pytest.approx(1.0, rel=1e-14)


def test_small_dt_leading_order():
    g, dt = 2.0, 1e-7
    blk = noise_block(g, dt)
    assert blk.var_p == pytest.approx(2 * g * dt, rel=1e-6)
    assert blk.var_x == pytest.approx(2 * g * dt**3 / 3, rel=1e-6)
    assert blk.cov_xp == pytest.approx(g * dt**2, rel=1e-6)


def test_negative_gamma_rejected():
    with pytest.raises(ContractViolation):
        noise_block(-1.0, 0.1)
    with pytest.raises(ContractViolation):
        noise_block(0.0, 0.1)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 20.0), st.floats(1e-7, 5.0))
def test_moments_form_a_covariance(gamma, dt):
    blk = noise_block(gamma, dt)
    assert blk.var_x > 0 and blk.var_p > 0
    assert blk.var_x * blk.var_p - blk.cov_xp**2 >= -1e-15 * blk.var_x * blk.var_p
    np.testing.assert_allclose(blk.chol @ np.swapaxes(blk.chol, -1, -2), blk.cov, rtol=1e-10, atol=1e-300)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-2, 20.0), st.floats(1e-6, 2.0), st.floats(1e-6, 2.0))
def test_composition_propagates_covariance(gamma, dt1, dt2):
    b1, b2, b12 = noise_block(gamma, dt1), noise_block(gamma, dt2), noise_block(gamma, dt1 + dt2)
    e = np.exp(-gamma * dt2)
    c1 = -np.expm1(-gamma * dt2) / gamma
    M = np.array([[1.0, c1], [0.0, e]])
    np.testing.assert_allclose(M @ b1.cov @ M.T + b2.cov, b12.cov, rtol=1e-12)


def test_compose_identity_segment():
    rng = np.random.default_rng(0)
    first = (rng.normal(size=3), rng.normal(size=3))
    zero = (np.zeros(3), np.zeros(3))
    out = compose_noise(first, zero, 1.3, 0.0)
    np.testing.assert_array_equal(out[0], first[0])
    np.testing.assert_array_equal(out[1], first[1])
    out = compose_noise(zero, zero, 1.3, 0.4)
    assert not np.any(out[0]) and not np.any(out[1])


def test_compose_rejects_mismatched_shapes():
    with pytest.raises(ContractViolation):
        compose_noise((np.zeros(2), np.zeros(2)), (np.zeros(3), np.zeros(3)), 1.0, 0.1)


def test_draw_without_intermediate_times():
    nz = draw_step_noise(2.0, 0.5, [], 2, np.random.default_rng(0), (100_000,))
    assert nz.xi1_at == [] and nz.xi2_at == []
    blk = noise_block(2.0, 0.5)
    assert np.var(nz.xi2_full) == pytest.approx(blk.var_p, rel=0.02)
    assert np.var(nz.xi1_full) == pytest.approx(blk.var_x, rel=0.02)


def test_half_step_composition_with_zero_tail():
    gamma, h = 1.7, 0.6
    nz = draw_step_noise(gamma, h, [h / 2], 3, np.random.default_rng(4))
    (dt0, a1, a2), (dt1, _, _) = nz.segments
    forced = compose_segments(gamma, h, [h / 2], [(dt0, a1, a2), (dt1, np.zeros(3), np.zeros(3))])
    expected = forced.xi1(h / 2) + (-np.expm1(-gamma * h / 2) / gamma) * forced.xi2(h / 2)
    np.testing.assert_allclose(forced.xi1_full, expected, rtol=1e-15)


def test_replay_determinism():
    a = draw_step_noise(1.0, 0.3, [0.1, 0.2], 4, np.random.default_rng(9), (5,))
    b = draw_step_noise(1.0, 0.3, [0.1, 0.2], 4, np.random.default_rng(9), (5,))
    np.testing.assert_array_equal(a.xi1_full, b.xi1_full)
    np.testing.assert_array_equal(a.xi2_at[1], b.xi2_at[1])


def test_lookup_errors():
    nz = draw_step_noise(1.0, 0.3, [0.1], 2, np.random.default_rng(0))
    with pytest.raises(ContractViolation):
        nz.xi1(0.2)
    with pytest.raises(ContractViolation):
        draw_step_noise(1.0, 0.3, [0.2, 0.1], 2, np.random.default_rng(0))
    with pytest.raises(ContractViolation):
        draw_step_noise(1.0, 0.3, [0.4], 2, np.random.default_rng(0))


def test_restricted_noise_cross_covariance():
    from uld_kit.experiments import restricted_noise_oracle

    gamma, h, t = 1.0, 1.0, 0.37
    n = 400_000
    nz = draw_step_noise(gamma, h, [t], 1, np.random.default_rng(3), (n,))
    Z = np.stack([nz.xi1(t)[:, 0], nz.xi2(t)[:, 0], nz.xi1_full[:, 0], nz.xi2_full[:, 0]], -1)
    oracle = restricted_noise_oracle(gamma, t, h)
    emp = Z.T @ Z / n
    se = (Z[:, :, None] * Z[:, None, :]).std(0) / np.sqrt(n)
    assert np.max(np.abs(emp - oracle) / se) < 5
