import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from uld_kit.errors import ContractViolation, PoisonedStateError
from uld_kit.midpoint import MidpointPair
from uld_kit.ou_noise import compose_segments, draw_step_noise, segment_lengths
from uld_kit.potential import PotentialModel, SpdMatrix, quadratic
from uld_kit.samplers import (
    ChainConfig,
    MomentRecorder,
    NormRecorder,
    PhaseState,
    Scheme,
    SchemeLog,
    StepCoefficients,
    midpoint_times,
    olmc_step,
    reference_uld_step,
    rmd_step,
    run_chain,
    ulmc_step,
)


def free(d):
    return quadratic(np.zeros((d, d)), beta=1.0)


def zero_noise(gamma, h, times, d, batch=()):
    times = np.asarray(times, dtype=float)
    segs = [(dt, np.zeros(batch + (d,)), np.zeros(batch + (d,))) for dt in np.moveaxis(segment_lengths(times, h), -1, 0)]
    return compose_segments(gamma, h, times, segs)


def mp_coeffs(gamma, t):
    mp.mp.dps = 40
    g, t = mp.mpf(gamma), mp.mpf(t)
    c1 = (1 - mp.exp(-g * t)) / g
    c2 = (g * t - (1 - mp.exp(-g * t))) / g**2
    return mp.exp(-g * t), c1, c2


class NanModel(PotentialModel):
    def value(self, x):
        return np.zeros(np.shape(x)[:-1])

    def gradient(self, x):
        return np.full(np.shape(x), np.nan)


def test_ulmc_free_particle_at_rest():
    nz = zero_noise(1.0, 0.1, [], 2)
    out = ulmc_step(PhaseState.at_rest([1.0, 2.0]), free(2), StepCoefficients(1.0, 0.1), nz)
    np.testing.assert_array_equal(out.x, [1.0, 2.0])
    np.testing.assert_array_equal(out.p, [0.0, 0.0])


def test_ulmc_pure_drift():
    c = StepCoefficients(1.5, 0.2)
    out = ulmc_step(PhaseState([0.0], [2.0]), free(1), c, zero_noise(1.5, 0.2, [], 1))
    assert out.x[0] == pytest.approx(c.c1 * 2.0, rel=1e-15)
    assert out.p[0] == pytest.approx(np.exp(-0.3) * 2.0, rel=1e-15)


def test_ulmc_quadratic_hand_values():
    c = StepCoefficients(1.0, 0.1)
    _, c1, c2 = mp_coeffs(1.0, 0.1)
    out = ulmc_step(PhaseState([1.0], [0.0]), quadratic(np.eye(1)), c, zero_noise(1.0, 0.1, [], 1))
    assert out.x[0] == pytest.approx(float(1 - c2), rel=1e-15)
    assert out.p[0] == pytest.approx(float(-c1), rel=1e-15)
    assert out.x[0] == pytest.approx(1 - 0.00483742, abs=1e-8)
    assert out.p[0] == pytest.approx(-0.0951626, abs=1e-7)


@pytest.mark.parametrize("predictor", ["partial", "full"])
def test_rmd_hand_evaluation(predictor):
    gamma, h, u, v = 1.0, 0.1, 0.3, 0.7
    x, p = mp.mpf(1), mp.mpf(1)
    e, c1, c2 = mp_coeffs(gamma, h)
    _, c1u, c2u = mp_coeffs(gamma, u * h)
    _, c1v, c2v = mp_coeffs(gamma, v * h)
    if predictor == "full":
        c1u = c1v = c1
    xu = x + c1u * p - c2u * x  # grad V(x) = x
    xv = x + c1v * p - c2v * x
    X = x + c1 * p - c2 * xu
    P = e * p - c1 * xv

    nz = zero_noise(gamma, h, [u * h, v * h], 1)
    out = rmd_step(PhaseState([1.0], [1.0]), quadratic(np.eye(1)), StepCoefficients(gamma, h),
                   MidpointPair(np.array(u), np.array(v)), nz, predictor=predictor)
    assert out.x[0] == pytest.approx(float(X), rel=1e-14)
    assert out.p[0] == pytest.approx(float(P), rel=1e-14)


def test_rmd_equals_ulmc_on_free_particle():
    gamma, h = 2.0, 0.3
    pair = MidpointPair(np.array([0.2, 0.6]), np.array([0.5, 0.1]))
    nz = draw_step_noise(gamma, h, midpoint_times(pair, h), 3, np.random.default_rng(1), (2,))
    st0 = PhaseState(np.ones((2, 3)), -np.ones((2, 3)))
    c = StepCoefficients(gamma, h)
    a = rmd_step(st0, free(3), c, pair, nz)
    b = ulmc_step(st0, free(3), c, nz)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.p, b.p)


def test_rmd_equal_midpoints_share_predictor():
    gamma, h = 2.0, 0.3
    pair = MidpointPair(np.array(0.4), np.array(0.4))
    nz = draw_step_noise(gamma, h, [0.4 * h], 2, np.random.default_rng(2))
    m = quadratic(np.diag([1.0, 3.0]))
    st0 = PhaseState([1.0, -1.0], [0.5, 0.5])
    out = rmd_step(st0, m, StepCoefficients(gamma, h), pair, nz)
    # with a shared predictor, P+ uses the same gradient as X+
    _, c1u, c2u = StepCoefficients(gamma, h).partial(0.4 * h)
    xu = st0.x + c1u * st0.p + nz.xi1(0.4 * h) - c2u * m.gradient(st0.x)
    c = StepCoefficients(gamma, h)
    np.testing.assert_allclose(out.p, c.e_gh * st0.p + nz.xi2_full - c.c1 * m.gradient(xu), rtol=1e-14)


def test_rmd_missing_time_raises():
    nz = draw_step_noise(1.0, 0.1, [0.05], 1, np.random.default_rng(0))
    with pytest.raises(ContractViolation):
        rmd_step(PhaseState([0.0], [0.0]), quadratic(np.eye(1)), StepCoefficients(1.0, 0.1),
                 MidpointPair(np.array(0.3), np.array(0.5)), nz)


def test_olmc_examples():
    assert olmc_step([1.0], free(1), 0.1, [0.0])[0] == 1.0
    assert olmc_step([1.0], quadratic(np.eye(1)), 0.1, [0.0])[0] == pytest.approx(0.9)
    z = np.random.default_rng(0).standard_normal((200_000, 1))
    assert np.var(olmc_step(np.zeros((200_000, 1)), free(1), 0.1, z)) == pytest.approx(0.2, rel=0.01)


def test_poisoned_gradient_reports_step():
    bad = NanModel(1, 0.0, 1.0, SpdMatrix.scalar(1.0, 1), np.zeros(1))
    with pytest.raises(PoisonedStateError) as info:
        run_chain(ChainConfig(h=0.1, n_steps=3, seed=0), bad)
    assert info.value.step == 1


def test_reference_exact_on_free_particle():
    gamma, h = 1.3, 0.2
    st0 = PhaseState(np.ones((4, 2)), np.full((4, 2), 0.5))
    for K in (1, 8, 64):
        out, nz = reference_uld_step(st0, free(2), gamma, h, K, np.random.default_rng(K))
        direct = ulmc_step(st0, free(2), StepCoefficients(gamma, h), nz)
        np.testing.assert_allclose(out.x, direct.x, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(out.p, direct.p, rtol=1e-12, atol=1e-14)


def _mean_errors(extrapolate):
    S = np.diag([0.5, 1.0])
    m, g, h = quadratic(S), np.sqrt(32.0), 0.1
    z0 = np.array([1.0, -1.0, 0.5, 1.0])
    M = np.block([[np.zeros((2, 2)), np.eye(2)], [-S, -g * np.eye(2)]])
    exact = expm(M * h) @ z0
    st0 = PhaseState(z0[:2], z0[2:]).broadcast(2)
    errs = []
    for K in (8, 16, 32, 64, 128):
        # antithetic pair averages to the noise-free substep trajectory
        out, _ = reference_uld_step(st0, m, g, h, K, np.random.default_rng(0), antithetic=True,
                                    extrapolate=extrapolate)
        errs.append(np.linalg.norm(np.concatenate([out.x.mean(0), out.p.mean(0)]) - exact))
    return np.log2(np.array(errs[:-1]) / np.array(errs[1:]))


def test_reference_mean_convergence_orders():
    assert np.all(np.abs(_mean_errors(False) - 1.0) < 0.1)
    assert np.all(_mean_errors(True) >= 1.9)


def test_reference_richardson_gap_and_resolution():
    m = quadratic(np.eye(2))
    st0 = PhaseState([1.0, 0.0], [0.0, 1.0])
    _, nz = reference_uld_step(st0, m, 4.0, 0.1, 64, np.random.default_rng(0), richardson_tol=1e-3)
    assert nz.richardson_gap <= 1e-3 and nz.substeps >= 64
    with pytest.raises(ContractViolation):
        reference_uld_step(st0, m, 4.0, 0.1, 3, np.random.default_rng(0))


def test_reference_intermediate_noise_matches_laws():
    gamma, h = 2.0, 0.5
    st0 = PhaseState(np.zeros((50_000, 1)), np.zeros((50_000, 1)))
    _, nz = reference_uld_step(st0, free(1), gamma, h, 16, np.random.default_rng(3), intermediate_times=[0.2])
    from uld_kit.ou_noise import noise_block

    assert np.var(nz.xi2(0.2)) == pytest.approx(noise_block(gamma, 0.2).var_p, rel=0.03)
    assert np.var(nz.xi1_full) == pytest.approx(noise_block(gamma, h).var_x, rel=0.03)


def test_chain_zero_steps_returns_init():
    init = PhaseState([1.0, 2.0], [3.0, 4.0])
    res = run_chain(ChainConfig(h=0.1, n_steps=0, init=init), quadratic(np.eye(2)))
    np.testing.assert_array_equal(res.final.x, init.x)
    np.testing.assert_array_equal(res.final.p, init.p)


def test_chain_free_momentum_is_stationary_normal():
    cfg = ChainConfig(h=0.5, n_steps=40, gamma=1.0, n_chains=20_000, seed=3)
    rec = MomentRecorder([40])
    res = run_chain(cfg, free(2), [rec])
    cov = res.payloads[0][40]["cov"][2:, 2:]
    np.testing.assert_allclose(cov, np.eye(2), atol=0.05)
    assert "gamma-override" in res.tags


def test_chain_scheme_log_with_final_ulmc():
    cfg = ChainConfig(h=0.1, n_steps=3, scheme=Scheme.RMD, final_ulmc_step=True, seed=1)
    res = run_chain(cfg, quadratic(np.eye(2)), [SchemeLog()])
    assert res.schemes == ["RMD", "RMD", "ULMC"]
    assert res.payloads[0] == ["RMD", "RMD", "ULMC"]


def test_chain_outside_regime_warns():
    with pytest.warns(UserWarning):
        res = run_chain(ChainConfig(h=2.0, n_steps=1), quadratic(np.eye(1)))
    assert "outside-lemma-regime" in res.tags


def test_chain_default_gamma():
    res = run_chain(ChainConfig(h=0.1, n_steps=1), quadratic(2.0 * np.eye(1)))
    assert res.gamma == pytest.approx(8.0)


@pytest.mark.parametrize("scheme", list(Scheme))
def test_chain_reproducible_across_threads(scheme):
    cfg = ChainConfig(h=0.05, n_steps=3, scheme=scheme, n_chains=9000, seed=11, ref_substeps=4,
                      init=PhaseState([1.0, 0.0], [0.0, 1.0]))
    m = quadratic(np.diag([1.0, 0.5]))
    a = run_chain(cfg, m, [NormRecorder()], threads=1)
    b = run_chain(cfg, m, [NormRecorder()], threads=4)
    np.testing.assert_array_equal(a.final.x, b.final.x)
    assert a.payloads == b.payloads


def test_chain_config_validation():
    with pytest.raises(ContractViolation):
        ChainConfig(h=0.0, n_steps=1)
    with pytest.raises(ContractViolation):
        ChainConfig(h=0.1, n_steps=-1)
    with pytest.raises(ContractViolation):
        ChainConfig(h=0.1, n_steps=1, scheme="REFERENCE", ref_substeps=3)
    with pytest.raises(ValueError):
        ChainConfig(h=0.1, n_steps=1, scheme="EULER")


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 20.0), st.floats(1e-4, 1.0))
def test_coefficients_match_high_precision(gamma, h):
    c = StepCoefficients(gamma, h)
    e, c1, c2 = mp_coeffs(gamma, h)
    assert c.e_gh == pytest.approx(float(e), rel=1e-14)
    assert c.c1 == pytest.approx(float(c1), rel=1e-13)
    assert c.c2 == pytest.approx(float(c2), rel=1e-12)
