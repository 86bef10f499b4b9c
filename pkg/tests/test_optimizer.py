"""Optimizer tests: rate terms, finite-difference gradient oracles, block
solvers (feasibility, slackness, surrogate dominance) and the surrogate
recursions."""

import numpy as np
import pytest

from dmabeam import em_model as em
from dmabeam import optimizer as opt

F0 = 10.135e9
H_PLATE = 2.5e-3


def _cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _precoder_instance(seed, B=2, U=2, K=3, Nf=2):
    rng = np.random.default_rng(seed)
    h_eff = _cplx(rng, B, U, K, Nf)
    v = _cplx(rng, B, U, K, Nf)
    return h_eff, v


def _alpha_instance(seed, U=2, K=2, N=9, Nf=1):
    """One-BS instance with the full W_RF(alpha_0) chain."""
    rng = np.random.default_rng(seed)
    geom = em.DmaGeometry.uniform_grid(N, Nf, 0.025, H_PLATE)
    freqs = np.array([9.95e9, 10.05e9])[:K]
    G = np.stack([em.interaction_matrix(geom, em.WaveNumber(f))
                  for f in freqs])
    Hf = np.stack([em.excitation_matrix(geom, em.WaveNumber(f))
                   for f in freqs])
    alpha0 = rng.uniform(1e-3, 1e-1, N)
    f0 = np.full(N, F0)
    # channels scaled so effective channels are O(1); W entries are ~1e-6
    channels = 1e6 * _cplx(rng, U, K, N)
    v = _cplx(rng, U, K, Nf)
    return geom, freqs, G, Hf, alpha0, f0, channels, v


def _rate_of_alpha(alpha0, f0, freqs, G, Hf, channels, v, noise_var):
    W, _ = em.analog_beamformer_stack(alpha0, f0, freqs, G, H_PLATE)
    h_eff = opt.effective_channels(channels, W, Hf)
    return opt.rate_terms(h_eff[None], v[None], noise_var).sum_rate


def test_step_sizes():
    assert opt.step_sizes(0) == (1.0, 2.0 ** -0.61)
    rho1, gamma1 = opt.step_sizes(1)
    assert rho1 == pytest.approx(3.0 ** -0.60, rel=1e-15)
    assert gamma1 == pytest.approx(3.0 ** -0.61, rel=1e-15)
    with pytest.raises(ValueError):
        opt.step_sizes(-1)


def test_rate_terms_manual():
    h_eff, v = _precoder_instance(0)
    noise = 0.7
    terms = opt.rate_terms(h_eff, v, noise)
    B, U, K, Nf = h_eff.shape
    rate = 0.0
    for u in range(U):
        for k in range(K):
            gains = [sum(np.conj(h_eff[b, u, k]) @ v[b, q, k]
                         for b in range(B)) for q in range(U)]
            sig = abs(gains[u]) ** 2
            mui = sum(abs(g) ** 2 for q, g in enumerate(gains) if q != u)
            sinr = sig / (mui + noise)
            assert terms.sinr[u, k] == pytest.approx(sinr, rel=1e-12)
            rate += np.log2(1.0 + sinr) / K
    assert terms.sum_rate == pytest.approx(rate, rel=1e-12)


def test_rate_terms_matches_cross_path():
    h_eff, v = _precoder_instance(1)
    cross = np.stack([opt.cross_gains(h, p) for h, p in zip(h_eff, v)])
    a = opt.rate_terms(h_eff, v, 0.3)
    b = opt.rate_terms_from_cross(cross, 0.3)
    assert a.sum_rate == b.sum_rate
    np.testing.assert_array_equal(a.sinr, b.sinr)


@pytest.mark.parametrize("seed", range(5))
def test_grad_precoder_finite_difference(seed):
    h_eff, v = _precoder_instance(seed)
    noise = 1.0
    b_test = 0
    terms = opt.rate_terms(h_eff, v, noise)
    g = opt.grad_precoder(terms, h_eff[b_test])

    def rate(precs):
        vv = v.copy()
        vv[b_test] = precs
        return opt.rate_terms(h_eff, vv, noise).sum_rate

    step = 1e-6
    rel_errs = []
    flat = v[b_test].ravel()
    for i in range(flat.size):
        for part, expect in ((1.0, 2.0 * g.ravel()[i].real),
                             (1j, 2.0 * g.ravel()[i].imag)):
            vp = v[b_test].copy().ravel()
            vm = vp.copy()
            vp[i] += part * step
            vm[i] -= part * step
            num = (rate(vp.reshape(v[b_test].shape))
                   - rate(vm.reshape(v[b_test].shape))) / (2 * step)
            rel_errs.append(abs(num - expect) / max(abs(expect), 1e-12))
    assert np.median(rel_errs) <= 1e-6


@pytest.mark.parametrize("seed", range(3))
def test_grad_alpha_finite_difference(seed):
    geom, freqs, G, Hf, alpha0, f0, channels, v = _alpha_instance(seed)
    W, _ = em.analog_beamformer_stack(alpha0, f0, freqs, G, H_PLATE)
    h_eff = opt.effective_channels(channels, W, Hf)
    # noise at the median signal level keeps the instance well scaled: the
    # rate is then O(1) per stream and central differences do not cancel
    noise = float(np.median(
        opt.rate_terms(h_eff[None], v[None], 1.0).signal))
    terms = opt.rate_terms(h_eff[None], v[None], noise)
    g = opt.grad_alpha(terms, channels, v, W, Hf, alpha0, f0, freqs)
    rel_errs = []
    for i in range(len(alpha0)):
        step = 1e-3 * abs(alpha0[i])
        ap, am = alpha0.copy(), alpha0.copy()
        ap[i] += step
        am[i] -= step
        num = (_rate_of_alpha(ap, f0, freqs, G, Hf, channels, v, noise)
               - _rate_of_alpha(am, f0, freqs, G, Hf, channels, v, noise)) \
            / (2 * step)
        rel_errs.append(abs(num - g[i]) / max(abs(g[i]), 1e-12))
    assert np.median(rel_errs) <= 1e-4


def test_jacobian_diagonal_finite_difference():
    rng = np.random.default_rng(9)
    alpha0 = rng.uniform(1e-3, 1e-1, 8)
    f0 = np.full(8, F0)
    f_k = 10.0e9
    d = opt.jacobian_diagonal(alpha0, f0, f_k)

    def inv_conj_alpha(a0):
        return np.conj(1.0 / em.polarizability(a0, f0, f_k, H_PLATE))

    step = 1e-6 * alpha0
    num = (inv_conj_alpha(alpha0 + step) - inv_conj_alpha(alpha0 - step)) \
        / (2 * step)
    # the analytic diagonal is the real part; the damping contribution to
    # 1/alpha^* does not depend on alpha_0 only through the +jC term
    np.testing.assert_allclose(num.real, d, rtol=1e-5)


def test_jacobian_modes():
    alpha0 = np.array([1e-2])
    f0 = np.array([F0])
    d_a = opt.jacobian_diagonal(alpha0, f0, 10e9, mode="analytic")
    d_p = opt.jacobian_diagonal(alpha0, f0, 10e9, mode="paper")
    assert d_a[0] == pytest.approx(-(F0**2 - 1e20) / (1e-4 * F0**2))
    assert d_p[0] == pytest.approx(-(F0**2 + 1e20) / (1e-4 * F0**2))
    with pytest.raises(ValueError):
        opt.jacobian_diagonal(alpha0, f0, 10e9, mode="bogus")


def test_jacobian_alpha_sparsity():
    alpha0 = np.full(4, 1e-2)
    f0 = np.full(4, F0)
    J = opt.jacobian_alpha(alpha0, f0, 10e9)
    assert J.shape == (16, 4)
    assert J.nnz == 4
    rows, cols = J.nonzero()
    np.testing.assert_array_equal(rows, np.arange(4) * 5)
    np.testing.assert_array_equal(cols, np.arange(4))


@pytest.mark.parametrize("seed", range(10))
def test_solve_precoder_feasibility_and_slackness(seed):
    rng = np.random.default_rng(seed)
    shape = (2, 3, 2)
    grad = _cplx(rng, *shape)
    f_prec = _cplx(rng, *shape)
    v = _cplx(rng, *shape)
    p_max = float(rng.uniform(0.1, 10.0))
    rho = 0.4
    tau = 1e-2
    v_bar, lam = opt.solve_precoder(rho, tau, grad, f_prec, v, p_max)
    power = float(np.sum(np.abs(v_bar) ** 2))
    assert power <= p_max * (1.0 + 1e-9)
    assert lam >= 0.0
    # complementary slackness: lam (power - p_max) ~ 0
    assert abs(lam * (power - p_max)) <= 1e-8 * p_max


@pytest.mark.parametrize("seed", range(5))
def test_solve_precoder_surrogate_dominance(seed):
    rng = np.random.default_rng(100 + seed)
    shape = (2, 3, 2)
    grad = _cplx(rng, *shape)
    f_prec = _cplx(rng, *shape)
    v = _cplx(rng, *shape)
    p_max = 2.0
    rho, tau = 0.4, 1e-2
    v_bar, _ = opt.solve_precoder(rho, tau, grad, f_prec, v, p_max)
    best = opt.surrogate_value_precoder(v_bar, v, grad, f_prec, rho, tau)
    for _ in range(100):
        cand = _cplx(rng, *shape)
        cand *= np.sqrt(p_max * rng.uniform(0, 1)
                        / np.sum(np.abs(cand) ** 2))
        val = opt.surrogate_value_precoder(cand, v, grad, f_prec, rho, tau)
        assert val <= best + 1e-10 * max(1.0, abs(best))


def test_solve_precoder_unconstrained_case():
    shape = (1, 1, 2)
    grad = np.zeros(shape, dtype=complex)
    f_prec = np.zeros(shape, dtype=complex)
    v = np.full(shape, 0.1 + 0.0j)
    v_bar, lam = opt.solve_precoder(0.5, 1e-2, grad, f_prec, v, 100.0)
    assert lam == 0.0
    np.testing.assert_allclose(v_bar, v, rtol=1e-12)  # num = tau v -> v


def test_solve_alpha_maximizes_surrogate():
    rng = np.random.default_rng(17)
    n = 6
    grad = rng.standard_normal(n)
    f_alpha = rng.standard_normal(n)
    a = rng.uniform(1e-3, 1e-1, n)
    rho, tau = 0.4, 1e-2
    a_bar = opt.solve_alpha(rho, tau, grad, f_alpha, a)
    best = opt.surrogate_value_alpha(a_bar, a, grad, f_alpha, rho, tau)
    for _ in range(100):
        cand = a_bar + rng.standard_normal(n)
        val = opt.surrogate_value_alpha(cand, a, grad, f_alpha, rho, tau)
        assert val <= best + 1e-12 * max(1.0, abs(best))


def test_solve_alpha_clamps_away_from_zero():
    a = np.array([1e-2])
    # pick grad so the unconstrained solution is ~0
    grad = np.array([-a[0] * 1e-2 / 0.5])
    out = opt.solve_alpha(0.5, 1e-2, grad, np.zeros(1), a)
    assert abs(out[0]) >= em.ALPHA_MIN


def test_update_surrogate_recursion():
    state = opt.SurrogateState()
    gp = np.ones((1, 2, 2), dtype=complex)
    ga = np.ones(3)
    s1 = opt.update_surrogate(state, gp, ga, sampled_rate=4.0, n_bs=2)
    # rho^0 = 1 erases the zero initializers
    assert s1.t == 1
    np.testing.assert_array_equal(s1.f_precoder, gp)
    np.testing.assert_array_equal(s1.f_alpha, ga)
    assert s1.h_objective == pytest.approx(4.0 / 2)
    rho1, _ = opt.step_sizes(1)
    s2 = opt.update_surrogate(s1, 2 * gp, 2 * ga, sampled_rate=6.0, n_bs=2)
    np.testing.assert_allclose(s2.f_precoder,
                               (1 - rho1) * gp + rho1 * 2 * gp)
    assert s2.h_objective == pytest.approx((1 - rho1) * 2.0 + rho1 * 3.0)


def test_blend_variables():
    v0 = opt.BsVariables(np.full((1, 1, 2), 1.0 + 0j), np.array([1e-2, 2e-2]))
    v1 = opt.BsVariables(np.full((1, 1, 2), 0.0 + 0j), np.array([-1e-2, 4e-2]))
    out = opt.blend_variables(v0, v1, gamma=0.5, p_max=10.0)
    np.testing.assert_allclose(out.precoders, 0.5)
    # alpha blend straddling zero is clamped
    assert abs(out.resonance_strength[0]) >= em.ALPHA_MIN
    assert out.resonance_strength[1] == pytest.approx(3e-2)
    with pytest.raises(AssertionError):
        opt.blend_variables(v0, v0, gamma=1.0, p_max=1e-6)
