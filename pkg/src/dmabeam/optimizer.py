"""Per-BS stochastic successive concave approximation machinery.

Surrogate bookkeeping, sum-rate terms, analytic gradients with respect to
the digital precoders and the resonance strengths, and the closed-form
block solvers (power bisection for the precoders, unconstrained update for
the resonance strengths).

The analytic gradients are exact gradients of the instantaneous sum rate
and are validated against central finite differences; the resonance
Jacobian also offers a "paper" variant with a +f^2 numerator behind a flag.
"""

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .em_model import ALPHA_MIN

__all__ = [
    "BsVariables",
    "SurrogateState",
    "RateTerms",
    "step_sizes",
    "effective_channels",
    "cross_gains",
    "rate_terms",
    "rate_terms_from_cross",
    "grad_precoder",
    "grad_alpha",
    "jacobian_alpha",
    "jacobian_diagonal",
    "solve_precoder",
    "solve_alpha",
    "update_surrogate",
    "blend_variables",
    "surrogate_value_precoder",
    "surrogate_value_alpha",
]

_LN2 = np.log(2.0)


@dataclass
class BsVariables:
    """One BS's design block: digital precoders and resonance strengths."""

    precoders: np.ndarray  # (U, K, N_f) complex
    resonance_strength: np.ndarray  # (N,) real

    def copy(self):
        return BsVariables(self.precoders.copy(), self.resonance_strength.copy())

    def power(self):
        return float(np.sum(np.abs(self.precoders) ** 2))


@dataclass
class SurrogateState:
    """Iteration bookkeeping for one BS's structured surrogate."""

    t: int = 0
    tau: float = 1e-2
    rho_exponent: float = 0.60
    gamma_exponent: float = 0.61
    f_precoder: np.ndarray | None = None  # (U, K, N_f)
    f_alpha: np.ndarray | None = None  # (N,)
    h_objective: float = 0.0  # recursive per-BS objective share

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")


@dataclass(frozen=True)
class RateTerms:
    """Global per-(u, k) rate quantities shared by every BS."""

    cross_totals: np.ndarray  # z[q, u, k] = sum_b h_eff[b,q,k]^H v[b,u,k]
    signal: np.ndarray  # F[u, k]
    interference: np.ndarray  # MUI[u, k] (includes noise)
    sinr: np.ndarray  # (U, K)
    sum_rate: float
    noise_var: float


def step_sizes(t, rho_exponent=0.60, gamma_exponent=0.61):
    """(rho^t, gamma^t); rho^0 = 1 overrides the power schedule at t = 0."""
    if t < 0:
        raise ValueError("iteration index must be non-negative")
    rho = 1.0 if t == 0 else float((t + 2) ** (-rho_exponent))
    gamma = float((t + 2) ** (-gamma_exponent))
    return rho, gamma


def effective_channels(channels, beamformers, excitations):
    """h_eff[u, k] = H_f^H[k] W^H[k] h[u, k] for one BS.

    channels: (U, K, N); beamformers: (K, N, N); excitations: (K, N, N_f).
    """
    wh = np.einsum("kmn,ukm->ukn", np.conj(beamformers), np.asarray(channels))
    return np.einsum("knf,ukn->ukf", np.conj(excitations), wh)


def cross_gains(h_eff, precoders):
    """c[q, u, k] = h_eff[q, k]^H v_u[k] for one BS."""
    return np.einsum("qkf,ukf->quk", np.conj(h_eff), precoders)


def rate_terms_from_cross(cross, noise_var):
    """RateTerms from stacked per-BS cross scalars, (B, U, U, K)."""
    z = np.sum(np.asarray(cross), axis=0)
    U, _, K = z.shape
    mag2 = np.abs(z) ** 2  # mag2[u_chan, q_prec, k]
    signal = np.einsum("uuk->uk", mag2).copy()
    interference = mag2.sum(axis=1) - signal + noise_var
    sinr = signal / interference
    rate = float(np.sum(np.log2(1.0 + sinr)) / K)
    return RateTerms(z, signal, interference, sinr, rate, float(noise_var))


def rate_terms(h_eff_all, precoders_all, noise_var):
    """RateTerms from every BS's effective channels (B, U, K, N_f) and
    precoders (B, U, K, N_f)."""
    h_eff_all = np.asarray(h_eff_all)
    precoders_all = np.asarray(precoders_all)
    if h_eff_all.shape != precoders_all.shape:
        raise ValueError("effective channel / precoder shape mismatch")
    cross = np.stack([cross_gains(h, v)
                      for h, v in zip(h_eff_all, precoders_all)])
    return rate_terms_from_cross(cross, noise_var)


def grad_precoder(terms, h_eff):
    """Gradient of the sum rate w.r.t. one BS's precoders, (U, K, N_f).

    Wirtinger convention: dR = 2 Re{<grad, dv>}.
    """
    z = terms.cross_totals
    U, K = terms.sinr.shape
    w_own = 1.0 / ((1.0 + terms.sinr) * terms.interference)  # (U, K)
    w_int = terms.signal / ((1.0 + terms.sinr) * terms.interference**2)
    z_diag = np.einsum("uuk->uk", z)
    # interference sum over all q, then remove the q = u term
    full = np.einsum("qk,quk,qkf->ukf", w_int, z, h_eff)
    own = (w_int * z_diag)[:, :, None] * h_eff
    direct = (w_own * z_diag)[:, :, None] * h_eff
    return (direct - (full - own)) / (K * _LN2)


def jacobian_diagonal(alpha0, f0, f_k, mode="analytic"):
    """Nonzero entries of the sparse Jacobian of vec((A^*)^-1) w.r.t. alpha_0.

    "analytic" uses d(1/alpha^*)/d alpha_0 = -(f0^2 - f^2) / (alpha_0^2 f0^2);
    "paper" uses the printed -(f0^2 + f^2) / ((alpha_0 f0)^2) variant.
    """
    alpha0 = np.asarray(alpha0, dtype=float)
    f0 = np.asarray(f0, dtype=float)
    if np.any(np.abs(alpha0) < ALPHA_MIN):
        raise ValueError(f"|alpha_0| must be >= {ALPHA_MIN}")
    if mode == "analytic":
        num = f0**2 - float(f_k) ** 2
    elif mode == "paper":
        num = f0**2 + float(f_k) ** 2
    else:
        raise ValueError(f"unknown Jacobian mode {mode!r}")
    return -num / (alpha0**2 * f0**2)


def jacobian_alpha(alpha0, f0, f_k, mode="analytic"):
    """Sparse (N^2, N) Jacobian of vec((A^*)^-1); N nonzeros, one per column
    at row l * (N + 1) (the diagonal positions of the vectorized matrix)."""
    vals = jacobian_diagonal(alpha0, f0, f_k, mode)
    n = len(vals)
    rows = np.arange(n) * (n + 1)
    cols = np.arange(n)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n * n, n))


def grad_alpha(terms, channels, precoders, beamformers, excitations,
               alpha0, f0, freqs, mode="analytic"):
    """Gradient of the sum rate w.r.t. one BS's resonance strengths, (N,).

    channels: this BS's (noisy) channel draws (U, K, N); beamformers: the
    belief W_RF stack (K, N, N); excitations: (K, N, N_f).
    """
    z = terms.cross_totals
    U, K = terms.sinr.shape
    w = 1.0 / ((1.0 + terms.sinr) * terms.interference**2)  # (U, K)
    z_diag = np.einsum("uuk->uk", z)
    # p[u, k, :] = H_f[k] v_u[k]; a_q = conj(p_q)
    p = np.einsum("knf,ukf->ukn", excitations, precoders)
    grad = np.zeros(len(alpha0))
    for k in range(K):
        a = np.conj(p[:, k, :])  # (U, N)
        # s_u = w [ (MUI + F) z_uu a_u - F sum_q z[u,q] a_q ]
        coef_own = w[:, k] * (terms.interference[:, k] + terms.signal[:, k]) \
            * z_diag[:, k]
        mix = z[:, :, k] @ a  # (U, N): sum_q z[u, q, k] a_q
        s = coef_own[:, None] * a - (w[:, k] * terms.signal[:, k])[:, None] * mix
        u_tilde = s.T @ channels[:, k, :]  # (N, N): sum_u s_u h_u^T
        w_bar = np.conj(beamformers[k])
        diag = np.einsum("ln,nl->l", w_bar @ u_tilde, w_bar)
        d = jacobian_diagonal(alpha0, f0, freqs[k], mode)
        grad += d * np.real(diag)
    return -2.0 / (K * _LN2) * grad


def solve_precoder(rho, tau, grad, f_precoder, precoders, p_max,
                   rel_tol=1e-9, bracket_tol=1e-14):
    """Proximal precoder update with transmit-power bisection.

    Returns (v_bar, lambda): v_bar = num / (tau + 2 lambda) with
    num = rho grad + (1 - rho) f_precoder + tau v; lambda = 0 when the
    unconstrained solution is feasible, else chosen by bisection so the
    power constraint holds with equality to `rel_tol` relative.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if p_max <= 0:
        raise ValueError("p_max must be positive")
    num = rho * grad + (1.0 - rho) * f_precoder + tau * precoders
    total = float(np.sum(np.abs(num) ** 2))
    if total / tau**2 <= p_max:
        return num / tau, 0.0
    # ||v(lambda)||^2 = total / (tau + 2 lambda)^2, strictly decreasing
    lo, hi = 0.0, 1.0
    while total / (tau + 2.0 * hi) ** 2 > p_max:
        hi *= 2.0
    lam = hi
    while hi - lo > bracket_tol:
        lam = 0.5 * (lo + hi)
        power = total / (tau + 2.0 * lam) ** 2
        if abs(power - p_max) <= rel_tol * p_max:
            break
        if power > p_max:
            lo = lam
        else:
            hi = lam
    return num / (tau + 2.0 * lam), lam


def solve_alpha(rho, tau, grad, f_alpha, alpha0, alpha_min=ALPHA_MIN):
    """Closed-form resonance-strength update, entries clamped away from 0."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    bar = (rho / tau) * grad + ((1.0 - rho) / tau) * f_alpha + alpha0
    small = np.abs(bar) < alpha_min
    if small.any():
        signs = np.where(bar[small] >= 0, 1.0, -1.0)
        bar = bar.copy()
        bar[small] = signs * alpha_min
    return bar


def update_surrogate(state, grad_prec, grad_a, sampled_rate, n_bs):
    """Advance the accumulation vectors and the recursive objective share."""
    rho, _ = step_sizes(state.t, state.rho_exponent, state.gamma_exponent)
    f_prec = np.zeros_like(grad_prec) if state.f_precoder is None \
        else state.f_precoder
    f_alpha = np.zeros_like(grad_a) if state.f_alpha is None else state.f_alpha
    return replace(
        state,
        t=state.t + 1,
        f_precoder=(1.0 - rho) * f_prec + rho * grad_prec,
        f_alpha=(1.0 - rho) * f_alpha + rho * grad_a,
        h_objective=((1.0 - rho) * state.h_objective
                     + rho * sampled_rate / n_bs),
    )


def blend_variables(current, solved, gamma, p_max, alpha_min=ALPHA_MIN):
    """Convex combination x^{t+1} = (1 - gamma) x^t + gamma x_bar^t.

    Both endpoints are feasible, so the blend is feasible by convexity;
    this is asserted, not repaired.
    """
    v = (1.0 - gamma) * current.precoders + gamma * solved.precoders
    a = (1.0 - gamma) * current.resonance_strength \
        + gamma * solved.resonance_strength
    power = float(np.sum(np.abs(v) ** 2))
    if power > p_max * (1.0 + 1e-9):
        raise AssertionError(
            f"blended precoders infeasible: {power} > {p_max}")
    small = np.abs(a) < alpha_min
    if small.any():
        # can only occur when the endpoints straddle zero
        a = a.copy()
        a[small] = np.where(a[small] >= 0, alpha_min, -alpha_min)
    return BsVariables(v, a)


def surrogate_value_precoder(v, v_t, grad, f_precoder, rho, tau):
    """Precoder-block surrogate (constants dropped); maximized by
    solve_precoder over the power ball."""
    d = v - v_t
    lin = rho * grad + (1.0 - rho) * f_precoder
    return float(np.real(np.vdot(lin, d)) - 0.5 * tau * np.sum(np.abs(d) ** 2))


def surrogate_value_alpha(a, a_t, grad, f_alpha, rho, tau):
    """Resonance-block surrogate (constants dropped); maximized by
    solve_alpha."""
    d = a - a_t
    lin = rho * grad + (1.0 - rho) * f_alpha
    return float(lin @ d - 0.5 * tau * (d @ d))
