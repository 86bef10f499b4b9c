"""Real Bessel functions J, Y of orders 0-2 and second-kind Hankel functions.

Self-contained: ascending series for small argument, Hankel asymptotic
expansion for large argument. Only orders 0, 1, 2 are supported; order 2
is produced from the three-term recurrence. Accuracy target is 1e-10
absolute over x in [1e-3, 1e3].
"""

import numpy as np

__all__ = ["DomainError", "bessel_jy", "hankel2"]

# Euler-Mascheroni constant
_EULER_GAMMA = 0.5772156649015328606

# Series/asymptotic crossover. Below, the ascending series loses ~5 digits
# to cancellation; above, the truncated Hankel expansion is < 1e-13.
_CROSSOVER = 15.0

_SERIES_TERMS = 42
_ASYMPTOTIC_TERMS = 11

VALID_ORDERS = (0, 1, 2)


class DomainError(ValueError):
    """Argument outside the valid domain of a special function."""


def _validate_order(order):
    if order not in VALID_ORDERS:
        raise DomainError(f"order must be one of {VALID_ORDERS}, got {order!r}")


def _series_j0_j1(x):
    """Ascending power series for J0 and J1, valid for x <= _CROSSOVER."""
    q = 0.25 * x * x
    term0 = np.ones_like(x)
    term1 = np.ones_like(x)
    j0 = term0.copy()
    j1 = term1.copy()
    for m in range(1, _SERIES_TERMS):
        term0 = term0 * (-q) / (m * m)
        term1 = term1 * (-q) / (m * (m + 1))
        j0 += term0
        j1 += term1
    return j0, 0.5 * x * j1


def _series_y0_y1(x, j0, j1):
    """Ascending series for Y0 and Y1 (A&S 9.1.11/9.1.13 style)."""
    q = 0.25 * x * x
    logf = np.log(0.5 * x) + _EULER_GAMMA

    # Y0 = (2/pi)[ (ln(x/2)+gamma) J0 + sum_{m>=1} (-1)^(m+1) H_m q^m / (m!)^2 ]
    term = np.ones_like(x)
    harm = 0.0
    s0 = np.zeros_like(x)
    # Y1 = (2/pi)(ln(x/2)+gamma) J1 - 2/(pi x)
    #      - (x/(2 pi)) sum_{m>=0} (-1)^m (H_m + H_{m+1}) q^m / (m! (m+1)!)
    term1 = np.ones_like(x)
    s1 = term1 * 1.0  # m = 0: H_0 + H_1 = 1
    for m in range(1, _SERIES_TERMS):
        term = term * (-q) / (m * m)
        harm += 1.0 / m
        s0 -= term * harm  # (-1)^(m+1) picked up via -(-q)^m
        term1 = term1 * (-q) / (m * (m + 1))
        s1 += term1 * (2.0 * harm + 1.0 / (m + 1))
    y0 = (2.0 / np.pi) * (logf * j0 + s0)
    y1 = (2.0 / np.pi) * (logf * j1 - 1.0 / x) - (x / (2.0 * np.pi)) * s1
    return y0, y1


def _asymptotic_jy(order, x):
    """Hankel asymptotic expansion for J_nu and Y_nu, valid for x >= _CROSSOVER."""
    mu = 4.0 * order * order
    inv8x = 1.0 / (8.0 * x)
    # a_k = prod_{j=1..k} (mu - (2j-1)^2) / (k * 8x), signs folded in below
    p = np.ones_like(x)
    q = np.zeros_like(x)
    ak = np.ones_like(x)
    sign = 1.0
    k = 0
    for m in range(_ASYMPTOTIC_TERMS):
        k += 1
        ak = ak * (mu - (2 * k - 1) ** 2) / k * inv8x
        q += sign * ak
        k += 1
        ak = ak * (mu - (2 * k - 1) ** 2) / k * inv8x
        sign = -sign
        p += sign * ak
    chi = x - (0.5 * order + 0.25) * np.pi
    amp = np.sqrt(2.0 / (np.pi * x))
    c, s = np.cos(chi), np.sin(chi)
    return amp * (p * c - q * s), amp * (p * s + q * c)


def _jy01(x):
    """(J0, J1, Y0, Y1) on a positive float array."""
    j0 = np.empty_like(x)
    j1 = np.empty_like(x)
    y0 = np.empty_like(x)
    y1 = np.empty_like(x)
    small = x < _CROSSOVER
    if small.any():
        xs = x[small]
        j0s, j1s = _series_j0_j1(xs)
        y0s, y1s = _series_y0_y1(xs, j0s, j1s)
        j0[small], j1[small], y0[small], y1[small] = j0s, j1s, y0s, y1s
    large = ~small
    if large.any():
        xl = x[large]
        j0[large], y0[large] = _asymptotic_jy(0, xl)
        j1[large], y1[large] = _asymptotic_jy(1, xl)
    return j0, j1, y0, y1


def bessel_jy(order, x):
    """Return (J_nu(x), Y_nu(x)) for nu in {0, 1, 2} and x > 0.

    Accepts scalars or arrays; scalars in give Python floats out.
    """
    _validate_order(order)
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("x must be finite")
    if not np.all(arr > 0):
        raise DomainError("x must be positive (Y_nu diverges at 0)")
    flat = np.atleast_1d(arr)
    j0, j1, y0, y1 = _jy01(flat)
    if order == 0:
        j, y = j0, y0
    elif order == 1:
        j, y = j1, y1
    else:
        # three-term recurrence: Z2 = 2 Z1 / x - Z0
        j = 2.0 * j1 / flat - j0
        y = 2.0 * y1 / flat - y0
    if arr.ndim == 0:
        return float(j[0]), float(y[0])
    return j.reshape(arr.shape), y.reshape(arr.shape)


def hankel2(order, x):
    """Hankel function of the second kind: H2_nu(x) = J_nu(x) - i Y_nu(x)."""
    j, y = bessel_jy(order, x)
    return j - 1j * y
