"""PPW-DMA electromagnetic model.

Builds, per base station and subcarrier, the Lorentzian polarizability
matrix A, the element-to-element mutual coupling matrix G (waveguide +
free-space kernels), the feed excitation matrix H_f, and the analog
beamformer W_RF = (A^-1 - G)^-1.
"""

from dataclasses import dataclass, field

import numpy as np

from .specfun import DomainError, hankel2

__all__ = [
    "C_LIGHT",
    "ALPHA_MIN",
    "DmaGeometry",
    "LorentzianParams",
    "WaveNumber",
    "SingularCouplingError",
    "radiation_damping",
    "polarizability",
    "green_waveguide",
    "green_freespace",
    "interaction_matrix",
    "excitation_matrix",
    "analog_beamformer",
    "analog_beamformer_stack",
]

C_LIGHT = 299_792_458.0

# Floor on |alpha_0|: A^-1 and the alpha-Jacobian blow up at alpha_0 = 0.
ALPHA_MIN = 1e-12


class SingularCouplingError(np.linalg.LinAlgError):
    """(A^-1 - G) is numerically singular."""

    def __init__(self, cond):
        self.cond = cond
        super().__init__(f"A^-1 - G is numerically singular (cond ~ {cond:.3e})")


@dataclass(frozen=True)
class WaveNumber:
    """Free-space / TEM guided wavenumber at a given frequency."""

    frequency: float

    def __post_init__(self):
        if self.frequency <= 0:
            raise DomainError("frequency must be positive")

    @property
    def k(self):
        return 2.0 * np.pi * self.frequency / C_LIGHT

    @property
    def wavelength(self):
        return C_LIGHT / self.frequency


@dataclass(frozen=True)
class DmaGeometry:
    """Element and feed positions of one PPW-DMA panel (local coordinates).

    All points lie on the z = 0 plane; the plate height h is the PPW gap.
    """

    element_positions: np.ndarray  # (N, 3)
    feed_positions: np.ndarray  # (N_f, 3)
    plate_height: float

    def __post_init__(self):
        elems = np.asarray(self.element_positions, dtype=float)
        feeds = np.asarray(self.feed_positions, dtype=float)
        object.__setattr__(self, "element_positions", elems)
        object.__setattr__(self, "feed_positions", feeds)
        if elems.ndim != 2 or elems.shape[1] != 3:
            raise ValueError("element_positions must have shape (N, 3)")
        if feeds.ndim != 2 or feeds.shape[1] != 3:
            raise ValueError("feed_positions must have shape (N_f, 3)")
        if self.plate_height <= 0:
            raise DomainError("plate_height must be positive")
        if np.any(elems[:, 2] != 0) or np.any(feeds[:, 2] != 0):
            raise ValueError("metasurface lies on the x-y plane: all z must be 0")
        if len(np.unique(elems[:, :2], axis=0)) != len(elems):
            raise ValueError("element positions must be pairwise distinct")
        d = np.linalg.norm(elems[:, None, :2] - feeds[None, :, :2], axis=-1)
        if np.any(d == 0):
            raise ValueError("feed positions must be distinct from element positions")

    @property
    def n_elements(self):
        return len(self.element_positions)

    @property
    def n_feeds(self):
        return len(self.feed_positions)

    @classmethod
    def uniform_grid(cls, n_elements, n_feeds, aperture, plate_height):
        """sqrt(N) x sqrt(N) element grid over an aperture x aperture plate,
        feeds on a centered sqrt(N_f) x sqrt(N_f) sub-grid, all centered at
        the origin."""
        side = int(round(np.sqrt(n_elements)))
        if side * side != n_elements:
            raise ValueError("n_elements must be a perfect square")
        fside = int(round(np.sqrt(n_feeds)))
        if fside * fside != n_feeds:
            raise ValueError("n_feeds must be a perfect square")
        spacing = aperture / side
        coords = (np.arange(side) - (side - 1) / 2.0) * spacing
        ex, ey = np.meshgrid(coords, coords, indexing="ij")
        elems = np.column_stack([ex.ravel(), ey.ravel(), np.zeros(n_elements)])
        # feed sub-grid offset by a fraction of the element pitch so feeds
        # never land on element coordinates; the quarter pitch collides for
        # some side/fside combinations, so fall back to other fractions
        fspacing = aperture / (2.0 * fside)
        base = (np.arange(fside) - (fside - 1) / 2.0) * fspacing
        for frac in (0.25, 1.0 / 3.0, 0.2, 0.15):
            fcoords = base + spacing * frac
            if not np.isin(fcoords, coords).any():
                break
        fx, fy = np.meshgrid(fcoords, fcoords, indexing="ij")
        feeds = np.column_stack([fx.ravel(), fy.ravel(), np.zeros(n_feeds)])
        return cls(elems, feeds, plate_height)


@dataclass(frozen=True)
class LorentzianParams:
    """Per-element resonance frequency and tunable resonance strength."""

    resonance_freq: np.ndarray  # (N,) Hz
    resonance_strength: np.ndarray  # (N,) real

    def __post_init__(self):
        f0 = np.asarray(self.resonance_freq, dtype=float)
        a0 = np.asarray(self.resonance_strength, dtype=float)
        object.__setattr__(self, "resonance_freq", f0)
        object.__setattr__(self, "resonance_strength", a0)
        if f0.shape != a0.shape or f0.ndim != 1:
            raise ValueError("resonance_freq and resonance_strength must be 1-D "
                             "arrays of equal length")
        if np.any(f0 <= 0):
            raise DomainError("resonance frequencies must be positive")
        if np.any(np.abs(a0) < ALPHA_MIN):
            raise DomainError(f"|alpha_0| must be >= {ALPHA_MIN}")


def radiation_damping(f, h):
    """Radiation damping C(f) = 8 pi^2 f^3 / (3 c^3) + pi^2 f^2 / (2 h c^2)."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0) or h <= 0:
        raise DomainError("frequency and plate height must be positive")
    out = (8.0 * np.pi**2 * f**3 / (3.0 * C_LIGHT**3)
           + np.pi**2 * f**2 / (2.0 * h * C_LIGHT**2))
    return out if out.ndim else float(out)


def polarizability(alpha0, f0, f, h):
    """Lorentzian polarizability alpha0 f0^2 / (f0^2 - f^2 + j alpha0 f0^2 C(f))."""
    alpha0 = np.asarray(alpha0, dtype=float)
    f0 = np.asarray(f0, dtype=float)
    if np.any(np.abs(alpha0) < ALPHA_MIN):
        raise DomainError(f"|alpha_0| must be >= {ALPHA_MIN}")
    if np.any(f0 <= 0):
        raise DomainError("resonance frequency must be positive")
    C = radiation_damping(f, h)
    num = alpha0 * f0**2
    den = f0**2 - np.asarray(f, dtype=float) ** 2 + 1j * alpha0 * f0**2 * C
    out = num / den
    return out if out.ndim else complex(out)


def _pair_geometry(r_n, r_j):
    dx = r_n[..., 0] - r_j[..., 0]
    dy = r_n[..., 1] - r_j[..., 1]
    rho = np.hypot(dx, dy)
    psi = np.arctan2(dy, dx)
    return rho, psi


def green_waveguide(r_n, r_j, k, h):
    """PPW dipole-dipole coupling kernel between two x-directed dipoles."""
    if isinstance(k, WaveNumber):
        k = k.k
    r_n = np.asarray(r_n, dtype=float)
    r_j = np.asarray(r_j, dtype=float)
    rho, psi = _pair_geometry(r_n, r_j)
    if np.any(rho == 0):
        raise DomainError("coincident points in green_waveguide")
    return (-1j * k**2 / (8.0 * h)
            * (hankel2(0, k * rho) - np.cos(2.0 * psi) * hankel2(2, k * rho)))


def green_freespace(r_n, r_j, k):
    """Free-space x-to-x magnetic coupling kernel (image dipole included)."""
    if isinstance(k, WaveNumber):
        k = k.k
    r_n = np.asarray(r_n, dtype=float)
    r_j = np.asarray(r_j, dtype=float)
    rho, psi = _pair_geometry(r_n, r_j)
    if np.any(rho == 0):
        raise DomainError("coincident points in green_freespace")
    kr = k * rho
    bracket = ((3.0 / kr**2 + 3j / kr - 1.0) * np.cos(psi) ** 2
               + (1.0 - 1j / kr - 1.0 / kr**2))
    return bracket * k**2 * np.exp(-1j * kr) / (2.0 * np.pi * rho)


def interaction_matrix(geom, k):
    """Mutual coupling matrix G: zero diagonal, complex-symmetric."""
    if isinstance(k, WaveNumber):
        k = k.k
    pos = geom.element_positions
    n = geom.n_elements
    G = np.zeros((n, n), dtype=complex)
    iu, ju = np.triu_indices(n, k=1)
    if len(iu):
        vals = (green_waveguide(pos[iu], pos[ju], k, geom.plate_height)
                + green_freespace(pos[iu], pos[ju], k))
        G[iu, ju] = vals
        G[ju, iu] = vals  # symmetric by construction, bit-identical entries
    return G


def excitation_matrix(geom, k):
    """Feed excitation matrix H_f, (N, N_f):
    [H_f]_{n,i} = (j beta / 4) H2_1(beta |r_n - p_i|) sin(atan2(dy, dx))."""
    if isinstance(k, WaveNumber):
        k = k.k
    elems = geom.element_positions[:, None, :]
    feeds = geom.feed_positions[None, :, :]
    rho, psi = _pair_geometry(elems, feeds)
    if np.any(rho == 0):
        raise DomainError("element coincides with a feed")
    return 1j * k / 4.0 * hankel2(1, k * rho) * np.sin(psi)


def analog_beamformer(params, G, f, h):
    """W_RF = (A^-1 - G)^-1 with A = diag of the Lorentzian polarizabilities.

    Computed by a dense LU solve against the identity (one factorization),
    never by cofactor-style explicit inversion.
    """
    alpha = polarizability(params.resonance_strength, params.resonance_freq, f, h)
    M = np.diag(1.0 / alpha) - G
    try:
        W = np.linalg.solve(M, np.eye(len(alpha), dtype=complex))
    except np.linalg.LinAlgError:
        raise SingularCouplingError(np.inf) from None
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularCouplingError(cond)
    return W


def analog_beamformer_stack(alpha0, f0, freqs, G_stack, h):
    """Batched W_RF over subcarriers.

    Returns (W, M) with W[k] = (A^-1[k] - G[k])^-1 and M[k] its inverse;
    M is reused by gradient code that needs W_RF^-1 without re-inverting.
    """
    freqs = np.asarray(freqs, dtype=float)
    K = len(freqs)
    n = len(alpha0)
    alpha = polarizability(alpha0[None, :], f0[None, :], freqs[:, None], h)
    M = -np.array(G_stack, dtype=complex, copy=True)
    idx = np.arange(n)
    M[:, idx, idx] += 1.0 / alpha
    try:
        W = np.linalg.solve(M, np.broadcast_to(np.eye(n, dtype=complex), (K, n, n)))
    except np.linalg.LinAlgError:
        raise SingularCouplingError(np.inf) from None
    return W, M
