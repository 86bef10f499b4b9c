"""Downlink channel synthesis.

Far-field steering vectors with polarization projection onto the UE dipole,
then pathloss / wideband Rayleigh fading augmentation and CSI corruption.
"""

from dataclasses import dataclass

import numpy as np

from .em_model import WaveNumber
from .specfun import DomainError

__all__ = [
    "ETA0",
    "UePose",
    "FadingModel",
    "CsiErrorModel",
    "steering_vectors",
    "ue_channel",
    "augment_channel",
    "corrupt_csi",
    "received_signal",
]

# free-space impedance
ETA0 = 120.0 * np.pi


@dataclass(frozen=True)
class UePose:
    """UE location (spherical, seen from a DMA center) and dipole attitude."""

    distance: float  # R_u (m)
    elevation: float  # theta_u (rad), from +z
    azimuth: float  # phi_u (rad)
    tilt: float  # dipole orientation polar angle (rad)
    tilt_azimuth: float  # dipole orientation azimuth (rad)
    dipole_length: float  # ell_u (m)

    def __post_init__(self):
        if self.distance <= 0:
            raise DomainError("UE distance must be positive")
        if not 0.0 <= self.elevation <= np.pi:
            raise ValueError("elevation must be in [0, pi]")
        if self.dipole_length <= 0:
            raise ValueError("dipole length must be positive")

    @property
    def orientation(self):
        """Unit dipole orientation vector d_hat."""
        st, ct = np.sin(self.tilt), np.cos(self.tilt)
        return np.array([st * np.cos(self.tilt_azimuth),
                         st * np.sin(self.tilt_azimuth), ct])

    @property
    def radial(self):
        """Unit vector s_hat from the DMA center toward the UE."""
        st, ct = np.sin(self.elevation), np.cos(self.elevation)
        return np.array([st * np.cos(self.azimuth), st * np.sin(self.azimuth), ct])

    @property
    def theta_hat(self):
        ct, st = np.cos(self.elevation), np.sin(self.elevation)
        return np.array([ct * np.cos(self.azimuth), ct * np.sin(self.azimuth), -st])

    @property
    def phi_hat(self):
        return np.array([-np.sin(self.azimuth), np.cos(self.azimuth), 0.0])


@dataclass(frozen=True)
class FadingModel:
    """Tapped-delay-line Rayleigh fading plus distance power-law pathloss."""

    tap_powers: np.ndarray  # (L_tap,), sums to 1
    pathloss_ref: float  # PL_0, linear
    pathloss_exponent: float = 2.5

    def __post_init__(self):
        p = np.asarray(self.tap_powers, dtype=float)
        object.__setattr__(self, "tap_powers", p)
        if p.ndim != 1 or len(p) < 1 or np.any(p < 0):
            raise ValueError("tap_powers must be a non-negative 1-D array")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("tap powers must sum to 1")
        if self.pathloss_exponent <= 0:
            raise ValueError("pathloss exponent must be positive")

    @classmethod
    def exponential(cls, n_taps, pathloss_ref, decay_db=3.0, pathloss_exponent=2.5):
        """Exponential power-delay profile with `decay_db` per tap."""
        p = 10.0 ** (-decay_db * np.arange(n_taps) / 10.0)
        return cls(p / p.sum(), pathloss_ref, pathloss_exponent)


@dataclass(frozen=True)
class CsiErrorModel:
    """Relative-variance Gaussian CSI error: sigma_e^2 = delta |h|^2."""

    delta: float

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be non-negative")


def steering_vectors(geom, pose, k):
    """Far-field per-element field responses (h_theta, h_phi), each (N,)."""
    if isinstance(k, WaveNumber):
        beta = k.k
    else:
        beta = float(k)
    if pose.distance <= 0:
        raise DomainError("UE distance must be positive")
    amp = ETA0 * beta**2 / (2.0 * np.pi * pose.distance)
    phase = np.exp(-1j * beta * pose.distance) * np.exp(
        1j * beta * geom.element_positions @ pose.radial)
    common = amp * phase
    h_theta = common * np.sin(pose.azimuth)
    h_phi = common * np.cos(pose.azimuth) * np.cos(pose.elevation)
    return h_theta, h_phi


def ue_channel(h_theta, h_phi, pose):
    """Polarization-projected channel ell_u (gamma_theta h_theta + gamma_phi h_phi)."""
    d = pose.orientation
    gamma_theta = d @ pose.theta_hat
    gamma_phi = d @ pose.phi_hat
    return pose.dipole_length * (gamma_theta * np.asarray(h_theta)
                                 + gamma_phi * np.asarray(h_phi))


def frequency_fading(model, n_subcarriers, rng):
    """Frequency response g[k] of one L-tap unit-power Rayleigh TDL, (K,)."""
    p = model.tap_powers
    taps = (rng.standard_normal(len(p)) + 1j * rng.standard_normal(len(p)))
    taps *= np.sqrt(p / 2.0)
    k = np.arange(n_subcarriers)
    ell = np.arange(len(p))
    return np.exp(-2j * np.pi * np.outer(k, ell) / n_subcarriers) @ taps


def augment_channel(h_det, pathloss_distance, model, rng,
                    amplitude_distance=None, per_element=False):
    """Replace the deterministic 1/(2 pi R) spreading amplitude of the
    per-subcarrier deterministic channels `h_det` (K, N) by the pathloss law
    sqrt(PL_0 R^-exp), then multiply by one Rayleigh fading response per
    subcarrier (or one per element and subcarrier if `per_element`).

    `amplitude_distance` is the R embedded in `h_det` (defaults to
    `pathloss_distance`); it only undoes the deterministic amplitude.
    """
    if pathloss_distance <= 0:
        raise DomainError("pathloss distance must be positive")
    if amplitude_distance is None:
        amplitude_distance = pathloss_distance
    h_det = np.asarray(h_det)
    K, N = h_det.shape
    a_dir = h_det * (2.0 * np.pi * amplitude_distance)
    gain = np.sqrt(model.pathloss_ref
                   * pathloss_distance ** (-model.pathloss_exponent))
    if per_element:
        g = np.stack([frequency_fading(model, K, rng) for _ in range(N)],
                     axis=1)
    else:
        g = frequency_fading(model, K, rng)[:, None]
    return gain * g * a_dir


def corrupt_csi(h, delta, rng):
    """Entry-wise ĥ = h + e with e ~ CN(0, delta |h|^2)."""
    if delta < 0:
        raise ValueError("delta must be non-negative")
    h = np.asarray(h, dtype=complex)
    if delta == 0:
        return h.copy()
    noise = rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
    return h + np.sqrt(delta / 2.0) * np.abs(h) * noise


def received_signal(channels, beamformers, excitations, precoders, symbols, noise):
    """Per-UE received samples y_u[k] of the downlink signal model.

    channels: (B, U, K, N); beamformers: (B, K, N, N); excitations:
    (B, K, N, N_f); precoders: (B, U, K, N_f); symbols, noise: (U, K).
    Returns y of shape (U, K).
    """
    channels = np.asarray(channels)
    B, U, K, N = channels.shape
    if np.shape(beamformers) != (B, K, N, N):
        raise ValueError("beamformer shape mismatch")
    Nf = np.shape(excitations)[-1]
    if np.shape(excitations) != (B, K, N, Nf):
        raise ValueError("excitation shape mismatch")
    if np.shape(precoders) != (B, U, K, Nf):
        raise ValueError("precoder shape mismatch")
    if np.shape(symbols) != (U, K) or np.shape(noise) != (U, K):
        raise ValueError("symbols/noise shape mismatch")
    # effective scalar gains z[u, q, k] = sum_b h_{b,u}^H W_b H_f v_{b,q}
    z = effective_gains(channels, beamformers, excitations, precoders)
    return np.einsum("uqk,qk->uk", z, np.asarray(symbols)) + np.asarray(noise)


def effective_gains(channels, beamformers, excitations, precoders):
    """z[u, q, k] = sum_b h_{b,u}^H[k] W_b[k] H_{f,b}[k] v_{b,q}[k]."""
    # (B, K, N_f, 1) per precoder column applied through W H_f
    wx = np.einsum("bkni,bqki->bqkn", np.einsum("bknm,bkmi->bkni",
                                                np.asarray(beamformers),
                                                np.asarray(excitations)),
                   np.asarray(precoders))
    return np.einsum("bukn,bqkn->uqk", np.conj(np.asarray(channels)), wx)
