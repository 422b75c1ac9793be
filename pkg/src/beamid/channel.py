"""Uniform linear array, beam codebook, and per-beam receive power.

The basestation sweeps a pre-defined codebook of Q unit-norm beams over a
single-path line-of-sight channel and records one power value per beam.
Products use the plain transpose (h^T f), so codebook entries store
conjugated steering vectors and the magnitude peaks on the aligned beam.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class ArrayConfig:
    """Receive array geometry and the angular span its codebook covers."""

    m: int = 16
    element_spacing: float = 0.5  # fraction of wavelength
    boresight_rad: float = 0.0  # 0 = camera boresight
    fov_deg: float = 110.0

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ConfigError(f"antenna count must be >= 1, got {self.m}")
        if not 0.0 < self.element_spacing <= 1.0:
            raise ConfigError(f"element spacing must be in (0, 1], got {self.element_spacing}")
        if not 0.0 < self.fov_deg < 180.0:
            raise ConfigError(f"codebook span must be in (0, 180) deg, got {self.fov_deg}")


@dataclass(frozen=True)
class NoiseConfig:
    """Link budget: symbol power, receiver noise, and subcarrier count.

    ``cyclic_prefix`` is carried for config fidelity only; no computation
    reads it.  ``sidelobe_floor`` adds the given fraction of the mean beam
    power to every beam, modeling leakage of a non-ideal beam pattern.
    """

    symbol_power: float = 1.0
    noise_variance: float = 3.0
    subcarriers: int = 1
    cyclic_prefix: int = 0
    sidelobe_floor: float = 0.0
    range_ref_m: float = 20.0  # range at which the path gain is unity

    def __post_init__(self) -> None:
        if self.symbol_power <= 0.0:
            raise ConfigError(f"symbol power must be > 0, got {self.symbol_power}")
        if self.noise_variance < 0.0:
            raise ConfigError(f"noise variance must be >= 0, got {self.noise_variance}")
        if self.subcarriers < 1:
            raise ConfigError(f"subcarrier count must be >= 1, got {self.subcarriers}")
        if self.sidelobe_floor < 0.0:
            raise ConfigError(f"sidelobe floor must be >= 0, got {self.sidelobe_floor}")
        if self.range_ref_m <= 0.0:
            raise ConfigError(f"reference range must be > 0, got {self.range_ref_m}")


@dataclass(frozen=True)
class BeamCodebook:
    """Q conjugated, unit-norm steering vectors and the angles they point at."""

    beams: np.ndarray  # (Q, M) complex
    beam_angles: np.ndarray  # (Q,) radians, strictly increasing

    @property
    def q(self) -> int:
        return self.beams.shape[0]

    @property
    def m(self) -> int:
        return self.beams.shape[1]


@dataclass(frozen=True)
class ChannelVector:
    """Per-subcarrier channel rows; flat LOS keeps all K rows identical."""

    h: np.ndarray  # (K, M) complex
    alpha: complex
    user_azimuth: float


@dataclass(frozen=True)
class PowerVector:
    """One nonnegative receive power per codebook beam at frame t."""

    p: np.ndarray  # (Q,)
    t: int = 0

    @property
    def q(self) -> int:
        return self.p.shape[0]


def steering_vector(array: ArrayConfig, azimuth: float) -> np.ndarray:
    """Array response to a plane wave from ``azimuth`` (relative to boresight).

    Element m carries phase 2*pi*spacing*m*sin(azimuth).
    """
    m = np.arange(array.m)
    return np.exp(1j * 2.0 * np.pi * array.element_spacing * m * math.sin(azimuth))


def dft_codebook(array: ArrayConfig, q: int) -> BeamCodebook:
    """Build an oversampled codebook uniform in sin-space over the array span.

    Beam q stores conj(steering(angle_q)) / sqrt(M), so the transpose product
    h^T f_q is maximized when the user azimuth equals beam_angles[q].
    """
    if q < 1:
        raise ConfigError(f"codebook size must be >= 1, got {q}")
    half_span = math.sin(math.radians(array.fov_deg) / 2.0)
    if q == 1:
        sin_grid = np.array([0.0])
    else:
        sin_grid = np.linspace(-half_span, half_span, q)
    relative = np.arcsin(sin_grid)
    beams = np.empty((q, array.m), dtype=complex)
    for i, ang in enumerate(relative):
        beams[i] = np.conj(steering_vector(array, float(ang))) / math.sqrt(array.m)
    return BeamCodebook(beams=beams, beam_angles=array.boresight_rad + relative)


def los_channel(
    user_xy: tuple[float, float],
    array: ArrayConfig,
    cfg: NoiseConfig,
    rng: np.random.Generator,
) -> ChannelVector:
    """Single line-of-sight path with free-space amplitude and random phase.

    |alpha|^2 = (range_ref / range)^2 and all K subcarrier rows are equal.
    """
    x, y = user_xy
    if y <= 0.0:
        raise ValueError(f"user must be in front of the array, got y={y}")
    azimuth = math.atan2(x, y)
    range_m = math.hypot(x, y)
    amplitude = cfg.range_ref_m / range_m
    phase = rng.uniform(0.0, 2.0 * np.pi)
    alpha = amplitude * complex(math.cos(phase), math.sin(phase))
    row = alpha * steering_vector(array, azimuth - array.boresight_rad)
    h = np.tile(row, (cfg.subcarriers, 1))
    return ChannelVector(h=h, alpha=alpha, user_azimuth=azimuth)


def receive_power(
    h: ChannelVector,
    codebook: BeamCodebook,
    cfg: NoiseConfig,
    rng: np.random.Generator,
    t: int = 0,
) -> PowerVector:
    """Sweep every beam and average |h_k^T f_q * x + n_qk|^2 over subcarriers.

    x = sqrt(P); noise is fresh complex Gaussian per (beam, subcarrier) draw.
    The noiseless path (variance 0) consumes no randomness and reduces to
    P * mean_k |h_k^T f_q|^2.
    """
    if h.h.shape[1] != codebook.m:
        raise ConfigError(
            f"channel has {h.h.shape[1]} elements but codebook expects {codebook.m}"
        )
    x = math.sqrt(cfg.symbol_power)
    signal = (h.h @ codebook.beams.T) * x  # (K, Q)
    if cfg.noise_variance > 0.0:
        scale = math.sqrt(cfg.noise_variance / 2.0)
        noise = rng.normal(0.0, scale, signal.shape) + 1j * rng.normal(0.0, scale, signal.shape)
        received = signal + noise
    else:
        received = signal
    p = np.mean(np.abs(received) ** 2, axis=0)
    if cfg.sidelobe_floor > 0.0:
        clean = np.mean(np.abs(signal) ** 2, axis=0)
        p = p + cfg.sidelobe_floor * float(np.mean(clean))
    return PowerVector(p=p, t=t)


def best_beam(p: PowerVector | np.ndarray) -> int:
    """Index of the strongest beam; ties break toward the lowest index."""
    values = p.p if isinstance(p, PowerVector) else np.asarray(p)
    if values.size == 0:
        raise ValueError("empty power vector")
    return int(np.argmax(values))
