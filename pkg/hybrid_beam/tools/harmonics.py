"""
Harmonic coefficients of periodic interface signals.

A signal sampled over exactly ``n`` periods of ``omega`` is represented by
complex coefficients ``c_k`` with ``x(t) = Re(sum_k c_k exp(i k 2pi omega t))``,
so the cosine and sine amplitudes of harmonic ``k`` are ``Re c_k`` and
``-Im c_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from ..config import SAMPLE_PERIOD
from ..core import InvalidArgumentError, period_samples

VOLTAGE_CHANNELS = ("v_front", "v_back")
DISPLACEMENT_CHANNELS = ("u", "phi")
FORCE_CHANNELS = ("shear", "moment")


@dataclass(frozen=True)
class HarmonicVector:
    """Per-channel, per-harmonic complex coefficients at fundamental ``omega`` (kHz).

    ``coeffs`` has shape ``(len(channels), n_harmonics + 1)``; column 0 is
    the mean value and is kept real.
    """

    omega: float
    channels: tuple[str, ...]
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=complex, copy=True)
        if coeffs.ndim != 2 or coeffs.shape[0] != len(self.channels) or coeffs.shape[1] < 1:
            raise InvalidArgumentError(
                f"coefficients of shape {coeffs.shape} do not match channels {self.channels}"
            )
        coeffs[:, 0] = coeffs[:, 0].real
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, omega: float, channels: Sequence[str], n_harmonics: int) -> "HarmonicVector":
        return cls(omega, tuple(channels), np.zeros((len(channels), n_harmonics + 1), dtype=complex))

    @property
    def n_harmonics(self) -> int:
        return self.coeffs.shape[1] - 1

    def channel(self, name: str) -> np.ndarray:
        return self.coeffs[self.channels.index(name)]

    def harmonic(self, k: int) -> np.ndarray:
        return self.coeffs[:, k].copy()

    def with_harmonic(self, k: int, values: Sequence[complex]) -> "HarmonicVector":
        coeffs = self.coeffs.copy()
        coeffs[:, k] = values
        return HarmonicVector(self.omega, self.channels, coeffs)

    def amplitude(self, name: str, k: int = 1) -> float:
        return float(abs(self.channel(name)[k]))

    def phase(self, name: str, k: int = 1) -> float:
        return float(np.angle(self.channel(name)[k]))

    def _conforms(self, other: "HarmonicVector"):
        if not isinstance(other, HarmonicVector):
            raise InvalidArgumentError(f"cannot combine HarmonicVector with {type(other).__name__}")
        if (
            self.channels != other.channels
            or self.coeffs.shape != other.coeffs.shape
            or not math.isclose(self.omega, other.omega, rel_tol=1e-12)
        ):
            raise InvalidArgumentError("harmonic vectors do not conform")

    def __add__(self, other: "HarmonicVector") -> "HarmonicVector":
        self._conforms(other)
        return HarmonicVector(self.omega, self.channels, self.coeffs + other.coeffs)

    def __sub__(self, other: "HarmonicVector") -> "HarmonicVector":
        self._conforms(other)
        return HarmonicVector(self.omega, self.channels, self.coeffs - other.coeffs)

    def __mul__(self, factor: float) -> "HarmonicVector":
        return HarmonicVector(self.omega, self.channels, self.coeffs * factor)

    __rmul__ = __mul__

    def __neg__(self) -> "HarmonicVector":
        return self * -1.0

    def to_real(self, weights: Optional[Sequence[float]] = None) -> np.ndarray:
        """Harmonics 1..N_H flattened as [Re, Im] per channel per harmonic."""
        w = np.ones(len(self.channels)) if weights is None else np.asarray(weights, dtype=float)
        scaled = self.coeffs[:, 1:] * w[:, None]
        # harmonic-major order: k=1 (ch0 Re, ch0 Im, ch1 Re, ...), k=2 ...
        pairs = np.stack([scaled.real.T, scaled.imag.T], axis=-1)
        return pairs.reshape(-1)

    @classmethod
    def from_real(
        cls,
        omega: float,
        channels: Sequence[str],
        vector: Sequence[float],
        weights: Optional[Sequence[float]] = None,
        mean: Optional[Sequence[float]] = None,
    ) -> "HarmonicVector":
        vector = np.asarray(vector, dtype=float)
        n_ch = len(channels)
        if vector.size % (2 * n_ch):
            raise InvalidArgumentError(f"vector of length {vector.size} does not fit {n_ch} channels")
        n_h = vector.size // (2 * n_ch)
        pairs = vector.reshape(n_h, n_ch, 2)
        coeffs = np.zeros((n_ch, n_h + 1), dtype=complex)
        coeffs[:, 1:] = (pairs[..., 0] + 1j * pairs[..., 1]).T
        if weights is not None:
            coeffs[:, 1:] /= np.asarray(weights, dtype=float)[:, None]
        if mean is not None:
            coeffs[:, 0] = mean
        return cls(omega, tuple(channels), coeffs)

    def norm(self, weights: Optional[Sequence[float]] = None) -> float:
        """Euclidean norm over Re/Im of harmonics 1..N_H."""
        return float(np.linalg.norm(self.to_real(weights)))

    def to_dict(self) -> dict:
        return {
            "omega_khz": self.omega,
            "channels": list(self.channels),
            "re": self.coeffs.real.tolist(),
            "im": self.coeffs.imag.tolist(),
        }


def extract_harmonics(
    window: Union[np.ndarray, Mapping[str, np.ndarray]],
    omega: float,
    n: int,
    n_harmonics: int,
    dt: float = SAMPLE_PERIOD,
    channels: Optional[Sequence[str]] = None,
) -> HarmonicVector:
    """Synchronous Fourier projection of a window of exactly ``n`` periods.

    ``c_k = (2 - delta_k0) / N * sum_j x_j exp(-i k 2pi omega t_j)`` with
    ``t_j = j dt``, which is the least-squares fit of the truncated series.

    Args:
        window: samples of shape ``(channels, N)``, or a mapping of channel
            name to samples.
        omega: fundamental frequency (kHz), commensurate with ``dt``.
        n: number of whole periods in the window.
        n_harmonics: highest harmonic kept.
        dt: sample period (ms).
        channels: channel names when ``window`` is an array.

    Raises:
        InvalidArgumentError: if the window is not exactly ``n`` whole periods.
    """
    if isinstance(window, Mapping):
        channels = tuple(window)
        samples = np.vstack([np.asarray(window[c], dtype=float) for c in channels])
    else:
        samples = np.atleast_2d(np.asarray(window, dtype=float))
        channels = tuple(channels) if channels is not None else tuple(f"ch{j}" for j in range(len(samples)))
    if n < 1:
        raise InvalidArgumentError(f"window must span at least one period, got n={n}")
    period = period_samples(omega, dt)
    if abs(period * omega * dt - 1.0) > 1e-9:
        raise InvalidArgumentError(
            f"period of {omega} kHz is not a whole number of {dt} ms samples"
        )
    N = samples.shape[1]
    if N != n * period:
        raise InvalidArgumentError(f"window of {N} samples is not {n} periods of {period} samples")
    if not 0 <= n_harmonics < period / 2:
        raise InvalidArgumentError(f"harmonic {n_harmonics} not resolved by {period} samples per period")

    spectrum = np.fft.rfft(samples, axis=1)
    bins = n * np.arange(n_harmonics + 1)
    coeffs = spectrum[:, bins] * (2.0 / N)
    coeffs[:, 0] = spectrum[:, 0].real / N
    return HarmonicVector(omega, channels, coeffs)


def harmonic_angles(
    theta: float, n_harmonics: int, scaling: Union[str, Sequence[float]] = "proportional"
) -> np.ndarray:
    """Phase advance per harmonic 0..N_H (0 for the mean)."""
    if isinstance(scaling, str):
        k = np.arange(n_harmonics + 1, dtype=float)
        if scaling == "proportional":
            return theta * k
        if scaling == "constant":
            return np.where(k > 0, theta, 0.0)
        raise InvalidArgumentError(f"unknown phase scaling '{scaling}'")
    angles = np.asarray(scaling, dtype=float)
    if angles.shape != (n_harmonics,):
        raise InvalidArgumentError(f"expected {n_harmonics} per-harmonic angles")
    return np.concatenate([[0.0], angles])


def compensate_phase(
    h: HarmonicVector, theta: float, scaling: Union[str, Sequence[float]] = "proportional"
) -> HarmonicVector:
    """Advance every harmonic ``k`` by ``theta_k`` (multiply by ``exp(i theta_k)``).

    ``scaling`` is ``"proportional"`` (theta_k = k theta, a pure delay),
    ``"constant"`` (theta_k = theta) or an explicit list of N_H angles, in
    which case ``theta`` is ignored.
    """
    angles = harmonic_angles(theta, h.n_harmonics, scaling)
    return HarmonicVector(h.omega, h.channels, h.coeffs * np.exp(1j * angles)[None, :])


def reconstruct_signal(h: HarmonicVector, t: Sequence[float]) -> np.ndarray:
    """Time signals (channels x len(t)) rebuilt from the harmonics."""
    t = np.asarray(t, dtype=float)
    k = np.arange(h.n_harmonics + 1)
    phasors = np.exp(1j * 2.0 * math.pi * h.omega * np.outer(k, t))
    return (h.coeffs @ phasors).real


def period_average(samples: np.ndarray, period: int) -> np.ndarray:
    """Period-synchronous average of a window of whole periods (last axis)."""
    samples = np.asarray(samples)
    if samples.shape[-1] % period:
        raise InvalidArgumentError("window is not a whole number of periods")
    shape = samples.shape[:-1] + (samples.shape[-1] // period, period)
    return samples.reshape(shape).mean(axis=-2)
