"""Errors and unit helpers shared by every hybrid_beam module."""

import math

import numpy as np


class HybridBeamError(Exception):
    """Base class of all errors raised by hybrid_beam."""


class InvalidArgumentError(HybridBeamError, ValueError):
    """An argument violates the documented precondition of an operation."""


class NumericalFailureError(HybridBeamError, RuntimeError):
    """A numerical solve failed or returned a meaningless result."""


class NearPoleError(NumericalFailureError):
    """Condensation attempted too close to a clamped-interface resonance.

    Attributes:
        s: Laplace point (1/ms) at which the bulk block became singular.
        condition: condition number of the bulk block at ``s``.
    """

    def __init__(self, s: complex, condition: float):
        self.s = complex(s)
        self.condition = float(condition)
        super().__init__(
            f"bulk block numerically singular at s={self.s:.6g} "
            f"(condition number {self.condition:.3g})"
        )


def khz_to_hz(value):
    """Convert kHz to Hz (scalars and arrays)."""
    return np.asarray(value) * 1000.0 if np.ndim(value) else float(value) * 1000.0


def hz_to_khz(value):
    """Convert Hz to kHz (scalars and arrays)."""
    return np.asarray(value) / 1000.0 if np.ndim(value) else float(value) / 1000.0


def angular(f_khz: float) -> float:
    """Angular frequency in rad/ms of a frequency given in kHz."""
    return 2.0 * math.pi * f_khz


def period_samples(omega: float, dt: float) -> int:
    """Number of samples in one period of ``omega`` (kHz) at step ``dt`` (ms).

    Raises:
        InvalidArgumentError: if the period is shorter than two samples.
    """
    if omega <= 0 or dt <= 0:
        raise InvalidArgumentError("frequency and sample period must be positive")
    samples = int(round(1.0 / (omega * dt)))
    if samples < 2:
        raise InvalidArgumentError(
            f"frequency {omega} kHz is not resolved at dt={dt} ms"
        )
    return samples


def snap_frequency(omega: float, dt: float) -> float:
    """Snap ``omega`` (kHz) so that its period is a whole number of samples."""
    return 1.0 / (period_samples(omega, dt) * dt)


def wrap_phase(angle):
    """Wrap an angle to the interval (-pi, pi]."""
    wrapped = np.angle(np.exp(1j * np.asarray(angle, dtype=float)))
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped
