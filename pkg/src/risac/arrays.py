"""Uniform linear array steering vectors and their angle derivatives.

All arrays use centered element indices m_k = k - (L-1)/2 so that the
derivative vector is exactly orthogonal to the steering vector for any
element count, which the angle-CRB expressions rely on. Broadside is 0 rad
and angles grow toward the positive array axis.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

__all__ = ["UlaGeometry", "SteeringVector", "steering_vector", "steering_derivative"]


@dataclasses.dataclass(frozen=True)
class UlaGeometry:
    """Uniform linear array of ``num_elements`` with spacing in wavelengths."""

    num_elements: int
    spacing_wavelengths: float = 0.5

    def __post_init__(self):
        if int(self.num_elements) != self.num_elements or self.num_elements < 1:
            raise ValueError("num_elements must be an integer >= 1")
        if not self.spacing_wavelengths > 0:
            raise ValueError("spacing_wavelengths must be positive")

    @property
    def element_offsets(self) -> np.ndarray:
        # m_k = k - (L-1)/2; symmetric around zero, so sum(m_k) = 0.
        return np.arange(self.num_elements) - (self.num_elements - 1) / 2.0


@dataclasses.dataclass(eq=False)
class SteeringVector:
    """Array response toward ``angle``; entries are unit modulus, norm^2 = L."""

    entries: np.ndarray
    angle: float
    geometry: UlaGeometry

    def __array__(self, dtype=None):
        return np.asarray(self.entries, dtype=dtype)

    def __len__(self):
        return self.entries.shape[0]


def _check_angle(angle: float) -> float:
    angle = float(angle)
    if not math.isfinite(angle):
        raise ValueError(f"angle must be finite, got {angle!r}")
    return angle


def steering_vector(geom: UlaGeometry, angle: float) -> SteeringVector:
    """Steering vector with entries exp(j*2*pi*spacing*m_k*sin(angle))."""
    angle = _check_angle(angle)
    phase = 2.0 * np.pi * geom.spacing_wavelengths * geom.element_offsets * np.sin(angle)
    return SteeringVector(np.exp(1j * phase), angle, geom)


def steering_derivative(geom: UlaGeometry, angle: float) -> np.ndarray:
    """Elementwise derivative of the steering vector with respect to angle.

    With centered indices the result is exactly orthogonal (Hermitian sense)
    to the steering vector at the same angle.
    """
    angle = _check_angle(angle)
    offs = geom.element_offsets
    scale = 2.0 * np.pi * geom.spacing_wavelengths
    phase = scale * offs * np.sin(angle)
    return 1j * scale * offs * np.cos(angle) * np.exp(1j * phase)
