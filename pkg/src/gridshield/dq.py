"""Two-axis (direct/quadrature) electrical quantities and the 90-degree
rotation operator used throughout the rotating-frame models."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class DqVector:
    """A dq-frame 2-vector (current or voltage); both components finite."""

    d: float
    q: float

    def __post_init__(self):
        if not (math.isfinite(self.d) and math.isfinite(self.q)):
            raise ValidationError(f"DqVector components must be finite, got ({self.d}, {self.q})")

    def __add__(self, other: "DqVector") -> "DqVector":
        return DqVector(self.d + other.d, self.q + other.q)

    def __sub__(self, other: "DqVector") -> "DqVector":
        return DqVector(self.d - other.d, self.q - other.q)

    def scale(self, a: float) -> "DqVector":
        return DqVector(a * self.d, a * self.q)

    def norm(self) -> float:
        return math.hypot(self.d, self.q)

    def as_array(self) -> np.ndarray:
        return np.array([self.d, self.q])


class RotationJ:
    """The constant skew operator [[0, 1], [-1, 0]].

    Satisfies J @ J == -I and x . (J x) == 0 for every dq vector x.
    """

    matrix = np.array([[0.0, 1.0], [-1.0, 0.0]])

    @staticmethod
    def apply(x: DqVector) -> DqVector:
        return apply_j(x)


#: Module-level alias for the rotation matrix.
J = RotationJ.matrix


def apply_j(x: DqVector) -> DqVector:
    """Rotate a dq vector by -90 degrees: (d, q) -> (q, -d)."""
    return DqVector(x.q, -x.d)


def dot(x: DqVector, y: DqVector) -> float:
    """Euclidean inner product of two dq vectors."""
    return x.d * y.d + x.q * y.q
