"""Polar blowup of the singularity at the origin.

Points of the blown-up chart are pairs ``(u, s)`` with ``u`` on the unit
sphere and ``s >= 0``; ``J(u, s) = s u`` maps them back to ``R^n``. Over
``s = 0`` the pairs ``(u, 0)`` and ``(-u, 0)`` are identified, so the
boundary sphere is the projective space of directions at the singularity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Field, SmoothField, expm
from .flow import DEFAULT_TOL, flow

__all__ = [
    "BlowupPoint",
    "LiftedVector",
    "canonical_direction",
    "lift_field",
    "lift_flow",
    "DEFAULT_CHART_RADIUS",
]

DEFAULT_CHART_RADIUS = 1.0
UNIT_TOL = 1e-12
SIGN_TOL = 1e-12


def canonical_direction(u) -> np.ndarray:
    """Sign representative of ``<u>`` whose first nonzero coordinate is positive."""
    u = np.asarray(u, dtype=float)
    for c in u:
        if abs(c) > SIGN_TOL:
            return u if c > 0 else -u
    return u


@dataclass(frozen=True, eq=False)
class BlowupPoint:
    u: np.ndarray
    s: float = 0.0

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if abs(np.linalg.norm(u) - 1.0) > UNIT_TOL:
            raise ValueError(f"u must be a unit vector (||u|| = {np.linalg.norm(u)!r})")
        if self.s < 0:
            raise ValueError("s must be nonnegative")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "s", float(self.s))

    @classmethod
    def from_direction(cls, w, s: float = 0.0) -> "BlowupPoint":
        w = np.asarray(w, dtype=float)
        return cls(w / np.linalg.norm(w), s)

    @classmethod
    def from_point(cls, x) -> "BlowupPoint":
        """Inverse of :meth:`point` away from the origin."""
        x = np.asarray(x, dtype=float)
        r = float(np.linalg.norm(x))
        if r == 0:
            raise ValueError("the origin has no unique preimage; give a direction")
        return cls(x / r, r)

    @property
    def dim(self) -> int:
        return self.u.size

    def point(self) -> np.ndarray:
        """``J(u, s) = s u``."""
        return self.s * self.u

    def canonical(self) -> "BlowupPoint":
        if self.s > 0:
            return self
        return BlowupPoint(canonical_direction(self.u), 0.0)

    def key(self, digits: int = 10) -> tuple:
        c = self.canonical()
        return (round(c.s, digits),) + tuple(round(float(v), digits) + 0.0 for v in c.u)

    def isclose(self, other: "BlowupPoint", tol: float = 1e-12) -> bool:
        if abs(self.s - other.s) > tol:
            return False
        if self.s > 0 or other.s > 0:
            return bool(np.linalg.norm(self.u - other.u) <= tol)
        d = min(np.linalg.norm(self.u - other.u), np.linalg.norm(self.u + other.u))
        return bool(d <= tol)

    def __eq__(self, other):
        if not isinstance(other, BlowupPoint):
            return NotImplemented
        return self.isclose(other)

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"BlowupPoint(u={np.array2string(self.u, precision=6)}, s={self.s:g})"


@dataclass(frozen=True)
class LiftedVector:
    """Tangent vector to ``S^{n-1} x [0, inf)``.

    ``tangential`` lies in ``T_u S^{n-1}`` (orthogonal to ``u``) and
    ``radial`` is the component along the ``s`` axis.
    """

    tangential: np.ndarray
    radial: float


def lift_field(field: Field, p: BlowupPoint) -> LiftedVector:
    """The lifted field at ``p``.

    For ``s > 0`` the tangential part is the component of ``X(su)``
    orthogonal to ``u`` divided by ``s``; on the boundary it is the
    orthogonal projection of ``DX(0) u`` onto ``<u>^perp``.
    """
    u, s = p.u, p.s
    Au = field.linear.matrix @ u
    if s > 0:
        # X(su)/s = Au + f(su)/s, which stays accurate as s -> 0
        Xs = Au + field.remainder(s * u) / s if isinstance(field, SmoothField) else Au
        rad = float(Xs @ u)
        return LiftedVector(Xs - rad * u, s * rad)
    return LiftedVector(Au - (Au @ u) * u, 0.0)


def lift_flow(field: Field, p: BlowupPoint, t: float, tol: float = DEFAULT_TOL,
              chart_radius: float | None = DEFAULT_CHART_RADIUS) -> BlowupPoint:
    """Image of ``p`` under the lifted flow at time ``t``.

    Over the singularity the direction is moved by the normalised tangent
    flow ``e^{tA} u / ||e^{tA} u||`` (no integration). Elsewhere the point
    ``s u`` is flowed and re-expressed in polar form.

    Raises
    ------
    ChartExit
        If the trajectory of ``s u`` leaves the ball of radius
        ``chart_radius`` (``None`` disables the check).
    """
    if p.s > 0:
        x = flow(field, p.point(), t, tol, with_tangent=False, chart_radius=chart_radius).endpoint
        return BlowupPoint.from_point(x)
    w = expm(field, t) @ p.u
    return BlowupPoint.from_direction(w, 0.0)
