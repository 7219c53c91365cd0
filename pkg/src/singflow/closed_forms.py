"""Closed-form evaluators for linear fields.

Covers the decay of the generalized rescaled linear Poincare flow along
the two-dimensional center of a diagonal model, and the planar rescaled
Poincare map written in moving orthogonal frames: its return-time slope
``tau'(0)`` and its second derivative at ``y = 0`` for the diagonal, Jordan
and focus types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence
from .fields import expm_matrix
from .poincare import BRACKET, MAX_ITER, NEWTON_TOL

__all__ = [
    "perp",
    "center_vectors",
    "psi_star_center_formula",
    "MovingFrameResult",
    "moving_frame_map",
    "tau_prime_zero",
    "second_derivative_general",
    "second_derivative_diagonal",
    "diagonal_S",
    "jordan_leading_coefficient",
    "SecondDerivReport",
    "second_derivative_check",
]


def perp(w) -> np.ndarray:
    """Counterclockwise quarter rotation ``(a, b) -> (-b, a)``."""
    return np.array([-w[1], w[0]], dtype=float)


def center_vectors(theta: float, dim: int = 4, cs: int = 1, cu: int = 2):
    """``u = cos(theta) e_cs + sin(theta) e_cu`` and ``v = -sin(theta) e_cs + cos(theta) e_cu``."""
    u = np.zeros(dim)
    v = np.zeros(dim)
    u[cs], u[cu] = math.cos(theta), math.sin(theta)
    v[cs], v[cu] = -math.sin(theta), math.cos(theta)
    return u, v


def psi_star_center_formula(lam_cs: float, lam_cu: float, theta: float, t: float) -> np.ndarray:
    """``psi*_t(v)`` for ``u, v`` in the center plane of ``diag(ss, lam_cs, lam_cu, uu)``.

    With ``a = lam_cs``, ``b = lam_cu``, ``c = cos(theta)``, ``s = sin(theta)``
    and ``w = (a e^{at} c, b e^{bt} s)``:

        sqrt(a^2 c^2 + b^2 s^2) e^{(a+b)t} (a c^2 + b s^2) / |w|^3 * (-b e^{bt} s, a e^{at} c)

    in the ``(e_cs, e_cu)`` coordinates. For ``a = -1, b = 1`` this is

        (cos^2 th - sin^2 th) / (e^{-2t} cos^2 th + e^{2t} sin^2 th)^{3/2}
            * (e^t sin th, e^{-t} cos th).

    Returned as a 4-vector ``(0, cs, cu, 0)``.
    """
    if not lam_cs < 0 < lam_cu:
        raise ValueError("need lam_cs < 0 < lam_cu")
    a, b = lam_cs, lam_cu
    c, s = math.cos(theta), math.sin(theta)
    ea, eb = math.exp(a * t), math.exp(b * t)
    w2 = (a * ea * c) ** 2 + (b * eb * s) ** 2
    pref = math.hypot(a * c, b * s) * math.exp((a + b) * t) * (a * c * c + b * s * s) / w2**1.5
    return pref * np.array([0.0, -b * eb * s, a * ea * c, 0.0])


# ---------------------------------------------------------------------------
# Planar maps in moving frames
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MovingFrameResult:
    value: float
    tau: float
    frame_out: np.ndarray


def _planar(A, u):
    A = np.asarray(A, dtype=float)
    u = np.asarray(u, dtype=float)
    if A.shape != (2, 2) or u.shape != (2,):
        raise ValueError("expected a 2x2 matrix and a 2-vector")
    if abs(np.linalg.norm(u) - 1) > 1e-12:
        raise ValueError("u must be a unit vector")
    return A, u


def moving_frame_map(A, u, t: float, y: float) -> MovingFrameResult:
    """Scalar map ``F*_{t,u}`` between the frames ``(Au)^perp`` and ``(Ae^{tA}u)^perp``.

    Solves the planar return-time condition

        < e^{(tau+t)A}(y (Au)^perp + u) - e^{tA} u , A e^{tA} u > = 0

    by Newton's method (residual normalised so that its ``tau``-slope is
    one at ``y = 0``) and returns the coefficient of the image on the
    outgoing frame vector.
    """
    A, u = _planar(A, u)
    Et = expm_matrix(A, t)
    w = A @ Et @ u
    ww = float(w @ w)
    b = Et @ (y * perp(A @ u) + u)
    base = Et @ u

    def leg(tau):
        return expm_matrix(A, tau) @ b

    def h(tau):
        return float((leg(tau) - base) @ w) / ww

    tau = 0.0
    r = h(tau)
    it = 0
    while abs(r) > NEWTON_TOL * max(1.0, np.linalg.norm(base) / math.sqrt(ww)):
        it += 1
        if it > MAX_ITER:
            raise NoConvergence(f"moving-frame return time did not converge (|h|={abs(r):.3g})")
        d = float((A @ leg(tau)) @ w) / ww
        tau -= r / d
        if abs(tau) > BRACKET or not math.isfinite(tau):
            raise NoConvergence("moving-frame return time left the bracket")
        r = h(tau)
    m = perp(w) / math.sqrt(ww)
    value = float((leg(tau) - base) @ m) / math.sqrt(ww)
    return MovingFrameResult(value, tau, m)


def tau_prime_zero(A, u, t: float) -> float:
    """``d tau / dy`` at ``y = 0``: ``-<e^{tA}(Au)^perp, Ae^{tA}u> / |Ae^{tA}u|^2``."""
    A, u = _planar(A, u)
    E = expm_matrix(A, t)
    w = A @ E @ u
    return -float((E @ perp(A @ u)) @ w) / float(w @ w)


def second_derivative_general(A, u, t: float) -> float:
    """``F*''_{t,u}(0)`` from the four inner products.

        2 <A e^{tA}(Au)^perp, (Ae^{tA}u)^perp> / |Ae^{tA}u|^2 * tau'
          + <A^2 e^{tA} u, (Ae^{tA}u)^perp> / |Ae^{tA}u|^2 * tau'^2
    """
    A, u = _planar(A, u)
    E = expm_matrix(A, t)
    w = A @ E @ u
    ww = float(w @ w)
    wp = perp(w)
    tp = -float((E @ perp(A @ u)) @ w) / ww
    first = float((A @ E @ perp(A @ u)) @ wp) / ww
    second = float((A @ A @ E @ u) @ wp) / ww
    return 2.0 * first * tp + second * tp * tp


def diagonal_S(l1, x1, l2, x2):
    return (2 * l1**2 * x1**2 + l2**2 * x2**2 + l1 * l2 * x2**2) * l1 * x1**2


def second_derivative_diagonal(l1: float, l2: float, x1: float, x2: float, t: float) -> float:
    """``F*''(0)`` for ``A = diag(l1, l2)`` and ``u = (x1, x2)``, fully expanded."""
    e1, e2 = math.exp(2 * t * l1), math.exp(2 * t * l2)
    num = l1**2 * l2**2 * x1 * x2 * math.exp(t * (l1 + l2)) * (e1 - e2)
    den = (l1**2 * x1**2 * e1 + l2**2 * x2**2 * e2) ** 3
    return num / den * (diagonal_S(l1, x1, l2, x2) * e1 + diagonal_S(l2, x2, l1, x1) * e2)


def jordan_leading_coefficient(lam, x1, x2):
    """Displayed leading-``t`` coefficient of ``F*''(0)`` for ``[[lam, 0], [1, lam]]``.

    Pure arithmetic, so ``fractions.Fraction`` inputs give an exact result.
    """
    q = (2 * lam**2 + 1) * x1**2 + 3 * lam * x1 * x2 + 2 * lam**2 * x2**2
    return lam**4 * x1**3 * (lam * x2 + x1) * q / (lam**2 * x1**2 + (lam * x2 + x1) ** 2) ** 3


@dataclass(frozen=True)
class SecondDerivReport:
    closed_form: float
    finite_diff: float
    rel_err: float


def second_derivative_check(A, u, t: float, h: float = 1e-3) -> SecondDerivReport:
    """Compare the inner-product formula with ``(F*(h) - 2F*(0) + F*(-h)) / h^2``."""
    cf = second_derivative_general(A, u, t)
    fp = moving_frame_map(A, u, t, h).value
    f0 = moving_frame_map(A, u, t, 0.0).value
    fm = moving_frame_map(A, u, t, -h).value
    fd = (fp - 2 * f0 + fm) / (h * h)
    return SecondDerivReport(cf, fd, abs(cf - fd) / max(1.0, abs(cf)))

