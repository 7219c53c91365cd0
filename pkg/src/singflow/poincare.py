"""Extended rescaled Poincare maps.

For a regular point ``x = s u`` the rescaled map sends a normal vector
``y`` (orthogonal to ``X(x)``) to

    (phi_{t+tau}(x + ||X(x)|| y) - phi_t(x)) / ||X(phi_t(x))||

where the return-time correction ``tau`` puts the image back in the normal
space at ``phi_t(x)``. Over the singularity (``s = 0``) the same
construction with the tangent flow ``e^{tA}`` and the reference line
``<A u>`` gives the continuous extension; it depends on the linear part
only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.optimize import brentq

from .blowup import DEFAULT_CHART_RADIUS, BlowupPoint
from .errors import BracketingError, NoConvergence, NotNormalError
from .fields import Field, LinearField, PolynomialRemainder, SmoothField, expm
from .flow import DEFAULT_TOL, fixed_step_flow, flow

__all__ = [
    "NormalVector",
    "ReturnSolve",
    "LinearReductionReport",
    "normal_direction",
    "normal_basis",
    "project_normal",
    "eval_F",
    "solve_return_time",
    "rescaled_poincare",
    "psi_star",
    "domain_radius",
    "verify_linear_reduction",
]

NEWTON_TOL = 1e-12
MAX_ITER = 50
BRACKET = 0.5
NORMAL_TOL = 1e-10
# step cap of the fixed-step integration used for the tau leg
TAU_STEP = 0.01


def _unit(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    nrm = np.linalg.norm(u)
    if abs(nrm - 1.0) > 1e-12:
        raise ValueError(f"u must be a unit vector (||u|| = {nrm!r})")
    return u


def normal_direction(field: Field, u, s: float) -> np.ndarray:
    """Unit vector spanning the reference line at ``(u, s)``.

    ``X(s u)`` for ``s > 0`` and ``A u`` on the singular fiber.
    """
    u = np.asarray(u, dtype=float)
    w = field(s * u) if s > 0 else field.linear.matrix @ u
    return w / np.linalg.norm(w)


def normal_basis(field: Field, u, s: float) -> np.ndarray:
    """Orthonormal basis (rows) of the normal space at ``(u, s)``."""
    n = normal_direction(field, u, s)
    # complete n to an orthonormal basis; the trailing rows span n^perp
    Q, _ = np.linalg.qr(np.column_stack([n, np.eye(n.size)]))
    return Q[:, 1:n.size].T.copy()


def project_normal(field: Field, u, s: float, w) -> np.ndarray:
    n = normal_direction(field, u, s)
    w = np.asarray(w, dtype=float)
    return w - (w @ n) * n


@dataclass(frozen=True, eq=False)
class NormalVector:
    """A vector ``v`` in the (extended) normal space over ``base``."""

    base: BlowupPoint
    v: np.ndarray

    def normality_defect(self, field: Field) -> float:
        """``|<v, n>|`` for the unit reference direction ``n`` at the base."""
        n = normal_direction(field, self.base.u, self.base.s)
        return abs(float(np.asarray(self.v) @ n))

    def is_normal(self, field: Field, tol: float = NORMAL_TOL) -> bool:
        return self.normality_defect(field) <= tol * max(1.0, float(np.linalg.norm(self.v)))


@dataclass(frozen=True)
class ReturnSolve:
    tau: float
    residual: float
    iterations: int


class _ReturnProblem:
    """``F`` and ``H`` as functions of ``tau`` for fixed ``(t, u, s, y)``."""

    def __init__(self, field: Field, t: float, u, s: float, y, tol: float,
                 chart_radius: float | None):
        self.field = field
        self.t = float(t)
        self.u = u = _unit(u)
        self.s = s = float(s)
        self.y = y = np.asarray(y, dtype=float)
        self.tol = tol
        self.chart_radius = chart_radius
        if s > 0:
            x = s * u
            speed0 = np.linalg.norm(field(x))
            xt = flow(field, x, t, tol, with_tangent=False, chart_radius=chart_radius).endpoint
            if np.any(y):
                z = x + speed0 * y
                self.zt = flow(field, z, t, tol, with_tangent=False,
                               chart_radius=chart_radius).endpoint
            else:
                self.zt = xt.copy()
            Xt = field(xt)
            self.speed_t = float(np.linalg.norm(Xt))
            self.n = Xt / self.speed_t
            self.origin = xt
            self.image_base = BlowupPoint.from_point(xt)
        else:
            A = field.linear.matrix
            E = expm(field, t)
            w = A @ E @ u
            self.speed_t = float(np.linalg.norm(w))
            self.n = w / self.speed_t
            self.origin = E @ u
            self.zt = E @ (np.linalg.norm(A @ u) * y + u)
            self.image_base = BlowupPoint.from_direction(self.origin, 0.0)
        self.scale = max(1.0, float(np.linalg.norm(self.origin)) / self.speed_t)
        self._n_steps = None

    def _leg(self, tau: float) -> np.ndarray:
        if tau == 0:
            return self.zt
        if self.s == 0:
            return expm(self.field, tau) @ self.zt
        if isinstance(self.field, LinearField):
            return expm(self.field, tau) @ self.zt
        need = max(8, math.ceil(abs(tau) / TAU_STEP))
        if self._n_steps is None or need > self._n_steps:
            # fixed once per solve so that H stays smooth in tau
            self._n_steps = max(need, 16)
        return fixed_step_flow(self.field, self.zt, tau, self._n_steps)

    def F(self, tau: float) -> np.ndarray:
        return (self._leg(tau) - self.origin) / self.speed_t

    def H(self, tau: float) -> float:
        return float(self.F(tau) @ self.n)

    def dH(self, tau: float) -> float:
        p = self._leg(tau)
        if self.s == 0:
            vel = self.field.linear.matrix @ p
        else:
            vel = self.field(p)
        return float(vel @ self.n) / self.speed_t

    def solve(self) -> ReturnSolve:
        if not np.any(self.y):
            return ReturnSolve(0.0, abs(self.H(0.0)), 0)
        target = NEWTON_TOL * self.scale
        tau = 0.0
        h = self.H(tau)
        for it in range(1, MAX_ITER + 1):
            if abs(h) <= target:
                return ReturnSolve(tau, abs(h), it - 1)
            d = self.dH(tau)
            if not (d > 0 and math.isfinite(d)):
                break
            new = tau - h / d
            if abs(new) > BRACKET:
                break
            if new == tau:
                break
            tau = new
            h = self.H(tau)
        else:
            if abs(h) <= target:
                return ReturnSolve(tau, abs(h), MAX_ITER)
            raise NoConvergence(f"Newton on the return time did not converge (|H|={abs(h):.3g})")
        if abs(h) <= target:
            return ReturnSolve(tau, abs(h), it)
        return self._bisect(it)

    def _bisect(self, iters: int) -> ReturnSolve:
        self._n_steps = max(self._n_steps or 0, math.ceil(BRACKET / TAU_STEP))
        lo, hi = self.H(-BRACKET), self.H(BRACKET)
        if not (lo <= 0 <= hi or hi <= 0 <= lo):
            raise BracketingError(f"H has no sign change on |tau| <= {BRACKET}")
        tau, res = brentq(self.H, -BRACKET, BRACKET, xtol=1e-15, rtol=4.5e-16,
                          maxiter=MAX_ITER, full_output=True)
        h = abs(self.H(tau))
        if h > NEWTON_TOL * self.scale:
            raise NoConvergence(f"bisection fallback stalled at |H|={h:.3g}")
        return ReturnSolve(float(tau), h, iters + res.iterations)


def _check_normal(field, u, s, y):
    y = np.asarray(y, dtype=float)
    n = normal_direction(field, u, s)
    if abs(float(y @ n)) > NORMAL_TOL * max(1.0, float(np.linalg.norm(y))):
        raise NotNormalError(f"y is not normal at (u, s={s:g}): <y, n> = {float(y @ n):.3g}")


def eval_F(field: Field, t: float, u, s: float, tau: float, y, tol: float = DEFAULT_TOL,
           chart_radius: float | None = DEFAULT_CHART_RADIUS) -> np.ndarray:
    """The displacement map ``F(t, u, s, tau, y)`` before the return-time solve."""
    u = _unit(u)
    y = np.asarray(y, dtype=float)
    if s > 0:
        x = s * u
        speed0 = np.linalg.norm(field(x))
        kw = dict(with_tangent=False, chart_radius=chart_radius)
        xt = flow(field, x, t, tol, **kw).endpoint
        moved = flow(field, x + speed0 * y, tau + t, tol, **kw).endpoint
        return (moved - xt) / np.linalg.norm(field(xt))
    A = field.linear.matrix
    Et = expm(field, t)
    Ett = expm(field, tau + t)
    denom = np.linalg.norm(A @ Et @ u)
    return (np.linalg.norm(A @ u) / denom) * (Ett @ y) + (Ett @ u - Et @ u) / denom


def solve_return_time(field: Field, t: float, u, s: float, y, tol: float = DEFAULT_TOL,
                      chart_radius: float | None = DEFAULT_CHART_RADIUS) -> ReturnSolve:
    """Return-time correction ``tau`` with ``H(t, u, s, tau, y) = 0``.

    Newton's method from ``tau = 0`` using ``dH/dtau`` from the field
    velocity at the displaced endpoint, with a Brent bracket search on
    ``|tau| <= 0.5`` when Newton leaves the bracket or stalls.

    Raises
    ------
    NoConvergence, BracketingError, ChartExit
    """
    return _ReturnProblem(field, t, u, s, y, tol, chart_radius).solve()


def rescaled_poincare(field: Field, t: float, u, s: float, y, tol: float = DEFAULT_TOL,
                      chart_radius: float | None = DEFAULT_CHART_RADIUS, *, check: bool = True,
                      return_solve: bool = False):
    """Extended rescaled Poincare map ``P*(t, u, s, y)``.

    Parameters
    ----------
    field : LinearField or SmoothField
    t : float
        Flow time between the sections.
    u : array_like
        Unit direction; the base point is ``s u`` (or ``<u>`` when
        ``s = 0``).
    s : float
        Distance from the singularity, ``s >= 0``.
    y : array_like
        Normal vector at the base point.
    check : bool
        Reject ``y`` that is not normal (``NotNormalError``).
    return_solve : bool
        Also return the :class:`ReturnSolve`.

    Returns
    -------
    NormalVector
        Image vector, normal over the image base point.
    """
    if s < 0:
        raise ValueError("s must be nonnegative")
    if check:
        _check_normal(field, u, s, y)
    prob = _ReturnProblem(field, t, u, s, y, tol, chart_radius)
    sol = prob.solve()
    out = NormalVector(prob.image_base, prob.F(sol.tau))
    return (out, sol) if return_solve else out


def psi_star(field: Field, t: float, u, v, s: float = 0.0, tol: float = DEFAULT_TOL,
             chart_radius: float | None = DEFAULT_CHART_RADIUS) -> np.ndarray:
    """Generalized rescaled linear Poincare flow ``psi*_t(v)``.

    The tangent flow image of ``v`` projected orthogonally off the image
    reference line and divided by the growth of the reference line:

        psi*_t(v) = ||X(x)|| / ||X(phi_t x)|| * pi(Phi_t(x) v)

    with ``x = s u``; on the singular fiber ``X(x)`` is replaced by ``A u``
    and ``Phi_t`` by ``e^{tA}``. Components of ``v`` along the reference
    line are mapped onto the image reference line and removed by the
    projection, so ``v`` need not be normal.
    """
    u = _unit(u)
    v = np.asarray(v, dtype=float)
    if s > 0:
        x = s * u
        res = flow(field, x, t, tol, with_tangent=True, chart_radius=chart_radius)
        ref0 = field(x)
        ref = field(res.endpoint)
        image = res.tangent @ v
    else:
        A = field.linear.matrix
        E = expm(field, t)
        ref0 = A @ u
        ref = A @ E @ u
        image = E @ v
    rr = ref @ ref
    return (np.sqrt(ref0 @ ref0) / np.sqrt(rr)) * (image - (image @ ref) / rr * ref)


def domain_radius(field: Field, t: float, directions, s: float = 0.0, cap: float = 0.1,
                  levels: int = 12, tol: float = DEFAULT_TOL,
                  chart_radius: float | None = DEFAULT_CHART_RADIUS) -> float:
    """Largest ``cap * 2**-k`` on which every return-time solve converges.

    Each direction ``u`` is probed with ``y = +-r e`` for every vector
    ``e`` of an orthonormal normal basis. Returns ``0.0`` if even the
    smallest radius fails.
    """
    probes = [(np.asarray(u, float), normal_basis(field, u, s)) for u in directions]
    for k in range(levels):
        r = cap * 2.0**-k
        try:
            for u, basis in probes:
                for e in basis:
                    for sign in (1.0, -1.0):
                        solve_return_time(field, t, u, s, sign * r * e, tol, chart_radius)
        except (NoConvergence, BracketingError, ArithmeticError):
            continue
        return r
    return 0.0


@dataclass(frozen=True)
class LinearReductionReport:
    s_values: np.ndarray
    distances: np.ndarray
    order: float
    monotone: bool
    passed: bool
    limit: np.ndarray = dc_field(repr=False)


def verify_linear_reduction(linear: LinearField, remainder: PolynomialRemainder | None, t: float,
                            u, y, s_values, tol: float = DEFAULT_TOL,
                            chart_radius: float | None = None,
                            threshold: float = 1e-3) -> LinearReductionReport:
    """Distance between ``P*`` of ``A + f`` at ``s`` and ``P*`` of ``A`` on the singular fiber.

    ``y`` is a normal vector at ``(u, 0)``; at ``s > 0`` it is re-projected
    onto the normal space of the perturbed field. The decay order is the
    least-squares slope of ``log d`` against ``log s``.
    """
    u = _unit(u)
    field = linear if remainder is None else SmoothField(linear, remainder)
    limit = rescaled_poincare(linear, t, u, 0.0, y, tol).v
    s_values = np.asarray(sorted(s_values, reverse=True), dtype=float)
    d = []
    for s in s_values:
        ys = project_normal(field, u, s, y)
        img = rescaled_poincare(field, t, u, s, ys, tol, chart_radius).v
        d.append(np.linalg.norm(img - limit))
    d = np.array(d)
    monotone = bool(np.all(np.diff(d) <= 1e-13))
    pos = d > 0
    if pos.sum() >= 2:
        order = float(np.polyfit(np.log(s_values[pos]), np.log(d[pos]), 1)[0])
    else:
        order = math.inf
    passed = monotone and bool(d[-1] < threshold)
    return LinearReductionReport(s_values, d, order, monotone, passed, limit)
