"""Flow and tangent flow of a vector field.

Linear fields are exact (``phi_t(x) = e^{tA} x``). Smooth fields are
integrated together with the variational equation ``V' = DX(x) V``,
``V(0) = I``, by an embedded Dormand-Prince 5(4) pair.

Error control is relative to the size of the state: the local error of the
point is measured against ``||x||_inf`` and that of the tangent against
``||V||_inf``. This keeps the flow equally accurate at every distance from
the singularity, which the ``s -> 0`` limits downstream depend on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ChartExit, StepUnderflow
from .fields import Field, LinearField, expm

__all__ = ["FlowResult", "flow", "flow_interval", "fixed_step_flow", "DEFAULT_TOL"]

DEFAULT_TOL = 1e-10
UNDERFLOW = 1e-14
MAX_STEPS = 200_000

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass(frozen=True)
class FlowResult:
    """Endpoint and tangent map ``d phi_t`` at the initial point."""

    endpoint: np.ndarray
    tangent: np.ndarray | None
    time: float
    steps: int
    est_error: float


def _rhs_factory(field: Field, n: int, with_tangent: bool):
    if not with_tangent:
        return field

    def rhs(y):
        x = y[:n]
        V = y[n:].reshape(n, n)
        return np.concatenate([field(x), (field.jacobian(x) @ V).ravel()])

    return rhs


def _err_norm(err, y_old, y_new, n):
    ex = np.max(np.abs(err[:n]))
    sx = max(np.max(np.abs(y_old[:n])), np.max(np.abs(y_new[:n])))
    e = ex / sx if sx > 0 else ex
    if err.size > n:
        eV = np.max(np.abs(err[n:]))
        sV = max(np.max(np.abs(y_old[n:])), np.max(np.abs(y_new[n:])))
        e = max(e, eV / sV if sV > 0 else eV)
    return e


def _dp_step(rhs, y, h, k1):
    ks = [k1]
    for i in range(1, 7):
        yi = y.copy()
        for j, a in enumerate(_A[i]):
            if a:
                yi += (h * a) * ks[j]
        ks.append(rhs(yi))
    # stage 7 is evaluated at the 5th-order solution (FSAL)
    y_new = yi
    err = h * sum(e * k for e, k in zip(_E, ks) if e)
    return y_new, err, ks[6]


def _integrate(rhs, y0, t, n, tol, chart_radius=None, h0=None):
    """Adaptive DP5(4) from 0 to ``t``; returns (y, steps, max_err, h_last)."""
    y = np.array(y0, dtype=float)
    if t == 0:
        return y, 0, 0.0, h0
    direction = 1.0 if t > 0 else -1.0
    T = abs(t)
    k1 = rhs(y)
    if h0 is None:
        scale = max(np.max(np.abs(y[:n])), 1e-300)
        rate = np.max(np.abs(k1[:n])) / scale
        h0 = 0.5 * tol ** 0.2 / max(rate, 1e-3)
    h = min(abs(h0), T)
    done = 0.0
    steps = 0
    max_err = 0.0
    while done < T:
        if h < UNDERFLOW * T:
            raise StepUnderflow(f"step size {h:.3g} underflowed at t={direction * done:.6g}",
                                direction * done, y)
        if steps > MAX_STEPS:
            raise StepUnderflow("maximum number of steps exceeded", direction * done, y)
        last = done + h >= T * (1 - 1e-15)
        if last:
            h = T - done
        y_new, err, k_new = _dp_step(rhs, y, direction * h, k1)
        e = _err_norm(err, y, y_new, n)
        if not np.all(np.isfinite(y_new)):
            e = math.inf
        if e <= tol:
            done = T if last else done + h
            y, k1 = y_new, k_new
            steps += 1
            max_err = max(max_err, e)
            if chart_radius is not None and np.linalg.norm(y[:n]) > chart_radius:
                raise ChartExit(
                    f"trajectory left the chart of radius {chart_radius} at t={direction * done:.6g}",
                    direction * done, y[:n].copy())
            fac = 5.0 if e == 0 else min(5.0, max(0.2, 0.9 * (tol / e) ** 0.2))
            h_next = h * fac
            if last:
                break
            h = h_next
        else:
            fac = 0.2 if not math.isfinite(e) else max(0.1, 0.9 * (tol / e) ** 0.2)
            h *= fac
    return y, steps, max_err, h


def flow(field: Field, x0, t: float, tol: float = DEFAULT_TOL, *, with_tangent: bool = True,
         chart_radius: float | None = None) -> FlowResult:
    """Flow ``phi_t(x0)`` and, optionally, the tangent map ``d phi_t(x0)``.

    Parameters
    ----------
    field : LinearField or SmoothField
    x0 : array_like
        Initial point.
    t : float
        Time, either sign.
    tol : float
        Bound on the relative local error per accepted step.
    with_tangent : bool
        Integrate the variational equation jointly. Ignored for linear
        fields, whose tangent is always returned.
    chart_radius : float, optional
        Raise :class:`ChartExit` if ``||x|| > chart_radius`` at an accepted
        step (or at the endpoint for linear fields).

    Raises
    ------
    StepUnderflow
        If the step collapses below ``1e-14 |t|``.
    ChartExit
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    if isinstance(field, LinearField):
        E = expm(field, t)
        x = E @ x0
        if chart_radius is not None and np.linalg.norm(x) > chart_radius:
            raise ChartExit(f"endpoint outside chart of radius {chart_radius}", t, x)
        return FlowResult(x, E, float(t), 0, 0.0)
    if with_tangent:
        y0 = np.concatenate([x0, np.eye(n).ravel()])
    else:
        y0 = x0.copy()
    rhs = _rhs_factory(field, n, with_tangent)
    y, steps, err, _ = _integrate(rhs, y0, float(t), n, tol, chart_radius)
    tangent = y[n:].reshape(n, n) if with_tangent else None
    return FlowResult(y[:n], tangent, float(t), steps, err)


def flow_interval(field: Field, x0, t0: float, t1: float, n_samples: int,
                  tol: float = DEFAULT_TOL, *, chart_radius: float | None = None) -> list[FlowResult]:
    """Samples ``phi_t(x0)`` at ``n_samples`` equally spaced ``t`` in ``[t0, t1]``.

    Integration continues from one sample to the next, so the tangent of
    each sample is ``d phi_t`` at ``x0`` for that sample's ``t``.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    times = np.linspace(t0, t1, n_samples)
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    if isinstance(field, LinearField):
        return [flow(field, x0, float(t), tol, chart_radius=chart_radius) for t in times]
    rhs = _rhs_factory(field, n, True)
    y, steps, err, h = _integrate(rhs, np.concatenate([x0, np.eye(n).ravel()]), float(times[0]),
                                  n, tol, chart_radius)
    out = [FlowResult(y[:n].copy(), y[n:].reshape(n, n).copy(), float(times[0]), steps, err)]
    for a, b in zip(times[:-1], times[1:]):
        y, st, e, h = _integrate(rhs, y, float(b - a), n, tol, chart_radius, h0=h)
        steps += st
        err = max(err, e)
        out.append(FlowResult(y[:n].copy(), y[n:].reshape(n, n).copy(), float(b), steps, err))
    return out


def fixed_step_flow(field: Field, x0, t: float, n_steps: int) -> np.ndarray:
    """Endpoint of ``n_steps`` equal DP5 steps, without error control.

    The result is a smooth function of ``t``, which is what Newton
    iterations on a return time need; adaptive step selection would make
    it piecewise smooth at the ``tol`` level.
    """
    x = np.asarray(x0, dtype=float)
    if isinstance(field, LinearField):
        return expm(field, t) @ x
    if t == 0:
        return x.copy()
    h = t / n_steps
    k1 = field(x)
    for _ in range(n_steps):
        x, _, k1 = _dp_step(field, x, h, k1)
    return x
