"""Verification suites run by the command line front end.

Every case compares an implementation route against an independent one
(closed form, finite difference, a separately integrated ODE, exact
arithmetic) and records the worst error against its tolerance. Cases are
tagged ``paper`` (value stated in the source), ``trivial`` (follows from
the definitions) or ``derived`` (checked against an oracle built here).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy.integrate import solve_ivp

from . import central_model as cm
from .blowup import BlowupPoint, lift_field, lift_flow
from .closed_forms import (center_vectors, jordan_leading_coefficient, moving_frame_map,
                           psi_star_center_formula, second_derivative_check,
                           second_derivative_diagonal, second_derivative_general)
from .fields import LinearField, PolynomialRemainder, PolyTerm, SmoothField, center_plane_field
from .flow import flow
from .poincare import (domain_radius, project_normal, psi_star, rescaled_poincare,
                       verify_linear_reduction)

__all__ = ["Case", "SuiteResult", "DEFAULTS", "SUITES", "run_suite", "saddle_field_2d",
           "center_field_4d", "REMAINDERS_4D", "lifted_ode_flow"]

PROVENANCE = ("paper", "trivial", "derived")

DEFAULTS = {
    "tol": 1e-10,
    "fd_step": 1e-5,
    "chart_radius": None,
    "beta_cap": 0.1,
    "seed": 0,
    "epsilon": None,
    "base_samples": 64,
    "fiber_cells": 32,
    "theta0": math.pi / 6,
}


@dataclass(frozen=True)
class Case:
    name: str
    provenance: str
    tolerance: float
    error: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance tag {self.provenance!r}")


@dataclass(frozen=True)
class SuiteResult:
    name: str
    cases: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cases)

    @property
    def max_error(self) -> float:
        return max((c.error for c in self.cases), default=0.0)

    def to_dict(self) -> dict:
        return {"suite": self.name, "passed": self.passed,
                "cases": [asdict(c) for c in self.cases]}


def _le(name, prov, err, tol, **detail) -> Case:
    err = float(err)
    return Case(name, prov, float(tol), err, bool(err <= tol), detail)


# ---------------------------------------------------------------------------
# Test fields
# ---------------------------------------------------------------------------


def saddle_field_2d() -> SmoothField:
    """``diag(-1, 1)`` plus a small quadratic remainder, no blowup for ``|x| <= 4``."""
    lin = LinearField([([[-1.0]], "cs"), ([[1.0]], "cu")])
    rem = PolynomialRemainder(2, [PolyTerm(0.2, (1, 1), 0), PolyTerm(-0.1, (2, 0), 1)])
    return SmoothField(lin, rem)


REMAINDERS_4D = (
    PolynomialRemainder(4, [PolyTerm(1.0, (0, 1, 1, 0), 0), PolyTerm(0.5, (0, 2, 0, 0), 3),
                            PolyTerm(-0.7, (0, 1, 1, 0), 2), PolyTerm(0.3, (0, 0, 2, 0), 1)]),
    PolynomialRemainder(4, [PolyTerm(-0.4, (1, 1, 0, 0), 1), PolyTerm(0.8, (0, 0, 1, 1), 0),
                            PolyTerm(0.6, (0, 2, 0, 0), 2), PolyTerm(-0.5, (0, 0, 0, 2), 3)]),
)


def center_field_4d(remainder: int | None = 0):
    lin = center_plane_field()
    return lin if remainder is None else SmoothField(lin, REMAINDERS_4D[remainder])


def lifted_ode_flow(field, u, s, t, rtol=1e-12):
    """Integrate the lifted field on ``S^{n-1} x (0, inf)`` directly (scipy DOP853)."""

    def rhs(_, z):
        lv = lift_field(field, BlowupPoint.from_direction(z[:-1], z[-1]))
        return np.concatenate([lv.tangential, [lv.radial]])

    sol = solve_ivp(rhs, (0.0, t), np.concatenate([u, [s]]), method="DOP853", rtol=rtol,
                    atol=1e-14)
    z = sol.y[:, -1]
    return z[-1] * z[:-1] / np.linalg.norm(z[:-1])


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


def suite_blowup(cfg) -> list[Case]:
    rng = np.random.default_rng(cfg["seed"])
    X = saddle_field_2d()
    err = 0.0
    for _ in range(100):
        a = rng.uniform(0, 2 * math.pi)
        u = np.array([math.cos(a), math.sin(a)])
        s = float(rng.uniform(1e-3, 0.5))
        t = float(rng.uniform(-2, 2))
        p = lift_flow(X, BlowupPoint(u, s), t, cfg["tol"], chart_radius=cfg["chart_radius"])
        err = max(err, np.linalg.norm(p.point() - flow(X, s * u, t, cfg["tol"],
                                                       with_tangent=False).endpoint))
        err = max(err, np.linalg.norm(p.point() - lifted_ode_flow(X, u, s, t)))
    cases = [_le("conjugacy J(lift) = flow(J)", "derived", err, 1e-8, samples=100)]

    worst = 0.0
    for k in range(20):
        kind = k % 3
        if kind == 0:
            l1, l2 = sorted(rng.uniform(-3, 3, 2))
            M = np.diag([l1, l2])
        elif kind == 1:
            lam = float(rng.choice([-1, 1]) * rng.uniform(0.2, 3))
            M = np.array([[lam, 0.0], [1.0, lam]])
        else:
            M = np.diag(rng.uniform(0.2, 3, 2) * np.array([-1, 1]))
        lin = LinearField([(M, "center2d")])
        for u in lin.eigendirections():
            worst = max(worst, np.linalg.norm(lift_field(lin, BlowupPoint(u, 0.0)).tangential))
    for u in center_plane_field().eigendirections():
        lv = lift_field(center_plane_field(), BlowupPoint(u, 0.0))
        worst = max(worst, np.linalg.norm(lv.tangential))
    cases.append(_le("eigendirections are boundary fixed points", "trivial", worst, 1e-12))
    return cases


def suite_psi_decay(cfg) -> list[Case]:
    thetas = (np.arange(16) + 0.5) * math.pi / 16
    ts = np.linspace(-10, 10, 41)
    err = 0.0
    for lam_cs, lam_cu in ((-1.0, 1.0), (-0.5, 2.0)):
        fld = center_plane_field(lam_cs, lam_cu, ss=(lam_cs - 1,), uu=(lam_cu + 1,))
        for th in thetas:
            u, v = center_vectors(th)
            for t in ts:
                d = psi_star_center_formula(lam_cs, lam_cu, th, t) - psi_star(fld, t, u, v)
                err = max(err, np.linalg.norm(d))
    fld = center_plane_field()
    u, v = center_vectors(math.pi / 6)
    decay = max(np.linalg.norm(psi_star(fld, t, u, v)) for t in (-10.0, 10.0))
    u4, v4 = center_vectors(math.pi / 4)
    zero = max(np.linalg.norm(psi_star(fld, t, u4, v4)) for t in ts)
    zero_cf = max(np.linalg.norm(psi_star_center_formula(-1, 1, math.pi / 4, t)) for t in ts)
    return [
        _le("closed form = projection formula", "derived", err, 1e-10, points=int(2 * 16 * 41)),
        _le("decay |psi*_{+-10}(v)| at theta=pi/6", "paper", decay, 1e-3),
        _le("zero at theta=pi/4", "paper", max(zero, zero_cf), 1e-14),
    ]


def suite_derivative_identity(cfg) -> list[Case]:
    F = center_field_4d(0)
    h = cfg["fd_step"]
    err = 0.0
    for t in (-1.0, -0.5, 0.5, 1.0, 1.5):
        for th in (np.arange(8) + 0.5) * math.pi / 8:
            u, v = center_vectors(th)
            for s in (0.0, 0.01, 0.05):
                e = project_normal(F, u, s, v)
                e /= np.linalg.norm(e)
                kw = dict(tol=cfg["tol"], chart_radius=cfg["chart_radius"])
                fd = (rescaled_poincare(F, t, u, s, h * e, **kw).v
                      - rescaled_poincare(F, t, u, s, -h * e, **kw).v) / (2 * h)
                err = max(err, np.linalg.norm(fd - psi_star(F, t, u, e, s, **kw)))
    dirs = [center_vectors(th)[0] for th in (0.3, 1.2, 2.5)]
    beta = domain_radius(F, 1.0, dirs, 0.0, cap=cfg["beta_cap"], tol=cfg["tol"])
    return [
        _le("D_y P*(0) = psi* (central FD)", "derived", err, 1e-4, grid="5x8x3", h=h),
        Case("domain radius covers the FD stencil", "derived", 0.0, 0.0 if beta >= h else 1.0,
             bool(beta >= h), {"beta": beta, "h": h}),
    ]


def suite_linear_reduction(cfg) -> list[Case]:
    lin = center_plane_field()
    u, v = center_vectors(math.pi / 6)
    y = 0.01 * project_normal(lin, u, 0.0, v)
    cases = []
    for k in range(len(REMAINDERS_4D)):
        rep = verify_linear_reduction(lin, REMAINDERS_4D[k], 1.0, u, y, [1e-1, 1e-2, 1e-3, 1e-4],
                                      cfg["tol"], cfg["chart_radius"])
        ok = rep.monotone and rep.order >= 0.9 and rep.distances[-1] < 1e-3
        cases.append(Case(f"remainder {k}: P*_(A+f) -> P*_A", "derived", 1e-3,
                          float(rep.distances[-1]), bool(ok),
                          {"order": rep.order, "monotone": rep.monotone,
                           "distances": [float(d) for d in rep.distances]}))
    return cases


def suite_planar_maps(cfg) -> list[Case]:
    rng = np.random.default_rng(cfg["seed"] + 1)
    cases = []
    err = 0.0
    for A in ([[0.0, -1.0], [1.0, 0.0]], [[0.3, -1.0], [1.0, 0.3]], [[-0.5, -2.0], [2.0, -0.5]]):
        for a in np.linspace(0.1, 3.0, 6):
            u = np.array([math.cos(a), math.sin(a)])
            for t in (-1.0, 0.5, 1.0, 2.0):
                for y in (-0.05, 0.02, 0.1):
                    err = max(err, abs(moving_frame_map(A, u, t, y).value - y))
    cases.append(_le("focus: F*(y) = y", "paper", err, 1e-9))

    e_cf, e_fd = 0.0, 0.0
    for _ in range(200):
        while True:
            l1, l2 = rng.uniform(-2, 2, 2)
            if min(abs(l1), abs(l2), abs(l1 - l2)) > 0.1:
                break
        a = rng.uniform(0.05, math.pi / 2 - 0.05) + rng.choice([0.0, math.pi / 2])
        x1, x2 = math.cos(a), math.sin(a)
        t = float(rng.uniform(-1, 1))
        A = np.diag([l1, l2])
        gen = second_derivative_general(A, [x1, x2], t)
        dia = second_derivative_diagonal(l1, l2, x1, x2, t)
        e_cf = max(e_cf, abs(dia - gen) / max(abs(gen), 1.0))
        rep = second_derivative_check(A, [x1, x2], t, h=1e-3)
        e_fd = max(e_fd, rep.rel_err)
    cases.append(_le("diagonal: expanded = inner-product form", "derived", e_cf, 1e-9, samples=200))
    cases.append(_le("diagonal: closed form = FD second difference", "derived", e_fd, 1e-2))

    r = math.sqrt(0.5)
    const = -math.sinh(2.0) ** 2 / math.cosh(2.0) ** 3
    rep = second_derivative_check(np.diag([-1.0, 1.0]), [r, r], 1.0, h=1e-3)
    cases.append(_le("diagonal constant reproduced by FD", "derived", abs(rep.finite_diff - const),
                     1e-5, value=rep.finite_diff))
    cases.append(_le("diagonal constant -sinh^2(2)/cosh^3(2)", "derived",
                     abs(second_derivative_diagonal(-1, 1, r, r, 1.0) - const), 1e-9))

    exact = jordan_leading_coefficient(Fraction(1), Fraction(1), Fraction(0))
    cases.append(Case("Jordan leading coefficient at lam=1, u=(1,0)", "paper", 0.0,
                      float(abs(exact - Fraction(3, 8))), exact == Fraction(3, 8),
                      {"value": str(exact)}))
    err = 0.0
    for lam in (-1.0, -0.5, 0.7, 1.3):
        for a in np.linspace(0.05, math.pi - 0.05, 12):
            x1, x2 = math.cos(a), math.sin(a)
            if abs(x1) < 0.1 or abs(lam * x2 + x1) < 0.1:
                continue
            for t in (0.5, 1.0, 2.0):
                rep = second_derivative_check([[lam, 0.0], [1.0, lam]], [x1, x2], t, h=1e-3)
                err = max(err, rep.rel_err)
    cases.append(_le("Jordan: closed form = FD second difference", "derived", err, 1e-2))
    return cases


def _synthetic(slope: float, n: int = 8) -> cm.CentralModel:
    nodes = tuple(range(n))
    return cm.CentralModel(nodes, {k: (k + 1) % n for k in nodes},
                           {k: cm.FiberMap.linear(slope) for k in nodes},
                           base_chain_transitive=True)


def suite_central_model(cfg) -> list[Case]:
    M = cfg["fiber_cells"]
    cases = []
    for label, slope, verdict, segment in (("trapping", 0.5, "attracting", False),
                                           ("repelling", 2.0, "repelling", False),
                                           ("identity", 1.0, "neither", True)):
        model = _synthetic(slope)
        eps = 1.0 / M if segment else 0.25 / M
        dec = cm.chain_classes(model, eps, M)
        got_v = cm.detect_trapping(model, 0.0, 0.5)
        got_s = [cm.detect_segment(dec, x, 0.5) for x in model.nodes]
        ok = got_v == verdict and all(g == segment for g in got_s)
        cases.append(Case(f"{label} model verdict", "trivial", 0.0, 0.0 if ok else 1.0, ok,
                          {"trapping": got_v, "segments": got_s}))

    kw = dict(theta_samples=cfg["base_samples"], fiber_cells=M, epsilon=cfg["epsilon"])
    rep = cm.main_theorem_scenario(theta0=cfg["theta0"], **kw)
    ok = rep.segment_detected and rep.segment_height_cells >= 4 and rep.trapping == "neither"
    cases.append(Case("main-theorem scenario: segment of >= 4 cells, no trapping", "derived",
                      0.0, 0.0 if ok else 1.0, bool(ok), rep.to_dict()))
    prod = max(rep.forward_products[-1], rep.backward_products[-1])
    cases.append(_le("fiber contraction both ways along the orbit", "paper", prod, 1e-3))
    ctl = cm.main_theorem_scenario(theta0=cfg["theta0"], control_slope=0.5, **kw)
    ok = not ctl.segment_detected and ctl.trapping == "attracting"
    cases.append(Case("control slope 1/2: no segment, attracting", "trivial", 0.0,
                      0.0 if ok else 1.0, ok, {"height": ctl.segment_height_cells,
                                               "trapping": ctl.trapping}))
    q = cm.main_theorem_scenario(theta0=math.pi / 4, **kw)
    cases.append(Case("theta0=pi/4: collapsed fiber, segment", "paper", 0.0,
                      0.0 if q.segment_detected else 1.0, q.segment_detected,
                      {"height": q.segment_height_cells}))

    fld = center_plane_field()
    err = 0.0
    for th in (np.arange(16) + 0.25) * math.pi / 16:
        ref = np.linalg.norm(psi_star_center_formula(-1, 1, th, 1.0))
        err = max(err, abs(cm.center_slope(fld, th) - ref))
    cases.append(_le("fiber slopes = closed-form |psi*_1(v)|", "derived", err, 1e-9))
    return cases


SUITES = {
    "blowup": suite_blowup,
    "psi-decay": suite_psi_decay,
    "lemma33": suite_derivative_identity,
    "linear-reduction": suite_linear_reduction,
    "appendix": suite_planar_maps,
    "central-model": suite_central_model,
}


def run_suite(name: str, cfg: dict | None = None) -> SuiteResult:
    full = dict(DEFAULTS)
    full.update({k: v for k, v in (cfg or {}).items() if v is not None})
    if name not in SUITES:
        raise KeyError(name)
    return SuiteResult(name, SUITES[name](full))
