"""Command line front end: verification suites, parameter sweeps, central models.

Exit codes: 0 success, 1 verification failure (or unwritable output),
2 usage or input error. Settings are resolved as command line flag, then
the JSON file named by ``SFL_CONFIG``, then the built-in default.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import central_model as cm
from .closed_forms import (center_vectors, moving_frame_map, psi_star_center_formula,
                           second_derivative_diagonal, second_derivative_general)
from .errors import ModelSchemaError, SingflowError
from .fields import center_plane_field, load_field
from .poincare import project_normal, psi_star, rescaled_poincare
from .report import dumps_csv, dumps_json, write_atomic
from .suites import DEFAULTS, SUITES, center_field_4d, run_suite

__all__ = ["main", "parse_range", "resolve_config", "build_parser"]

SUITE_ORDER = list(SUITES)
CONFIG_ENV = "SFL_CONFIG"
CASE_COLUMNS = ("suite", "case", "provenance", "tolerance", "error", "passed")


class UsageError(Exception):
    pass


def parse_range(text: str) -> list[float]:
    """``"a:b:step"`` (both ends inclusive), ``"v1,v2,..."`` or a single value."""
    text = str(text).strip()
    try:
        if ":" in text:
            a, b, step = (float(p) for p in text.split(":"))
            if not step > 0:
                raise UsageError(f"range {text!r}: step must be positive")
            n = math.floor((b - a) / step + 1e-9) + 1
            vals = [round(a + k * step, 12) + 0.0 for k in range(max(n, 0))]
        elif text:
            vals = [float(p) for p in text.split(",") if p.strip()]
        else:
            vals = []
    except ValueError:
        raise UsageError(f"cannot parse range {text!r}") from None
    if not vals:
        raise UsageError(f"range {text!r} is empty")
    return vals


def _load_config() -> dict:
    path = os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"{CONFIG_ENV}={path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{CONFIG_ENV}={path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{CONFIG_ENV}={path}: expected a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve_config(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge flags over ``SFL_CONFIG`` over ``defaults`` (flags left at ``None`` fall through)."""
    cfg = dict(defaults)
    file_cfg = _load_config()
    for k in defaults:
        if k in file_cfg:
            cfg[k] = file_cfg[k]
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def _common(p: argparse.ArgumentParser):
    p.add_argument("--tol", type=float, help="integration tolerance")
    p.add_argument("--fd-step", type=float, dest="fd_step", help="finite difference step")
    p.add_argument("--chart-radius", type=float, dest="chart_radius")
    p.add_argument("--beta-cap", type=float, dest="beta_cap", help="cap on the domain radius")
    p.add_argument("--seed", type=int, help="seed for random test sampling")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--out", help="output directory (verify) or file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="singflow",
                                     description="Blown-up singular flows: checks and sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", choices=SUITE_ORDER + ["all"])
    _common(v)

    s = sub.add_parser("sweep", help="tabulate a quantity over a parameter grid")
    s.add_argument("target", choices=("second-derivative", "psi-star", "return-time"))
    _common(s)
    s.add_argument("--type", choices=("diagonal", "jordan", "focus"), default="diagonal")
    s.add_argument("--l1", type=float, default=-1.0, help="first rate (lambda, or alpha)")
    s.add_argument("--l2", type=float, default=1.0, help="second rate (ignored for jordan; beta)")
    s.add_argument("--lam-cs", type=float, default=-1.0)
    s.add_argument("--lam-cu", type=float, default=1.0)
    s.add_argument("--theta", help="angle range a:b:step or list")
    s.add_argument("--t", help="time range")
    s.add_argument("--s", help="radius range (return-time)")
    s.add_argument("--y", help="normal offset range (return-time)")
    s.add_argument("--field", help="field JSON file (return-time)")

    c = sub.add_parser("central-model", help="chain classes and the dichotomy verdict")
    src = c.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="model JSON file")
    src.add_argument("--scenario", choices=("main-theorem",))
    _common(c)
    c.add_argument("--epsilon", type=float, help="fiber epsilon (default 1/4 cell)")
    c.add_argument("--base-samples", type=int, dest="base_samples")
    c.add_argument("--fiber-cells", type=int, dest="fiber_cells")
    c.add_argument("--theta0", type=float)
    c.add_argument("--delta", type=float, default=0.5, help="trapping test height (model files)")
    return parser


def _write(path: Path, text: str):
    try:
        write_atomic(path, text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from None


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(args, cfg) -> int:
    names = SUITE_ORDER if args.suite == "all" else [args.suite]
    results = [run_suite(n, cfg) for n in names]
    for r in results:
        for c in r.cases:
            print(f"{'PASS' if c.passed else 'FAIL'}  [{r.name}] {c.name}  "
                  f"err={c.error:.3g} tol={c.tolerance:.3g} ({c.provenance})")
    ok = all(r.passed for r in results)
    out = Path(cfg["out"] or "reports")
    fmt = cfg["format"] or "json"
    path = out / f"verify-{args.suite}.{fmt}"
    if fmt == "json":
        text = dumps_json({"suite": args.suite, "passed": ok,
                           "suites": [r.to_dict() for r in results]})
    else:
        rows = [(r.name, c.name, c.provenance, c.tolerance, c.error, c.passed)
                for r in results for c in r.cases]
        text = dumps_csv(CASE_COLUMNS, rows)
    _write(path, text)
    print(f"{'PASS' if ok else 'FAIL'}  {args.suite} -> {path}")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _grid(text, default):
    return parse_range(default if text is None else text)


def _planar_matrix(kind, l1, l2):
    if kind == "diagonal":
        return np.diag([l1, l2]), l1, l2
    if kind == "jordan":
        return np.array([[l1, 0.0], [1.0, l1]]), l1, l1
    return np.array([[l1, -l2], [l2, l1]]), l1, l2


def _sweep_second_derivative(args, cfg):
    thetas = _grid(args.theta, repr(math.pi / 4))
    ts = _grid(args.t, "-2:2:0.1")
    h = cfg["fd_step"] if cfg["fd_step"] is not None else 1e-3
    A, l1, l2 = _planar_matrix(args.type, args.l1, args.l2)
    cols = ("type", "l1", "l2", "x1", "x2", "t", "closed_form", "finite_diff", "rel_err")
    rows = []
    for th in thetas:
        x1, x2 = math.cos(th), math.sin(th)
        for t in ts:
            if args.type == "diagonal":
                cf = second_derivative_diagonal(l1, l2, x1, x2, t)
            else:
                cf = second_derivative_general(A, [x1, x2], t)
            f = [moving_frame_map(A, [x1, x2], t, y).value for y in (h, 0.0, -h)]
            fd = (f[0] - 2 * f[1] + f[2]) / (h * h)
            rows.append((args.type, l1, l2, x1, x2, t, cf, fd, abs(cf - fd) / max(1.0, abs(cf))))
    return cols, rows


def _sweep_psi_star(args, cfg):
    thetas = _grid(args.theta, "0.1:3.1:0.1")
    ts = _grid(args.t, "-10:10:0.5")
    a, b = args.lam_cs, args.lam_cu
    fld = center_plane_field(a, b, ss=(a - 1.0,), uu=(b + 1.0,))
    cols = ("theta", "t", "norm_formula", "norm_projection", "abs_diff")
    rows = []
    for th in thetas:
        u, v = center_vectors(th)
        for t in ts:
            cf = psi_star_center_formula(a, b, th, t)
            pr = psi_star(fld, t, u, v)
            rows.append((th, t, float(np.linalg.norm(cf)), float(np.linalg.norm(pr)),
                         float(np.linalg.norm(cf - pr))))
    return cols, rows


def _sweep_return_time(args, cfg):
    thetas = _grid(args.theta, "0.2:3.0:0.4")
    ts = _grid(args.t, "1")
    ss = _grid(args.s, "0")
    ys = _grid(args.y, "-0.05:0.05:0.025")
    if any(abs(y) > cfg["beta_cap"] for y in ys):
        raise UsageError(f"|y| exceeds the domain radius cap {cfg['beta_cap']}")
    if any(s < 0 for s in ss):
        raise UsageError("s must be nonnegative")
    fld = load_field(args.field) if args.field else center_field_4d(0)
    cs, cu = fld.linear.role_index("cs"), fld.linear.role_index("cu")
    cols = ("t", "theta", "s", "y", "tau", "residual") + tuple(f"p{k}" for k in range(fld.dim))
    rows = []
    for t in ts:
        for th in thetas:
            u, v = center_vectors(th, fld.dim, cs, cu)
            for s in ss:
                e = project_normal(fld, u, s, v)
                e /= np.linalg.norm(e)
                for y in ys:
                    try:
                        img, sol = rescaled_poincare(fld, t, u, s, y * e, cfg["tol"],
                                                     cfg["chart_radius"], return_solve=True)
                        rows.append((t, th, s, y, sol.tau, sol.residual, *img.v))
                    except SingflowError:
                        rows.append((t, th, s, y) + (math.nan,) * (2 + fld.dim))
    return cols, rows


SWEEPS = {
    "second-derivative": _sweep_second_derivative,
    "psi-star": _sweep_psi_star,
    "return-time": _sweep_return_time,
}


def cmd_sweep(args, cfg) -> int:
    cols, rows = SWEEPS[args.target](args, cfg)
    fmt = cfg["format"] or "csv"
    path = Path(cfg["out"] or f"sweep-{args.target}.{fmt}")
    if fmt == "csv":
        text = dumps_csv(cols, rows)
    else:
        text = dumps_json({"target": args.target, "columns": list(cols),
                           "rows": [dict(zip(cols, r)) for r in rows]})
    _write(path, text)
    print(f"{len(rows)} rows -> {path}")
    return 0


# ---------------------------------------------------------------------------
# central-model
# ---------------------------------------------------------------------------


def cmd_central_model(args, cfg) -> int:
    M = int(cfg["fiber_cells"])
    fmt = cfg["format"] or "json"
    if args.scenario:
        rep = cm.main_theorem_scenario(theta0=cfg["theta0"], theta_samples=int(cfg["base_samples"]),
                                       fiber_cells=M, epsilon=cfg["epsilon"])
        data = {"scenario": args.scenario, **rep.to_dict()}
        ok = rep.segment_detected and rep.trapping == "neither"
        default = "central-model-main-theorem"
    else:
        model = cm.load_model(args.model)
        eps = cfg["epsilon"] if cfg["epsilon"] is not None else 0.25 / M
        dec = cm.chain_classes(model, eps, M)
        data = {"model": str(args.model), "epsilon": eps, "fiber_cells": M,
                "n_classes": dec.n_classes, "base_class_id": dec.base_class_id,
                "base_cells_connected": dec.base_cells_connected,
                **cm.dichotomy(model, dec, args.delta)}
        ok = True
        default = f"central-model-{Path(args.model).stem}"
    path = Path(cfg["out"] or f"{default}.{fmt}")
    if fmt == "json":
        text = dumps_json(data)
    else:
        flat = [(k, json.dumps(v) if isinstance(v, (dict, list)) else v) for k, v in data.items()]
        text = dumps_csv(("key", "value"), flat)
    _write(path, text)
    seg = data.get("segment_detected", data.get("any_segment"))
    print(f"trapping={data['trapping']} segment={seg} -> {path}")
    return 0 if ok else 1


COMMANDS = {"verify": cmd_verify, "sweep": cmd_sweep, "central-model": cmd_central_model}

CONFIG_DEFAULTS = {**DEFAULTS, "fd_step": None, "format": None, "out": None}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        defaults = dict(CONFIG_DEFAULTS)
        if args.command == "verify":
            defaults["fd_step"] = DEFAULTS["fd_step"]
        cfg = resolve_config(args, defaults)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ModelSchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
