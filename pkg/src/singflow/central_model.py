"""Finite central models and their chain classes.

A central model here is a skew product over a finite base: a base map on
node ids and, over every node, a monotone piecewise-linear fiber map
``[0, 1] -> [0, inf)`` fixing ``0``. Chain recurrence is computed on a
fixed discretization: the fiber is cut into ``M`` equal cells, a cell
points to every cell that the epsilon-neighbourhood of its image meets,
and classes are the strongly connected components that carry a cycle.
Every verdict is therefore a statement "at scale (epsilon, grid)".
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .blowup import BlowupPoint, lift_flow
from .errors import ModelSchemaError, ResolutionTooCoarse
from .fields import LinearField, center_plane_field
from .poincare import project_normal, psi_star

__all__ = [
    "FiberMap",
    "CentralModel",
    "ChainClassDecomposition",
    "ScenarioReport",
    "build_from_linear_model",
    "chain_classes",
    "detect_segment",
    "segment_height",
    "detect_trapping",
    "dichotomy",
    "direction_image",
    "center_slope",
    "orbit_slope_products",
    "central_segment_scenario",
    "main_theorem_scenario",
    "model_from_dict",
    "model_to_dict",
    "load_model",
]

MAX_BREAKPOINTS = 64
ANGLE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FiberMap:
    """Piecewise-linear fiber map through the breakpoints ``(ts[k], vs[k])``."""

    ts: np.ndarray
    vs: np.ndarray

    @classmethod
    def linear(cls, slope: float) -> "FiberMap":
        return cls(np.array([0.0, 1.0]), np.array([0.0, float(slope)]))

    def __call__(self, t):
        return np.interp(t, self.ts, self.vs)

    @property
    def collapsed(self) -> bool:
        return not np.any(self.vs)

    def points(self) -> list[list[float]]:
        return [[float(a), float(b)] for a, b in zip(self.ts, self.vs)]


def _validate_fiber(node, pts) -> FiberMap:
    where = f"fibers[{node!r}]"
    try:
        arr = np.asarray(pts, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelSchemaError(f"{where}: breakpoints must be numeric pairs ({exc})") from None
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ModelSchemaError(f"{where}: expected a list of [t, f(t)] pairs")
    if not 2 <= len(arr) <= MAX_BREAKPOINTS:
        raise ModelSchemaError(f"{where}: need 2..{MAX_BREAKPOINTS} breakpoints, got {len(arr)}")
    if not np.all(np.isfinite(arr)):
        raise ModelSchemaError(f"{where}: non-finite breakpoint")
    ts, vs = arr[:, 0], arr[:, 1]
    if ts[0] != 0.0 or ts[-1] != 1.0:
        raise ModelSchemaError(f"{where}: breakpoints must span t = 0 .. 1")
    if np.any(np.diff(ts) <= 0):
        raise ModelSchemaError(f"{where}: breakpoint abscissae must be strictly increasing")
    if vs[0] != 0.0:
        raise ModelSchemaError(f"{where}: fiber map must send 0 to 0 (got {vs[0]!r})")
    if np.any(vs):
        if np.any(np.diff(vs) <= 0):
            raise ModelSchemaError(f"{where}: fiber map for node {node!r} is non-monotone")
    ts.setflags(write=False)
    vs.setflags(write=False)
    return FiberMap(ts.copy(), vs.copy())


def _circ_dist(a, b, period):
    d = abs(a - b) % period
    return min(d, period - d)


@dataclass(frozen=True, eq=False)
class CentralModel:
    """Skew product ``(x, t) -> (base_map[x], fibers[x](t))`` over a finite base.

    Parameters
    ----------
    nodes : sequence of hashable
        Base node ids, in a fixed order.
    base_map : mapping node -> node
    fibers : mapping node -> FiberMap or list of ``[t, f(t)]`` pairs
        Strictly increasing with ``f(0) = 0``; an identically zero fiber
        (full collapse) is also accepted.
    positions : mapping node -> float, optional
        Coordinates of the nodes on a circle of length ``period``. Needed
        for base-direction epsilon and for gluing by distance.
    image_positions : mapping node -> float, optional
        Unsnapped image coordinates; default ``positions[base_map[x]]``.
    base_chain_transitive : bool
        Declare the base chain transitive. Base cells are then glued to
        their neighbours (within the base epsilon when positions exist,
        in a ring otherwise).
    """

    nodes: tuple
    base_map: Mapping
    fibers: Mapping
    positions: Mapping | None = None
    image_positions: Mapping | None = None
    period: float | None = None
    base_chain_transitive: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        nodes = tuple(self.nodes)
        if not nodes:
            raise ModelSchemaError("nodes: at least one node is required")
        if len(set(nodes)) != len(nodes):
            raise ModelSchemaError("nodes: duplicate node ids")
        known = set(nodes)
        bmap = {}
        for x in nodes:
            if x not in self.base_map:
                raise ModelSchemaError(f"base_map: node {x!r} has no image")
            if self.base_map[x] not in known:
                raise ModelSchemaError(f"base_map[{x!r}]: image {self.base_map[x]!r} is not a node")
            bmap[x] = self.base_map[x]
        fib = {}
        for x in nodes:
            if x not in self.fibers:
                raise ModelSchemaError(f"fibers: node {x!r} has no fiber map")
            f = self.fibers[x]
            fib[x] = f if isinstance(f, FiberMap) else _validate_fiber(x, f)
        if self.positions is not None:
            missing = known - set(self.positions)
            if missing:
                raise ModelSchemaError(f"positions: missing nodes {sorted(map(str, missing))}")
            if self.period is None:
                raise ModelSchemaError("period: required when positions are given")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "base_map", bmap)
        object.__setattr__(self, "fibers", fib)

    @property
    def index(self) -> dict:
        return {x: k for k, x in enumerate(self.nodes)}

    def __call__(self, x, t: float):
        return self.base_map[x], float(self.fibers[x](t))

    def image_position(self, x) -> float:
        if self.image_positions is not None and x in self.image_positions:
            return float(self.image_positions[x])
        return float(self.positions[self.base_map[x]])

    def max_gap(self) -> float:
        """Largest gap between consecutive node positions on the circle."""
        if self.positions is None:
            raise ValueError("model has no positions")
        p = np.sort(np.mod([self.positions[x] for x in self.nodes], self.period))
        gaps = np.diff(np.concatenate([p, [p[0] + self.period]]))
        return float(gaps.max())


@dataclass(frozen=True, eq=False)
class ChainClassDecomposition:
    """Chain classes of the cell graph.

    ``labels[i, j]`` is the class id of cell ``(nodes[i], j)`` or ``-1``
    for cells on no cycle. Class ids are numbered by first occurrence in
    row-major cell order, so they are deterministic.
    """

    epsilon: float
    base_epsilon: float | None
    fiber_resolution: int
    nodes: tuple
    labels: np.ndarray
    n_classes: int
    base_class_id: int
    base_cells_connected: bool

    @property
    def cell_grid(self) -> list[tuple]:
        return [(x, j) for x in self.nodes for j in range(self.fiber_resolution)]

    @property
    def classes(self) -> list[list[tuple]]:
        out = [[] for _ in range(self.n_classes)]
        for i, x in enumerate(self.nodes):
            for j in range(self.fiber_resolution):
                c = self.labels[i, j]
                if c >= 0:
                    out[c].append((x, j))
        return out

    def base_class_cells(self) -> set[tuple]:
        i, j = np.nonzero(self.labels == self.base_class_id)
        return {(self.nodes[a], int(b)) for a, b in zip(i, j)}

    def in_base_class(self, node, j: int) -> bool:
        i = self.nodes.index(node)
        return self.base_class_id >= 0 and self.labels[i, j] == self.base_class_id


def _fiber_targets(f: FiberMap, M: int, eps: float):
    """For each cell ``j`` the inclusive range of cells met by ``f(cell) +- eps``."""
    grid = np.arange(M + 1) / M
    vals = f(grid)
    lo, hi = vals[:-1], vals[1:]
    jmin = np.floor(M * (lo - eps) - 1.0).astype(np.int64) + 1
    jmax = np.ceil(M * (hi + eps)).astype(np.int64) - 1
    return np.maximum(jmin, 0), np.minimum(jmax, M - 1)


def chain_classes(model: CentralModel, epsilon: float, fiber_resolution: int = 32, *,
                  base_epsilon: float | None = None) -> ChainClassDecomposition:
    """Epsilon-chain classes of ``model`` on a ``nodes x fiber_resolution`` cell grid.

    Parameters
    ----------
    epsilon : float
        Fiber-direction jump size, in fiber units.
    fiber_resolution : int
        Number of equal fiber cells on ``[0, 1]`` (>= 4).
    base_epsilon : float, optional
        Base-direction jump size. When given (and the model has
        positions) a cell also points to nodes within ``base_epsilon`` of
        its image position; it is also the gluing radius of a declared
        chain-transitive base.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    M = int(fiber_resolution)
    if M < 4:
        raise ValueError("fiber_resolution must be >= 4")
    nodes = model.nodes
    N = len(nodes)
    idx = model.index
    use_pos = model.positions is not None and base_epsilon is not None

    rows, cols = [], []
    cells = np.arange(M)
    for i, x in enumerate(nodes):
        targets = {idx[model.base_map[x]]}
        if use_pos:
            ip = model.image_position(x)
            for k, x2 in enumerate(nodes):
                if _circ_dist(ip, model.positions[x2], model.period) < base_epsilon:
                    targets.add(k)
        jmin, jmax = _fiber_targets(model.fibers[x], M, epsilon)
        for k in sorted(targets):
            for j in cells:
                if jmin[j] > jmax[j]:
                    continue
                span = np.arange(jmin[j], jmax[j] + 1)
                rows.append(np.full(span.size, i * M + j))
                cols.append(k * M + span)

    if model.base_chain_transitive:
        if use_pos:
            for i, x in enumerate(nodes):
                for k, x2 in enumerate(nodes):
                    if k != i and _circ_dist(model.positions[x], model.positions[x2],
                                             model.period) <= base_epsilon:
                        rows.append(np.array([i * M]))
                        cols.append(np.array([k * M]))
        else:
            for i in range(N):
                k = (i + 1) % N
                rows.append(np.array([i * M, k * M]))
                cols.append(np.array([k * M, i * M]))

    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    V = N * M
    G = coo_matrix((np.ones(r.size, dtype=np.int8), (r, c)), shape=(V, V)).tocsr()
    G.sum_duplicates()
    _, comp = connected_components(G, directed=True, connection="strong")
    sizes = np.bincount(comp, minlength=comp.max() + 1)
    selfloop = np.asarray(G.diagonal() > 0)
    recurrent = (sizes[comp] > 1) | selfloop

    labels = np.full(V, -1, dtype=np.int64)
    remap: dict[int, int] = {}
    for v in range(V):
        if recurrent[v]:
            labels[v] = remap.setdefault(int(comp[v]), len(remap))
    labels = labels.reshape(N, M)
    base_ids = labels[:, 0]
    base_id = int(base_ids[0])
    connected = bool(base_id >= 0 and np.all(base_ids == base_id))
    return ChainClassDecomposition(float(epsilon), base_epsilon, M, nodes, labels, len(remap),
                                   base_id, connected)


def segment_height(decomp: ChainClassDecomposition, node) -> int:
    """Number of consecutive cells from the zero section that lie in the base class."""
    i = decomp.nodes.index(node)
    row = decomp.labels[i]
    if decomp.base_class_id < 0:
        return 0
    inside = row == decomp.base_class_id
    return int(decomp.fiber_resolution if inside.all() else np.argmin(inside))


def detect_segment(decomp: ChainClassDecomposition, node, a: float) -> bool:
    """Whether ``{node} x [0, a]`` lies in the base class at this scale.

    The first fiber cell is the zero section at this resolution, so a
    segment must reach at least one cell beyond it whatever ``a`` is.
    """
    if not 0 < a <= 1:
        raise ValueError("a must lie in (0, 1]")
    M = decomp.fiber_resolution
    need = max(2, math.ceil(a * M - 1e-9))
    return segment_height(decomp, node) >= need


def detect_trapping(model: CentralModel, margin: float, delta: float) -> str:
    """Classify ``K x [0, delta)`` as ``"attracting"``, ``"repelling"`` or ``"neither"``.

    Attracting: every fiber sends ``delta`` below ``delta - margin``, so the
    neighbourhood maps strictly inside itself. Repelling: every fiber
    sends ``delta`` above ``delta + margin``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    vals = np.array([float(model.fibers[x](delta)) for x in model.nodes])
    if np.all(vals + margin < delta):
        return "attracting"
    if np.all(vals - margin > delta):
        return "repelling"
    return "neither"


def dichotomy(model: CentralModel, decomp: ChainClassDecomposition, delta: float,
              margin: float = 0.0) -> dict:
    """Trapping verdict at ``delta`` next to the segment heights of every node."""
    heights = {str(x): segment_height(decomp, x) for x in model.nodes}
    return {
        "delta": float(delta),
        "trapping": detect_trapping(model, margin, delta),
        "segment_heights": heights,
        "any_segment": any(h >= 2 for h in heights.values()),
    }


# ---------------------------------------------------------------------------
# Central models of linear fields
# ---------------------------------------------------------------------------


def _center_indices(field: LinearField):
    return field.role_index("cs"), field.role_index("cu")


def _center_vectors(field, theta):
    cs, cu = _center_indices(field)
    u = np.zeros(field.dim)
    v = np.zeros(field.dim)
    u[cs], u[cu] = math.cos(theta), math.sin(theta)
    v[cs], v[cu] = -math.sin(theta), math.cos(theta)
    return u, v


def direction_image(field: LinearField, theta: float, t: float = 1.0) -> float:
    """Angle in ``[0, pi)`` of the center direction ``theta`` after time ``t``."""
    cs, cu = _center_indices(field)
    u, _ = _center_vectors(field, theta)
    w = lift_flow(field, BlowupPoint(u, 0.0), t).u
    return float(math.atan2(w[cu], w[cs]) % math.pi)


def center_slope(field: LinearField, theta: float, center: str = "rotated") -> float:
    """Time-one fiber derivative ``||psi*_1(v)|| / ||v||`` over the direction ``theta``.

    ``center="rotated"`` uses ``v = -sin(theta) e_cs + cos(theta) e_cu``;
    ``center="normal"`` first projects ``v`` onto the normal space
    ``(A u)^perp``.
    """
    u, v = _center_vectors(field, theta)
    if center == "normal":
        v = project_normal(field, u, 0.0, v)
    elif center != "rotated":
        raise ValueError(f"unknown center convention {center!r}")
    nv = np.linalg.norm(v)
    return float(np.linalg.norm(psi_star(field, 1.0, u, v)) / nv)


def _theta_nodes(theta_samples) -> np.ndarray:
    if isinstance(theta_samples, (int, np.integer)):
        th = np.arange(int(theta_samples)) * (math.pi / int(theta_samples))
    else:
        th = np.sort(np.mod(np.asarray(theta_samples, dtype=float), math.pi))
    keep = [th[0]] if th.size else []
    for a in th[1:]:
        if a - keep[-1] > ANGLE_TOL:
            keep.append(a)
    if len(keep) > 1 and math.pi - keep[-1] + keep[0] <= ANGLE_TOL:
        keep.pop()
    return np.array(keep)


def _snap(theta, grid):
    d = np.abs(grid - theta) % math.pi
    d = np.minimum(d, math.pi - d)
    order = np.argsort(d, kind="stable")
    if grid.size > 1 and abs(d[order[1]] - d[order[0]]) <= ANGLE_TOL:
        raise ResolutionTooCoarse(
            f"image angle {theta:.6g} is equidistant from two base samples")
    return int(order[0])


def build_from_linear_model(field: LinearField, theta_samples=64, fiber_scale: float = 1.0, *,
                            center: str = "rotated") -> CentralModel:
    """Central model of the projectivised center circle of a linear field.

    Nodes are the sampled directions ``theta`` in ``[0, pi)``; the base map
    is the time-one direction flow snapped to the nearest sample; the
    fiber over ``theta`` is linear with slope :func:`center_slope`.
    ``fiber_scale`` is the normal length represented by fiber coordinate
    ``1``; linear fibers do not depend on it and it is kept in ``meta``.

    Raises
    ------
    ResolutionTooCoarse
        Fewer than four samples, or an image angle equidistant from two
        samples.
    """
    _center_indices(field)
    grid = _theta_nodes(theta_samples)
    if grid.size < 4:
        raise ResolutionTooCoarse("at least four base samples are needed")
    nodes = tuple(range(grid.size))
    images = {k: direction_image(field, th) for k, th in zip(nodes, grid)}
    base_map = {k: _snap(images[k], grid) for k in nodes}
    slopes = {k: center_slope(field, th, center) for k, th in zip(nodes, grid)}
    fibers = {k: FiberMap.linear(slopes[k]) for k in nodes}
    return CentralModel(
        nodes, base_map, fibers,
        positions={k: float(th) for k, th in zip(nodes, grid)},
        image_positions=images,
        period=math.pi,
        meta={"fiber_scale": float(fiber_scale), "center": center,
              "slopes": [slopes[k] for k in nodes]},
    )


def _orbit(field, theta0, steps):
    fwd = [theta0]
    for _ in range(steps):
        fwd.append(direction_image(field, fwd[-1], 1.0))
    bwd = [theta0]
    for _ in range(steps):
        bwd.append(direction_image(field, bwd[-1], -1.0))
    return fwd, bwd


def orbit_slope_products(field: LinearField, theta0: float, steps: int = 10,
                         center: str = "rotated") -> tuple[np.ndarray, np.ndarray]:
    """Cumulative fiber contraction along the exact direction orbit of ``theta0``.

    Returns ``(forward, backward)``: ``forward[k]`` is the product of the
    slopes at ``theta_0 .. theta_{k}`` (the fiber derivative of ``f^{k+1}``)
    and ``backward[k]`` the product of inverse slopes at
    ``theta_{-1} .. theta_{-k-1}`` (the derivative of ``f^{-(k+1)}``).
    """
    fwd, bwd = _orbit(field, theta0, steps)
    f = np.cumprod([center_slope(field, th, center) for th in fwd[:steps]])
    b = np.cumprod([1.0 / center_slope(field, th, center) for th in bwd[1:steps + 1]])
    return f, b


@dataclass(frozen=True)
class ScenarioReport:
    lam_cs: float
    lam_cu: float
    theta0: float
    node: int
    n_nodes: int
    fiber_cells: int
    max_gap: float
    chain_glue: float
    epsilon: float
    base_transitive_at_scale: bool
    segment_height_cells: int
    segment_detected: bool
    trapping: str
    trapping_deltas: list
    forward_products: list
    backward_products: list
    control_slope: float | None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def central_segment_scenario(lam_cs: float = -1.0, lam_cu: float = 1.0,
                          theta0: float = math.pi / 6, theta_samples: int = 64,
                          fiber_cells: int = 32, chain_glue: float | None = None,
                          epsilon: float | None = None, orbit_steps: int = 10,
                          control_slope: float | None = None,
                          center: str = "rotated") -> ScenarioReport:
    """Chain recurrent central segment over a center direction of a linear saddle.

    The base nodes are a uniform grid of ``theta_samples`` directions plus
    the time-one orbit of ``theta0`` (``orbit_steps`` forward and
    backward), so that the fiber over ``theta0`` is reached by the exact
    dynamics. The pure linear base is north-south, so the base is
    declared chain transitive at the gluing scale ``chain_glue``
    (default ``1.1 * max gap``). ``control_slope`` replaces every fiber by
    a constant slope.
    """
    if not lam_cs < 0 < lam_cu:
        raise ValueError("need lam_cs < 0 < lam_cu")
    r = math.remainder(theta0, math.pi / 2)
    if abs(r) < 1e-9:
        raise ValueError("theta0 must not be a multiple of pi/2")
    field = center_plane_field(lam_cs, lam_cu, ss=(lam_cs - 1.0,), uu=(lam_cu + 1.0,))
    theta0 = theta0 % math.pi
    fwd, bwd = _orbit(field, theta0, orbit_steps)
    uniform = np.arange(theta_samples) * (math.pi / theta_samples)
    thetas = np.concatenate([uniform, fwd, bwd])
    model = build_from_linear_model(field, thetas, center=center)
    if control_slope is not None:
        model = replace(model, fibers={x: FiberMap.linear(control_slope) for x in model.nodes})
    gap = model.max_gap()
    glue = 1.1 * gap if chain_glue is None else float(chain_glue)
    eps = 0.25 / fiber_cells if epsilon is None else float(epsilon)
    model = replace(model, base_chain_transitive=True)
    decomp = chain_classes(model, eps, fiber_cells, base_epsilon=glue)

    pos = np.array([model.positions[x] for x in model.nodes])
    node = int(np.argmin(np.minimum(np.abs(pos - theta0), math.pi - np.abs(pos - theta0))))
    height = segment_height(decomp, node)
    deltas = [k / fiber_cells for k in range(1, max(height, 1) + 1)]
    verdicts = [detect_trapping(model, 0.0, d) for d in deltas]
    trapping = next((v for v in verdicts if v != "neither"), "neither")
    f, b = orbit_slope_products(field, theta0, orbit_steps, center)
    return ScenarioReport(
        lam_cs=float(lam_cs), lam_cu=float(lam_cu), theta0=float(theta0), node=node,
        n_nodes=len(model.nodes), fiber_cells=int(fiber_cells), max_gap=gap, chain_glue=glue,
        epsilon=eps, base_transitive_at_scale=bool(glue >= gap and decomp.base_cells_connected),
        segment_height_cells=height, segment_detected=detect_segment(decomp, node, 1 / fiber_cells),
        trapping=trapping, trapping_deltas=deltas,
        forward_products=[float(v) for v in f], backward_products=[float(v) for v in b],
        control_slope=None if control_slope is None else float(control_slope),
    )


main_theorem_scenario = central_segment_scenario


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------


def model_from_dict(data) -> CentralModel:
    if not isinstance(data, dict):
        raise ModelSchemaError("model: top level must be a JSON object")
    for key in ("nodes", "base_map", "fibers"):
        if key not in data:
            raise ModelSchemaError(f"{key}: required field is missing")
    if not isinstance(data["nodes"], list):
        raise ModelSchemaError("nodes: must be a list")
    nodes = [str(x) for x in data["nodes"]]
    for key in ("base_map", "fibers"):
        if not isinstance(data[key], dict):
            raise ModelSchemaError(f"{key}: must be an object keyed by node id")
    base_map = {str(k): str(v) for k, v in data["base_map"].items()}
    fibers = {str(k): v for k, v in data["fibers"].items()}
    positions = data.get("positions")
    if positions is not None:
        try:
            positions = {str(k): float(v) for k, v in positions.items()}
        except (AttributeError, TypeError, ValueError):
            raise ModelSchemaError("positions: must map node ids to numbers") from None
    return CentralModel(tuple(nodes), base_map, fibers, positions=positions,
                        period=data.get("period"),
                        base_chain_transitive=bool(data.get("base_chain_transitive", False)))


def model_to_dict(model: CentralModel) -> dict:
    out = {
        "nodes": [str(x) for x in model.nodes],
        "base_map": {str(x): str(model.base_map[x]) for x in model.nodes},
        "fibers": {str(x): model.fibers[x].points() for x in model.nodes},
        "base_chain_transitive": model.base_chain_transitive,
    }
    if model.positions is not None:
        out["positions"] = {str(x): float(model.positions[x]) for x in model.nodes}
        out["period"] = model.period
    return out


def load_model(path: str | Path) -> CentralModel:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelSchemaError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return model_from_dict(data)
