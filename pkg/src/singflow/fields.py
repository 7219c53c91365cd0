"""Vector fields with a hyperbolic singularity at the origin.

Two kinds of field are supported:

* :class:`LinearField`, ``X(x) = A x`` with ``A`` assembled from tagged
  diagonal blocks (``ss``, ``cs``, ``cu``, ``uu``, ``center2d``);
* :class:`SmoothField`, ``X(x) = A x + f(x)`` where ``f`` is a polynomial
  remainder with every term of total degree >= 2, so ``f(0) = 0`` and
  ``Df(0) = 0`` hold exactly.

Matrix exponentials of the recognised 2x2 real Jordan blocks are evaluated
in closed form; anything else goes through scaling-and-squaring.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import scipy.linalg

from .errors import RepeatedDiagonalizableError, SingularMatrixError

__all__ = [
    "Diagonal",
    "Jordan",
    "Focus",
    "JordanType2D",
    "classify_2d",
    "real_jordan_basis",
    "expm_matrix",
    "Block",
    "LinearField",
    "PolyTerm",
    "PolynomialRemainder",
    "SmoothField",
    "expm",
    "eval_field",
    "center_plane_field",
    "remainder_ratios",
    "field_from_dict",
    "field_to_dict",
    "load_field",
]

ROLES = ("ss", "cs", "cu", "uu", "center2d")

# Relative thresholds used by classify_2d.
DET_TOL = 1e-12
DISC_TOL = 1e-10


# ---------------------------------------------------------------------------
# 2x2 real Jordan types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagonal:
    """``diag(l1, l2)`` with distinct nonzero rates, ``l1 < l2``."""

    l1: float
    l2: float

    def __post_init__(self):
        if self.l1 == self.l2 or self.l1 * self.l2 == 0:
            raise ValueError(f"Diagonal needs distinct nonzero rates, got {self.l1}, {self.l2}")

    def matrix(self) -> np.ndarray:
        return np.array([[self.l1, 0.0], [0.0, self.l2]])


@dataclass(frozen=True)
class Jordan:
    """Lower-triangular Jordan block ``[[lam, 0], [1, lam]]``."""

    lam: float

    def __post_init__(self):
        if self.lam == 0:
            raise ValueError("Jordan block needs a nonzero rate")

    def matrix(self) -> np.ndarray:
        return np.array([[self.lam, 0.0], [1.0, self.lam]])


@dataclass(frozen=True)
class Focus:
    """Rotation-dilation ``[[alpha, -beta], [beta, alpha]]`` with ``beta > 0``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha**2 + self.beta**2 <= 0:
            raise ValueError("Focus needs alpha^2 + beta^2 > 0")

    def matrix(self) -> np.ndarray:
        return np.array([[self.alpha, -self.beta], [self.beta, self.alpha]])


JordanType2D = Union[Diagonal, Jordan, Focus]


def classify_2d(M) -> JordanType2D:
    """Real Jordan type of an invertible 2x2 matrix.

    The decision is made on the discriminant of the characteristic
    polynomial, relative to ``||M||_F^2``. Eigenvalues of the diagonal type
    are returned in ascending order and the focus is normalised to
    ``beta > 0``, so the result is a similarity invariant.

    Raises
    ------
    SingularMatrixError
        If ``|det M| <= 1e-12 ||M||_F^2``.
    RepeatedDiagonalizableError
        If ``M`` is a scalar multiple of the identity.
    """
    M = np.asarray(M, dtype=float)
    if M.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {M.shape}")
    scale = float(np.sum(M * M))
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if scale == 0 or abs(det) <= DET_TOL * scale:
        raise SingularMatrixError(f"matrix is singular to tolerance (det={det:g})")
    tr = M[0, 0] + M[1, 1]
    disc = tr * tr - 4.0 * det
    if disc > DISC_TOL * scale:
        r = math.sqrt(disc)
        # avoid cancellation in the smaller root
        big = 0.5 * (tr + math.copysign(r, tr)) if tr != 0 else 0.5 * r
        small = det / big
        lo, hi = sorted((big, small))
        return Diagonal(lo, hi)
    if disc < -DISC_TOL * scale:
        return Focus(0.5 * tr, 0.5 * math.sqrt(-disc))
    lam = 0.5 * tr
    if np.linalg.norm(M - lam * np.eye(2)) <= math.sqrt(DISC_TOL) * math.sqrt(scale):
        raise RepeatedDiagonalizableError(
            "repeated eigenvalue with diagonalizable block (scalar matrix) is not supported"
        )
    return Jordan(lam)


def real_jordan_basis(M) -> tuple[JordanType2D, np.ndarray]:
    """Return ``(kind, P)`` with ``M = P @ kind.matrix() @ inv(P)``."""
    M = np.asarray(M, dtype=float)
    kind = classify_2d(M)
    if isinstance(kind, Diagonal):
        cols = []
        for lam in (kind.l1, kind.l2):
            N = M - lam * np.eye(2)
            # kernel of a rank-one 2x2 matrix: perpendicular to its largest row
            row = N[np.argmax(np.abs(N).sum(axis=1))]
            vec = np.array([-row[1], row[0]])
            cols.append(vec / np.linalg.norm(vec))
        P = np.column_stack(cols)
    elif isinstance(kind, Jordan):
        N = M - kind.lam * np.eye(2)
        p1 = np.eye(2)[np.argmax(np.linalg.norm(N, axis=0))]
        P = np.column_stack([p1, N @ p1])
    else:
        w, V = np.linalg.eig(M)
        z = V[:, np.argmin(w.imag)]  # eigenvalue alpha - i beta
        P = np.column_stack([z.real, z.imag])
    return kind, P


def _expm_2x2_closed(M: np.ndarray, t: float) -> np.ndarray | None:
    a, b, c, d = M[0, 0], M[0, 1], M[1, 0], M[1, 1]
    if b == 0 and c == 0:
        return np.diag([math.exp(t * a), math.exp(t * d)])
    if b == 0 and a == d:
        e = math.exp(t * a)
        return e * np.array([[1.0, 0.0], [c * t, 1.0]])
    if c == 0 and a == d:
        e = math.exp(t * a)
        return e * np.array([[1.0, b * t], [0.0, 1.0]])
    if a == d and b == -c:
        e = math.exp(t * a)
        cs, sn = math.cos(t * c), math.sin(t * c)
        return e * np.array([[cs, -sn], [sn, cs]])
    return None


def expm_matrix(M, t: float) -> np.ndarray:
    """``exp(t M)`` for a single square block.

    Diagonal matrices and the three canonical 2x2 forms are evaluated in
    closed form (``t = 0`` gives the identity exactly); everything else uses
    scipy's scaling-and-squaring Pade approximant.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if n == 1:
        return np.array([[math.exp(t * M[0, 0])]])
    if not np.any(M - np.diag(np.diag(M))):
        return np.diag(np.exp(t * np.diag(M)))
    if n == 2:
        E = _expm_2x2_closed(M, t)
        if E is not None:
            return E
    if t == 0:
        return np.eye(n)
    return scipy.linalg.expm(t * M)


# ---------------------------------------------------------------------------
# Linear fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    matrix: np.ndarray
    role: str | None = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float, ndmin=2)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"block must be square, got shape {m.shape}")
        if self.role is not None and self.role not in ROLES:
            raise ValueError(f"unknown block role {self.role!r}; expected one of {ROLES}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


class LinearField:
    """Linear vector field ``X(x) = A x`` with block-diagonal ``A``.

    Parameters
    ----------
    blocks : sequence of Block or (matrix, role) pairs
        Diagonal blocks in order; ``matrix`` is assembled from them.
    """

    def __init__(self, blocks: Sequence):
        bl = []
        for b in blocks:
            if isinstance(b, Block):
                bl.append(b)
            else:
                m, role = b
                bl.append(Block(m, role))
        if not bl:
            raise ValueError("a field needs at least one block")
        self.blocks: tuple[Block, ...] = tuple(bl)
        A = scipy.linalg.block_diag(*[b.matrix for b in self.blocks])
        A.setflags(write=False)
        self.matrix = A
        self.dim = A.shape[0]
        offs = np.cumsum([0] + [b.size for b in self.blocks])
        self._offsets = tuple(int(o) for o in offs)

    @classmethod
    def from_matrix(cls, A, role: str | None = None) -> "LinearField":
        return cls([Block(A, role)])

    def __repr__(self) -> str:
        roles = ",".join(str(b.role) for b in self.blocks)
        return f"LinearField(dim={self.dim}, roles=[{roles}])"

    @property
    def linear(self) -> "LinearField":
        return self

    def __call__(self, x) -> np.ndarray:
        return self.matrix @ np.asarray(x, dtype=float)

    def jacobian(self, x=None) -> np.ndarray:
        return np.array(self.matrix)

    def block_slice(self, k: int) -> slice:
        return slice(self._offsets[k], self._offsets[k + 1])

    def role_index(self, role: str) -> int:
        """Coordinate index of the unique 1x1 block tagged ``role``."""
        hits = [k for k, b in enumerate(self.blocks) if b.role == role]
        if len(hits) != 1 or self.blocks[hits[0]].size != 1:
            raise ValueError(f"expected exactly one 1x1 {role!r} block")
        return self._offsets[hits[0]]

    @property
    def saddle_value(self) -> float | None:
        """``lambda_cs + lambda_cu`` when both 1x1 center blocks exist."""
        try:
            i, j = self.role_index("cs"), self.role_index("cu")
        except ValueError:
            return None
        return float(self.matrix[i, i] + self.matrix[j, j])

    def check_center_configuration(self) -> None:
        """Validate the ss/cs/cu/uu rate ordering around a 1D+1D center.

        Raises ``ValueError`` describing the first violated condition.
        """
        i, j = self.role_index("cs"), self.role_index("cu")
        lcs, lcu = self.matrix[i, i], self.matrix[j, j]
        if not lcs < 0 < lcu:
            raise ValueError(f"need lambda_cs < 0 < lambda_cu, got {lcs}, {lcu}")
        for k, b in enumerate(self.blocks):
            re = np.linalg.eigvals(b.matrix).real
            if b.role == "ss" and not np.all(re < lcs):
                raise ValueError("ss rates must lie below lambda_cs")
            if b.role == "uu" and not np.all(re > lcu):
                raise ValueError("uu rates must lie above lambda_cu")

    def eigendirections(self) -> list[np.ndarray]:
        """Unit real eigenvectors of ``A`` (one per real eigenvalue per block)."""
        out = []
        for k, b in enumerate(self.blocks):
            sl = self.block_slice(k)
            w, V = np.linalg.eig(b.matrix)
            for lam, vec in zip(w, V.T):
                if abs(lam.imag) > 1e-12 * max(1.0, abs(lam)):
                    continue
                full = np.zeros(self.dim)
                full[sl] = vec.real
                out.append(full / np.linalg.norm(full))
        return out


def center_plane_field(lambda_cs: float = -1.0, lambda_cu: float = 1.0,
                       ss=(-2.0,), uu=(2.0,)) -> LinearField:
    """Diagonal model ``A = diag(ss, lambda_cs, lambda_cu, uu)``."""
    blocks = [(np.diag(np.atleast_1d(np.asarray(ss, float))), "ss")] if len(ss) else []
    blocks += [([[lambda_cs]], "cs"), ([[lambda_cu]], "cu")]
    if len(uu):
        blocks.append((np.diag(np.atleast_1d(np.asarray(uu, float))), "uu"))
    fld = LinearField(blocks)
    fld.check_center_configuration()
    return fld


# ---------------------------------------------------------------------------
# Polynomial remainders and smooth fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolyTerm:
    """``coeff * prod(x_i ** exponents[i])`` added to output ``component``."""

    coeff: float
    exponents: tuple[int, ...]
    component: int


class PolynomialRemainder:
    """Polynomial map ``f: R^n -> R^n`` with no constant or linear terms."""

    def __init__(self, dim: int, terms: Sequence[PolyTerm | dict]):
        self.dim = int(dim)
        parsed = []
        for term in terms:
            if isinstance(term, dict):
                term = PolyTerm(float(term["coeff"]), tuple(int(e) for e in term["exponents"]),
                                int(term["component"]))
            if len(term.exponents) != self.dim:
                raise ValueError(f"term {term} has {len(term.exponents)} exponents, dim={self.dim}")
            if any(e < 0 for e in term.exponents) or sum(term.exponents) < 2:
                raise ValueError(f"term {term} must have nonnegative exponents of total degree >= 2")
            if not 0 <= term.component < self.dim:
                raise ValueError(f"term {term} targets component outside [0, {self.dim})")
            parsed.append(term)
        self.terms = tuple(parsed)
        k = len(parsed)
        self._E = np.array([t.exponents for t in parsed], dtype=int).reshape(k, self.dim)
        self._c = np.array([t.coeff for t in parsed], dtype=float)
        self._comp = np.array([t.component for t in parsed], dtype=int)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.terms:
            return np.zeros(self.dim)
        mono = np.prod(x[None, :] ** self._E, axis=1)
        return np.bincount(self._comp, weights=self._c * mono, minlength=self.dim)

    def jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        J = np.zeros((self.dim, self.dim))
        if not self.terms:
            return J
        for j in range(self.dim):
            Ej = self._E[:, j]
            lowered = self._E.copy()
            lowered[:, j] = np.maximum(Ej - 1, 0)
            d = Ej * np.prod(x[None, :] ** lowered, axis=1)
            J[:, j] = np.bincount(self._comp, weights=self._c * d, minlength=self.dim)
        return J


class SmoothField:
    """``X(x) = A x + f(x)`` with a polynomial remainder ``f``."""

    def __init__(self, linear: LinearField, remainder: PolynomialRemainder):
        if remainder.dim != linear.dim:
            raise ValueError("remainder and linear part have different dimensions")
        self.linear = linear
        self.remainder = remainder
        self.dim = linear.dim

    def __repr__(self) -> str:
        return f"SmoothField({self.linear!r}, terms={len(self.remainder.terms)})"

    @property
    def matrix(self) -> np.ndarray:
        return self.linear.matrix

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.linear.matrix @ x + self.remainder(x)

    def jacobian(self, x) -> np.ndarray:
        return self.linear.matrix + self.remainder.jacobian(x)


Field = Union[LinearField, SmoothField]


def expm(field: Field, t: float) -> np.ndarray:
    """``exp(t A)`` for the linear part of ``field``, assembled per block."""
    lin = field.linear
    E = np.zeros((lin.dim, lin.dim))
    for k, b in enumerate(lin.blocks):
        sl = lin.block_slice(k)
        E[sl, sl] = expm_matrix(b.matrix, t)
    return E


def eval_field(field: Field, x) -> np.ndarray:
    return field(x)


def remainder_ratios(field: SmoothField, radii: Sequence[float], n_dirs: int = 32,
                     seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Sampled ``max ||f(x)||/||x||^2`` and ``max ||Df(x)||`` on spheres.

    The first array should stay bounded and the second should go to zero
    as the radius shrinks.
    """
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_dirs, field.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    q, d = [], []
    for r in radii:
        q.append(max(np.linalg.norm(field.remainder(r * u)) / r**2 for u in dirs))
        d.append(max(np.linalg.norm(field.remainder.jacobian(r * u), 2) for u in dirs))
    return np.array(q), np.array(d)


# ---------------------------------------------------------------------------
# JSON field files
# ---------------------------------------------------------------------------


def field_from_dict(data: dict) -> Field:
    dim = int(data["dim"])
    lin = LinearField([(b["matrix"], _norm_role(b.get("role"))) for b in data["blocks"]])
    if lin.dim != dim:
        raise ValueError(f"blocks assemble to dimension {lin.dim}, file says {dim}")
    terms = data.get("remainder") or []
    if not terms:
        return lin
    return SmoothField(lin, PolynomialRemainder(dim, terms))


def _norm_role(role):
    if role is None:
        return None
    role = str(role).lower()
    return role


def field_to_dict(field: Field) -> dict:
    lin = field.linear
    out = {
        "dim": lin.dim,
        "blocks": [{"role": b.role, "matrix": b.matrix.tolist()} for b in lin.blocks],
        "remainder": [],
    }
    if isinstance(field, SmoothField):
        out["remainder"] = [
            {"coeff": t.coeff, "exponents": list(t.exponents), "component": t.component}
            for t in field.remainder.terms
        ]
    return out


def load_field(path: str | Path) -> Field:
    with open(path) as fh:
        return field_from_dict(json.load(fh))
