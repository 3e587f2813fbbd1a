"""Finite-dimensional normed spaces with computable dual structure.

A space carries either an l_q norm (1 <= q <= inf) or a polytope norm
``max_j |<x, f_j>|`` given by a spanning family of facet functionals.  On
top of norm evaluation the module exposes the dual objects every bound
computation downstream consumes:

* exact dual norms (conjugate exponent, or an enumeration of the primal
  ball's vertices for polytope norms),
* finite models of the dual unit ball -- the exact generator set when the
  primal norm is polyhedral, a deterministic seed-free mesh of the dual
  sphere otherwise,
* norming functionals with a fixed tie-breaking rule.

Mesh point sets are nested under doubling of the resolution, which is what
the refinement tests rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np

from .errors import DimensionMismatch, PolyhedralRequired, SumlabError

__all__ = [
    "FiniteSpace",
    "DualBallModel",
    "lq_space",
    "polytope_space",
    "scalar_space",
    "norm",
    "dual_norm",
    "dual_exponent",
    "dual_ball_points",
    "ball_extreme_points",
    "norming_functional",
    "norm_subgradient",
    "ball_maximizer",
    "sphere_mesh",
    "unit_ball_facets",
]

TOL = 1e-12
DEDUPE_DECIMALS = 10

_VERTEX_CACHE: dict[bytes, np.ndarray] = {}
_COMBINATION_CAP = 200_000


@dataclass(frozen=True)
class FiniteSpace:
    """R^dim equipped with an l_q or polytope norm."""

    dim: int
    kind: str  # "lq" | "polytope"
    q: float | None = None
    facets: tuple[tuple[float, ...], ...] | None = None
    label: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionMismatch(f"dim must be positive, got {self.dim}")
        if self.kind == "lq":
            if self.q is None or (self.q < 1 and not math.isinf(self.q)):
                raise SumlabError(f"lq norm needs q >= 1, got {self.q}")
        elif self.kind == "polytope":
            fac = self.facet_array()
            if fac.shape[1] != self.dim:
                raise DimensionMismatch(
                    f"facets have width {fac.shape[1]}, space has dim {self.dim}"
                )
            if np.linalg.matrix_rank(fac) < self.dim:
                raise SumlabError("facet functionals must span the dual space")
        else:
            raise SumlabError(f"unknown norm kind {self.kind!r}")

    def facet_array(self) -> np.ndarray:
        if self.facets is None:
            raise PolyhedralRequired("space has no facet list")
        return np.asarray(self.facets, dtype=float)

    @property
    def is_polyhedral(self) -> bool:
        if self.kind == "polytope":
            return True
        # every norm on R has the same unit ball, so dim 1 is always a polytope
        return self.kind == "lq" and (self.q in (1.0, math.inf) or self.dim == 1)

    def _key(self) -> bytes:
        fac = b"" if self.facets is None else self.facet_array().tobytes()
        return f"{self.dim}|{self.kind}|{self.q}|".encode() + fac

    def __repr__(self):
        name = self.label or (f"l{self.q}^{self.dim}" if self.kind == "lq" else f"polytope^{self.dim}")
        return f"FiniteSpace({name})"


@dataclass(frozen=True)
class DualBallModel:
    """Finite point model of a dual unit ball.

    ``exactness == "extreme-exact"`` means the points generate the dual ball
    as a convex hull (suprema of convex functions over the ball and over the
    points agree).  ``"mesh"`` points lie on the dual sphere; suprema over
    them are lower approximations.
    """

    space: FiniteSpace
    points: np.ndarray  # (n, dim), rows on the dual sphere
    exactness: str  # "extreme-exact" | "mesh"
    resolution: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.space.dim:
            raise DimensionMismatch("model points do not match space dimension")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


def lq_space(dim: int, q: float, label: str = "") -> FiniteSpace:
    return FiniteSpace(dim=dim, kind="lq", q=float(q), label=label)


def polytope_space(facets, label: str = "") -> FiniteSpace:
    fac = np.asarray(facets, dtype=float)
    key = tuple(tuple(float(v) for v in row) for row in fac)
    return FiniteSpace(dim=fac.shape[1], kind="polytope", facets=key, label=label)


def scalar_space(label: str = "scalars") -> FiniteSpace:
    """R with absolute value; all norms on R coincide."""
    return lq_space(1, 2.0, label=label)


def _check_vec(space: FiniteSpace, x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (space.dim,):
        raise DimensionMismatch(f"vector shape {v.shape} vs dim {space.dim}")
    return v


def norm(space: FiniteSpace, x) -> float:
    v = _check_vec(space, x)
    if space.kind == "lq":
        return _lq_norm(v, space.q)
    return float(np.max(np.abs(space.facet_array() @ v)))


def _lq_norm(v: np.ndarray, q: float) -> float:
    if math.isinf(q):
        return float(np.max(np.abs(v))) if v.size else 0.0
    if q == 1.0:
        return float(np.sum(np.abs(v)))
    if q == 2.0:
        return float(np.linalg.norm(v))
    return float(np.sum(np.abs(v) ** q) ** (1.0 / q))


def dual_exponent(q: float) -> float:
    if q == 1.0:
        return math.inf
    if math.isinf(q):
        return 1.0
    return q / (q - 1.0)


def dual_norm(space: FiniteSpace, x_star) -> float:
    """Norm of a functional in the dual of ``space``; exact for both kinds."""
    v = _check_vec(space, x_star)
    if space.kind == "lq":
        return _lq_norm(v, dual_exponent(space.q))
    verts = ball_extreme_points(space)
    return float(np.max(np.abs(verts @ v)))


def norm_batch(space: FiniteSpace, rows: np.ndarray) -> np.ndarray:
    """Row-wise primal norms; rows has shape (n, dim)."""
    rows = np.asarray(rows, dtype=float)
    if space.kind == "lq":
        q = space.q
        if math.isinf(q):
            return np.max(np.abs(rows), axis=1)
        if q == 1.0:
            return np.sum(np.abs(rows), axis=1)
        return np.sum(np.abs(rows) ** q, axis=1) ** (1.0 / q)
    return np.max(np.abs(rows @ space.facet_array().T), axis=1)


def _canonical_rows(points: np.ndarray) -> np.ndarray:
    """Dedupe rows and put them in lexicographic order; kills -0.0."""
    pts = np.asarray(points, dtype=float) + 0.0
    rounded = np.round(pts, DEDUPE_DECIMALS) + 0.0
    order = np.lexsort(rounded.T[::-1])
    pts, rounded = pts[order], rounded[order]
    keep = np.ones(len(pts), dtype=bool)
    keep[1:] = np.any(rounded[1:] != rounded[:-1], axis=1)
    return pts[keep]


def _sign_vectors(dim: int) -> np.ndarray:
    # bit trick instead of itertools.product: same order, no Python loop
    bits = (np.arange(2**dim)[:, None] >> np.arange(dim - 1, -1, -1)) & 1
    return bits * 2.0 - 1.0


def _unit_vectors(dim: int) -> np.ndarray:
    eye = np.eye(dim)
    return np.vstack([eye, -eye])


def ball_extreme_points(space: FiniteSpace) -> np.ndarray:
    """Extreme points of the primal unit ball (polyhedral spaces only)."""
    if not space.is_polyhedral:
        raise PolyhedralRequired("requires polyhedral space")
    if space.kind == "lq":
        pts = _unit_vectors(space.dim) if space.q == 1.0 else _sign_vectors(space.dim)
        return _canonical_rows(pts)
    key = b"verts|" + space._key()
    cached = _VERTEX_CACHE.get(key)
    if cached is not None:
        return cached
    verts = _canonical_rows(_enumerate_vertices(space.facet_array()))
    _VERTEX_CACHE[key] = verts
    return verts


def _enumerate_vertices(facets: np.ndarray) -> np.ndarray:
    """Vertices of {x : |<f_j, x>| <= 1} by active-set enumeration."""
    rows = np.vstack([facets, -facets])
    m, d = rows.shape
    if math.comb(m, d) > _COMBINATION_CAP:
        raise SumlabError("facet combination count exceeds the enumeration cap")
    out = []
    ones = np.ones(d)
    for idx in combinations(range(m), d):
        sub = rows[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, ones)
        if np.all(rows @ x <= 1.0 + 1e-9):
            out.append(x)
    if not out:
        raise SumlabError("facet system has no vertices; ball is degenerate")
    return np.array(out)


def unit_ball_facets(space: FiniteSpace) -> np.ndarray:
    """Functionals g with norm(x) = max_g <x, g> (polyhedral spaces only).

    This is the generator set of the dual ball: the support function of
    conv(generators) is the primal norm.
    """
    if not space.is_polyhedral:
        raise PolyhedralRequired("requires polyhedral space")
    if space.kind == "lq":
        gens = _sign_vectors(space.dim) if space.q == 1.0 else _unit_vectors(space.dim)
        return _canonical_rows(gens)
    fac = space.facet_array()
    gens = _canonical_rows(np.vstack([fac, -fac]))
    # Facets strictly inside the dual ball are redundant for the norm.
    keep = [dual_norm(space, g) >= 1.0 - 1e-9 for g in gens]
    return gens[np.array(keep, dtype=bool)]


def _angular_mesh(resolution: int) -> np.ndarray:
    k = np.arange(2 * resolution)
    theta = np.pi * k / resolution
    return np.column_stack([np.cos(theta), np.sin(theta)])


def _cube_surface_grid(dim: int, resolution: int) -> np.ndarray:
    """Integer grid points on the surface of [-r, r]^dim (directions)."""
    axes = [np.arange(-resolution, resolution + 1)] * dim
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    on_surface = np.max(np.abs(grid), axis=1) == resolution
    return grid[on_surface].astype(float)


def _directions_mesh(dim: int, resolution: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        return _angular_mesh(resolution)
    return _cube_surface_grid(dim, resolution)


def _normalize_rows(rows: np.ndarray, norms: np.ndarray) -> np.ndarray:
    keep = norms > TOL
    return rows[keep] / norms[keep, None]


def dual_sphere_mesh(space: FiniteSpace, resolution: int) -> np.ndarray:
    """Deterministic mesh of the dual unit sphere, nested under doubling."""
    dirs = _directions_mesh(space.dim, resolution)
    norms = np.array([dual_norm(space, v) for v in dirs])
    pts = _normalize_rows(dirs, norms)
    return pts if space.dim == 2 else _canonical_rows(pts)


def sphere_mesh(space: FiniteSpace, resolution: int) -> np.ndarray:
    """Deterministic mesh of the primal unit sphere, nested under doubling."""
    dirs = _directions_mesh(space.dim, resolution)
    norms = norm_batch(space, dirs)
    pts = _normalize_rows(dirs, norms)
    return pts if space.dim == 2 else _canonical_rows(pts)


def dual_ball_points(
    space: FiniteSpace,
    mode: str = "auto",
    resolution: int = 16,
) -> DualBallModel:
    """Finite model of the dual unit ball.

    mode "auto" picks the exact generator set when the primal norm is
    polyhedral and a dual-sphere mesh otherwise; "extreme" and "mesh" force
    the choice ("extreme" raises on non-polyhedral spaces).
    """
    if mode not in ("auto", "extreme", "mesh"):
        raise SumlabError(f"unknown dual ball mode {mode!r}")
    use_extreme = space.is_polyhedral if mode == "auto" else (mode == "extreme")
    if use_extreme:
        if not space.is_polyhedral:
            raise PolyhedralRequired("requires polyhedral space")
        if space.kind == "lq":
            pts = _sign_vectors(space.dim) if space.q == 1.0 else _unit_vectors(space.dim)
            pts = _canonical_rows(pts)
        else:
            pts = unit_ball_facets(space)
        return DualBallModel(space=space, points=pts, exactness="extreme-exact")
    pts = dual_sphere_mesh(space, resolution)
    return DualBallModel(space=space, points=pts, exactness="mesh", resolution=resolution)


def norming_functional(space: FiniteSpace, x) -> np.ndarray:
    """x* with dual_norm(x*) = 1 and <x, x*> = norm(x).

    Exact for both kinds.  When several dual generators attain the norm
    (polyhedral case) the lexicographically smallest one is returned.
    """
    v = _check_vec(space, x)
    n = norm(space, v)
    if n <= TOL:
        raise SumlabError("norming functional of the zero vector is not unique")
    if space.kind == "lq" and not space.is_polyhedral:
        q = space.q
        w = np.sign(v) * np.abs(v) ** (q - 1.0)
        return w / n ** (q - 1.0)
    model = dual_ball_points(space, mode="extreme")
    values = model.points @ v
    hits = model.points[values >= n - 1e-9 * max(n, 1.0)]
    # _canonical_rows already sorted the model, so the first hit is smallest.
    return hits[0] + 0.0


def norm_subgradient(space: FiniteSpace, v) -> np.ndarray:
    """A subgradient of the norm at v (the zero functional at v = 0)."""
    v = _check_vec(space, v)
    if space.kind == "lq":
        q = space.q
        if math.isinf(q):
            i = int(np.argmax(np.abs(v)))
            g = np.zeros(space.dim)
            if abs(v[i]) > TOL:
                g[i] = math.copysign(1.0, v[i])
            return g
        if q == 1.0:
            return np.sign(v)
        n = _lq_norm(v, q)
        if n <= TOL:
            return np.zeros(space.dim)
        return np.sign(v) * np.abs(v) ** (q - 1.0) / n ** (q - 1.0)
    fac = space.facet_array()
    vals = fac @ v
    i = int(np.argmax(np.abs(vals)))
    if abs(vals[i]) <= TOL:
        return np.zeros(space.dim)
    return math.copysign(1.0, vals[i]) * fac[i]


def ball_maximizer(space: FiniteSpace, w) -> np.ndarray:
    """argmax of <w, x> over the primal unit ball; value is dual_norm(w)."""
    w = _check_vec(space, w)
    if float(np.max(np.abs(w))) <= TOL:
        return np.zeros(space.dim)
    if space.kind == "lq":
        qd = dual_exponent(space.q)
        if math.isinf(qd):
            # primal is l1: put everything on one max coordinate
            i = int(np.argmax(np.abs(w)))
            x = np.zeros(space.dim)
            x[i] = math.copysign(1.0, w[i])
            return x
        if qd == 1.0:
            return np.sign(w)
        x = np.sign(w) * np.abs(w) ** (qd - 1.0)
        return x / norm(space, x)
    verts = ball_extreme_points(space)
    return verts[int(np.argmax(verts @ w))] + 0.0
