"""Linear and multilinear maps, tensor elements and projective norms.

Multilinear coefficient arrays are indexed with one basis index per domain
factor followed by the codomain index (codomain-last).  ``linearize`` turns
an m-linear map into the induced linear map on tensor coordinates, which the
multilinear bound machinery runs through.

``projective_norm`` returns a two-sided sandwich: the upper value comes from
an explicit bounded-rank representation (always a valid upper bound), the
lower value from a bounded multilinear form certificate (always a valid
lower bound because any feasible form certifies one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from itertools import product

import numpy as np

from . import spaces as sp
from .config import DEFAULT_CONFIG, TOL_EQ, SolverConfig
from .errors import DimensionMismatch, SumlabError

__all__ = [
    "LinearMap",
    "MultilinearMap",
    "TensorElement",
    "VmElement",
    "LinearOnTensor",
    "op_norm",
    "form_norm_upper",
    "linearize",
    "embed_vm",
    "vm_eval",
    "projective_norm",
    "projective_norm_detail",
    "PiNormResult",
    "rank_one_factors",
]

RECONSTRUCTION_TOL = 1e-9


@dataclass(frozen=True)
class LinearMap:
    domain: sp.FiniteSpace
    codomain: sp.FiniteSpace
    matrix: np.ndarray  # (codomain.dim, domain.dim)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (self.codomain.dim, self.domain.dim):
            raise DimensionMismatch(
                f"matrix shape {m.shape} vs (codomain {self.codomain.dim}, domain {self.domain.dim})"
            )
        object.__setattr__(self, "matrix", m)

    def apply(self, x) -> np.ndarray:
        return self.matrix @ np.asarray(x, dtype=float)


@dataclass(frozen=True)
class MultilinearMap:
    domains: tuple[sp.FiniteSpace, ...]
    codomain: sp.FiniteSpace
    coeffs: np.ndarray  # shape (d_1, ..., d_m, d_out)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        expected = tuple(s.dim for s in self.domains) + (self.codomain.dim,)
        if c.shape != expected:
            raise DimensionMismatch(f"coeff shape {c.shape} vs expected {expected}")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "domains", tuple(self.domains))

    @property
    def arity(self) -> int:
        return len(self.domains)

    def apply(self, *vectors) -> np.ndarray:
        if len(vectors) != self.arity:
            raise DimensionMismatch(f"expected {self.arity} arguments, got {len(vectors)}")
        out = self.coeffs
        for v in vectors:
            out = np.tensordot(np.asarray(v, dtype=float), out, axes=(0, 0))
        return out


def _outer(vectors) -> np.ndarray:
    return reduce(np.multiply.outer, [np.asarray(v, dtype=float) for v in vectors])


@dataclass(frozen=True)
class TensorElement:
    """Element of the algebraic tensor product, stored by coordinates."""

    spaces: tuple[sp.FiniteSpace, ...]
    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        expected = tuple(s.dim for s in self.spaces)
        if c.shape != expected:
            raise DimensionMismatch(f"coords shape {c.shape} vs expected {expected}")
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "spaces", tuple(self.spaces))


def _term_sort_key(term):
    lam, vectors = term
    return (np.round(np.concatenate([[lam]] + [np.asarray(v) for v in vectors]), 12) + 0.0).tobytes()


@dataclass(frozen=True)
class VmElement:
    """Finite combination sum_k lam_k <x^{1,k} x ... x x^{m,k}, .> viewed as a
    function on the ball of bounded m-linear forms.

    Terms are canonically ordered before the coordinate cache is summed, so
    elements built from reordered term lists have bit-identical coords.
    """

    spaces: tuple[sp.FiniteSpace, ...]
    terms: tuple  # ((lam, (x^1, ..., x^m)), ...)
    coords: np.ndarray = None  # cached, derived from terms

    def __post_init__(self):
        object.__setattr__(self, "spaces", tuple(self.spaces))
        canon = []
        for lam, vectors in self.terms:
            vecs = tuple(np.asarray(v, dtype=float) for v in vectors)
            if len(vecs) != len(self.spaces):
                raise DimensionMismatch("term arity does not match spaces")
            for v, s in zip(vecs, self.spaces):
                if v.shape != (s.dim,):
                    raise DimensionMismatch("term vector does not match its space")
            canon.append((float(lam), vecs))
        canon.sort(key=_term_sort_key)
        object.__setattr__(self, "terms", tuple(canon))
        dims = tuple(s.dim for s in self.spaces)
        coords = np.zeros(dims)
        for lam, vecs in self.terms:
            coords += lam * _outer(vecs)
        object.__setattr__(self, "coords", coords)

    @property
    def arity(self) -> int:
        return len(self.spaces)

    def to_tensor(self) -> TensorElement:
        return TensorElement(self.spaces, self.coords)

    def isclose(self, other: "VmElement", tol: float = TOL_EQ) -> bool:
        if tuple(self.spaces) != tuple(other.spaces):
            return False
        return bool(np.max(np.abs(self.coords - other.coords)) <= tol)

    def scaled(self, factor: float) -> "VmElement":
        return VmElement(self.spaces, tuple((factor * lam, vecs) for lam, vecs in self.terms))


def embed_vm(spaces, vectors, lam: float = 1.0) -> VmElement:
    """The elementary element <x^1 x ... x x^m, .> (scaled by lam)."""
    return VmElement(tuple(spaces), ((lam, tuple(vectors)),))


def _form_coeffs(phi) -> np.ndarray:
    if isinstance(phi, MultilinearMap):
        if phi.codomain.dim != 1:
            raise DimensionMismatch("form must have scalar codomain")
        return phi.coeffs[..., 0]
    return np.asarray(phi, dtype=float)


def vm_eval(v: VmElement | TensorElement, phi) -> float:
    """Evaluate the element against a multilinear form (coefficient pairing)."""
    coeffs = _form_coeffs(phi)
    if coeffs.shape != v.coords.shape:
        raise DimensionMismatch(f"form shape {coeffs.shape} vs coords {v.coords.shape}")
    return float(np.sum(v.coords * coeffs))


# ---------------------------------------------------------------------------
# operator norms


def _extreme_or_mesh(space: sp.FiniteSpace, mode: str, resolution: int) -> tuple[np.ndarray, bool]:
    """Candidate points of the unit sphere; flag says whether they are exact."""
    use_extreme = space.is_polyhedral if mode == "auto" else (mode == "extreme")
    if use_extreme:
        return sp.ball_extreme_points(space), True
    return sp.sphere_mesh(space, resolution), False


def op_norm(
    T: LinearMap | MultilinearMap,
    mode: str = "auto",
    resolution: int = 16,
    ascent_cycles: int = 6,
) -> float:
    """Operator norm of a linear or multilinear map.

    Exact over products of extreme points when every domain factor is
    polyhedral (the norm of the image is convex in each slot).  Otherwise the
    value is a mesh-plus-ascent lower estimate of the true norm.
    """
    if isinstance(T, LinearMap):
        pts, exact = _extreme_or_mesh(T.domain, mode, resolution)
        values = sp.norm_batch(T.codomain, pts @ T.matrix.T)
        best = float(np.max(values))
        if not exact:
            best = max(best, _linear_ascent(T, pts[int(np.argmax(values))]))
            if T.domain.kind == "lq" and T.domain.q == 2.0 and T.codomain.kind == "lq" and T.codomain.q == 2.0:
                best = float(np.linalg.svd(T.matrix, compute_uv=False)[0])
        return best
    factor_pts = []
    total = 1
    for s in T.domains:
        pts, _ = _extreme_or_mesh(s, mode, resolution)
        factor_pts.append(pts)
        total *= len(pts)
    if total > 65536:
        raise SumlabError("extreme/mesh product too large for op_norm enumeration")
    best, best_tuple = 0.0, None
    for combo in product(*factor_pts):
        val = sp.norm(T.codomain, T.apply(*combo))
        if val > best:
            best, best_tuple = val, combo
    all_polyhedral = all(s.is_polyhedral for s in T.domains)
    if not all_polyhedral and best_tuple is not None:
        best = max(best, _multilinear_ascent(T, list(best_tuple), ascent_cycles))
    return best


def _linear_ascent(T: LinearMap, x0: np.ndarray, cycles: int = 8) -> float:
    x = np.array(x0)
    best = 0.0
    for _ in range(cycles):
        y = T.apply(x)
        if sp.norm(T.codomain, y) <= 1e-15:
            break
        y_star = sp.norming_functional(T.codomain, y)
        x = sp.ball_maximizer(T.domain, T.matrix.T @ y_star)
        best = max(best, sp.norm(T.codomain, T.apply(x)))
    return best


def _multilinear_ascent(T: MultilinearMap, tup: list, cycles: int) -> float:
    best = 0.0
    for _ in range(cycles):
        img = T.apply(*tup)
        if sp.norm(T.codomain, img) <= 1e-15:
            break
        y_star = sp.norming_functional(T.codomain, img)
        for j, space in enumerate(T.domains):
            # gradient of <y*, T(...)> in slot j with the others fixed
            out = T.coeffs @ y_star
            for i, v in enumerate(tup):
                if i == j:
                    continue
                out = np.tensordot(np.asarray(v), out, axes=(0, 0 if i < j else 1))
            tup[j] = sp.ball_maximizer(space, out)
        best = max(best, sp.norm(T.codomain, T.apply(*tup)))
    return best


def form_norm_upper(spaces_, coeffs: np.ndarray) -> float:
    """Certified upper bound on the operator norm of a scalar m-linear form.

    Exact (extreme-point enumeration) when all factors are polyhedral; a
    coarse l1-type bound otherwise.  Used to normalize dense form candidates
    so that lower-bound certificates stay feasible.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    spaces_ = tuple(spaces_)
    if all(s.is_polyhedral for s in spaces_):
        form = MultilinearMap(spaces_, sp.scalar_space(), coeffs[..., None])
        return op_norm(form, mode="extreme")
    factors = rank_one_factors(coeffs)
    if factors is not None:
        # rank-one forms have norm prod_j ||a*_j||: the sup factorizes
        return math.prod(sp.dual_norm(s, f) for s, f in zip(spaces_, factors))
    bound = float(np.sum(np.abs(coeffs)))
    for j, s in enumerate(spaces_):
        kappa = max(sp.dual_norm(s, e) for e in np.eye(s.dim))
        bound *= kappa
    return bound


# ---------------------------------------------------------------------------
# linearization


@dataclass(frozen=True)
class LinearOnTensor:
    """Linear map on tensor coordinates induced by a multilinear map."""

    spaces: tuple[sp.FiniteSpace, ...]
    codomain: sp.FiniteSpace
    matrix: np.ndarray  # (codomain.dim, prod of dims)

    def apply(self, v) -> np.ndarray:
        coords = v.coords if isinstance(v, (TensorElement, VmElement)) else np.asarray(v, dtype=float)
        return self.matrix @ coords.reshape(-1)


def linearize(T: MultilinearMap) -> LinearOnTensor:
    """T_L with T_L(x^1 x ... x x^m) = T(x^1, ..., x^m) on tensor coords."""
    mat = np.moveaxis(T.coeffs, -1, 0).reshape(T.codomain.dim, -1)
    return LinearOnTensor(spaces=tuple(T.domains), codomain=T.codomain, matrix=mat)


# ---------------------------------------------------------------------------
# projective norm


@dataclass(frozen=True)
class PiNormResult:
    upper: float
    lower: float
    representation: tuple  # ((lam, (x^1, ..., x^m)), ...) achieving `upper`
    certificate: np.ndarray | None  # form coefficients achieving `lower`
    flags: tuple[str, ...] = ()


def rank_one_factors(coords: np.ndarray) -> list[np.ndarray] | None:
    """Factors of a numerically rank-one tensor, or None.

    Successive mode-0 unfoldings; the reconstruction is validated before the
    factors are accepted.
    """
    scale = float(np.max(np.abs(coords)))
    if scale <= 0.0:
        return None
    factors = []
    rest = coords
    while rest.ndim > 1:
        unfolded = rest.reshape(rest.shape[0], -1)
        u_mat, s, vt = np.linalg.svd(unfolded, full_matrices=False)
        if s[0] <= 0.0:
            return None
        factors.append(u_mat[:, 0] * s[0])
        rest = vt[0].reshape(rest.shape[1:])
    factors.append(rest)
    recon = _outer(factors)
    if np.max(np.abs(recon - coords)) > 1e-10 * scale:
        return None
    return factors


def _svd_seed(coords: np.ndarray, r_max: int):
    """Representation terms from a mode-0 SVD split (recursive for m > 2)."""
    if coords.ndim == 1:
        return [(1.0, (coords.copy(),))]
    unfolded = coords.reshape(coords.shape[0], -1)
    u_mat, s, vt = np.linalg.svd(unfolded, full_matrices=False)
    terms = []
    for k in range(min(len(s), r_max)):
        if s[k] <= 1e-14 * s[0]:
            break
        tail = (s[k] * vt[k]).reshape(coords.shape[1:])
        for lam, vecs in _svd_seed(tail, r_max):
            terms.append((lam, (u_mat[:, k].copy(),) + vecs))
    return terms


def _canonical_seed(coords: np.ndarray):
    terms = []
    for idx in np.ndindex(*coords.shape):
        c = coords[idx]
        if c == 0.0:
            continue
        vecs = []
        for j, i in enumerate(idx):
            e = np.zeros(coords.shape[j])
            e[i] = 1.0
            vecs.append(e)
        terms.append((float(c), tuple(vecs)))
    return terms


def _rep_value(spaces_, terms) -> float:
    return sum(abs(lam) * math.prod(sp.norm(s, v) for s, v in zip(spaces_, vecs)) for lam, vecs in terms)


def _rep_coords(shape, terms) -> np.ndarray:
    out = np.zeros(shape)
    for lam, vecs in terms:
        out += lam * _outer(vecs)
    return out


def _absorb_lambda(terms):
    """Push scalar weights into the first factor; drop null terms."""
    out = []
    for lam, vecs in terms:
        if lam == 0.0:
            continue
        vecs = tuple(np.asarray(v, dtype=float) for v in vecs)
        if any(np.max(np.abs(v)) <= 1e-15 for v in vecs):
            continue
        out.append((lam * vecs[0],) + vecs[1:])
    return out


def _alternating_upper(spaces_, coords, factor_terms, sweeps: int = 3):
    """Improve a representation in place by per-slot convex minimization.

    Each slot subproblem minimizes a weighted sum of norms over the affine
    set of slot factors that reproduce ``coords`` exactly; iterates stay
    feasible by construction (null-space parametrization).
    """
    from .optimize import subgradient_descent

    m = len(spaces_)
    terms = [list(t) for t in factor_terms]
    r = len(terms)
    if r == 0:
        return factor_terms
    for _ in range(sweeps):
        for j in range(m):
            space_j = spaces_[j]
            d_j = space_j.dim
            weights = np.array([
                math.prod(sp.norm(spaces_[jj], terms[t][jj]) for jj in range(m) if jj != j)
                for t in range(r)
            ])
            if np.any(weights <= 1e-15):
                continue
            cols = []
            for t in range(r):
                others = [terms[t][jj] for jj in range(m) if jj != j]
                base = _outer(others) if others else np.array(1.0)
                for b in range(d_j):
                    e = np.zeros(d_j)
                    e[b] = 1.0
                    slot_vecs = others[:j] + [e] + others[j:]
                    cols.append(_outer(slot_vecs).reshape(-1))
            design = np.array(cols).T  # (prod_dims, r*d_j)
            w0 = np.concatenate([terms[t][j] for t in range(r)])
            target = coords.reshape(-1)
            # validate current feasibility, then move inside the affine set
            if np.max(np.abs(design @ w0 - target)) > RECONSTRUCTION_TOL * max(1.0, np.max(np.abs(target))):
                continue
            u_mat, s, vt = np.linalg.svd(design, full_matrices=True)
            rank = int(np.sum(s > 1e-11 * (s[0] if len(s) else 1.0)))
            null = vt[rank:].T
            if null.shape[1] == 0:
                continue

            def build(z, w0=w0, null=null, r=r, d_j=d_j):
                w = w0 + null @ z
                return [w[t * d_j:(t + 1) * d_j] for t in range(r)]

            def objective(z, weights=weights, space_j=space_j, build=build):
                return sum(wt * sp.norm(space_j, xv) for wt, xv in zip(weights, build(z)))

            def subgrad(z, weights=weights, space_j=space_j, build=build, null=null):
                g = np.concatenate([
                    wt * sp.norm_subgradient(space_j, xv)
                    for wt, xv in zip(weights, build(z))
                ])
                return null.T @ g

            z_best, _ = subgradient_descent(objective, subgrad, np.zeros(null.shape[1]), steps=120)
            for t, xv in enumerate(build(z_best)):
                terms[t][j] = xv
    return [tuple(t) for t in terms]


def _random_representation(rng, spaces_, coords, r: int):
    """Random factors for all slots but the last; last slot fit exactly."""
    m = len(spaces_)
    dims = [s.dim for s in spaces_]
    lead = [[rng.standard_normal(dims[j]) for j in range(m - 1)] for _ in range(r)]
    cols = []
    for t in range(r):
        base = _outer(lead[t]) if m > 1 else np.array(1.0)
        for b in range(dims[-1]):
            e = np.zeros(dims[-1])
            e[b] = 1.0
            cols.append(np.multiply.outer(base, e).reshape(-1))
    design = np.array(cols).T
    sol, *_ = np.linalg.lstsq(design, coords.reshape(-1), rcond=None)
    if np.max(np.abs(design @ sol - coords.reshape(-1))) > RECONSTRUCTION_TOL * max(1.0, float(np.max(np.abs(coords)))):
        return None
    d_last = dims[-1]
    return [tuple(lead[t]) + (sol[t * d_last:(t + 1) * d_last],) for t in range(r)]


def _upper_bound(spaces_, coords, r_max: int, cfg: SolverConfig):
    shape = coords.shape
    scale = float(np.max(np.abs(coords)))
    if scale == 0.0:
        return 0.0, ()
    candidates = []

    def consider(factor_terms):
        terms = [(1.0, vecs) for vecs in factor_terms]
        err = np.max(np.abs(_rep_coords(shape, terms) - coords))
        if err <= RECONSTRUCTION_TOL * max(1.0, scale):
            candidates.append((_rep_value(spaces_, terms), tuple(terms)))

    canonical = _absorb_lambda(_canonical_seed(coords))
    consider(canonical)
    svd_terms = _absorb_lambda(_svd_seed(coords, r_max))
    consider(svd_terms)

    seeds = []
    if len(svd_terms) <= r_max:
        seeds.append(svd_terms)
    if len(canonical) <= r_max:
        seeds.append(canonical)
    rng = np.random.default_rng(cfg.seed + 101)
    needed = math.prod(shape) // max(shape[-1], 1)
    r_rand = min(r_max, max(needed, 1))
    for _ in range(max(0, 16 - len(seeds))):
        rep = _random_representation(rng, spaces_, coords, r_rand)
        if rep is not None:
            seeds.append(rep)
    for seed_rep in seeds:
        improved = _alternating_upper(spaces_, coords, seed_rep)
        consider(improved)

    candidates.sort(key=lambda c: c[0])
    return candidates[0]


def _lower_bound(spaces_, coords, cfg: SolverConfig):
    """Best feasible-form certificate sup |<v, phi>| over op_norm(phi) <= 1."""
    best_val, best_form = 0.0, None

    def consider(phi_coeffs: np.ndarray):
        nonlocal best_val, best_form
        bound = form_norm_upper(spaces_, phi_coeffs)
        if bound <= 1e-14:
            return
        val = abs(float(np.sum(coords * phi_coeffs))) / bound
        if val > best_val:
            best_val, best_form = val, phi_coeffs / bound

    # rank-one forms from the dual ball models
    models = [sp.dual_ball_points(s, resolution=cfg.mesh_resolution) for s in spaces_]
    sizes = [len(m) for m in models]
    if math.prod(sizes) <= 65536:
        contracted = coords
        # evaluate <v, a1 x ... x am> for all dual point combinations
        for m_j in models:
            contracted = np.tensordot(contracted, m_j.points.T, axes=(0, 0))
        flat = np.abs(contracted).reshape(-1)
        idx = int(np.argmax(flat))
        combo_idx = np.unravel_index(idx, contracted.shape)
        form = _outer([models[j].points[combo_idx[j]] for j in range(len(spaces_))])
        consider(form)

    # exact certificate for rank-one inputs
    factors = rank_one_factors(coords)
    if factors is not None and all(sp.norm(s, f) > 1e-14 for s, f in zip(spaces_, factors)):
        form = _outer([sp.norming_functional(s, f) for s, f in zip(spaces_, factors)])
        consider(form)

    # aligned dense form plus deterministic perturbations
    consider(coords.copy())
    rng = np.random.default_rng(cfg.seed + 202)
    for _ in range(8):
        consider(coords + 0.3 * float(np.max(np.abs(coords))) * rng.standard_normal(coords.shape))
    return best_val, best_form


def projective_norm_detail(
    v: TensorElement | VmElement,
    r_max: int | None = None,
    cfg: SolverConfig = DEFAULT_CONFIG,
    extra_seeds=(),
) -> PiNormResult:
    spaces_ = tuple(v.spaces)
    coords = v.coords
    r_max = r_max if r_max is not None else max(cfg.rank_cap, math.prod(coords.shape) // max(coords.shape[-1], 1))
    upper, rep = _upper_bound(spaces_, coords, r_max, cfg)
    for seed_terms in extra_seeds:
        scale = float(np.max(np.abs(coords))) or 1.0
        if np.max(np.abs(_rep_coords(coords.shape, seed_terms) - coords)) <= RECONSTRUCTION_TOL * max(1.0, scale):
            val = _rep_value(spaces_, seed_terms)
            if val < upper:
                upper, rep = val, tuple(seed_terms)
    lower, cert = _lower_bound(spaces_, coords, cfg)
    if lower > upper:
        # both sides are exact up to roundoff here; keep the sandwich ordered
        if lower - upper <= 1e-9 * max(1.0, upper):
            upper = lower
        else:
            raise SumlabError("projective norm certificate exceeded the representation value")
    flags = () if upper - lower <= cfg.tol_gap * max(1.0, upper) else ("possibly-loose",)
    return PiNormResult(upper=upper, lower=lower, representation=rep, certificate=cert, flags=flags)


def projective_norm(
    v: TensorElement | VmElement,
    r_max: int | None = None,
    cfg: SolverConfig = DEFAULT_CONFIG,
) -> tuple[float, float]:
    """Two-sided estimate (upper, lower) of the projective tensor norm."""
    res = projective_norm_detail(v, r_max=r_max, cfg=cfg)
    return res.upper, res.lower
