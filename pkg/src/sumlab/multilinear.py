"""Multilinear summing classes and their certificates.

Two families are implemented.  The *strongly* summing constant treats the
multilinear map through its linearization on the projective tensor product:
elements are finite combinations of elementary tensors, functionals are
bounded m-linear forms, and the linear cutting-plane machinery runs on that
pair.  When every factor space is an l1 space the tensor norm is exactly the
l1 norm on product coordinates, so the delegation is exact end to end; the
general coords-level path keeps soundness by restricting measure support to
verified forms (flagged) and certifying lower bounds against a projective
upper bound.

The *multi-ideal* class keeps one measure per factor space and a product of
per-factor integrals on the right-hand side.  Its certificate is computed by
alternating minimization: freezing all measures but one turns the constraint
set into a single min-mass covering LP.  The product constraint is never
convexified (a weighted AM-GM single-LP variant would change the constant),
so the result is an upper-bound certificate over the sampled tuple universe,
tightened by a per-slot ascent sweep and reported with that caveat flagged.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from . import spaces as sp
from .config import DEFAULT_CONFIG, SolverConfig
from .domination import DiagramReport, DominationSpaceModel, Factorization, build_factorization, build_model
from .errors import (
    DimensionMismatch,
    ExponentIdentityError,
    NoCertifiedMeasure,
    SumlabError,
    SupportCannotDominate,
)
from .linear_summing import (
    DiscreteMeasure,
    PhiMap,
    SummingReport,
    _antipodal_filter,
    _cutting_driver,
    _delta_measure,
    _phi_batch,
    _weighted_phi_sup,
    identity_phi,
    summing_constant,
)
from .operators import (
    LinearMap,
    MultilinearMap,
    VmElement,
    embed_vm,
    form_norm_upper,
    linearize,
)
from .sip import min_measure_mass

__all__ = [
    "TensorKernel",
    "CoefficientFamily",
    "MultiMeasureCertificate",
    "MultiFactorization",
    "strongly_family_lower_bound",
    "strongly_constant",
    "strongly_factorization",
    "multi_ideal_lower_bound",
    "multi_ideal_upper_bound",
    "factor_multilinear",
]


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class TensorKernel:
    """Kernel specification applied to tensor elements against forms.

    The anchor, when present, is a form given by its coefficient array (it is
    normalized against the tensor model when one exists).
    """

    kind: str = "identity"
    sigma: float = 0.0
    anchor: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "sigma_interp", "square_over_norm", "anchored"):
            raise SumlabError(f"unknown kernel kind {self.kind!r}")
        if not 0.0 <= self.sigma < 1.0:
            raise SumlabError("sigma must lie in [0, 1)")
        if self.anchor is not None:
            object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=float))
        if self.kind == "anchored" and self.anchor is None:
            raise SumlabError("anchored kernel needs an anchor form")

    def to_phi(self, space: sp.FiniteSpace) -> PhiMap:
        anchor = None if self.anchor is None else self.anchor.reshape(-1)
        return PhiMap(space=space, kind=self.kind, sigma=self.sigma, anchor=None if anchor is None else tuple(anchor))


@dataclass(frozen=True)
class CoefficientFamily:
    """Rows of doubly indexed data: row i is a list of (lam, (x^1,...,x^m)).

    Each row represents one element sum_k lam_k <x^{1,k} x ... x x^{m,k}, .>
    of the tensor product; the family as a whole is what a lower-bound
    certificate evaluates.
    """

    spaces: tuple[sp.FiniteSpace, ...]
    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "spaces", tuple(self.spaces))
        if not self.rows:
            raise SumlabError("a coefficient family needs at least one row")
        canon = tuple(VmElement(self.spaces, tuple(row)).terms for row in self.rows)
        object.__setattr__(self, "rows", canon)

    @property
    def arity(self) -> int:
        return len(self.spaces)

    def elements(self) -> tuple[VmElement, ...]:
        return tuple(VmElement(self.spaces, row) for row in self.rows)

    @staticmethod
    def from_tuples(spaces, tuples, lams=None) -> "CoefficientFamily":
        """Single-term rows (the n2 = 1 restriction); lams default to 1."""
        tuples = list(tuples)
        if lams is None:
            lams = [1.0] * len(tuples)
        rows = tuple(((float(lam), tuple(tup)),) for lam, tup in zip(lams, tuples))
        return CoefficientFamily(tuple(spaces), rows)


@dataclass(frozen=True)
class MultiMeasureCertificate:
    """(C, mu_1, ..., mu_m): one probability measure per factor dual ball."""

    constant: float
    measures: tuple[DiscreteMeasure, ...]
    flags: tuple[str, ...] = ()

    def as_record(self) -> dict:
        return {
            "constant": float(self.constant),
            "measures": [m.as_record() for m in self.measures],
            "flags": list(self.flags),
        }


# ---------------------------------------------------------------------------
# the tensor model


def _coords_dim(domains) -> int:
    return int(np.prod([s.dim for s in domains]))


def _proxy_space(domains) -> sp.FiniteSpace | None:
    """Exact finite model of the projective tensor product, when one exists.

    A single factor is its own tensor product; a product of l1 spaces has
    projective norm equal to the l1 norm on product coordinates (and the
    forms ball is then exactly the coefficient sup-ball).
    """
    domains = tuple(domains)
    if len(domains) == 1:
        return domains[0]
    if all(s.kind == "lq" and s.q == 1.0 for s in domains):
        dim = _coords_dim(domains)
        # the model's dual support is the 2^(dim-1) sign patterns; past a
        # dozen coordinates that set is no longer enumerable
        if dim <= 12:
            return sp.lq_space(dim, 1.0, label="tensor-coords")
    return None


def _forms_model(domains, cfg: SolverConfig) -> np.ndarray:
    """Verified points of the forms ball, flattened to coordinate rows.

    Rank-one products of dual-ball points have form norm equal to the
    product of dual norms (<= 1); dense sign patterns are admitted after
    division by a certified upper bound of their form norm.  Everything in
    the result is a genuine form of norm at most 1, so measures supported
    here are sound certificates (if incomplete, which is flagged upstream).
    """
    domains = tuple(domains)
    m = len(domains)
    per_cap = max(2, int(round(cfg.universe_cap ** (1.0 / m))))
    per = []
    for s in domains:
        pts = sp.dual_ball_points(s, "auto", resolution=cfg.mesh_resolution).points
        per.append(pts[:per_cap])
    rows = [reduce(np.multiply.outer, combo).reshape(-1) for combo in itertools.product(*per)]
    dims = tuple(s.dim for s in domains)
    total = _coords_dim(domains)
    if total <= 10:
        for pattern in itertools.product((-1.0, 1.0), repeat=total):
            g = np.array(pattern)
            upper = form_norm_upper(domains, g.reshape(dims))
            if upper > 1e-12:
                rows.append(g / upper)
    forms = _antipodal_filter(sp._canonical_rows(np.vstack(rows)))
    if forms.shape[0] > cfg.universe_cap:
        forms = forms[: cfg.universe_cap]
    return forms


def _family_from_vectors(spaces, vectors) -> CoefficientFamily | None:
    """Rows rebuilt from coordinate vectors via exact low-rank splits."""
    from .operators import _svd_seed  # representation helper shared with the pi norm

    dims = tuple(s.dim for s in spaces)
    rows = []
    for v in vectors:
        coords = np.asarray(v, dtype=float).reshape(dims)
        if len(spaces) == 1:
            rows.append(((1.0, (coords.copy(),)),))
            continue
        terms = _svd_seed(coords, max(dims))
        if not terms:
            continue
        rows.append(tuple(terms))
    if not rows:
        return None
    return CoefficientFamily(tuple(spaces), tuple(rows))


# ---------------------------------------------------------------------------
# strongly summing


def strongly_family_lower_bound(
    T: MultilinearMap,
    kernel: TensorKernel,
    r: float,
    fam: CoefficientFamily,
) -> float:
    """Ratio certificate from one coefficient family.

    The denominator is the forms-ball supremum of the summed kernel powers:
    exact through the tensor model when one exists, otherwise the
    sign-exhaustive + rank-one mesh model (a lower approximation, which can
    only enlarge the reported ratio — callers needing certified bounds use
    the internal variant that divides by a projective upper bound).
    """
    if tuple(fam.spaces) != tuple(T.domains):
        raise DimensionMismatch("family spaces do not match the operator domains")
    elements = fam.elements()
    coords = np.vstack([e.coords.reshape(-1) for e in elements])
    mat = linearize(T).matrix
    num = float(np.sum(sp.norm_batch(T.codomain, coords @ mat.T) ** r)) ** (1.0 / r)
    proxy = _proxy_space(T.domains)
    if proxy is not None:
        den = _weighted_phi_sup(kernel.to_phi(proxy), coords, np.ones(len(elements)), r).value
    else:
        if kernel.kind != "identity":
            raise SumlabError("this kernel needs an exact tensor model (all-l1 factors)")
        forms = _forms_model(T.domains, DEFAULT_CONFIG)
        den = float(np.max(np.sum(np.abs(coords @ forms.T) ** r, axis=0))) ** (1.0 / r)
    if den <= 1e-14:
        return math.inf if num > 1e-14 else 0.0
    return num / den


def _coords_strongly(T: MultilinearMap, kernel: TensorKernel, r: float, cfg: SolverConfig) -> SummingReport:
    """Cutting-plane run at the coordinate level with verified-form support.

    Without an exact tensor model the dual sign patterns of the coordinate
    l1 space overshoot the forms ball (they are not all bounded forms), so
    the support is rebuilt from genuine forms and the run is flagged as a
    support mesh.  The oracle ratio is 0-homogeneous, hence independent of
    the hosting norm, which keeps the exact oracles exact here.
    """
    if kernel.kind != "identity":
        raise SumlabError("only the identity kernel is supported without an all-l1 tensor model")
    if not all(s.kind == "lq" for s in T.domains):
        raise SumlabError("polytope factor spaces need an all-l1 tensor model")
    host = sp.lq_space(_coords_dim(T.domains), 1.0, label="tensor-coords")
    phi = identity_phi(host)
    TL = LinearMap(host, T.codomain, linearize(T).matrix)
    support = _forms_model(T.domains, cfg)
    base_flags = ("support-mesh",)
    if not TL.matrix.any():
        return SummingReport(
            exponent=r,
            lower_bound=0.0,
            upper_bound=0.0,
            lb_certificate=(),
            measure=_delta_measure(host, support[0]),
            iterations=0,
            flags=base_flags,
            phi=phi,
        )
    return _cutting_driver(TL, phi, r, support, base_flags, cfg)


def strongly_constant(
    T: MultilinearMap,
    kernel: TensorKernel = TensorKernel(),
    r: float = 1.0,
    cfg: SolverConfig = DEFAULT_CONFIG,
) -> SummingReport:
    """Two-sided bounds for the strongly summing constant of T.

    The map is linearized on its tensor product.  With an exact tensor model
    (single factor, or all-l1 factors) the whole linear pipeline applies
    verbatim and inherits its certification; otherwise the coordinate-level
    driver runs with verified-form support.  Either way the lower-bound
    certificate is re-scored through an independently rebuilt coefficient
    family as a consistency check on the linearization.
    """
    if r < 1.0 - 1e-12:
        raise SumlabError("exponent must satisfy r >= 1")
    proxy = _proxy_space(T.domains)
    if proxy is not None:
        TL = LinearMap(proxy, T.codomain, linearize(T).matrix)
        rep = summing_constant(TL, kernel.to_phi(proxy), r, cfg)
    else:
        rep = _coords_strongly(T, kernel, r, cfg)

    fam = None
    if rep.lb_certificate:
        vecs = []
        dims = tuple(s.dim for s in T.domains)
        for v in rep.lb_certificate:
            arr = np.asarray(v, dtype=float).reshape(-1)
            if arr.size == int(np.prod(dims)):
                vecs.append(arr)
        if vecs:
            fam = _family_from_vectors(T.domains, vecs)
    flags = set(rep.flags)
    entry = {"delegated_lower": float(rep.lower_bound)}
    if fam is not None:
        recon = np.vstack([e.coords.reshape(-1) for e in fam.elements()])
        target = np.vstack(vecs)
        if recon.shape == target.shape and np.max(np.abs(recon - target)) <= 1e-9 * max(1.0, float(np.max(np.abs(target)))):
            check = strongly_family_lower_bound(T, kernel, r, fam)
            entry["family_check"] = float(check)
            exact_den = proxy is not None and kernel.to_phi(proxy).convex_power(r) and proxy.is_polyhedral
            if exact_den and check > rep.upper_bound + max(cfg.tol_duality, 1e-9 * max(1.0, rep.upper_bound)):
                flags.add("family-disagreement")
    return dataclasses.replace(
        rep,
        flags=tuple(sorted(flags)),
        history=tuple(rep.history) + (entry,),
    )


def strongly_factorization(T: MultilinearMap, report: SummingReport, cfg: SolverConfig = DEFAULT_CONFIG) -> Factorization:
    """Factorization of the linearized map through its domination space.

    Refusal conditions (no kernel on the report, open duality gap) are the
    linear ones.  On success the class map is checked against T itself on
    elementary tensors before the factorization is handed back.
    """
    if report.phi is None:
        raise SumlabError("report does not carry its kernel map")
    mat = linearize(T).matrix
    host = report.phi.space
    if host.dim != mat.shape[1]:
        raise DimensionMismatch("report kernel does not live on the tensor coordinates of T")
    TL = LinearMap(host, T.codomain, mat)
    f = build_factorization(TL, report, cfg)
    rng = np.random.default_rng(cfg.seed + 11)
    worst = 0.0
    for _ in range(100):
        tup = tuple(rng.standard_normal(s.dim) for s in T.domains)
        direct = T.apply(*tup)
        through = f.apply_class(embed_vm(T.domains, tup).coords.reshape(-1))
        err = float(sp.norm(T.codomain, direct - through))
        worst = max(worst, err / max(1.0, float(sp.norm(T.codomain, direct))))
    if worst > 1e-9:
        raise SumlabError("linearized factorization disagrees with T on elementary tensors")
    return f


# ---------------------------------------------------------------------------
# multi-ideal summing: one measure per factor space


_LP_ROW_CAP = 192  # dense simplex: keep the covering LPs small


def _exponent_from(ps, p: float | None) -> float:
    inv = sum(1.0 / pj for pj in ps)
    if p is None:
        return 1.0 / inv
    if abs(1.0 / p - inv) > 1e-12:
        raise ExponentIdentityError("1/p must equal the sum of the 1/p_j")
    return float(p)


def _validate_multi(T: MultilinearMap, phis, ps):
    if len(phis) != T.arity or len(ps) != T.arity:
        raise DimensionMismatch("need one kernel and one exponent per factor space")
    for j, (phi, pj) in enumerate(zip(phis, ps)):
        if phi.space != T.domains[j]:
            raise DimensionMismatch(f"kernel {j} does not live on factor space {j}")
        if pj < 1.0 - 1e-12:
            raise SumlabError("factor exponents must satisfy p_j >= 1")


def multi_ideal_lower_bound(T: MultilinearMap, phis, ps, tuples, p: float | None = None) -> float:
    """Certified ratio bound from a family of argument tuples.

    For any admissible measure system, Hoelder with the exponent identity
    1/p = sum_j 1/p_j turns the per-tuple dominations into
    (sum_i ||T(tuple_i)||^p)^(1/p) <= C prod_j sup-integral_j, and replacing
    each integral by its dual-ball supremum keeps the inequality.  A zero
    denominator under a positive numerator certifies that no measure system
    works at all (+inf).
    """
    _validate_multi(T, phis, ps)
    p = _exponent_from(ps, p)
    rows = [tuple(np.asarray(x, dtype=float) for x in tup) for tup in tuples]
    if not rows:
        return 0.0
    num = sum(sp.norm(T.codomain, T.apply(*tup)) ** p for tup in rows) ** (1.0 / p)
    den = 1.0
    for j, (phi, pj) in enumerate(zip(phis, ps)):
        pts = np.vstack([tup[j] for tup in rows])
        den *= _weighted_phi_sup(phi, pts, np.ones(len(rows)), pj).value
    if den <= 1e-14:
        return math.inf if num > 1e-14 else 0.0
    return num / den


def _slot_candidates(space: sp.FiniteSpace, rng, cap: int) -> np.ndarray:
    """Unit-sphere probe set for one factor slot, deterministic given rng."""
    rows = [np.eye(space.dim), np.ones((1, space.dim))]
    rows.append(sp.sphere_mesh(space, 8 if space.dim <= 2 else 3))
    if space.is_polyhedral:
        ext = sp.ball_extreme_points(space)
        if ext.shape[0] <= 64:
            rows.append(ext)
    rows.append(rng.standard_normal((8, space.dim)))
    pts = np.vstack(rows)
    norms = sp.norm_batch(space, pts)
    keep = norms > 1e-12
    pts = sp._canonical_rows(pts[keep] / norms[keep, None])
    if pts.shape[0] > cap:
        stride = int(np.ceil(pts.shape[0] / cap))
        pts = pts[::stride]
    return pts


def _tuple_universe(T: MultilinearMap, cfg: SolverConfig):
    """Per-slot candidates and the index grid of their cartesian product."""
    rng = np.random.default_rng(cfg.seed + 7)
    per_cap = max(4, int(cfg.universe_cap ** (1.0 / T.arity)))
    slots = [_slot_candidates(s, rng, per_cap) for s in T.domains]
    grids = np.meshgrid(*[np.arange(u.shape[0]) for u in slots], indexing="ij")
    idx = np.stack([g.reshape(-1) for g in grids], axis=1)
    return slots, idx


def multi_ideal_upper_bound(
    T: MultilinearMap,
    phis,
    ps,
    cfg: SolverConfig = DEFAULT_CONFIG,
    p: float | None = None,
) -> MultiMeasureCertificate:
    """Measure system (mu_1, ..., mu_m) and constant by alternating LPs.

    Freezing all measures except slot j makes the domination constraints on
    the sampled tuple universe linear in measure j, and the minimal-mass
    solution rescales to a probability measure exactly as in the linear
    case.  The product constraint set is only sampled (flagged
    "sampled-constraints" for arity >= 2); a per-slot ascent sweep plus
    random probes then push the constant up to the worst ratio found, so the
    reported pair is consistent on everything that was checked.
    """
    _validate_multi(T, phis, ps)
    _exponent_from(ps, p)
    m = T.arity
    if m == 1:
        # a single slot is the linear problem; reuse its exact machinery
        rep = summing_constant(LinearMap(T.domains[0], T.codomain, linearize(T).matrix), phis[0], ps[0], cfg)
        return MultiMeasureCertificate(rep.upper_bound, (rep.measure,), rep.flags)

    supports, flags = [], set()
    for j, (phi, pj) in enumerate(zip(phis, ps)):
        extreme_ok = phi.convex_power(pj) and T.domains[j].is_polyhedral
        model = sp.dual_ball_points(
            T.domains[j],
            "extreme" if extreme_ok else "mesh",
            resolution=cfg.mesh_resolution,
        )
        supports.append(_antipodal_filter(model.points))
        if not extreme_ok:
            flags.add("support-mesh")
    if m >= 2:
        flags.add("sampled-constraints")

    if not T.coeffs.any():
        measures = tuple(
            _delta_measure(T.domains[j], supports[j][0]) for j in range(m)
        )
        return MultiMeasureCertificate(0.0, measures, tuple(sorted(flags)))

    slots, idx = _tuple_universe(T, cfg)
    n_tup = idx.shape[0]
    norms_T = np.empty(n_tup)
    for i, row in enumerate(idx):
        tup = tuple(slots[j][row[j]] for j in range(m))
        norms_T[i] = sp.norm(T.codomain, T.apply(*tup))
    scale_T = max(float(np.max(norms_T)), 1e-300)

    # per-slot kernel-power tables against the support models
    pow_tab = []
    for j in range(m):
        tab = np.empty((slots[j].shape[0], supports[j].shape[0]))
        for a, x in enumerate(slots[j]):
            tab[a] = _phi_batch(phis[j], x, supports[j]) ** ps[j]
        pow_tab.append(tab)

    weights = [np.full(supports[j].shape[0], 1.0 / supports[j].shape[0]) for j in range(m)]

    def slot_integrals(j):
        return np.maximum(pow_tab[j] @ weights[j], 0.0) ** (1.0 / ps[j])

    integ = [slot_integrals(j) for j in range(m)]

    def universe_constant():
        den = np.ones(n_tup)
        for j in range(m):
            den *= integ[j][idx[:, j]]
        active = norms_T > 1e-12 * scale_T
        if np.any(active & (den <= 1e-300)):
            raise SupportCannotDominate("support cannot dominate the sampled tuples")
        safe = np.where(den > 1e-300, den, 1.0)
        return float(np.max(np.where(active, norms_T / safe, 0.0)))

    constant = universe_constant()
    for _ in range(60):
        for j in range(m):
            other = np.ones(n_tup)
            for jj in range(m):
                if jj != j:
                    other *= integ[jj][idx[:, jj]]
            active = norms_T > 1e-12 * scale_T
            if np.any(active & (other <= 1e-300)):
                raise SupportCannotDominate("support cannot dominate the sampled tuples")
            safe = np.where(other > 1e-300, other, 1.0)
            rhs = np.where(active, (norms_T / safe) ** ps[j], 0.0)
            rows = pow_tab[j][idx[:, j]]
            pos = rhs > 0
            rows_p, rhs_p = rows[pos], rhs[pos]
            if rows_p.shape[0] > _LP_ROW_CAP:
                # dense simplex cost is cubic in rows; keep the tightest ones
                # under the current measure (violations surface in the final
                # full-universe ratio check, which lifts the constant)
                margins = (rows_p @ weights[j]) / rhs_p
                sel = np.argsort(margins)[:_LP_ROW_CAP]
                rows_p, rhs_p = rows_p[sel], rhs_p[sel]
            lp = min_measure_mass(rows_p, rhs_p)
            if lp.mass > 1e-300:
                weights[j] = lp.weights / lp.mass
                integ[j] = slot_integrals(j)
        previous, constant = constant, universe_constant()
        if abs(constant - previous) <= 1e-8 * max(1.0, constant):
            break
    else:
        flags.add("alternation-stalled")

    constant = max(constant, _ratio_sweep(T, phis, ps, slots, idx, weights, supports, norms_T, integ, cfg))

    measures = []
    for j in range(m):
        keep = weights[j] > 1e-14
        if not np.any(keep):
            keep = weights[j] == np.max(weights[j])
        w = weights[j][keep] / float(np.sum(weights[j][keep]))
        measures.append(DiscreteMeasure(space=T.domains[j], support=supports[j][keep], weights=w))
    return MultiMeasureCertificate(float(constant), tuple(measures), tuple(sorted(flags)))


def _slot_matrix(T: MultilinearMap, tup, j: int) -> np.ndarray:
    """Contraction of every slot except j: rows are d_j, columns d_out."""
    a = T.coeffs
    for jj in reversed(range(T.arity)):
        if jj != j:
            a = np.tensordot(np.asarray(tup[jj], dtype=float), a, axes=(0, jj))
    return a


def _ratio_sweep(T, phis, ps, slots, idx, weights, supports, norms_T, integ, cfg) -> float:
    """Worst domination ratio reachable by per-slot jumps and random probes.

    Every value returned is the ratio of a genuinely evaluated tuple, so the
    maximum is a bound the final constant must meet; constraints between the
    probes stay unchecked.
    """
    m = T.arity

    def integral(j, x):
        val = float(_phi_batch(phis[j], x, supports[j]) ** ps[j] @ weights[j])
        return max(val, 0.0) ** (1.0 / ps[j])

    def ratio(tup):
        num = sp.norm(T.codomain, T.apply(*tup))
        den = 1.0
        for j in range(m):
            den *= integral(j, tup[j])
        if den <= 1e-300:
            return math.inf if num > 1e-12 else 0.0
        return num / den

    den_grid = np.ones(idx.shape[0])
    for j in range(m):
        den_grid *= integ[j][idx[:, j]]
    safe = np.where(den_grid > 1e-300, den_grid, 1.0)
    base = np.where(den_grid > 1e-300, norms_T / safe, 0.0)
    best = float(np.max(base))

    seeds = np.argsort(base)[::-1][:8]
    for i in seeds:
        current = [slots[j][idx[i, j]].copy() for j in range(m)]
        for _ in range(3):
            for j in range(m):
                a = _slot_matrix(T, current, j)
                nums = sp.norm_batch(T.codomain, slots[j] @ a)
                dens = integ[j] * np.prod(
                    [integral(jj, current[jj]) for jj in range(m) if jj != j]
                )
                safe_d = np.where(dens > 1e-300, dens, 1.0)
                vals = np.where(dens > 1e-300, nums / safe_d, 0.0)
                pick = int(np.argmax(vals))
                if vals[pick] > best:
                    best = float(vals[pick])
                current[j] = slots[j][pick].copy()

    rng = np.random.default_rng(cfg.seed + 23)
    for _ in range(256):
        tup = tuple(rng.standard_normal(s.dim) for s in T.domains)
        val = ratio(tup)
        if math.isfinite(val):
            best = max(best, val)
        else:
            raise SupportCannotDominate("support cannot dominate a probed tuple")
    return best


@dataclass(frozen=True)
class MultiFactorization:
    """T together with one domination-space model per factor slot.

    `verify` machine-checks the two layers on given sample tuples: the
    linearized map agrees with T pointwise, and the product of per-slot
    class seminorms dominates ||T(...)|| at the certified constant.
    """

    models: tuple[DominationSpaceModel, ...]
    operator: MultilinearMap
    bound: float

    def verify(self, samples, tol: float = 1e-8) -> DiagramReport:
        mat = linearize(self.operator).matrix
        map_res, dom_res = 0.0, 0.0
        for tup in samples:
            tup = tuple(np.asarray(x, dtype=float) for x in tup)
            direct = self.operator.apply(*tup)
            through = mat @ embed_vm(self.operator.domains, tup).coords.reshape(-1)
            map_res = max(map_res, float(sp.norm(self.operator.codomain, direct - through)))
            prod = 1.0
            for model, x in zip(self.models, tup):
                prod *= model.seminorm(x)
            dom_res = max(dom_res, float(sp.norm(self.operator.codomain, direct)) - self.bound * prod)
        dom_res = max(dom_res, 0.0)
        return DiagramReport(
            map_residual=map_res,
            domination_residual=dom_res,
            passed=map_res <= tol and dom_res <= tol,
        )


def factor_multilinear(
    T: MultilinearMap,
    cert: MultiMeasureCertificate,
    phis,
    ps,
    cfg: SolverConfig = DEFAULT_CONFIG,
) -> MultiFactorization:
    """Per-slot domination-space models under a multi-ideal certificate.

    Each factor space is quotiented by the null directions of its own
    measure seminorm; T must vanish on every such direction (slot by slot)
    for the factorized map to be well-defined on the product of quotients.
    """
    if not math.isfinite(cert.constant) or "uncertified" in cert.flags:
        raise NoCertifiedMeasure("no certified measure system")
    _validate_multi(T, phis, ps)
    if len(cert.measures) != T.arity:
        raise DimensionMismatch("need one measure per factor space")
    models = []
    for j in range(T.arity):
        if cert.measures[j].space != T.domains[j]:
            raise DimensionMismatch(f"measure {j} does not live on factor space {j}")
        models.append(build_model(T.domains[j], phis[j], cert.measures[j], ps[j], cfg))
    scale = max(1.0, float(np.max(np.abs(T.coeffs))))
    for j, model in enumerate(models):
        for n in np.atleast_2d(model.null_basis):
            if n.size == 0:
                continue
            contracted = np.tensordot(n, np.moveaxis(T.coeffs, j, 0), axes=(0, 0))
            if float(np.max(np.abs(contracted))) > 1e-7 * scale:
                raise SumlabError("map does not vanish on a null direction; not well-defined on the quotient product")
    return MultiFactorization(models=tuple(models), operator=T, bound=float(cert.constant))
