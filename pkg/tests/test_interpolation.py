"""Interpolated class constants: brackets, orderings, and the factorization diagram."""

import dataclasses
import math

import numpy as np
import pytest

from sumlab import spaces as sp
from sumlab.errors import (
    DimensionMismatch,
    NoCertifiedMeasure,
    SumlabError,
)
from sumlab.linear_summing import DiscreteMeasure, identity_phi, summing_constant
from sumlab.multilinear import CoefficientFamily
from sumlab.operators import LinearMap, MultilinearMap, linearize
from sumlab.interpolation import (
    PlainFamily,
    SigmaReport,
    SigmaSpaceModel,
    factorable_constant,
    factorable_family_value,
    final_factorization,
    forms_ball_model,
    inclusion_check,
    plain_sigma_constant,
    sigma_family_sup,
    sigma_monotonicity_check,
    sigma_profile,
)

L1_2 = sp.lq_space(2, 1.0)
L2_2 = sp.lq_space(2, 2.0)
LINF_2 = sp.lq_space(2, math.inf)
SCALARS = sp.scalar_space()
HOST_4 = sp.lq_space(4, 1.0, label="tensor-coords")

U = np.array([1.0, 2.0])  # ||U||_2 = sqrt(5)
SQRT5 = math.sqrt(5.0)
E1 = np.array([1.0, 0.0])
E2 = np.array([0.0, 1.0])


def rank_one_bilinear():
    # T(x, y) = x_1 y_1 U
    co = np.zeros((2, 2, 2))
    co[0, 0] = U
    return MultilinearMap(domains=(L1_2, L1_2), codomain=L2_2, coeffs=co)


def trace_bilinear(domain=L1_2):
    # T(x, y) = x_1 y_1 + x_2 y_2 as a scalar
    co = np.zeros((2, 2, 1))
    co[0, 0, 0] = 1.0
    co[1, 1, 0] = 1.0
    return MultilinearMap(domains=(domain, domain), codomain=SCALARS, coeffs=co)


def sup_diagonal_bilinear():
    # T(x, y) = (x_1 y_1, x_2 y_2) into the sup-normed plane
    co = np.zeros((2, 2, 2))
    co[0, 0, 0] = 1.0
    co[1, 1, 1] = 1.0
    return MultilinearMap(domains=(L1_2, L1_2), codomain=LINF_2, coeffs=co)


def zero_bilinear():
    return MultilinearMap(domains=(L1_2, L1_2), codomain=L2_2, coeffs=np.zeros((2, 2, 2)))


def random_bilinear(rng):
    co = rng.standard_normal((2, 2, 2))
    return MultilinearMap(domains=(L1_2, L1_2), codomain=LINF_2, coeffs=co)


class TestFormsBallModel:
    def test_cube_factors_enumerate_exactly(self):
        model = forms_ball_model((L1_2, L1_2))
        assert model.exact
        assert model.points.shape == (8, 4)
        # extreme coefficient patterns, one of each antipodal pair
        assert np.all(np.abs(model.points) == 1.0)

    def test_model_forms_have_norm_at_most_one(self):
        # on l1 factors the form norm is the sup of the coefficients
        model = forms_ball_model((L1_2, L1_2))
        assert float(np.max(np.abs(model.points))) <= 1.0 + 1e-12

    def test_euclidean_factor_falls_back_to_mesh(self):
        model = forms_ball_model((L2_2, L2_2))
        assert not model.exact
        assert model.points.shape[0] > 0
        assert model.points.shape[1] == 4


class TestPlainFamily:
    def test_needs_a_row(self):
        with pytest.raises(SumlabError):
            PlainFamily(spaces=(L1_2, L1_2), rows=())

    def test_row_arity_checked(self):
        with pytest.raises(DimensionMismatch):
            PlainFamily(spaces=(L1_2, L1_2), rows=((E1,),))

    def test_row_vector_shape_checked(self):
        with pytest.raises(DimensionMismatch):
            PlainFamily(spaces=(L1_2, L1_2), rows=((np.array([1.0, 0.0, 0.0]), E1),))

    def test_tensor_rows_flatten_outer_products(self):
        fam = PlainFamily(spaces=(L1_2, L1_2), rows=((np.array([1.0, 2.0]), np.array([3.0, -1.0])),))
        np.testing.assert_allclose(fam.tensor_rows(), [[3.0, -1.0, 6.0, -2.0]])

    def test_norm_products(self):
        fam = PlainFamily(spaces=(L1_2, L1_2), rows=((np.array([1.0, 2.0]), np.array([3.0, -1.0])),))
        assert fam.norm_products()[0] == pytest.approx(12.0)

    def test_as_coefficient_family_keeps_rows(self):
        fam = PlainFamily(spaces=(L1_2, L1_2), rows=((E1, E2),))
        cf = fam.as_coefficient_family()
        assert cf.spaces == fam.spaces
        assert len(cf.rows) == 1


class TestSigmaFamilySup:
    def test_unit_delta_row_sup_is_one(self):
        fam = PlainFamily(spaces=(L1_2, L1_2), rows=((E1, E1),))
        model = forms_ball_model((L1_2, L1_2))
        assert sigma_family_sup(fam, 1.0, 0.25, model) == pytest.approx(1.0, rel=1e-12)

    def test_positive_homogeneity(self):
        model = forms_ball_model((L1_2, L1_2))
        base = PlainFamily(spaces=(L1_2, L1_2), rows=((E1, E1),))
        scaled = PlainFamily(spaces=(L1_2, L1_2), rows=((3.0 * E1, E1),))
        one = sigma_family_sup(base, 1.0, 0.25, model)
        three = sigma_family_sup(scaled, 1.0, 0.25, model)
        assert three == pytest.approx(3.0 * one, rel=1e-12)

    def test_weight_zero_is_the_plain_power_sup(self):
        model = forms_ball_model((L1_2, L1_2))
        rows = ((E1, E1), (E2, np.array([0.5, 0.5])))
        fam = PlainFamily(spaces=(L1_2, L1_2), rows=rows)
        got = sigma_family_sup(fam, 2.0, 0.0, model)
        inner = np.abs(fam.tensor_rows() @ model.points.T)
        want = float(np.max(np.sum(inner**2.0, axis=0))) ** 0.5
        assert got == pytest.approx(want, rel=1e-12)

    def test_weight_raises_the_sup_at_fixed_exponent(self):
        # |phi(x)| <= prod ||x^j|| makes the weighted kernel pointwise larger
        model = forms_ball_model((L1_2, L1_2))
        fam = PlainFamily(spaces=(L1_2, L1_2), rows=((E1, E1), (E2, E2)))
        plain = sigma_family_sup(fam, 2.0, 0.0, model)
        weighted = sigma_family_sup(fam, 1.0, 0.5, model)  # same exponent r = 2
        assert weighted >= plain - 1e-12

    def test_form_width_checked(self):
        fam = PlainFamily(spaces=(L1_2, L1_2), rows=((E1, E1),))
        with pytest.raises(DimensionMismatch):
            sigma_family_sup(fam, 1.0, 0.25, np.ones((1, 5)))

    def test_oversized_form_rejected(self):
        fam = PlainFamily(spaces=(L1_2, L1_2), rows=((E1, E1),))
        with pytest.raises(SumlabError):
            sigma_family_sup(fam, 1.0, 0.5, np.array([[2.0, 0.0, 0.0, 0.0]]))


class TestPlainSigmaConstant:
    @pytest.mark.parametrize("p,sigma", [(1.0, 0.0), (1.0, 0.25), (2.0, 0.5)])
    def test_rank_one_bracket_is_the_image_norm(self, p, sigma):
        rep = plain_sigma_constant(rank_one_bilinear(), p, sigma)
        assert rep.lower_bound == pytest.approx(SQRT5, abs=1e-9)
        assert rep.upper_bound == pytest.approx(SQRT5, abs=1e-9)
        assert rep.gap <= 1e-9
        assert rep.certified
        assert "sampled-constraints" in rep.flags

    def test_scalar_trace_on_cube_factors_is_one(self):
        rep = plain_sigma_constant(trace_bilinear(), 1.0, 0.0)
        assert rep.lower_bound == pytest.approx(1.0, abs=1e-9)
        assert rep.upper_bound == pytest.approx(1.0, abs=1e-9)
        assert rep.certified

    @pytest.mark.parametrize("p,sigma", [(1.0, 0.0), (1.0, 0.25)])
    def test_sup_diagonal_bracket_is_one(self, p, sigma):
        # one quarter weight on four sign patterns dominates the pair map
        rep = plain_sigma_constant(sup_diagonal_bilinear(), p, sigma)
        assert rep.lower_bound == pytest.approx(1.0, abs=1e-9)
        assert rep.upper_bound == pytest.approx(1.0, abs=1e-9)
        assert rep.certified

    def test_euclidean_trace_reports_honest_mesh_bracket(self):
        # the mesh model pins the support, so the bracket stays open: the
        # nuclear-norm value 2 is exact relative to the modeled support
        rep = plain_sigma_constant(trace_bilinear(L2_2), 1.0, 0.0)
        assert rep.lower_bound == pytest.approx(1.0, abs=1e-9)
        assert rep.upper_bound == pytest.approx(2.0, abs=1e-9)
        assert "gap-open" in rep.flags
        assert "support-mesh" in rep.flags
        assert not rep.certified

    def test_single_slot_matches_linear_driver(self):
        mat = np.array([[1.0, -2.0], [0.5, 3.0]])
        T1 = MultilinearMap(domains=(L1_2,), codomain=L2_2, coeffs=mat.T.copy())
        lin = LinearMap(L1_2, L2_2, linearize(T1).matrix)
        for p in (1.0, 2.0):
            rep = plain_sigma_constant(T1, p, 0.0)
            base = summing_constant(lin, identity_phi(L1_2), p)
            assert rep.lower_bound == pytest.approx(base.lower_bound, rel=1e-12)
            assert rep.upper_bound == pytest.approx(base.upper_bound, rel=1e-12)
            assert rep.variant == "plain"

    def test_single_slot_weighted_matches_higher_exponent(self):
        # weight 1/2 at p = 1 doubles the exponent; the kernels agree on the
        # unit sphere, so the certified values agree up to solver tolerance
        mat = np.array([[1.0, -2.0], [0.5, 3.0]])
        T1 = MultilinearMap(domains=(L1_2,), codomain=L2_2, coeffs=mat.T.copy())
        lin = LinearMap(L1_2, L2_2, linearize(T1).matrix)
        rep = plain_sigma_constant(T1, 1.0, 0.5)
        base = summing_constant(lin, identity_phi(L1_2), 2.0)
        assert rep.lower_bound == pytest.approx(base.lower_bound, rel=1e-12)
        assert rep.upper_bound == pytest.approx(base.upper_bound, abs=5e-6)

    def test_zero_map_reports_zero(self):
        rep = plain_sigma_constant(zero_bilinear(), 1.0, 0.25)
        assert rep.lower_bound == 0.0
        assert rep.upper_bound == 0.0
        assert rep.measure.weights.sum() == pytest.approx(1.0)

    @pytest.mark.parametrize("p,sigma", [(0.5, 0.0), (1.0, -0.1), (1.0, 1.0), (math.inf, 0.0)])
    def test_parameter_ranges_enforced(self, p, sigma):
        with pytest.raises(SumlabError):
            plain_sigma_constant(sup_diagonal_bilinear(), p, sigma)

    def test_two_runs_print_identically(self):
        a = plain_sigma_constant(sup_diagonal_bilinear(), 1.0, 0.25).as_record()
        b = plain_sigma_constant(sup_diagonal_bilinear(), 1.0, 0.25).as_record()
        assert repr(a) == repr(b)

    def test_seed_measure_width_checked(self):
        host3 = sp.lq_space(3, 1.0, label="tensor-coords")
        bad = DiscreteMeasure(space=host3, support=np.array([[1.0, 0.0, 0.0]]), weights=np.array([1.0]))
        with pytest.raises(DimensionMismatch):
            plain_sigma_constant(sup_diagonal_bilinear(), 1.0, 0.25, seed_measures=(bad,))

    def test_seed_measure_joins_the_candidates(self):
        seed = DiscreteMeasure(
            space=HOST_4, support=np.array([[1.0, -1.0, 1.0, -1.0]]), weights=np.array([1.0])
        )
        rep = plain_sigma_constant(sup_diagonal_bilinear(), 1.0, 0.25, seed_measures=(seed,))
        assert rep.upper_bound == pytest.approx(1.0, abs=1e-9)

    def test_history_masses_never_decrease(self):
        rep = plain_sigma_constant(sup_diagonal_bilinear(), 1.0, 0.25)
        assert rep.history
        assert set(rep.history[0]) == {"round", "mass", "worst", "pool"}
        masses = [h["mass"] for h in rep.history]
        for earlier, later in zip(masses, masses[1:]):
            assert later >= earlier - 1e-7 * max(1.0, earlier)
        # weak duality: the final pool's mass is a floor for any measure
        r = rep.exponent
        assert rep.upper_bound >= masses[-1] ** (1.0 / r) - 1e-9


class TestOrderings:
    def test_raising_the_exponent_never_raises_the_constant(self):
        rng = np.random.default_rng(11)
        for _ in range(4):
            rep = sigma_monotonicity_check(random_bilinear(rng), 1.0, 2.0, 1.0 / 3.0)
            assert rep.kind == "monotonicity"
            assert rep.passed
            assert rep.subject.upper_bound <= rep.baseline.upper_bound + 1e-9

    def test_equal_exponents_compare_equal(self):
        rep = sigma_monotonicity_check(sup_diagonal_bilinear(), 2.0, 2.0, 0.25)
        assert rep.passed

    def test_decreasing_exponents_rejected(self):
        with pytest.raises(SumlabError):
            sigma_monotonicity_check(sup_diagonal_bilinear(), 2.0, 1.0, 0.25)

    def test_zero_map_is_monotone(self):
        rep = sigma_monotonicity_check(zero_bilinear(), 1.0, 2.0, 0.25)
        assert rep.passed

    def test_weighted_class_contains_the_plain_class(self):
        rng = np.random.default_rng(13)
        for _ in range(3):
            rep = inclusion_check(random_bilinear(rng), 1.0, 0.5)
            assert rep.kind == "inclusion"
            assert rep.passed

    def test_inclusion_baseline_runs_at_the_combined_exponent(self):
        rep = inclusion_check(sup_diagonal_bilinear(), 1.0, 0.5)
        assert rep.baseline.p == pytest.approx(2.0)
        assert rep.baseline.sigma == 0.0
        assert rep.subject.p == pytest.approx(1.0)
        assert rep.subject.sigma == 0.5

    def test_record_round_trip(self):
        rep = sigma_monotonicity_check(sup_diagonal_bilinear(), 2.0, 2.0, 0.25)
        rec = rep.as_record()
        assert set(rec) == {"kind", "passed", "tol", "baseline", "subject"}
        assert rec["baseline"]["variant"] == "plain"


class TestFactorableConstant:
    @pytest.mark.parametrize("p,sigma", [(1.0, 0.0), (1.0, 0.25), (2.0, 0.5)])
    def test_rank_one_bracket_is_the_image_norm(self, p, sigma):
        rep = factorable_constant(rank_one_bilinear(), p, sigma)
        assert rep.lower_bound == pytest.approx(SQRT5, abs=1e-9)
        assert rep.upper_bound == pytest.approx(SQRT5, abs=1e-9)
        assert rep.certified
        assert rep.variant == "factorable"
        assert "rank-capped" in rep.flags

    def test_scalar_trace_on_cube_factors_is_one(self):
        rep = factorable_constant(trace_bilinear(), 1.0, 0.0)
        assert rep.lower_bound == pytest.approx(1.0, abs=1e-9)
        assert rep.upper_bound == pytest.approx(1.0, abs=1e-9)

    def test_sup_diagonal_bracket_is_one(self):
        rep = factorable_constant(sup_diagonal_bilinear(), 1.0, 0.25)
        assert rep.lower_bound == pytest.approx(1.0, abs=1e-9)
        assert rep.upper_bound == pytest.approx(1.0, abs=1e-9)
        assert rep.certified

    def test_zero_map_reports_zero(self):
        rep = factorable_constant(zero_bilinear(), 1.0, 0.25)
        assert rep.lower_bound == 0.0
        assert rep.upper_bound == 0.0

    def test_lower_certificate_is_a_written_family(self):
        rep = factorable_constant(rank_one_bilinear(), 1.0, 0.25)
        assert rep.lb_certificate
        assert isinstance(rep.lb_certificate[0], CoefficientFamily)

    def test_agrees_with_plain_on_random_draws(self):
        # combination rows never help on these instances; both drivers land
        # on the same certified value and the plain floor stays below
        rng = np.random.default_rng(17)
        for _ in range(4):
            T = random_bilinear(rng)
            rp = plain_sigma_constant(T, 1.0, 0.25)
            rf = factorable_constant(T, 1.0, 0.25)
            assert rp.gap <= 1e-9
            assert rf.gap <= 1e-9
            assert rf.upper_bound == pytest.approx(rp.upper_bound, rel=1e-10)
            assert rp.lower_bound <= rf.upper_bound + 1e-9

    def test_two_runs_print_identically(self):
        a = factorable_constant(sup_diagonal_bilinear(), 1.0, 0.25).as_record()
        b = factorable_constant(sup_diagonal_bilinear(), 1.0, 0.25).as_record()
        assert repr(a) == repr(b)


class TestFactorableFamilyValue:
    def test_delta_row_certifies_the_image_norm(self):
        T = rank_one_bilinear()
        fam = CoefficientFamily.from_tuples((L1_2, L1_2), [(E1, E1)])
        model = forms_ball_model((L1_2, L1_2))
        assert factorable_family_value(T, fam, 1.0, 0.25, model) == pytest.approx(SQRT5, rel=1e-12)

    def test_single_term_rows_reproduce_the_plain_ratio(self):
        T = rank_one_bilinear()
        rows = ((E1, E1), (E2, np.array([0.5, 0.5])))
        pf = PlainFamily(spaces=(L1_2, L1_2), rows=rows)
        model = forms_ball_model((L1_2, L1_2))
        r = 1.0 / (1.0 - 0.25)
        num = sum(float(sp.norm(T.codomain, T.apply(*tup))) ** r for tup in rows) ** (1.0 / r)
        den = sigma_family_sup(pf, 1.0, 0.25, model)
        got = factorable_family_value(T, pf.as_coefficient_family(), 1.0, 0.25, model)
        assert got == pytest.approx(num / den, rel=1e-12)

    def test_term_scaling_cancels(self):
        T = rank_one_bilinear()
        model = forms_ball_model((L1_2, L1_2))
        one = factorable_family_value(
            T, CoefficientFamily.from_tuples((L1_2, L1_2), [(E1, E1)], lams=[1.0]), 1.0, 0.25, model
        )
        two = factorable_family_value(
            T, CoefficientFamily.from_tuples((L1_2, L1_2), [(E1, E1)], lams=[2.0]), 1.0, 0.25, model
        )
        assert two == pytest.approx(one, rel=1e-12)

    def test_factor_spaces_checked(self):
        T = rank_one_bilinear()
        fam = CoefficientFamily.from_tuples((L2_2, L1_2), [(E1, E1)])
        with pytest.raises(DimensionMismatch):
            factorable_family_value(T, fam, 1.0, 0.25, forms_ball_model((L1_2, L1_2)))


class TestSigmaSpaceModel:
    def delta_model(self, sigma=0.25):
        mu = DiscreteMeasure(
            space=HOST_4, support=np.array([[1.0, -1.0, 1.0, -1.0]]), weights=np.array([1.0])
        )
        return SigmaSpaceModel(domains=(L1_2, L1_2), measure=mu, p=1.0, sigma=sigma)

    def test_zero_element_has_zero_seminorm(self):
        assert self.delta_model().seminorm(np.zeros(4)) == 0.0

    def test_positive_homogeneity(self):
        model = self.delta_model()
        e11 = np.zeros(4)
        e11[0] = 1.0
        one = model.seminorm(e11)
        two = model.seminorm(2.0 * e11)
        assert two == pytest.approx(2.0 * one, rel=1e-9)

    def test_rep_cost_matches_the_direct_integral(self):
        model = self.delta_model()
        # |phi(e1 (x) e1)|^(3/4) * 1^(1/4) integrated against the point mass
        assert model.rep_cost(((E1, E1),)) == pytest.approx(1.0, rel=1e-12)

    def test_known_representation_steers_the_search(self):
        model = self.delta_model()
        e11 = np.zeros(4)
        e11[0] = 1.0
        assert model.seminorm(e11, base_terms=((E1, E1),)) == pytest.approx(
            model.seminorm(e11), rel=1e-9
        )

    def test_exponent_combines_weight_and_power(self):
        assert self.delta_model(sigma=0.5).exponent == pytest.approx(2.0)


class TestFinalFactorization:
    def test_rank_one_diagram_closes(self):
        T = rank_one_bilinear()
        rep = factorable_constant(T, 1.0, 0.25)
        rec = final_factorization(T, rep)
        assert rec.passed
        assert rec.inequality_residual <= 1e-9
        assert rec.domination_residual <= 1e-9
        assert rec.diagram_residual <= 1e-9
        assert rec.gap <= 1e-9
        assert rec.bound == pytest.approx(SQRT5, abs=1e-9)
        assert rec.samples > 0

    def test_sup_diagonal_diagram_closes(self):
        T = sup_diagonal_bilinear()
        rec = final_factorization(T, factorable_constant(T, 1.0, 0.25))
        assert rec.passed
        assert rec.gap <= 1e-4

    def test_zero_map_diagram_closes(self):
        T = zero_bilinear()
        rec = final_factorization(T, factorable_constant(T, 1.0, 0.25))
        assert rec.passed
        assert rec.bound == 0.0

    def test_plain_reports_are_refused(self):
        T = rank_one_bilinear()
        rep = plain_sigma_constant(T, 1.0, 0.25)
        with pytest.raises(SumlabError):
            final_factorization(T, rep)

    def test_open_gap_has_no_certified_measure(self):
        T = rank_one_bilinear()
        rep = factorable_constant(T, 1.0, 0.25)
        opened = dataclasses.replace(rep, flags=rep.flags + ("gap-open",))
        with pytest.raises(NoCertifiedMeasure):
            final_factorization(T, opened)

    def test_measure_width_checked(self):
        T = rank_one_bilinear()
        rep = factorable_constant(T, 1.0, 0.25)
        host3 = sp.lq_space(3, 1.0, label="tensor-coords")
        bad = DiscreteMeasure(space=host3, support=np.array([[1.0, 0.0, 0.0]]), weights=np.array([1.0]))
        with pytest.raises(DimensionMismatch):
            final_factorization(T, dataclasses.replace(rep, measure=bad))

    def test_record_exposes_exactly_the_residuals_and_gap(self):
        T = rank_one_bilinear()
        rec = final_factorization(T, factorable_constant(T, 1.0, 0.25))
        assert set(rec.as_record()) == {
            "inequality_residual",
            "domination_residual",
            "diagram_residual",
            "gap",
        }


class TestSigmaReport:
    def unit_measure(self):
        return DiscreteMeasure(space=HOST_4, support=np.array([[1.0, 1.0, 1.0, 1.0]]), weights=np.array([1.0]))

    def test_variant_checked(self):
        with pytest.raises(SumlabError):
            SigmaReport(1.0, 0.0, 0.0, 1.0, self.unit_measure(), "exotic")

    def test_crossed_bounds_rejected(self):
        with pytest.raises(SumlabError):
            SigmaReport(1.0, 0.0, 2.0, 1.0, self.unit_measure(), "plain")

    def test_parameters_checked(self):
        with pytest.raises(SumlabError):
            SigmaReport(1.0, 1.0, 0.0, 1.0, self.unit_measure(), "plain")

    def test_exponent_and_gap(self):
        rep = SigmaReport(1.0, 0.5, 0.5, 1.0, self.unit_measure(), "plain")
        assert rep.exponent == pytest.approx(2.0)
        assert rep.gap == pytest.approx(0.5)

    def test_certified_reflects_flags(self):
        rep = SigmaReport(1.0, 0.0, 1.0, 1.0, self.unit_measure(), "plain")
        assert rep.certified
        flagged = dataclasses.replace(rep, flags=("gap-open",))
        assert not flagged.certified

    def test_record_keys(self):
        rep = SigmaReport(1.0, 0.0, 1.0, 1.0, self.unit_measure(), "plain")
        assert set(rep.as_record()) == {
            "p", "sigma", "r", "variant", "lower", "upper", "gap", "measure", "flags",
        }


class TestSigmaProfile:
    def test_rank_one_profile_is_flat(self):
        # the norming family is a single tuple at every weight, so the
        # certified value does not move as the weight slides
        prof = sigma_profile(rank_one_bilinear(), 1.0, (0.0, 0.25, 0.5))
        assert set(prof) == {"sigmas", "uppers", "max_step", "reports"}
        assert prof["sigmas"] == [0.0, 0.25, 0.5]
        assert len(prof["reports"]) == 3
        assert prof["uppers"] == [rep.upper_bound for rep in prof["reports"]]
        assert prof["max_step"] <= 1e-9
        for rep in prof["reports"]:
            assert rep.upper_bound == pytest.approx(SQRT5, abs=1e-9)
