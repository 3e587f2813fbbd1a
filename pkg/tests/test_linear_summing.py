"""Kernel maps, weak norms, and two-sided summing constants."""

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sumlab import spaces as sp
from sumlab.config import DEFAULT_CONFIG
from sumlab.errors import DimensionMismatch, SumlabError
from sumlab.linear_summing import (
    DiscreteMeasure,
    anchored_mixing_check,
    anchored_phi,
    check_domination,
    family_lower_bound,
    identity_phi,
    phi_eval,
    sigma_phi,
    square_over_norm_phi,
    summing_constant,
    weak_p_norm,
    _sup_ratio_quadratic,
)
from sumlab.operators import LinearMap, op_norm

L1_2 = sp.lq_space(2, 1.0)
L2_2 = sp.lq_space(2, 2.0)
LINF_2 = sp.lq_space(2, math.inf)
L1_3 = sp.lq_space(3, 1.0)

finite_coord = st.floats(-5.0, 5.0, allow_nan=False, allow_infinity=False)


class TestPhiMap:
    def test_identity_eval(self):
        assert phi_eval(identity_phi(L1_2), [1, 0], [1, -1]) == pytest.approx(1.0, abs=1e-12)

    def test_sigma_eval(self):
        # ||x||_1 = 2, |<x, x*>| = 1, sigma = 1/2
        val = phi_eval(sigma_phi(L1_2, 0.5), [1, 1], [1, 0])
        assert val == pytest.approx(math.sqrt(2.0), abs=1e-12)

    def test_square_over_norm_at_zero(self):
        assert phi_eval(square_over_norm_phi(L1_2), [0, 0], [1, 0]) == 0.0

    def test_anchored_eval(self):
        phi = anchored_phi(L1_2, [1.0, 0.0])
        assert phi_eval(phi, [4, 0], [1, 1]) == pytest.approx(4.0, abs=1e-12)
        assert phi_eval(phi, [4, 0], [0, 1]) == 0.0

    def test_anchor_must_be_unit(self):
        with pytest.raises(SumlabError):
            anchored_phi(L1_2, [2.0, 0.0])

    def test_anchor_dimension(self):
        with pytest.raises(DimensionMismatch):
            anchored_phi(L1_2, [1.0, 0.0, 0.0])

    def test_sigma_range(self):
        with pytest.raises(SumlabError):
            sigma_phi(L1_2, 1.0)
        with pytest.raises(SumlabError):
            sigma_phi(L1_2, -0.1)

    def test_convex_power_table(self):
        assert identity_phi(L1_2).convex_power(1.0)
        assert not identity_phi(L1_2).convex_power(0.5)
        assert sigma_phi(L1_2, 0.5).convex_power(2.0)  # (1-sigma) r = 1
        assert not sigma_phi(L1_2, 0.5).convex_power(1.5)
        assert square_over_norm_phi(L1_2).convex_power(0.5)  # 2r = 1
        assert not square_over_norm_phi(L1_2).convex_power(0.4)
        assert anchored_phi(L1_2, [1, 0]).convex_power(2.0)
        assert not anchored_phi(L1_2, [1, 0]).convex_power(1.0)

    def test_sigma_zero_is_identity(self):
        assert sigma_phi(L1_2, 0.0).effective_kind == "identity"
        assert sigma_phi(L1_2, 0.3).effective_kind == "sigma_interp"

    @settings(max_examples=60, deadline=None, derandomize=True)
    @given(
        x=st.lists(finite_coord, min_size=2, max_size=2),
        lam=st.floats(0.01, 10.0),
        kind=st.sampled_from(["identity", "sigma", "square", "anchored"]),
    )
    def test_positive_homogeneity(self, x, lam, kind):
        phi = {
            "identity": identity_phi(L1_2),
            "sigma": sigma_phi(L1_2, 0.4),
            "square": square_over_norm_phi(L1_2),
            "anchored": anchored_phi(L1_2, [0.0, 1.0]),
        }[kind]
        x = np.array(x)
        x_star = np.array([0.7, -0.3])
        left = phi_eval(phi, lam * x, x_star)
        right = lam * phi_eval(phi, x, x_star)
        assert left == pytest.approx(right, abs=1e-12 * max(1.0, right))

    @settings(max_examples=60, deadline=None, derandomize=True)
    @given(x=st.lists(finite_coord, min_size=2, max_size=2))
    def test_bounded_by_norm_on_dual_ball(self, x):
        x = np.array(x)
        nx = sp.norm(L1_2, x)
        duals = sp.dual_ball_points(L1_2, "extreme").points
        for phi in (
            identity_phi(L1_2),
            sigma_phi(L1_2, 0.5),
            square_over_norm_phi(L1_2),
            anchored_phi(L1_2, [1.0, 0.0]),
        ):
            for s in duals:
                assert phi_eval(phi, x, s) <= nx + 1e-10


class TestDiscreteMeasure:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(SumlabError):
            DiscreteMeasure(L1_2, np.array([[1.0, 0.0]]), np.array([0.5]))

    def test_weights_nonnegative(self):
        with pytest.raises(SumlabError):
            DiscreteMeasure(L1_2, np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([1.5, -0.5]))

    def test_support_inside_dual_ball(self):
        # dual of l1 is linf: (2, 0) lies outside
        with pytest.raises(SumlabError):
            DiscreteMeasure(L1_2, np.array([[2.0, 0.0]]), np.array([1.0]))

    def test_integral(self):
        mu = DiscreteMeasure(L1_2, np.array([[1.0, 1.0]]), np.array([1.0]))
        assert mu.integral(identity_phi(L1_2), [1, 0], 2.0) == pytest.approx(1.0, abs=1e-12)


class TestWeakPNorm:
    def test_frozen_pair(self):
        assert weak_p_norm([[1, 0], [0, 1]], 1.0, LINF_2) == pytest.approx(1.0, abs=1e-12)

    def test_single_vector_is_norm(self):
        assert weak_p_norm([[3, -4]], 2.0, L2_2) == pytest.approx(5.0, abs=1e-10)
        assert weak_p_norm([[3, -4]], 1.0, L1_2) == pytest.approx(7.0, abs=1e-12)

    def test_empty(self):
        assert weak_p_norm([], 1.0, L1_2) == 0.0

    def test_requires_p_at_least_one(self):
        with pytest.raises(SumlabError):
            weak_p_norm([[1, 0]], 0.5, L1_2)

    def test_monotone_in_family(self):
        fam = [[1.0, 0.5], [0.2, -1.0]]
        small = weak_p_norm(fam[:1], 2.0, L1_2)
        assert weak_p_norm(fam, 2.0, L1_2) >= small - 1e-12


class TestFamilyLowerBound:
    def test_zero_operator(self):
        T = LinearMap(L1_2, L1_2, np.zeros((2, 2)))
        assert family_lower_bound(T, identity_phi(L1_2), 1.0, [[1, 0]]) == 0.0

    def test_rank_one_norming_family(self):
        a, y = np.array([0.5, -1.0, 2.0]), np.array([1.0, -3.0])
        T = LinearMap(L1_3, LINF_2, np.outer(y, a))
        witness = sp.ball_maximizer(L1_3, a)
        val = family_lower_bound(T, identity_phi(L1_3), 1.0, [witness])
        assert val == pytest.approx(sp.dual_norm(L1_3, a) * sp.norm(LINF_2, y), abs=1e-10)

    def test_sign_family_on_l1(self):
        T = LinearMap(L1_2, L1_2, np.eye(2))
        val = family_lower_bound(T, identity_phi(L1_2), 1.0, [[1, 1], [1, -1]])
        assert val == pytest.approx(2.0, abs=1e-12)

    def test_empty_family(self):
        T = LinearMap(L1_2, L1_2, np.eye(2))
        assert family_lower_bound(T, identity_phi(L1_2), 1.0, []) == 0.0

    def test_undominatable_family_signals_infinity(self):
        # anchored kernel vanishes on vectors orthogonal to the anchor
        T = LinearMap(L1_2, L1_2, np.eye(2))
        phi = anchored_phi(L1_2, [1.0, 0.0])
        assert family_lower_bound(T, phi, 1.0, [[0.0, 1.0]]) == math.inf


class TestSupRatioQuadratic:
    def test_identity_pair(self):
        val, x = _sup_ratio_quadratic(np.eye(2), np.eye(2))
        assert val == pytest.approx(1.0, abs=1e-12)

    def test_diagonal(self):
        val, x = _sup_ratio_quadratic(np.diag([4.0, 1.0]), np.eye(2))
        assert val == pytest.approx(4.0, abs=1e-12)
        assert abs(x[0]) > abs(x[1])

    def test_kernel_energy_is_infinite(self):
        val, x = _sup_ratio_quadratic(np.eye(2), np.diag([1.0, 0.0]))
        assert math.isinf(val)
        # witness sits in the kernel and carries positive energy
        assert abs(x[1]) > 1e-6

    def test_negative_kernel_energy_is_finite(self):
        val, _ = _sup_ratio_quadratic(np.diag([1.0, -1.0]), np.diag([1.0, 0.0]))
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_kernel_coupling_escapes(self):
        P = np.array([[0.0, 1.0], [1.0, 0.0]])
        val, x = _sup_ratio_quadratic(P, np.diag([1.0, 0.0]))
        assert math.isinf(val)
        denom = float(x @ np.diag([1.0, 0.0]) @ x)
        assert float(x @ P @ x) > denom  # genuine violation witness

    def test_zero_mass_nonpositive_objective(self):
        val, _ = _sup_ratio_quadratic(-np.eye(2), np.zeros((2, 2)))
        assert val == 0.0


class TestSummingConstant:
    def test_identity_on_l1_squared(self):
        T = LinearMap(L1_2, L1_2, np.eye(2))
        rep = summing_constant(T, identity_phi(L1_2), 1.0)
        assert rep.upper_bound == pytest.approx(2.0, abs=1e-9)
        assert rep.lower_bound == pytest.approx(2.0, abs=1e-9)
        assert rep.certified
        support = sorted(tuple(np.round(row, 9)) for row in rep.measure.support)
        assert support == [(1.0, -1.0), (1.0, 1.0)]
        assert rep.measure.weights == pytest.approx([0.5, 0.5], abs=1e-9)

    @pytest.mark.parametrize("r", [1.0, 2.0])
    def test_rank_one_exact(self, r):
        a, y = np.array([0.5, -1.0, 2.0]), np.array([1.0, -3.0])
        T = LinearMap(L1_3, LINF_2, np.outer(y, a))
        rep = summing_constant(T, identity_phi(L1_3), r)
        want = sp.dual_norm(L1_3, a) * sp.norm(LINF_2, y)
        assert rep.upper_bound == pytest.approx(want, abs=1e-9)
        assert rep.lower_bound == pytest.approx(want, abs=1e-9)
        # measure is the delta at the normalized functional
        assert len(rep.measure.weights) == 1
        assert rep.measure.weights[0] == pytest.approx(1.0, abs=1e-12)

    def test_zero_operator(self):
        T = LinearMap(L1_2, L1_2, np.zeros((2, 2)))
        rep = summing_constant(T, identity_phi(L1_2), 1.0)
        assert rep.upper_bound == 0.0
        assert rep.lower_bound == 0.0
        assert rep.measure.weights.sum() == pytest.approx(1.0)

    def test_pi2_of_euclidean_identity(self):
        T = LinearMap(L2_2, L2_2, np.eye(2))
        rep = summing_constant(T, identity_phi(L2_2), 2.0)
        assert rep.lower_bound == pytest.approx(math.sqrt(2.0), abs=1e-9)
        assert rep.upper_bound == pytest.approx(math.sqrt(2.0), abs=1e-9)
        assert "support-mesh" in rep.flags

    def test_sigma_zero_collapse(self):
        rng = np.random.default_rng(3)
        for _ in range(3):
            T = LinearMap(L1_3, L1_3, rng.normal(size=(3, 3)))
            rid = summing_constant(T, identity_phi(L1_3), 1.0)
            rs0 = summing_constant(T, sigma_phi(L1_3, 0.0), 1.0)
            assert rs0.upper_bound == pytest.approx(rid.upper_bound, abs=1e-9)
            assert rs0.lower_bound == pytest.approx(rid.lower_bound, abs=1e-9)

    def test_requires_r_at_least_one(self):
        T = LinearMap(L1_2, L1_2, np.eye(2))
        with pytest.raises(SumlabError):
            summing_constant(T, identity_phi(L1_2), 0.5)

    def test_kernel_space_must_match_domain(self):
        T = LinearMap(L1_2, L1_2, np.eye(2))
        with pytest.raises(DimensionMismatch):
            summing_constant(T, identity_phi(L1_3), 1.0)

    def test_homogeneity_of_bounds(self):
        rng = np.random.default_rng(7)
        A = rng.normal(size=(2, 2))
        r1 = summing_constant(LinearMap(L1_2, LINF_2, A), identity_phi(L1_2), 1.0)
        r3 = summing_constant(LinearMap(L1_2, LINF_2, 3.0 * A), identity_phi(L1_2), 1.0)
        assert r3.upper_bound == pytest.approx(3.0 * r1.upper_bound, abs=1e-9)
        assert r3.lower_bound == pytest.approx(3.0 * r1.lower_bound, abs=1e-9)

    def test_exponent_monotonicity(self):
        T = LinearMap(L1_2, L1_2, np.eye(2))
        up1 = summing_constant(T, identity_phi(L1_2), 1.0).upper_bound
        up2 = summing_constant(T, identity_phi(L1_2), 2.0).upper_bound
        assert up2 <= up1 + 1e-9

    def test_kernel_monotonicity(self):
        # square-over-norm <= identity pointwise, so its constant dominates
        rng = np.random.default_rng(5)
        for _ in range(3):
            T = LinearMap(L1_2, LINF_2, rng.normal(size=(2, 2)))
            c_id = summing_constant(T, identity_phi(L1_2), 1.0).upper_bound
            c_sq = summing_constant(T, square_over_norm_phi(L1_2), 1.0).upper_bound
            assert c_id <= c_sq + 1e-8

    def test_operator_norm_floor(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            T = LinearMap(L1_3, LINF_2, rng.normal(size=(2, 3)))
            rep = summing_constant(T, identity_phi(L1_3), 1.0)
            assert rep.lower_bound >= op_norm(T) - 1e-9

    def test_weak_duality_against_random_families(self):
        rng = np.random.default_rng(13)
        T = LinearMap(L1_2, L1_2, rng.normal(size=(2, 2)))
        phi = identity_phi(L1_2)
        rep = summing_constant(T, phi, 1.0)
        for _ in range(40):
            fam = rng.normal(size=(rng.integers(1, 5), 2))
            assert family_lower_bound(T, phi, 1.0, fam) <= rep.upper_bound + 1e-7

    def test_deterministic_reports(self):
        rng = np.random.default_rng(17)
        A = rng.normal(size=(2, 2))
        T = LinearMap(L1_2, LINF_2, A)
        rec1 = summing_constant(T, identity_phi(L1_2), 1.0).as_record()
        rec2 = summing_constant(T, identity_phi(L1_2), 1.0).as_record()
        assert rec1 == rec2

    def test_gap_certified_on_exact_oracles(self):
        rng = np.random.default_rng(19)
        for _ in range(5):
            T = LinearMap(L1_2, L1_2, rng.normal(size=(2, 2)))
            rep = summing_constant(T, identity_phi(L1_2), 1.0)
            assert rep.certified
            assert rep.gap <= 1e-6 * max(1.0, rep.upper_bound)

    def test_report_record_shape(self):
        T = LinearMap(L1_2, L1_2, np.eye(2))
        rec = summing_constant(T, identity_phi(L1_2), 1.0).as_record()
        assert set(rec) == {"r", "lower", "upper", "gap", "measure", "iterations", "flags"}
        assert set(rec["measure"]) == {"support", "weights"}


class TestCheckDomination:
    def test_rank_one_certificate(self):
        a, y = np.array([0.5, -1.0, 2.0]), np.array([1.0, -3.0])
        T = LinearMap(L1_3, LINF_2, np.outer(y, a))
        rep = summing_constant(T, identity_phi(L1_3), 1.0)
        samples = np.random.default_rng(0).normal(size=(100, 3))
        out = check_domination(T, identity_phi(L1_3), 1.0, rep.measure, rep.upper_bound, samples)
        assert out.passed
        assert out.max_residual <= 1e-10

    def test_zero_operator_zero_constant(self):
        T = LinearMap(L1_2, L1_2, np.zeros((2, 2)))
        mu = DiscreteMeasure(L1_2, np.array([[1.0, 0.0]]), np.array([1.0]))
        out = check_domination(T, identity_phi(L1_2), 1.0, mu, 0.0, np.eye(2))
        assert out.passed
        assert out.max_residual == 0.0

    def test_halved_constant_fails(self):
        T = LinearMap(L1_2, L1_2, np.eye(2))
        rep = summing_constant(T, identity_phi(L1_2), 1.0)
        samples = np.array([[1.0, 1.0], [1.0, -1.0]])  # where the domination is tight
        out = check_domination(T, identity_phi(L1_2), 1.0, rep.measure, rep.upper_bound / 2.0, samples)
        assert not out.passed
        assert out.max_residual > 0.0


class TestAnchoredMixing:
    def test_aligned_rank_one(self):
        # T sees only the anchor coordinate, so delta at the anchor dominates
        anchor = np.array([1.0, 0.0])
        T = LinearMap(L1_2, LINF_2, np.array([[2.0, 0.0], [0.5, 0.0]]))
        eta = DiscreteMeasure(L1_2, anchor.reshape(1, -1), np.array([1.0]))
        out = anchored_mixing_check(T, anchor, eta, 2.0)
        assert out.passed
        assert out.max_residual <= 1e-10
        assert out.amgm_residual <= 1e-10

    def test_zero_operator(self):
        anchor = np.array([1.0, 0.0])
        T = LinearMap(L1_2, LINF_2, np.zeros((2, 2)))
        eta = DiscreteMeasure(L1_2, np.array([[0.0, 1.0]]), np.array([1.0]))
        out = anchored_mixing_check(T, anchor, eta, 0.0)
        assert out.passed

    def test_computed_certificate(self):
        # membership in the anchored class forces T to vanish where the
        # anchor does, so in-class instances read only the anchor coordinate
        rng = np.random.default_rng(23)
        anchor = np.array([1.0, 0.0])
        for _ in range(3):
            y = rng.normal(size=2)
            T = LinearMap(L1_2, LINF_2, np.outer(y, anchor))
            rep = summing_constant(T, anchored_phi(L1_2, anchor), 1.0)
            out = anchored_mixing_check(T, anchor, rep.measure, rep.upper_bound)
            assert out.passed
            assert out.amgm_residual <= 1e-10

    def test_out_of_class_operator_cannot_be_dominated(self):
        # a map acting on the anchor-orthogonal coordinate escapes the class
        from sumlab.errors import SupportCannotDominate

        T = LinearMap(L1_2, LINF_2, np.array([[0.0, 1.0], [0.0, 0.0]]))
        with pytest.raises(SupportCannotDominate):
            summing_constant(T, anchored_phi(L1_2, [1.0, 0.0]), 1.0)

    def test_anchor_merges_into_support(self):
        anchor = np.array([1.0, 0.0])
        eta = DiscreteMeasure(L1_2, anchor.reshape(1, -1), np.array([1.0]))
        T = LinearMap(L1_2, LINF_2, np.array([[1.0, 0.0], [0.0, 0.0]]))
        out = anchored_mixing_check(T, anchor, eta, 1.0)
        assert len(out.mixed.weights) == 1
        assert out.mixed.weights[0] == pytest.approx(1.0)
