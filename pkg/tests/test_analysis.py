import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l0newton.analysis import (
    LOCAL_MIN,
    OracleResult,
    brute_force_oracle,
    check_bd_regularity,
    check_licq_equivalence,
    check_second_order_necessary,
    check_sp_licq,
    check_strong_sp_sosc,
)
from l0newton.kkt import OperatorKind, complete_point, s_stationarity_residual
from l0newton.model import PrimalDualPoint, SpoProblem
from l0newton.ncp import NcpKind

from conftest import quad_problem, quadratic_regular_instance, shifted_quadratic

FULL, RED = OperatorKind.FULL, OperatorKind.REDUCED


def simplex_problem(rho=0.1, nonneg=False):
    return quad_problem(np.eye(2), np.zeros(2), rho=rho, A_eq=np.ones((1, 2)), b_eq=np.ones(1), nonneg=nonneg)


def indefinite_problem(c=(0.0, 1.0)):
    """``f = 0.5*(x1^2 - x2^2) + c'x``; S-stationary at ``(0, c2)``."""
    return quad_problem(np.diag([1.0, -1.0]), np.array(c))


class TestSpLicq:
    def test_equality_with_zero(self):
        r = check_sp_licq(simplex_problem(), np.array([1.0, 0.0]))
        assert r.holds and r.gradient_matrix_rank == 2 and r.needed_rank == 2

    def test_bounds_as_constraints_fail(self):
        pb = quad_problem(np.eye(2), np.zeros(2), A_in=-np.eye(2), b_in=np.zeros(2))
        r = check_sp_licq(pb, np.zeros(2))
        assert not r.holds
        assert r.needed_rank == 4 and r.gradient_matrix_rank == 2

    @given(st.lists(st.sampled_from([0.0, 1.0, -2.5]), min_size=1, max_size=6))
    def test_unconstrained_always_holds(self, x):
        pb = shifted_quadratic(np.zeros(len(x)))
        assert check_sp_licq(pb, np.array(x)).holds

    def test_report_invariant(self):
        r = check_sp_licq(shifted_quadratic(), np.zeros(2))
        assert r.holds == (r.gradient_matrix_rank == r.needed_rank)


class TestLicqEquivalence:
    def test_all_true(self):
        p = PrimalDualPoint(np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.zeros(0), np.zeros(1), np.zeros(2))
        assert check_licq_equivalence(simplex_problem(), p) == (True, True, True)

    def test_all_false(self):
        pb = quad_problem(np.eye(2), np.zeros(2), A_in=-np.eye(2), b_in=np.zeros(2))
        p = PrimalDualPoint(np.zeros(2), np.ones(2), np.zeros(2), np.zeros(0), np.zeros(2))
        assert check_licq_equivalence(pb, p) == (False, False, False)

    def test_biactive_rejected(self):
        p = PrimalDualPoint(np.zeros(2), np.array([0.0, 1.0]), np.zeros(0), np.zeros(1), np.zeros(2))
        with pytest.raises(ValueError):
            check_licq_equivalence(simplex_problem(), p)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000))
    def test_three_conditions_agree(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 6))
        p_rows = int(rng.integers(0, n + 1))
        E = rng.standard_normal((p_rows, n))
        if p_rows and rng.random() < 0.3:
            E[-1] = E[0]  # force dependence sometimes
        supp = rng.random(n) < 0.5
        x = np.where(supp, rng.uniform(0.5, 2, n), 0.0)
        y = np.where(supp, 0.0, rng.uniform(0.5, 1.5, n))
        y[~supp & (rng.random(n) < 0.5)] = 1.0
        pb = quad_problem(np.eye(n), np.zeros(n), A_eq=E, b_eq=E @ x)
        pt = PrimalDualPoint(x, y, np.zeros(0), np.zeros(p_rows), np.zeros(n))
        sp, sq, lin = check_licq_equivalence(pb, pt)
        assert sp == sq == lin


class TestStrongSosc:
    def test_identity_hessian(self, shifted):
        holds, ev = check_strong_sp_sosc(shifted, np.array([2.0, 0.0]), [], [])
        assert holds and ev == pytest.approx(1.0)

    def test_indefinite_direction(self):
        pb = indefinite_problem()
        x = np.array([0.0, 1.0])
        assert s_stationarity_residual(pb, x, [], []) <= 1e-12
        holds, ev = check_strong_sp_sosc(pb, x, [], [])
        assert not holds and ev == pytest.approx(-1.0)

    def test_trivial_subspace(self, shifted):
        holds, ev = check_strong_sp_sosc(shifted, np.zeros(2), [], [])
        assert holds and ev == np.inf

    def test_equality_restricts_subspace(self):
        # on eTx = 1 both coordinates nonzero: subspace spanned by (1, -1)
        holds, ev = check_strong_sp_sosc(simplex_problem(), np.array([0.5, 0.5]), [], [0.5])
        assert holds and ev == pytest.approx(1.0)


class TestSecondOrderNecessary:
    def test_convex(self, shifted):
        assert check_second_order_necessary(shifted, np.array([2.0, 3.0]), [], [])

    def test_indefinite(self):
        assert not check_second_order_necessary(indefinite_problem(), np.array([0.0, 1.0]), [], [],
                                                n_samples=1000)

    def test_trivial_cone(self):
        assert check_second_order_necessary(indefinite_problem(), np.zeros(2), [], [])

    def test_weakly_active_inequality_blocks_bad_direction(self):
        # g(x) = x2 - 1 active with lambda = 0: cone keeps only d2 <= 0,
        # and d'Hd = -d2^2 < 0 there, so the check still fails
        pb = quad_problem(np.diag([1.0, -1.0]), np.array([0.0, 1.0]),
                          A_in=np.array([[0.0, 1.0]]), b_in=np.array([1.0]))
        assert not check_second_order_necessary(pb, np.array([0.0, 1.0]), [0.0], [])


class TestBdRegularity:
    def test_full_support_quadratic(self, shifted):
        p = complete_point(shifted, np.array([2.0, 3.0]), np.zeros(0), np.zeros(0), 0.0)
        rep = check_bd_regularity(shifted, p)
        assert rep.regular and rep.elements == 1 and not rep.partial
        regular, sigma = rep
        assert regular and sigma > 0

    @pytest.mark.parametrize("seed", range(5))
    def test_licq_and_sosc_imply_regular(self, seed):
        pb, x, mu = quadratic_regular_instance(seed)
        assert check_sp_licq(pb, x).holds and check_strong_sp_sosc(pb, x, [], mu)[0]
        p = complete_point(pb, x, np.zeros(0), mu, 0.0)
        assert check_bd_regularity(pb, p, FULL).regular
        assert check_bd_regularity(pb, p, FULL, NcpKind.MINIMUM).regular

    def test_not_a_zero(self, shifted):
        p = complete_point(shifted, np.array([1.0, 3.0]), np.zeros(0), np.zeros(0), 0.0)
        with pytest.raises(ValueError):
            check_bd_regularity(shifted, p)

    @pytest.mark.parametrize("ncp, count", [(NcpKind.FISCHER_BURMEISTER, 3), (NcpKind.MINIMUM, 2)])
    def test_degenerate_constraint_branches(self, ncp, count):
        # g(x) = x1 - 2 is active at the unconstrained minimizer with lambda = 0
        pb = quad_problem(np.eye(2), np.array([-2.0, -3.0]), A_in=np.array([[1.0, 0.0]]), b_in=np.array([2.0]))
        p = complete_point(pb, np.array([2.0, 3.0]), np.zeros(1), np.zeros(0), 0.0)
        rep = check_bd_regularity(pb, p, FULL, ncp)
        assert rep.elements == count

    def test_cap_flags_partial(self):
        n = 3
        pb = quad_problem(np.eye(n), -np.ones(n), A_in=np.eye(n), b_in=np.ones(n))
        p = complete_point(pb, np.ones(n), np.zeros(n), np.zeros(0), 0.0)
        rep = check_bd_regularity(pb, p, FULL, enumerate_cap=5)
        assert rep.partial and rep.elements == 5

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_full_and_reduced_agree(self, seed):
        rng = np.random.default_rng(seed)
        n = 4
        pb, x, mu = quadratic_regular_instance(seed, n)
        if rng.random() < 0.4:
            # a singular Hessian on the support can break regularity
            Q = np.zeros((n, n))
            pb = quad_problem(Q, -(np.ones(n)), rho=1.0)
            x, mu = np.zeros(n), np.zeros(0)
        p = complete_point(pb, x, np.zeros(0), mu, 0.0)
        red = PrimalDualPoint(p.x, np.zeros(n), p.lam, p.mu, p.gamma)
        full = PrimalDualPoint(p.x, 1 - p.gamma * p.x / pb.rho, p.lam, p.mu, p.gamma)
        assert check_bd_regularity(pb, full, FULL).regular == check_bd_regularity(pb, red, RED).regular


class TestOracle:
    def test_shifted_quadratic_points(self, shifted):
        res = brute_force_oracle(shifted)
        got = {tuple(np.round(q.x, 10)): q.objective for q in res.stationary_points}
        assert got == pytest.approx({(0.0, 0.0): 6.5, (2.0, 0.0): 5.5, (0.0, 3.0): 3.0, (2.0, 3.0): 2.0})
        # hand formula: F = 0.5*||a off S||^2 + rho*|S|
        for q in res.stationary_points:
            S = q.x != 0
            assert q.objective == pytest.approx(0.5 * np.sum(np.array([2.0, 3.0])[~S] ** 2) + S.sum())
        np.testing.assert_allclose(res.global_min, [2, 3])
        assert res.global_value == pytest.approx(2.0)

    def test_large_penalty(self):
        res = brute_force_oracle(shifted_quadratic(rho=10.0))
        np.testing.assert_allclose(res.global_min, [0, 0])
        assert res.global_value == pytest.approx(6.5)
        full = [q for q in res.stationary_points if np.all(q.x != 0)][0]
        assert full.objective == pytest.approx(20.0)  # rho * |S|

    def test_simplex(self):
        res = brute_force_oracle(simplex_problem())
        got = {tuple(np.round(q.x, 10)): q.objective for q in res.stationary_points}
        assert got == pytest.approx({(1.0, 0.0): 0.6, (0.0, 1.0): 0.6, (0.5, 0.5): 0.45})
        np.testing.assert_allclose(res.global_min, [0.5, 0.5])
        assert res.failures == [()]  # the empty support is infeasible

    def test_points_are_s_stationary(self):
        pb = quad_problem(np.array([[2.0, 0.5, 0], [0.5, 1.0, 0.2], [0, 0.2, 1.5]]), np.array([-1.0, 0.5, -2.0]),
                          rho=0.4, A_in=np.array([[1.0, 1.0, 1.0]]), b_in=np.array([1.0]))
        res = brute_force_oracle(pb)
        for q in res.stationary_points:
            assert s_stationarity_residual(pb, q.x, q.lam, q.mu, 0.0) <= 1e-9

    def test_indefinite_classification(self):
        res = brute_force_oracle(indefinite_problem())
        cls = {tuple(np.round(q.x, 10)): q.classification for q in res.stationary_points}
        # x2 is a maximizing direction whenever x2 is free
        assert cls[(0.0, 0.0)] == LOCAL_MIN
        assert cls[(0.0, 1.0)] != LOCAL_MIN

    def test_json_roundtrip(self):
        res = brute_force_oracle(simplex_problem())
        back = OracleResult.from_json(res.to_json())
        assert back.to_json() == res.to_json()
        assert back.local_min_supports() == res.local_min_supports()

    def test_size_limit(self):
        with pytest.raises(ValueError):
            brute_force_oracle(shifted_quadratic(np.zeros(13)))


def random_small_qp(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    B = rng.standard_normal((n, n))
    Q = B.T @ B / n + (0.1 if rng.random() < 0.7 else -0.3) * np.eye(n)
    kw = {}
    if rng.random() < 0.5:
        kw.update(A_in=rng.standard_normal((1, n)), b_in=np.array([0.5]))
    if rng.random() < 0.5:
        kw.update(A_eq=rng.standard_normal((1, n)), b_eq=np.array([rng.standard_normal()]))
    return quad_problem(Q, rng.standard_normal(n), rho=float(rng.uniform(0.1, 2)), **kw)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_oracle_bridges(seed):
    pb = random_small_qp(seed)
    res = brute_force_oracle(pb, n_starts=2)
    for q in res.stationary_points:
        holds, _ = check_strong_sp_sosc(pb, q.x, q.lam, q.mu, 0.0)
        if holds:
            assert q.classification == LOCAL_MIN
        if q.classification == LOCAL_MIN and check_sp_licq(pb, q.x, 0.0).holds:
            assert s_stationarity_residual(pb, q.x, q.lam, q.mu, 0.0) <= 1e-8
