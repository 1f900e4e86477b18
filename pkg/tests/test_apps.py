import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l0newton.apps import (
    LibsvmParseError,
    LogisticInstance,
    PortfolioInstance,
    QuadraticInstance,
    build_spo,
    canonical_json,
    dump_libsvm,
    gen_logistic,
    gen_portfolio,
    gen_sensing,
    generate,
    instance_from_dict,
    instance_id,
    instance_to_csv,
    instance_to_dict,
    iter_family,
    load_instance,
    logistic_oracles,
    parse_libsvm,
    save_instance,
)
from l0newton.presolve import QpSpec, qp_solve

from conftest import central_jacobian


def same_instance(a, b):
    return canonical_json(a) == canonical_json(b)


class TestPortfolio:
    def test_spd_and_uniform_feasible(self):
        inst = gen_portfolio(10, seed=1)
        assert np.linalg.eigvalsh(inst.Q).min() >= 1e-4 - 1e-12
        x = np.full(10, 0.1)
        assert inst.alpha @ x >= inst.beta

    def test_small(self):
        inst = gen_portfolio(2, seed=7)
        assert inst.alpha @ np.full(2, 0.5) >= inst.beta

    def test_feasible_set_nonempty(self):
        inst = gen_portfolio(6, seed=3)
        spec = QpSpec(np.zeros((6, 6)), np.zeros(6), np.ones((1, 6)), np.ones(1),
                      -inst.alpha[None, :], np.array([-inst.beta]), nonneg=True)
        assert abs(qp_solve(spec).x.sum() - 1) <= 1e-8

    def test_bitwise_deterministic(self):
        a, b = gen_portfolio(12, seed=9), gen_portfolio(12, seed=9)
        assert a.Q.tobytes() == b.Q.tobytes() and a.alpha.tobytes() == b.alpha.tobytes()
        assert not same_instance(a, gen_portfolio(12, seed=10))

    def test_too_small(self):
        with pytest.raises(ValueError):
            gen_portfolio(1, seed=0)


class TestSensing:
    def test_large_shapes(self):
        inst = gen_sensing(512, 128, 8, 32, seed=0)
        assert inst.A.shape == (128, 512) and inst.C.shape == (8, 512)
        assert np.count_nonzero(inst.xbar) == 32

    def test_construction_identity(self):
        inst = gen_sensing(64, 32, 4, 8, seed=11)
        np.testing.assert_allclose(inst.A @ inst.xbar, inst.b, atol=1e-14)
        np.testing.assert_allclose(inst.C @ inst.xbar, inst.d, atol=1e-14)

    def test_deterministic(self):
        assert same_instance(gen_sensing(64, 32, 4, 8, seed=5), gen_sensing(64, 32, 4, 8, seed=5))

    def test_column_variance(self):
        inst = gen_sensing(400, 100, 20, 10, seed=2)
        SA = np.vstack([inst.A, inst.C])
        var = SA.var(axis=0, ddof=1).mean()
        assert abs(var * 120 - 1) <= 0.2

    @pytest.mark.parametrize("args", [(4, 2, 1, 5), (4, 0, 0, 1), (4, -1, 2, 1)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            gen_sensing(*args, seed=0)


class TestLogisticOracle:
    def test_value_at_zero(self):
        inst = gen_logistic(4, 25, seed=0)
        assert logistic_oracles(inst)(np.zeros(4))[0] == pytest.approx(25 * np.log(2))

    def test_separable_limit(self):
        inst = LogisticInstance(np.array([[1.0]]), np.array([1.0]))
        v, g, H = logistic_oracles(inst)(np.array([60.0]))
        assert 0 <= v < 1e-20 and np.all(np.isfinite(g)) and np.all(np.isfinite(H))

    def test_large_negative_margin_stays_finite(self):
        inst = LogisticInstance(np.array([[1.0]]), np.array([1.0]))
        v, _, _ = logistic_oracles(inst)(np.array([-800.0]))
        assert v == pytest.approx(800.0)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 1000))
    def test_finite_differences(self, seed):
        inst = gen_logistic(5, 15, seed=seed)
        orc = logistic_oracles(inst)
        w = np.random.default_rng(seed).standard_normal(5)
        g, H = orc(w)[1], orc(w)[2]
        num_g = central_jacobian(lambda z: np.array([orc(z)[0]]), w)[0]
        num_H = central_jacobian(lambda z: orc(z)[1], w)
        assert np.abs(g - num_g).max() <= 1e-6 * max(1, np.abs(g).max())
        assert np.abs(H - num_H).max() <= 1e-6 * max(1, np.abs(H).max())

    def test_label_validation(self):
        with pytest.raises(ValueError):
            LogisticInstance(np.ones((2, 1)), np.array([1.0, 0.0]))


class TestLibsvm:
    TEXT = "+1 1:0.5 3:-1\n-1 2:2\n"

    def test_parse(self):
        inst = parse_libsvm(self.TEXT)
        np.testing.assert_array_equal(inst.X, [[0.5, 0, -1], [0, 2, 0]])
        np.testing.assert_array_equal(inst.y, [1, -1])

    def test_scaled(self):
        inst = parse_libsvm(self.TEXT, scale_to_unit=True)
        np.testing.assert_array_equal(inst.X[:, 1], [0, 1])
        assert np.abs(inst.X).max() <= 1.0

    def test_zero_label(self):
        assert parse_libsvm("0 1:1\n1 1:2\n").y.tolist() == [-1, 1]

    @pytest.mark.parametrize("text, line", [
        ("+1 2:1 1:1\n", 1),
        ("+1 1:1\n-1 x:2\n", 2),
        ("+1 1:1\n\n2 1:1\n", 3),
        ("+1 0:1\n", 1),
        ("+1 3\n", 1),
    ])
    def test_errors_carry_line(self, text, line):
        with pytest.raises(LibsvmParseError) as exc:
            parse_libsvm(text)
        assert exc.value.lineno == line

    @settings(max_examples=30)
    @given(st.integers(0, 10_000))
    def test_roundtrip(self, seed):
        rng = np.random.default_rng(seed)
        X = np.where(rng.random((6, 4)) < 0.5, 0.0, rng.standard_normal((6, 4)))
        X[:, -1] = 1.0  # keep the width fixed
        inst = LogisticInstance(X, rng.choice([-1.0, 1.0], 6))
        back = parse_libsvm(dump_libsvm(inst))
        np.testing.assert_array_equal(back.X, inst.X)
        np.testing.assert_array_equal(back.y, inst.y)
        again = parse_libsvm(dump_libsvm(back))
        np.testing.assert_array_equal(again.X, back.X)


class TestBuildSpo:
    def test_sensing_mapping(self):
        pb = build_spo(gen_sensing(64, 32, 4, 8, seed=0))
        assert (pb.m, pb.p, pb.nonneg) == (0, 4, False)

    def test_portfolio_mapping(self):
        pb = build_spo(gen_portfolio(5, seed=0))
        assert (pb.m, pb.p, pb.nonneg) == (1, 1, True)
        x = np.full(5, 0.2)
        np.testing.assert_allclose(pb.h(x), 0, atol=1e-15)

    def test_logistic_mapping(self):
        pb = build_spo(gen_logistic(5, 10, seed=0))
        assert (pb.m, pb.p, pb.nonneg) == (0, 0, False)

    def test_rho_override(self):
        assert build_spo(gen_portfolio(4, seed=0, rho=1.0), rho=0.3).rho == 0.3

    @pytest.mark.parametrize("inst", [
        gen_portfolio(5, seed=2),
        gen_sensing(8, 4, 2, 2, seed=2),
        gen_logistic(5, 12, seed=2),
        QuadraticInstance(np.diag([1.0, 2.0, 3.0]), np.ones(3), A_in=np.ones((1, 3)), b_in=np.ones(1)),
    ], ids=["portfolio", "sensing", "logistic", "quadratic"])
    def test_oracles_match_finite_differences(self, inst):
        pb = build_spo(inst)
        x = np.random.default_rng(0).uniform(0.1, 0.5, pb.n)
        ev = pb.evaluate(x)
        num = lambda fn: central_jacobian(fn, x)
        np.testing.assert_allclose(num(lambda z: np.array([pb.f(z)]))[0], ev.grad_f, rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(num(lambda z: pb.evaluate(z).grad_f), ev.hess_f, rtol=1e-6, atol=1e-6)
        if pb.m:
            np.testing.assert_allclose(num(pb.g), ev.jac_g, rtol=1e-6, atol=1e-6)
        if pb.p:
            np.testing.assert_allclose(num(pb.h), ev.jac_h, rtol=1e-6, atol=1e-6)


class TestSerialization:
    @pytest.mark.parametrize("inst", [gen_portfolio(4, seed=1), gen_sensing(8, 4, 2, 2, seed=1),
                                      gen_logistic(3, 5, seed=1)], ids=["portfolio", "sensing", "logistic"])
    def test_dict_roundtrip(self, inst):
        back = instance_from_dict(json.loads(canonical_json(inst)))
        assert type(back) is type(inst)
        assert same_instance(back, inst)
        assert instance_id(back) == instance_id(inst)

    def test_file_roundtrip(self, tmp_path):
        inst = gen_portfolio(4, seed=1)
        iid = save_instance(inst, tmp_path / "p.json")
        assert iid == instance_id(inst) and len(iid) == 16
        assert same_instance(load_instance(tmp_path / "p.json"), inst)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            instance_from_dict({"kind": "knapsack"})

    def test_ids_differ_by_rho(self):
        assert instance_id(gen_portfolio(4, seed=1, rho=1.0)) != instance_id(gen_portfolio(4, seed=1, rho=2.0))

    def test_csv_export(self):
        out = instance_to_csv(gen_portfolio(3, seed=0))
        Q = np.loadtxt(out["Q"].splitlines(), delimiter=",")
        np.testing.assert_array_equal(Q, gen_portfolio(3, seed=0).Q)
        assert instance_to_dict(gen_portfolio(3, seed=0))["kind"] == PortfolioInstance.kind


class TestGenerate:
    def test_dispatch(self):
        assert same_instance(generate("sensing", {"n": 16, "m": 8, "p": 2, "s": 3}, 4),
                             gen_sensing(16, 8, 2, 3, 4))

    def test_iter_family_seeds(self):
        insts = list(iter_family("portfolio", {"n": 3}, range(3)))
        assert len({instance_id(i) for i in insts}) == 3

    def test_unknown(self):
        with pytest.raises(ValueError):
            generate("knapsack", {}, 0)
