from jax import numpy as np, config

config.update("jax_enable_x64", True)
import logging
import pytest
import dKac.utils as dku
from dKac.errors import InvalidFunctionError, SparseGridBudgetError
from dKac.functions import Constant, GaussianBump, HarmonicPotential
from dKac.model import ClassParams, FunctionClassTag
from dKac.sampler import RngStream
from dKac.series import product_h
from dKac.smolyak import (
    Level1DOperator,
    SparseApprox,
    build_1d_operator,
    build_sparse,
    combination_levels,
    count_nodes,
    eval_sparse,
    load_sparse,
    precompute_cv_weights,
)


@pytest.fixture
def params():
    return ClassParams()


@pytest.fixture
def custom():
    return FunctionClassTag("Custom")


@pytest.fixture
def bump_approx(params):
    """Exact approximant of the Gaussian bump, k = 0, d = 1."""
    h = lambda p: product_h(GaussianBump(), Constant(0.0), p)
    return build_sparse(h, 0.01, 0, 1, FunctionClassTag(), params)


def triangle_wave(p):
    return np.abs(np.mod(p[0, 0] - 0.1, 0.7) - 0.35)


class TestLevel1DOperator:
    def test_constructor(self, params):
        operator = Level1DOperator(2, 6.0, degree=1, weighted=False)
        assert operator.nodes.shape == (5,)
        assert np.allclose(operator.nodes, np.array([-6, -3, 0, 3, 6]))
        assert np.allclose(operator.error_bound, 0.25)
        assert np.allclose(Level1DOperator(0, 6.0).nodes, 0.0)

        operator = build_1d_operator(3, FunctionClassTag(), params, t=4.0)
        assert operator.halfwidth == 12.0
        assert operator.weighted
        with pytest.raises(ValueError):
            build_1d_operator(-1, FunctionClassTag(), params)

    def test_interpolate(self):
        x = np.linspace(-4, 4, 33)
        linear = lambda z: 2 * z + 1
        operator = Level1DOperator(3, 4.0, weighted=False)
        assert np.allclose(operator.interpolate(linear, x), linear(x))

        # Constant beyond the cube
        outside = operator.interpolate(linear, np.array([-5.0, 5.0]))
        assert np.allclose(outside, np.array([-7.0, 9.0]))

        # The weighted basis vanishes there
        weighted = Level1DOperator(3, 4.0)
        assert np.allclose(weighted.basis(np.array([5.0])), 0.0)

    def test_weighted(self):
        operator = Level1DOperator(2, 6.0)
        f = lambda z: np.cos(z) * np.exp(-(z**2))
        nodes = operator.nodes
        assert np.allclose(operator.interpolate(f, nodes), f(nodes))

        # The unnormalised basis carries rho(x)
        x = np.array([0.5])
        ratio = operator.basis(x, False) / operator.basis(x)
        expected = np.exp(-(operator.nodes**2))
        assert np.allclose(ratio[0, 2:4], expected[2:4])


class TestCombination:
    def test_count_nodes(self):
        assert count_nodes(-1, 3) == 0
        assert count_nodes(0, 3) == 1
        assert count_nodes(4, 1) == 17
        assert count_nodes(1, 2) == 5
        assert count_nodes(2, 2) == 13
        assert count_nodes(1, 3) == 7

    def test_combination_levels(self):
        assert combination_levels(-1, 2) == []
        assert combination_levels(3, 1) == [((3,), 1)]
        levels = dict(combination_levels(1, 2))
        assert levels == {(0, 0): -1, (0, 1): 1, (1, 0): 1}

        # Constants are reproduced
        for q, D in [(2, 2), (2, 3), (4, 3)]:
            assert sum(c for _, c in combination_levels(q, D)) == 1


class TestSparseApprox:
    def test_constructor(self):
        with pytest.raises(ValueError):
            SparseApprox(
                0.1, 0, 1, 0, 6.0, 1, True, np.zeros((1, 1, 1)),
                np.zeros((2, 1)), np.ones(1), 1,
            )  # fmt: skip

    def test_zero(self, params):
        approx = build_sparse(
            lambda p: 0.0 * p.sum(), 0.1, 1, 1, FunctionClassTag(), params
        )
        assert approx.is_zero
        assert approx.level == -1
        assert approx.n_nodes == 0
        assert np.allclose(eval_sparse(approx, np.ones((4, 2, 1))), 0.0)
        approx = precompute_cv_weights(approx, 1, 1.0, 1)
        assert approx.integral() == 0.0

    def test_eval_shapes(self, bump_approx):
        assert eval_sparse(bump_approx, np.zeros((3, 1, 1))).shape == (3,)
        assert bump_approx(np.zeros((2, 4, 1))).shape == (2, 4)
        assert bump_approx(np.zeros((5, 1))).shape == (5,)
        with pytest.raises(ValueError):
            eval_sparse(bump_approx, np.zeros((3, 2)))
        with pytest.raises(ValueError):
            bump_approx.integral()


class TestBuildSparse:
    def test_exact_bump(self, bump_approx):
        assert bump_approx.level == 0
        assert bump_approx.n_nodes == 1
        assert bump_approx.probe_error < 1e-12
        x = np.linspace(-3, 3, 7)[:, None, None]
        assert np.allclose(bump_approx(x), np.exp(-x[:, 0, 0] ** 2))

    def test_linear(self, params, custom):
        h = lambda p: 1 + 0.1 * p.sum()
        approx = build_sparse(h, 0.01, 1, 1, custom, params)
        assert approx.level == 1
        assert approx.n_nodes == 5
        assert approx.n_entries == 7
        assert np.allclose(approx.certificate, 1.0)
        paths = np.array([[[0.5], [-1.0]], [[2.0], [3.0]]])
        assert np.allclose(approx(paths), np.array([0.95, 1.5]))

    def test_node_growth(self, custom):
        """
        Nodes of a Lipschitz integrand grow like 1 / eps for r = 1.
        """
        params = ClassParams(smoothness_r=1)
        eps = 2.0 ** -np.arange(3, 10)
        nodes = []
        for e in eps:
            approx = build_sparse(
                triangle_wave, float(e), 0, 1, custom, params
            )
            assert approx.probe_error <= e
            assert approx.n_nodes == 2**approx.level + 1
            nodes.append(approx.n_nodes)
        slope = dku.loglog_slope(1 / eps, np.array(nodes))
        assert 0.85 <= slope <= 1.15

    def test_errors(self, params, custom):
        with pytest.raises(SparseGridBudgetError):
            build_sparse(
                triangle_wave, 1e-3, 0, 1, custom, params, max_nodes=9
            )
        with pytest.raises(InvalidFunctionError):
            build_sparse(
                lambda p: np.log(p.sum() - 100), 0.1, 0, 1, custom, params
            )
        with pytest.raises(ValueError):
            build_sparse(triangle_wave, 0.0, 0, 1, custom, params)

    def test_harmonic(self):
        """
        A well cut at the cube edge is reproduced exactly at level k, by
        the 2^k entries left after dropping zero coefficients.
        """
        tag = FunctionClassTag("Custom", domain_halfwidth_L=1.4)
        params = ClassParams(beta2=0.98, smoothness_r=2)
        V = HarmonicPotential(radius=1.4)
        h = lambda p: product_h(Constant(1.0), V, p)
        approx = build_sparse(h, 0.01, 2, 1, tag, params)
        assert approx.level == 2
        assert approx.n_entries == 4
        assert np.all(approx.coefficients != 0)
        assert approx.probe_error < 1e-12
        assert np.allclose(approx.tolerance, 0.01 * 0.98**2)

        # Also beyond the cube, where V is constant
        paths = np.array([[[2.0], [-3.0], [0.3]], [[0.7], [1.1], [9.0]]])
        expected = np.array([h(path) for path in paths])
        assert np.allclose(approx(paths), expected, atol=1e-12)

    def test_cache(self, params, tmp_path, caplog):
        caplog.set_level(logging.INFO)
        calls = []

        def h(p):
            calls.append(1)
            return np.cos(p.sum())

        tag = FunctionClassTag("Custom")
        args = (h, 0.1, 1, 1, tag, params)
        first = build_sparse(*args, cache_dir=tmp_path, h_key="cos")
        assert len(calls) > 0
        assert len(list(tmp_path.iterdir())) == 1

        calls.clear()
        second = build_sparse(*args, cache_dir=tmp_path, h_key="cos")
        assert calls == []
        assert "Cache hit for the sparse grid" in caplog.text
        assert second.level == first.level
        assert second.n_nodes == first.n_nodes
        assert second.probe_error == first.probe_error
        assert np.array_equal(second.columns, first.columns)
        assert np.array_equal(second.coefficients, first.coefficients)
        assert np.array_equal(second.node_tuples, first.node_tuples)

        # Without a key for h nothing is cached
        build_sparse(*args, cache_dir=tmp_path / "none")
        assert not (tmp_path / "none").exists()
        assert load_sparse(tmp_path, "missing", 0.1, 1, 1, tag, params) is None


class TestPrecompute:
    def test_weights(self, bump_approx):
        approx = precompute_cv_weights(bump_approx, 0, 1.0, 1)
        assert approx.has_cv_weights
        assert approx.cv_weights.shape == (1,)
        assert np.allclose(approx.integral(), 1 / np.sqrt(3), atol=5e-3)
        assert float(approx.integral_error()) < 2e-3

        again = precompute_cv_weights(bump_approx, 0, 1.0, 1)
        assert np.array_equal(approx.cv_weights, again.cv_weights)

        with pytest.raises(ValueError):
            precompute_cv_weights(bump_approx, 1, 1.0, 1)
        with pytest.raises(ValueError):
            precompute_cv_weights(bump_approx, 0, 1.0, 1, precision=0.0)

    def test_cache(self, bump_approx, tmp_path, caplog):
        caplog.set_level(logging.INFO)
        rng = RngStream(3)
        first = precompute_cv_weights(
            bump_approx, 0, 1.0, 1, 0.01, rng, tmp_path
        )
        assert len(list(tmp_path.iterdir())) == 1
        assert "Cache hit" not in caplog.text

        second = precompute_cv_weights(
            bump_approx, 0, 1.0, 1, 0.01, rng, tmp_path
        )
        assert "Cache hit" in caplog.text
        assert np.allclose(first.cv_weights, second.cv_weights)
        assert np.allclose(first.cv_errors, second.cv_errors)
        assert first.integral_error() == second.integral_error()
        assert second.precision_met

        # A different stream is a different entry
        precompute_cv_weights(
            bump_approx, 0, 1.0, 1, 0.01, RngStream(4), tmp_path
        )
        assert len(list(tmp_path.iterdir())) == 2

    def test_capped(self, bump_approx, caplog):
        approx = precompute_cv_weights(bump_approx, 0, 1.0, 1)
        assert approx.precision_met

        approx = precompute_cv_weights(
            bump_approx, 0, 1.0, 1, precision=1e-6, max_samples=2**13
        )
        assert not approx.precision_met
        assert "capped at 8192" in caplog.text
        assert float(approx.integral_error()) > 1e-6

    def test_integral_error(self, params, custom):
        h = lambda p: 1 + 0.1 * p.sum()
        approx = build_sparse(h, 0.01, 1, 1, custom, params)
        approx = precompute_cv_weights(approx, 1, 1.0, 1, precision=1e-3)
        assert float(approx.integral_error()) <= 1e-3 * 1.5

        # Never above the sum of the per weight errors
        bound = np.dot(np.abs(approx.coefficients), approx.cv_errors)
        assert float(approx.integral_error()) <= float(bound) + 1e-15
