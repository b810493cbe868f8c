from jax import numpy as np, config

config.update("jax_enable_x64", True)
import logging
import pytest
from scipy.stats import qmc
from dKac.errors import ConfigError, InvalidFunctionError
from dKac.functions import Constant, GaussianBump, UserFunction
from dKac.model import (
    ClassParams,
    FunctionClassTag,
    ProblemSpec,
    SUITE,
    integration_problem,
    probe_points,
    problem_from_dict,
    shift_to_origin,
    suite_case,
    validate_membership,
)


@pytest.fixture
def spec():
    return ProblemSpec(1, 1.0, GaussianBump(), Constant(0.0))


class TestClassParams:
    def test_constructor(self):
        params = ClassParams()
        assert params.beta1 == params.beta2 == params.alpha == 1.0
        assert params.smoothness_r == 1
        for name in ["beta1", "beta2", "alpha", "embed_K", "smoothness_r"]:
            with pytest.raises(ValueError):
                ClassParams(**{name: 0})
        with pytest.raises(ValueError):
            ClassParams(smoothness_r=1.5)

    def test_methods(self):
        params = ClassParams.for_dimension(3, 2, beta2=0.5)
        assert params.alpha == 1.5
        assert params.smoothness_r == 2
        assert np.allclose(params.term_bound(3), 0.125)


class TestFunctionClassTag:
    def test_constructor(self):
        with pytest.raises(ValueError):
            FunctionClassTag("Sobolev")
        with pytest.raises(ValueError):
            FunctionClassTag(domain_halfwidth_L=-1.0)

    def test_halfwidth(self):
        tag = FunctionClassTag()
        assert tag.halfwidth(1.0) == 6.0
        assert tag.halfwidth(4.0) == 12.0
        assert tag.halfwidth(0.25) == 4.0
        assert FunctionClassTag(domain_halfwidth_L=3.0).halfwidth(1.0) == 3.0

    def test_weight(self):
        tag = FunctionClassTag()
        assert tag.weighted
        assert np.allclose(tag.weight(np.zeros(2)), 1.0)
        assert np.allclose(tag.weight(np.array([1.0, 1.0])), np.exp(-2.0))
        custom = FunctionClassTag("Custom")
        assert not custom.weighted
        assert np.allclose(custom.weight(np.array([3.0])), 1.0)


class TestProblemSpec:
    def test_constructor(self, spec):
        assert spec.at_origin
        assert spec.u_star.shape == (1,)
        assert spec.halfwidth == 6.0
        assert spec.params.alpha == 1.0

        # Scalars are constant functions
        assert ProblemSpec(2, 1.0, 1.0).V.constant_value() == 0.0

        with pytest.raises(ValueError):
            ProblemSpec(0, 1.0, 1.0)
        with pytest.raises(ValueError):
            ProblemSpec(1, 0.0, 1.0)
        with pytest.raises(ValueError):
            ProblemSpec(2, 1.0, 1.0, u_star=np.zeros(3))
        with pytest.raises(TypeError):
            ProblemSpec(1, 1.0, 1.0, params=1.0)

    def test_shift_to_origin(self, spec):
        assert shift_to_origin(spec) is spec

        moved = ProblemSpec(
            1, 1.0, GaussianBump(), Constant(0.5), u_star=np.array([1.0])
        )
        shifted = shift_to_origin(moved)
        assert shifted.at_origin
        assert np.allclose(shifted.v(np.zeros(1)), np.exp(-1.0))
        assert np.allclose(shifted.V(np.zeros(1)), 0.5)

    def test_integration_problem(self):
        problem = integration_problem(GaussianBump(), 2, 1.0)
        assert problem.d == 2
        assert problem.V.constant_value() == 0.0


def test_probe_points():
    points = probe_points(100, 3, 6.0, 0)
    assert points.shape == (100, 3)
    assert np.allclose(points[0], 0.0)
    assert np.abs(points).max() <= 6.0
    assert np.array_equal(points, probe_points(100, 3, 6.0, 0))
    assert not np.array_equal(points, probe_points(100, 3, 6.0, 1))

    # The origin followed by the scrambled Sobol points
    unit = qmc.Sobol(3, scramble=True, seed=0).random_base2(7)[:99]
    assert np.allclose(points[1:], 6.0 * (2 * unit - 1))
    assert probe_points(10, 20, 1.0, 0).shape == (10, 20)
    assert probe_points(1, 2, 1.0, 0).shape == (1, 2)

    with pytest.raises(ValueError):
        probe_points(0, 1, 1.0, 0)


class TestValidateMembership:
    def test_pass(self, spec):
        report = validate_membership(spec, probe_count=256)
        assert report.passed
        assert np.allclose(report.v_norm, 1.0)
        assert report.V_norm == 0.0
        assert report.probe_count == 256
        assert report.to_dict()["passed"]

    def test_custom_class(self):
        report = validate_membership(suite_case("v1_Vconst_d1"))
        assert report.passed
        assert np.allclose(report.V_norm, 0.25)

    def test_violation(self, spec, caplog):
        caplog.set_level(logging.WARNING)
        report = validate_membership(spec, ClassParams(beta1=0.5))
        assert not report.v_ok
        assert report.V_ok
        assert not report.passed
        assert "beta1" in caplog.text

    def test_invalid(self):
        spec = ProblemSpec(1, 1.0, UserFunction(lambda z: 1 / z.sum()))
        with pytest.raises(InvalidFunctionError):
            validate_membership(spec)


class TestSuite:
    def test_suite_case(self):
        for name in SUITE:
            assert isinstance(suite_case(name), ProblemSpec)
        assert suite_case("bump_V0_d2").d == 2
        with pytest.raises(ValueError):
            suite_case("unknown")

    def test_problem_from_dict(self):
        assert problem_from_dict("bump_V0_d1").d == 1

        spec = problem_from_dict(
            {
                "d": 2,
                "t_star": 0.5,
                "u_star": [0.5, -0.5],
                "v": {"preset": "gaussian_bump", "width": 2.0},
                "V": {"preset": "constant", "value": 0.25},
                "class_params": {"smoothness_r": 2, "beta2": 0.25},
                "function_class": {"kind": "Custom"},
            }
        )
        assert spec.d == 2 and spec.t_star == 0.5
        assert np.allclose(spec.u_star, np.array([0.5, -0.5]))
        assert spec.params.alpha == 1.0
        assert spec.params.beta2 == 0.25
        assert not spec.function_class.weighted

        # Scalars are accepted for functions
        assert problem_from_dict({"d": 1, "t_star": 1, "v": 1.0}).d == 1

    def test_problem_from_dict_errors(self):
        with pytest.raises(ConfigError) as error:
            problem_from_dict({"t_star": 1.0, "v": 1.0})
        assert error.value.field == "problem.d"

        with pytest.raises(ConfigError) as error:
            problem_from_dict({"d": 1, "t_star": 1.0, "v": {"preset": "x"}})
        assert error.value.field == "problem.v"

        with pytest.raises(ConfigError):
            problem_from_dict("unknown")
        with pytest.raises(ConfigError):
            problem_from_dict({"d": 1, "t_star": -1.0, "v": 1.0})
        with pytest.raises(ConfigError):
            problem_from_dict([1, 2])
