from jax import numpy as np, config

config.update("jax_enable_x64", True)
import pytest
from dKac.errors import InvalidIntegrandError
from dKac.estimators import (
    TermEstimate,
    empirical_variance_ratio,
    mc_mean,
    phi_rand,
    plain_mc,
)
from dKac.functions import Constant, GaussianBump, UserFunction
import dKac.utils as dku
from dKac.model import ClassParams, FunctionClassTag, ProblemSpec
from dKac.sampler import RngStream
from dKac.series import product_h, term_reference_value
from dKac.smolyak import build_sparse, precompute_cv_weights


def _approx(spec, k, eps, precision=None):
    h = lambda p: product_h(spec.v, spec.V, p)
    approx = build_sparse(
        h, eps, k, spec.d, spec.function_class, spec.params, spec.t_star
    )
    return precompute_cv_weights(approx, k, spec.t_star, spec.d, precision)


@pytest.fixture
def rng():
    return RngStream(7)


@pytest.fixture
def bump_spec():
    return ProblemSpec(1, 1.0, GaussianBump(), Constant(0.5))


@pytest.fixture
def cos_spec():
    """E[cos(x)] = exp(-1/2) for x ~ N(0, 1)."""
    return ProblemSpec(
        1,
        1.0,
        UserFunction(lambda z: np.cos(z.sum())),
        function_class=FunctionClassTag("Custom"),
    )


@pytest.fixture
def bump_term():
    """The second term of a bump with a bump potential, and its approximant."""
    spec = ProblemSpec(
        1,
        1.0,
        GaussianBump(),
        GaussianBump(0.5),
        params=ClassParams(beta2=0.5),
    )
    return spec, _approx(spec, 1, 0.05, precision=5e-4)

class TestTermEstimate:
    def test_constructor(self):
        estimate = TermEstimate(1, 0.5, 0.3, 10, precompute_error=0.4)
        assert np.allclose(estimate.total_error, 0.5)
        assert estimate.queries_used == 0
        assert estimate.to_dict()["n_evals"] == 10
        with pytest.raises(ValueError):
            TermEstimate(0, 1.0, -1.0, 1)
        with pytest.raises(ValueError):
            TermEstimate(0, 1.0, 0.0, -1)


class TestMonteCarlo:
    def test_mc_mean(self, rng):
        # E[x(t)^2] = t, times the simplex volume t
        f = lambda sample: (sample.points[-1] ** 2).sum()
        estimate = mc_mean(f, 1, 2.0, 1, 20000, rng)
        assert estimate.n_evals == 20000
        assert np.allclose(estimate.value, 4.0, atol=0.2)
        assert 0.01 < estimate.std_error < 0.1

    def test_single_sample(self, rng):
        f = lambda sample: sample.points.sum()
        estimate = mc_mean(f, 0, 1.0, 1, 1, rng)
        assert estimate.std_error == np.inf

    def test_constant(self, rng):
        f = lambda sample: 1.5 + 0.0 * sample.points.sum()
        estimate = mc_mean(f, 0, 1.0, 1, 100, rng)
        assert np.allclose(estimate.value, 1.5)
        assert estimate.std_error == 0.0

        estimate = mc_mean(f, 2, 1.0, 1, 100, rng)
        assert np.allclose(estimate.value, 0.75)
        assert estimate.std_error == 0.0

    def test_bump_mean(self, rng):
        # E[exp(-x^2)] = 1 / sqrt(3) for x ~ N(0, 1)
        spec = ProblemSpec(1, 1.0, GaussianBump())
        estimate = plain_mc(spec, 0, 10**6, rng)
        error = np.abs(estimate.value - 1 / np.sqrt(3))
        assert error <= 3 * estimate.std_error

    def test_error_scaling(self):
        """
        The RMSE of the mean of cos(z_1 + z_2) over the first term falls like
        m^(-1/2).
        """
        f = lambda sample: np.cos(sample.points.sum())
        exact = np.exp(-0.5) * (1 - np.exp(-1.5)) / 1.5
        ms = np.array([16, 64, 256, 1024, 4096])
        rmse = []
        for i, m in enumerate(ms):
            values = np.array(
                [
                    mc_mean(f, 1, 1.0, 1, int(m), RngStream(r, i)).value
                    for r in range(200)
                ]
            )
            rmse.append(np.sqrt(np.mean((values - exact) ** 2)))
        slope = dku.loglog_slope(ms, np.array(rmse))
        assert np.abs(slope + 0.5) < 0.05

    def test_plain_mc(self, bump_spec, rng):
        estimate = plain_mc(bump_spec, 1, 20000, rng)
        assert np.allclose(estimate.value, 0.5 / np.sqrt(3), atol=0.01)
        assert estimate.std_error < 0.01

        # Reproducible from the stream
        again = plain_mc(bump_spec, 1, 20000, RngStream(7))
        assert estimate.value == again.value

    def test_invalid(self, rng):
        f = lambda sample: np.log(sample.points.sum() - 100)
        with pytest.raises(InvalidIntegrandError) as error:
            mc_mean(f, 1, 1.0, 1, 10, rng)
        assert error.value.index == 0
        assert set(error.value.sample) == {"times", "points", "value"}


class TestPhiRand:
    def test_exact_approximant(self, rng):
        spec = ProblemSpec(1, 1.0, GaussianBump())
        approx = _approx(spec, 0, 0.01)
        estimate = phi_rand(spec, 0.01, 1000, 0, approx, rng)
        assert np.allclose(estimate.value, approx.integral())
        assert estimate.std_error < 1e-12
        assert estimate.precompute_error > 0
        assert np.allclose(estimate.value, 1 / np.sqrt(3), atol=5e-3)

    def test_unbiased(self, cos_spec, rng):
        approx = _approx(cos_spec, 0, 0.1, precision=1e-3)
        estimate = phi_rand(cos_spec, 0.1, 4096, 0, approx, rng)
        assert estimate.n_evals == 4096
        tolerance = 4 * estimate.std_error + estimate.precompute_error
        assert np.abs(estimate.value - np.exp(-0.5)) < tolerance

        # The residual is small compared to the integrand
        ratio = empirical_variance_ratio(cos_spec, 0, approx, 4096, rng)
        assert ratio > 10

    def test_bump_term(self, bump_term, rng):
        spec, approx = bump_term
        reference = term_reference_value(1, spec)
        estimate = phi_rand(spec, 0.05, 10**4, 1, approx, rng)
        tolerance = 3 * estimate.total_error + reference.error_estimate
        assert np.abs(estimate.value - reference.value) <= tolerance

    def test_replicates(self, bump_term):
        """
        The mean of 200 small sample estimates agrees with the reference.
        """
        spec, approx = bump_term
        reference = term_reference_value(1, spec)
        values = np.array(
            [
                phi_rand(spec, 0.05, 8, 1, approx, RngStream(r)).value
                for r in range(200)
            ]
        )
        std_error = np.hypot(
            values.std(ddof=1) / np.sqrt(200), approx.integral_error()
        )
        tolerance = 4 * std_error + reference.error_estimate
        assert np.abs(values.mean() - reference.value) <= tolerance

    def test_errors(self, bump_spec, rng):
        h = lambda p: product_h(bump_spec.v, bump_spec.V, p)
        approx = build_sparse(
            h, 0.1, 0, 1, bump_spec.function_class, bump_spec.params
        )
        with pytest.raises(ValueError):
            phi_rand(bump_spec, 0.1, 10, 0, approx, rng)

        approx = precompute_cv_weights(approx, 0, 1.0, 1)
        with pytest.raises(ValueError):
            phi_rand(bump_spec, 0.1, 10, 1, approx, rng)
        with pytest.raises(ValueError):
            empirical_variance_ratio(bump_spec, 0, approx, 1, rng)
