from jax import numpy as np, config

config.update("jax_enable_x64", True)
import pytest
import dKac.utils as dku
from jax import vmap
from dKac.errors import EncodingRangeError, InvalidIntegrandError
from dKac.functions import GaussianBump, UserFunction
from dKac.model import ClassParams, FunctionClassTag, ProblemSpec
from dKac.quantum import (
    QueryModel,
    ae_outcome_distribution,
    amplitude_estimate,
    encode_amplitude,
    median_error,
    phi_quant,
    q_quant_mean,
)
from dKac.sampler import RngStream, sample_batch
from dKac.series import product_h, term_reference_value
from dKac.smolyak import build_sparse, precompute_cv_weights


@pytest.fixture
def rng():
    return RngStream(11)


@pytest.fixture
def samples(rng):
    return sample_batch(1, 1.0, 1, 1000, rng.spawn(99))


def constant(value):
    return lambda sample: value + 0.0 * sample.points.sum()


def indicator(samples, n_ones):
    """An integrand equal to one on exactly n_ones of the samples."""
    last = np.sort(samples.points[:, -1, 0])
    threshold = 0.5 * (last[-n_ones - 1] + last[-n_ones])
    return lambda sample: (sample.points[-1, 0] > threshold).astype(float)


class TestQueryModel:
    def test_constructor(self):
        model = QueryModel(20)
        assert model.grid_bits == 4
        assert model.grid_size == 16
        assert model.queries == 100
        assert model.oracle_calls == 75
        assert QueryModel(1).grid_size == 2
        assert QueryModel(15).grid_size == 16
        assert QueryModel(16, repeats=1).queries == 16

        with pytest.raises(ValueError):
            QueryModel(0)
        with pytest.raises(ValueError):
            QueryModel(4, repeats=4)
        with pytest.raises(ValueError):
            QueryModel(4, value_bits=0)
        with pytest.raises(ValueError):
            QueryModel(4, grid_bits=0)

        # A grid of 8 makes 7 oracle calls
        assert QueryModel(7, grid_bits=3).grid_size == 8
        with pytest.raises(ValueError):
            QueryModel(6, grid_bits=3)


class TestAmplitudeEstimation:
    def test_distribution(self):
        for a, offset in [(0.3, 0.0), (0.7, 0.25), (0.0, 0.6)]:
            p = ae_outcome_distribution(a, 32, offset)
            assert p.shape == (32,)
            assert np.all(p >= 0)

        for bits in range(1, 13):
            for a in [0.0, 0.1234, 0.5, 0.87, 1.0]:
                p = ae_outcome_distribution(a, 2**bits)
                assert np.abs(p.sum() - 1.0) <= 1e-12

        p = ae_outcome_distribution(0.0, 16)
        assert np.allclose(p[0], 1.0)

        # Amplitudes on the grid are resolved exactly
        p = ae_outcome_distribution(np.sin(3 * np.pi / 16) ** 2, 16)
        assert np.allclose(p[3], 0.5) and np.allclose(p[13], 0.5)

        with pytest.raises(ValueError):
            ae_outcome_distribution(0.5, 6)

    def test_mass_near_amplitude(self):
        """
        At least 8 / pi^2 of the mass lies within one grid step of the phase.
        """
        for M in [16, 64, 256]:
            grid = np.arange(M) / M
            for a in np.linspace(0.05, 0.95, 7):
                theta = np.arcsin(np.sqrt(a)) / np.pi
                p = ae_outcome_distribution(a, M)
                near = np.zeros(M, dtype=bool)
                for phase in [theta, -theta]:
                    delta = grid - phase
                    delta = np.abs(delta - np.round(delta))
                    near = near | (delta <= 1 / M + 1e-12)
                assert p[near].sum() >= 8 / np.pi**2

    def test_grid_amplitude(self, rng):
        a = float(np.sin(3 * np.pi / 16) ** 2)
        outcome = amplitude_estimate(a, QueryModel(16), rng)
        assert outcome.grid_size == 16
        assert outcome.j in (3, 13)
        assert np.allclose(outcome.amplitude_estimate, a)
        assert outcome.queries_used == 80
        assert outcome.oracle_calls == 75
        assert outcome.offset == 0.0

    def test_median_error(self):
        # Grid aligned and zero amplitudes are estimated exactly
        assert median_error(np.sin(3 * np.pi / 64) ** 2, 64, 5) < 1e-12
        assert median_error(0.0, 64, 5) < 1e-12

        a, M = 0.3, 64
        single = median_error(a, M, 1)
        median = median_error(a, M, 5)
        assert 0 < median < single
        assert median <= np.pi / M

        # Agrees with simulated medians
        model = QueryModel(M)
        estimates = np.array(
            [
                amplitude_estimate(a, model, RngStream(r)).amplitude_estimate
                for r in range(400)
            ]
        )
        rmse = np.sqrt(np.mean((estimates - a) ** 2))
        assert np.abs(rmse / median - 1) < 0.25

    def test_error_scaling(self):
        """
        The exact error averaged over amplitudes falls like 1 / M.
        """
        amplitudes = np.linspace(0.1, 0.9, 41)
        grids = np.array([8, 16, 32, 64, 128])
        rmse = []
        for M in grids:
            mse = vmap(lambda a: median_error(a, int(M), 5) ** 2)(amplitudes)
            rmse.append(np.sqrt(mse.mean()))
        slope = dku.loglog_slope(grids, np.array(rmse))
        assert np.abs(slope + 1) < 0.1


class TestEncodeAmplitude:
    def test_branches(self):
        a, decode, slope = encode_amplitude(np.array([0.0, 1.0, 1 / 3]), 10)
        assert np.allclose(a, 4 / 9) and slope == 1.0
        assert np.allclose(decode(a), 4 / 9)

        a, decode, slope = encode_amplitude(np.array([-1.0, -1 / 3]), 10)
        assert np.allclose(a, 2 / 3) and slope == 1.0
        assert np.allclose(decode(a), -2 / 3)

        a, decode, slope = encode_amplitude(np.array([-1.0, 1.0, 1 / 3]), 10)
        assert np.allclose(a, 5 / 9) and slope == 2.0
        assert np.allclose(decode(a), 1 / 9)

        # Rounded to thirds with two bits
        a, _, _ = encode_amplitude(np.array([0.5]), 2)
        assert np.allclose(a, 2 / 3)

    def test_rounding(self):
        x = np.linspace(-1, 1, 10001)
        for value in x[::50]:
            a, decode, _ = encode_amplitude(np.array([value]), 10)
            assert np.abs(decode(a) - value) <= 2.0**-10
        a, decode, _ = encode_amplitude(x, 10)
        assert np.abs(decode(a) - x.mean()) <= 2.0**-10


class TestQQuantMean:
    def test_constant(self, samples, rng):
        model = QueryModel(32, value_bits=4)
        estimate = q_quant_mean(constant(2.0), samples, model, 2.0, rng)
        assert np.allclose(estimate.value, 2.0)
        assert estimate.queries_used == 160
        assert estimate.n_evals == 0
        assert estimate.k == 1

        estimate = q_quant_mean(constant(-2.0), samples, model, 2.0, rng)
        assert np.allclose(estimate.value, -2.0)

    def test_mean(self, samples, rng):
        f = lambda sample: np.tanh(sample.points[-1, 0])
        mean = np.tanh(samples.points[:, -1, 0]).mean()
        estimate = q_quant_mean(f, samples, QueryModel(1024), 1.0, rng)
        tolerance = 4 * estimate.std_error + 2.0**-10
        assert np.abs(estimate.value - mean) <= tolerance
        assert estimate.std_error < 0.01

    def test_indicator(self, rng):
        """
        A Boolean integrand on 64 samples, estimated with kappa = 32, lands
        within pi / 32 + (pi / 32)^2 of its mean.
        """
        samples = sample_batch(1, 1.0, 1, 64, rng.spawn(7))
        bound = np.pi / 32 + (np.pi / 32) ** 2
        model = QueryModel(32)
        for n_ones, required in [(32, 99), (21, 90)]:
            f = indicator(samples, n_ones)
            hits = 0
            for r in range(100):
                estimate = q_quant_mean(f, samples, model, 1.0, RngStream(r))
                hits += int(np.abs(estimate.value - n_ones / 64) <= bound)
                assert estimate.queries_used == 160
            assert hits >= required

    def test_error_scaling(self):
        """
        The RMSE over constant integrands falls like 1 / kappa.
        """
        samples = sample_batch(0, 1.0, 1, 4, RngStream(5))
        kappas = np.array([8, 16, 32, 64, 128])
        levels = 0.1 + 0.8 * (np.arange(100) + 0.5) / 100
        rmse = []
        for kappa in kappas:
            model = QueryModel(int(kappa))
            errors = [
                q_quant_mean(
                    constant(float(level)), samples, model, 1.0, RngStream(r)
                ).value
                - level
                for r, level in enumerate(levels)
            ]
            rmse.append(np.sqrt(np.mean(np.array(errors) ** 2)))
        slope = dku.loglog_slope(kappas, np.array(rmse))
        assert np.abs(slope + 1) < 0.15

    def test_errors(self, samples, rng):
        model = QueryModel(8)
        with pytest.raises(EncodingRangeError):
            q_quant_mean(constant(3.0), samples, model, 2.0, rng)
        with pytest.raises(ValueError):
            q_quant_mean(constant(0.0), samples, model, 0.0, rng)
        nan = lambda sample: np.log(sample.points.sum() - 100)
        with pytest.raises(InvalidIntegrandError):
            q_quant_mean(nan, samples, model, 1.0, rng)


class TestPhiQuant:
    def test_exact_approximant(self, rng):
        spec = ProblemSpec(1, 1.0, GaussianBump())
        h = lambda p: product_h(spec.v, spec.V, p)
        approx = build_sparse(
            h, 0.01, 0, 1, spec.function_class, spec.params
        )
        with pytest.raises(ValueError):
            phi_quant(spec, 0.01, 8, 0, approx, rng)

        approx = precompute_cv_weights(approx, 0, 1.0, 1)
        estimate = phi_quant(spec, 0.01, 8, 0, approx, rng)
        assert np.allclose(estimate.value, approx.integral(), atol=1e-3)
        assert estimate.queries_used == 40
        assert estimate.n_evals == 0

        model = QueryModel(1, value_bits=4, repeats=3)
        estimate = phi_quant(spec, 0.01, 8, 0, approx, rng, model)
        assert estimate.queries_used == 24

    def test_residual(self, rng):
        spec = ProblemSpec(
            1,
            1.0,
            UserFunction(lambda z: np.cos(z.sum())),
            function_class=FunctionClassTag("Custom"),
        )
        h = lambda p: product_h(spec.v, spec.V, p)
        approx = build_sparse(
            h, 0.1, 0, 1, spec.function_class, spec.params
        )
        approx = precompute_cv_weights(approx, 0, 1.0, 1, 1e-3)
        estimate = phi_quant(spec, 0.1, 32, 0, approx, rng)
        tolerance = estimate.total_error + estimate.precompute_error + 5e-3
        assert np.abs(estimate.value - np.exp(-0.5)) < tolerance

    def test_bump_term(self):
        """
        The second term of a bump with a bump potential, kappa = 64, within
        the amplitude estimation bound in at least 95 of 100 replicates.
        """
        params = ClassParams(beta2=0.5)
        spec = ProblemSpec(
            1, 1.0, GaussianBump(), GaussianBump(0.5), params=params
        )
        h = lambda p: product_h(spec.v, spec.V, p)
        eps_term, kappa, k = 0.05, 64, 1
        approx = build_sparse(
            h, eps_term, k, 1, spec.function_class, spec.params
        )
        approx = precompute_cv_weights(approx, k, 1.0, 1, 5e-4)
        reference = term_reference_value(k, spec)

        volume = dku.simplex_volume(k, 1.0)
        bound = volume * 2 * eps_term * params.term_bound(k)
        step = np.pi / kappa
        tolerance = (
            bound * (2 * (step + step**2) + 0.5 / 1023 + 3 / kappa)
            + 3 * approx.integral_error()
            + reference.error_estimate
            + 1e-3
        )
        hits = 0
        for r in range(100):
            rng = RngStream(r)
            estimate = phi_quant(spec, eps_term, kappa, k, approx, rng)
            hits += int(np.abs(estimate.value - reference.value) <= tolerance)
        assert hits >= 95
