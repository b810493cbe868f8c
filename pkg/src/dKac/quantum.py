from __future__ import annotations
from math import comb
from typing import Callable
import logging
import jax.numpy as np
import jax.random as jr
from jax import Array, vmap
from zodiax import Base

import dKac.utils as dku
from .errors import EncodingRangeError, InvalidIntegrandError
from .estimators import TermEstimate, integrand_values, residual_fn
from .model import ProblemSpec
from .sampler import PathSample, RngStream
from .smolyak import SparseApprox


__all__ = [
    "QueryModel",
    "AEOutcome",
    "ae_outcome_distribution",
    "median_error",
    "amplitude_estimate",
    "encode_amplitude",
    "q_quant_mean",
    "phi_quant",
]

logger = logging.getLogger(__name__)

# Phases averaged over when reporting the error of an observed outcome
_CELL_POINTS = 16


class QueryModel(Base):
    """
    The quantum query model of the simulated mean estimation.

    Attributes
    ----------
    kappa : int
        Quantum queries per estimation.
    grid_bits : int
        Bits of the phase estimation grid, M = 2^grid_bits with M - 1 <= kappa.
    value_bits : int
        Fixed point bits of the encoded values.
    repeats : int
        Odd number of repetitions whose median is taken.
    dither : bool
        Whether each repetition shifts the phase grid by a uniform random
        offset.
    """

    kappa: int
    grid_bits: int
    value_bits: int
    repeats: int
    dither: bool

    def __init__(
        self: QueryModel,
        kappa: int,
        grid_bits: int = None,
        value_bits: int = 10,
        repeats: int = 5,
        dither: bool = False,
    ):
        """
        Parameters
        ----------
        kappa : int
            Quantum queries per estimation, kappa >= 1.
        grid_bits : int = None
            Bits of the phase grid, defaults to the largest grid whose
            M - 1 oracle calls fit in kappa.
        value_bits : int = 10
            Fixed point bits of the encoding.
        repeats : int = 5
            Odd number of median repetitions.
        dither : bool = False
            Whether to randomly shift the phase grid.
        """
        if int(kappa) != kappa or kappa < 1:
            raise ValueError(f"kappa must be a positive integer, got {kappa}")
        self.kappa = int(kappa)
        if grid_bits is None:
            grid_bits = (self.kappa + 1).bit_length() - 1
        if int(grid_bits) != grid_bits or grid_bits < 1:
            raise ValueError("grid_bits must be a positive integer.")
        if 2**grid_bits - 1 > self.kappa:
            raise ValueError(
                f"A grid of {2**grid_bits} points makes {2**grid_bits - 1} "
                f"oracle calls, more than kappa={self.kappa}."
            )
        self.grid_bits = int(grid_bits)
        if int(value_bits) != value_bits or value_bits < 1:
            raise ValueError("value_bits must be a positive integer.")
        self.value_bits = int(value_bits)
        if int(repeats) != repeats or repeats < 1 or repeats % 2 == 0:
            raise ValueError(f"repeats must be odd and >= 1, got {repeats}")
        self.repeats = int(repeats)
        self.dither = bool(dither)

    @property
    def grid_size(self: QueryModel) -> int:
        return 2**self.grid_bits

    @property
    def queries(self: QueryModel) -> int:
        """
        Total queries of one mean estimation, kappa * repeats.
        """
        return self.kappa * self.repeats

    @property
    def oracle_calls(self: QueryModel) -> int:
        """
        Oracle calls the phase estimation actually makes, (M - 1) * repeats.
        Never more than `queries`.
        """
        return (self.grid_size - 1) * self.repeats


class AEOutcome(Base):
    """
    The result of one median amplified amplitude estimation.

    Attributes
    ----------
    j : int
        The measured grid index of the median repetition.
    grid_size : int
        The grid size M.
    amplitude_estimate : float
        The estimate sin^2(pi (j + offset) / M).
    queries_used : int
        Queries charged, kappa times the repeats.
    oracle_calls : int
        Oracle calls made, (M - 1) times the repeats.
    offset : float
        The grid offset of the median repetition, zero without dither.
    """

    j: int
    grid_size: int
    amplitude_estimate: float
    queries_used: int
    oracle_calls: int
    offset: float

    def __init__(
        self,
        j,
        grid_size,
        amplitude_estimate,
        queries_used,
        oracle_calls,
        offset,
    ):
        self.j = int(j)
        self.grid_size = int(grid_size)
        self.amplitude_estimate = float(amplitude_estimate)
        self.queries_used = int(queries_used)
        self.oracle_calls = int(oracle_calls)
        self.offset = float(offset)
        if self.oracle_calls > self.queries_used:
            raise ValueError("Oracle calls exceed the charged queries.")


def ae_outcome_distribution(a: float, M: int, offset: float = 0.0) -> Array:
    """
    Exact outcome probabilities of amplitude estimation with a grid of size M
    on an amplitude a,

        p(j) = (F(x_j - theta) + F(x_j + theta)) / 2,  x_j = (j + offset) / M

    with theta = arcsin(sqrt(a)) / pi and F the Fejer kernel
    sin^2(M pi x) / (M^2 sin^2(pi x)).

    Parameters
    ----------
    a : float
        The amplitude, in [0, 1].
    M : int
        The grid size, a power of two.
    offset : float = 0.0
        Shift of the phase grid, in grid steps.

    Returns
    -------
    probabilities : Array
        The outcome probabilities, shape (M,).
    """
    if M < 2 or M & (M - 1):
        raise ValueError(f"M must be a power of two >= 2, got {M}.")
    a = np.clip(np.asarray(a, dtype=float), 0.0, 1.0)
    theta = np.arcsin(np.sqrt(a)) / np.pi
    phase = (np.arange(M) + offset) / M

    def fejer(delta):
        delta = delta - np.round(delta)
        return (np.sinc(M * delta) / np.sinc(delta)) ** 2

    return 0.5 * fejer(phase - theta) + 0.5 * fejer(phase + theta)


def median_error(
    a: float, M: int, repeats: int, offset: float = 0.0
) -> Array:
    """
    The exact root mean square error of the median of `repeats` independent
    amplitude estimates of a, from the outcome distribution. The median of
    an odd number of draws is <= x exactly when at least (repeats + 1) / 2
    draws are <= x.

    Parameters
    ----------
    a : float
        The amplitude, in [0, 1].
    M : int
        The grid size, a power of two.
    repeats : int
        The odd number of repetitions.
    offset : float = 0.0
        Shift of the phase grid, in grid steps.

    Returns
    -------
    rmse : Array
        The root mean square error of the median estimate.
    """
    a = np.clip(np.asarray(a, dtype=float), 0.0, 1.0)
    probabilities = ae_outcome_distribution(a, M, offset)
    estimates = np.sin(np.pi * (np.arange(M) + offset) / M) ** 2
    order = np.argsort(estimates)
    estimates, probabilities = estimates[order], probabilities[order]

    cdf = np.clip(np.cumsum(probabilities), 0.0, 1.0)[:, None]
    n = np.arange((repeats + 1) // 2, repeats + 1)
    binomial = np.array([comb(repeats, int(i)) for i in n], dtype=float)
    median_cdf = (binomial * cdf**n * (1 - cdf) ** (repeats - n)).sum(-1)
    weights = np.diff(median_cdf, prepend=0.0)
    return np.sqrt(np.sum(weights * (estimates - a) ** 2))


def _cell_error(estimate: float, M: int, repeats: int) -> float:
    """
    The median error averaged over the phases within half a grid step of the
    observed estimate.
    """
    theta = np.arcsin(np.sqrt(estimate)) / np.pi
    steps = (np.arange(_CELL_POINTS) + 0.5) / _CELL_POINTS - 0.5
    amplitudes = np.sin(np.pi * (theta + steps / M)) ** 2
    mse = vmap(lambda a: median_error(a, M, repeats) ** 2)(amplitudes)
    return float(np.sqrt(mse.mean()))


def amplitude_estimate(
    a: float, model: QueryModel, rng: RngStream
) -> AEOutcome:
    """
    Simulates one median amplified amplitude estimation with the grid of the
    query model, sampling the outcomes of each repetition from the exact
    outcome distribution.

    Parameters
    ----------
    a : float
        The amplitude, in [0, 1].
    model : QueryModel
        The query model.
    rng : RngStream
        The random stream.

    Returns
    -------
    outcome : AEOutcome
        The median outcome, with queries_used = kappa * repeats.
    """
    M = model.grid_size

    def measure(key):
        offset_key, outcome_key = jr.split(key)
        offset = jr.uniform(offset_key) * model.dither
        probabilities = ae_outcome_distribution(a, M, offset)
        j = jr.choice(outcome_key, M, p=probabilities)
        return j, offset, np.sin(np.pi * (j + offset) / M) ** 2

    keys = vmap(rng.sample_key)(np.arange(model.repeats))
    js, offsets, estimates = vmap(measure)(keys)
    median = np.argsort(estimates)[model.repeats // 2]
    return AEOutcome(
        js[median],
        M,
        estimates[median],
        model.queries,
        model.oracle_calls,
        offsets[median],
    )


def encode_amplitude(values: Array, value_bits: int) -> tuple:
    """
    Encodes the mean of values in [-1, 1] as a single amplitude. The values
    are rounded to value_bits fixed point bits. Values of one sign encode the
    absolute mean directly, values of mixed sign encode (1 + mean) / 2.

    Parameters
    ----------
    values : Array
        The scaled values, in [-1, 1].
    value_bits : int
        Fixed point bits of the rounding.

    Returns
    -------
    amplitude : float
        The amplitude, in [0, 1].
    decode : Callable
        Maps an amplitude estimate back to an estimate of the mean.
    slope : float
        The absolute derivative of the decoding.
    """
    levels = 2**value_bits - 1
    rounded = np.round(values * levels) / levels
    mean = float(rounded.mean())
    if bool(np.all(rounded >= 0)):
        return mean, lambda estimate: estimate, 1.0
    if bool(np.all(rounded <= 0)):
        return -mean, lambda estimate: -estimate, 1.0
    return (1 + mean) / 2, lambda estimate: 2 * estimate - 1, 2.0


def _quant_mean(
    values: Array, model: QueryModel, bound_b: float, rng: RngStream
) -> tuple:
    if not bound_b > 0:
        raise ValueError(f"bound_b must be positive, got {bound_b}.")
    over = np.abs(values) > bound_b
    if bool(over.any()):
        bad = int(np.argmax(over))
        raise EncodingRangeError(bad, float(values[bad]), bound_b)

    a, decode, slope = encode_amplitude(values / bound_b, model.value_bits)
    outcome = amplitude_estimate(a, model, rng)
    estimate = outcome.amplitude_estimate
    spread = _cell_error(estimate, model.grid_size, model.repeats)
    rounding = 0.5 / (2**model.value_bits - 1)
    error = bound_b * (slope * spread + rounding)
    logger.debug(
        "Amplitude %.6f estimated as %.6f on a grid of %d (j=%d).",
        a,
        estimate,
        outcome.grid_size,
        outcome.j,
    )
    return bound_b * decode(estimate), error


def q_quant_mean(
    f: Callable,
    samples: PathSample,
    model: QueryModel,
    bound_b: float,
    rng: RngStream,
) -> TermEstimate:
    """
    Simulated quantum estimate of the mean of f over a frozen set of sample
    paths. The values are scaled by bound_b, rounded to value_bits fixed point
    bits and their mean is encoded as one amplitude, estimated by median
    amplified amplitude estimation and decoded.

    Parameters
    ----------
    f : Callable
        The integrand, mapping a single `PathSample` to a scalar.
    samples : PathSample
        The m sample paths, batched.
    model : QueryModel
        The query model.
    bound_b : float
        The bound on |f| over the samples.
    rng : RngStream
        The random stream of the measurements.

    Returns
    -------
    estimate : TermEstimate
        The estimate of the sample mean. std_error holds the median error
        averaged over the phases consistent with the outcome plus the
        rounding error, queries_used = kappa * repeats.
    """
    values = np.asarray(vmap(f)(samples), dtype=float).reshape(-1)
    finite = np.isfinite(values)
    if not bool(finite.all()):
        bad = int(np.argmin(finite))
        raise InvalidIntegrandError(bad, samples[bad].points.tolist())
    value, error = _quant_mean(values, model, bound_b, rng)
    return TermEstimate(samples.k, value, error, 0, model.queries)


def phi_quant(
    spec: ProblemSpec,
    eps_term: float,
    kappa: int,
    k: int,
    approx: SparseApprox,
    rng: RngStream,
    model: QueryModel = None,
) -> TermEstimate:
    """
    The quantum estimate of the term S_{k+1}(v, V): the precomputed integral
    of the sparse approximant plus t^k / k! times the quantum mean of the
    residual h - U h over m = kappa^2 sample paths.

    The residual is encoded with the bound 2 eps_term beta1 beta2^k, twice
    its certified sup.

    Parameters
    ----------
    spec : ProblemSpec
        The problem, with u* = 0.
    eps_term : float
        The accuracy the approximant was built for.
    kappa : int
        Quantum queries per estimation.
    k : int
        The term index.
    approx : SparseApprox
        The approximant, with cv_weights.
    rng : RngStream
        The random stream.
    model : QueryModel = None
        Overrides of the value bits, repeats and dither, its kappa is
        replaced.

    Returns
    -------
    estimate : TermEstimate
        The estimate, with n_evals = 0 and queries_used = kappa * repeats.
    """
    if approx.k != k or approx.d != spec.d or not approx.has_cv_weights:
        raise ValueError(
            f"Expected an approximant with cv_weights for k={k}, d={spec.d}."
        )
    if model is None:
        model = QueryModel(kappa)
    else:
        model = QueryModel(
            kappa, None, model.value_bits, model.repeats, model.dither
        )

    m = kappa**2
    values = integrand_values(
        residual_fn(spec, approx), k, spec.t_star, spec.d, m, rng.spawn(0)
    )
    bound = 2 * eps_term * spec.params.term_bound(k)
    mean, error = _quant_mean(values, model, bound, rng.spawn(1))

    volume = dku.simplex_volume(k, spec.t_star)
    return TermEstimate(
        k,
        approx.integral() + volume * mean,
        volume * error,
        0,
        model.queries,
        precompute_error=approx.integral_error(),
    )
