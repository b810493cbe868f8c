from __future__ import annotations
from typing import Callable
import logging
import jax.numpy as np
from jax import Array, vmap
from zodiax import Base

import dKac.utils as dku
from .errors import InvalidIntegrandError
from .model import ProblemSpec
from .sampler import PathSample, RngStream, sample_batch
from .series import product_h
from .smolyak import SparseApprox, eval_sparse


__all__ = [
    "TermEstimate",
    "mc_mean",
    "plain_mc",
    "phi_rand",
    "empirical_variance_ratio",
    "integrand_values",
    "residual_fn",
]

logger = logging.getLogger(__name__)

_CHUNK = 2**16


class TermEstimate(Base):
    """
    The estimate of a single series term.

    Attributes
    ----------
    k : int
        The term index.
    value : float
        The estimate.
    std_error : float
        The standard error of the sampled part of the estimate.
    n_evals : int
        The number of classical evaluations of the integrand.
    queries_used : int
        The number of quantum queries, zero for classical estimators.
    precompute_error : float
        The standard error of the precomputed control variate integral.
    """

    k: int
    value: float
    std_error: float
    n_evals: int
    queries_used: int
    precompute_error: float

    def __init__(
        self: TermEstimate,
        k: int,
        value: float,
        std_error: float,
        n_evals: int,
        queries_used: int = 0,
        precompute_error: float = 0.0,
    ):
        self.k = int(k)
        self.value = float(value)
        self.std_error = float(std_error)
        self.n_evals = int(n_evals)
        self.queries_used = int(queries_used)
        self.precompute_error = float(precompute_error)
        if self.std_error < 0 or self.precompute_error < 0:
            raise ValueError("Standard errors must be non-negative.")
        if self.n_evals < 0 or self.queries_used < 0:
            raise ValueError("Evaluation counts must be non-negative.")

    @property
    def total_error(self: TermEstimate) -> float:
        """
        The sampling and precompute errors combined in quadrature.
        """
        return float(np.hypot(self.std_error, self.precompute_error))

    def to_dict(self: TermEstimate) -> dict:
        return {
            "k": self.k,
            "value": self.value,
            "std_error": self.std_error,
            "precompute_error": self.precompute_error,
            "n_evals": self.n_evals,
            "queries_used": self.queries_used,
        }


def integrand_values(
    fn: Callable, k: int, t: float, d: int, m: int, rng: RngStream
) -> Array:
    """
    Evaluates a batched integrand on m paths of the stream, in chunks of
    2^16 paths. Raises on the first non-finite value.

    Parameters
    ----------
    fn : Callable
        Maps a batched `PathSample` to an array of values.
    k : int
        The term index.
    t : float
        The time horizon.
    d : int
        The space dimension.
    m : int
        The number of paths.
    rng : RngStream
        The random stream.

    Returns
    -------
    values : Array
        The values, with the leading axis of length m.
    """
    values = []
    for start in range(0, m, _CHUNK):
        samples = sample_batch(k, t, d, min(_CHUNK, m - start), rng, start)
        chunk = np.asarray(fn(samples), dtype=float)
        finite = np.isfinite(chunk).reshape(len(chunk), -1).all(-1)
        if not bool(finite.all()):
            bad = int(np.argmin(finite))
            raise InvalidIntegrandError(
                start + bad,
                {
                    "times": samples.times[bad].tolist(),
                    "points": samples.points[bad].tolist(),
                    "value": chunk[bad].tolist(),
                },
            )
        values.append(chunk)
    return np.concatenate(values)


def _estimate(values: Array, k: int, t: float) -> tuple:
    volume = dku.simplex_volume(k, t)
    m = values.shape[0]
    value = volume * values.mean()
    if m == 1:
        return value, np.inf
    if bool(np.all(values == values[0])):
        return value, 0.0
    return value, volume * values.std(ddof=1) / np.sqrt(m)


def mc_mean(
    f: Callable, k: int, t: float, d: int, m: int, rng: RngStream
) -> TermEstimate:
    """
    Classical Monte Carlo estimate of the integral of f against the term
    weight: t^k / k! times the mean of f over m paths drawn from the
    normalised weight.

    Parameters
    ----------
    f : Callable
        The integrand, mapping a single `PathSample` to a scalar.
    k : int
        The term index.
    t : float
        The time horizon.
    d : int
        The space dimension.
    m : int
        The number of samples.
    rng : RngStream
        The random stream.

    Returns
    -------
    estimate : TermEstimate
        The estimate, with an infinite standard error when m = 1.
    """
    values = integrand_values(vmap(f), k, t, d, m, rng)
    value, std_error = _estimate(values, k, t)
    return TermEstimate(k, value, std_error, m)


def _h_batch(spec: ProblemSpec) -> Callable:
    h = vmap(lambda points: product_h(spec.v, spec.V, points))
    return lambda samples: h(samples.points)


def plain_mc(
    spec: ProblemSpec, k: int, m: int, rng: RngStream
) -> TermEstimate:
    """
    Monte Carlo estimate of the term S_{k+1}(v, V) without variance reduction.

    Parameters
    ----------
    spec : ProblemSpec
        The problem, with u* = 0.
    k : int
        The term index.
    m : int
        The number of samples.
    rng : RngStream
        The random stream.

    Returns
    -------
    estimate : TermEstimate
        The estimate.
    """
    h = _h_batch(spec)
    values = integrand_values(h, k, spec.t_star, spec.d, m, rng)
    value, std_error = _estimate(values, k, spec.t_star)
    return TermEstimate(k, value, std_error, m)


def _check_approx(approx: SparseApprox, k: int, d: int):
    if approx.k != k or approx.d != d:
        raise ValueError(
            f"Approximant was built for k={approx.k}, d={approx.d}, got "
            f"k={k}, d={d}."
        )
    if not approx.has_cv_weights:
        raise ValueError("Approximant has no precomputed cv_weights.")


def residual_fn(spec: ProblemSpec, approx: SparseApprox) -> Callable:
    """
    The batched residual h - U h of a term integrand and its approximant.
    """
    h = _h_batch(spec)
    return lambda samples: h(samples) - eval_sparse(approx, samples.points)


def phi_rand(
    spec: ProblemSpec,
    eps_term: float,
    m: int,
    k: int,
    approx: SparseApprox,
    rng: RngStream,
) -> TermEstimate:
    """
    The variance reduced randomised estimate of the term S_{k+1}(v, V): the
    precomputed integral of the sparse approximant plus a Monte Carlo
    estimate of the integral of the residual h - U h.

    Parameters
    ----------
    spec : ProblemSpec
        The problem, with u* = 0.
    eps_term : float
        The accuracy the approximant was built for.
    m : int
        The number of residual samples.
    k : int
        The term index.
    approx : SparseApprox
        The approximant, with cv_weights.
    rng : RngStream
        The random stream.

    Returns
    -------
    estimate : TermEstimate
        The estimate. n_evals counts the m residual evaluations only.
    """
    _check_approx(approx, k, spec.d)
    if approx.eps != eps_term:
        logger.debug(
            "Approximant built for eps %.3g used at eps_term %.3g.",
            approx.eps,
            eps_term,
        )
    values = integrand_values(
        residual_fn(spec, approx), k, spec.t_star, spec.d, m, rng
    )
    residual, std_error = _estimate(values, k, spec.t_star)
    return TermEstimate(
        k,
        approx.integral() + residual,
        std_error,
        m,
        precompute_error=approx.integral_error(),
    )


def empirical_variance_ratio(
    spec: ProblemSpec,
    k: int,
    approx: SparseApprox,
    m: int,
    rng: RngStream,
) -> float:
    """
    The variance reduction factor Var(h) / Var(h - U h), estimated on m
    paths. Returns inf when the residual variance is zero.

    Parameters
    ----------
    spec : ProblemSpec
        The problem, with u* = 0.
    k : int
        The term index.
    approx : SparseApprox
        The approximant.
    m : int
        The number of samples, m >= 2.
    rng : RngStream
        The random stream.

    Returns
    -------
    ratio : float
        The variance ratio.
    """
    if m < 2:
        raise ValueError(f"m must be at least 2, got {m}.")
    h = _h_batch(spec)

    def both(samples: PathSample) -> Array:
        values = h(samples)
        return np.stack([values, eval_sparse(approx, samples.points)], -1)

    values = integrand_values(both, k, spec.t_star, spec.d, m, rng)
    var_h = values[:, 0].var(ddof=1)
    var_residual = (values[:, 0] - values[:, 1]).var(ddof=1)
    ratio = float(dku.nandiv(var_h, var_residual))
    logger.info("Variance ratio for k=%d: %.4g", k, ratio)
    return ratio
