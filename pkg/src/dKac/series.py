from __future__ import annotations
from typing import Callable, Optional
import logging
import math
import numpy as onp
import jax.numpy as np
from jax import Array, vmap, lax
from jax.errors import ConcretizationTypeError
from zodiax import Base

import dKac.utils as dku
from .errors import (
    DegenerateTimePartitionError,
    InvalidFunctionError,
    OracleDimensionError,
)
from .model import ProblemSpec, shift_to_origin


__all__ = [
    "TermIndex",
    "PathDensityEval",
    "QuadSpec",
    "TermReference",
    "eval_transition_density",
    "log_transition_density",
    "g_l1_norm",
    "product_h",
    "term_reference_value",
]

logger = logging.getLogger(__name__)

ORACLE_DIMENSION_LIMIT = 6


class TermIndex(Base):
    """
    Index k of a series term, which integrates over (k + 1) * d dimensions.
    """

    k: int

    def __init__(self: TermIndex, k: int):
        if int(k) != k or k < 0:
            raise ValueError(f"k must be a non-negative integer, got {k}.")
        self.k = int(k)

    def dimension(self: TermIndex, d: int) -> int:
        return (self.k + 1) * d


class PathDensityEval(Base):
    """
    A transition density evaluated at one (times, points) configuration.

    Attributes
    ----------
    times : Array
        The ordered times t_1 < ... < t_k, shape (k,).
    points : Array
        The path points z_1, ..., z_{k+1}, shape (k + 1, d).
    value : Array
        The density value.
    """

    times: Array
    points: Array
    value: Array

    def __init__(self, times: Array, points: Array, t: float):
        self.times = np.asarray(times, dtype=float)
        self.points = np.asarray(points, dtype=float)
        self.value = eval_transition_density(
            self.times, self.points, t, self.points.shape[-1]
        )


def _increments(times: Array, t: float) -> Array:
    grid = np.concatenate([np.zeros(1), times, np.full(1, t)])
    return np.diff(grid)


def log_transition_density(times: Array, points: Array, t: float) -> Array:
    """
    Log of the product of Gaussian transition kernels, without any checks on
    the time partition. Safe to trace and vmap.

    Parameters
    ----------
    times : Array
        The ordered times, shape (k,).
    points : Array
        The path points, shape (k + 1, d).
    t : float
        The terminal time.

    Returns
    -------
    log_density : Array
        The log density.
    """
    d = points.shape[-1]
    variances = _increments(times, t)
    steps = np.diff(points, axis=0, prepend=np.zeros((1, d)))
    sq = (steps**2).sum(-1)
    return (
        -0.5 * d * np.log(2 * np.pi * variances) - sq / (2 * variances)
    ).sum()


def eval_transition_density(
    times: Array, points: Array, t: float, d: int
) -> Array:
    """
    Evaluates the path density, the product of Gaussian transition kernels
    with variances t_1, t_2 - t_1, ..., t - t_k, starting from the origin.

    Parameters
    ----------
    times : Array
        The strictly increasing times inside (0, t), shape (k,).
    points : Array
        The path points z_1, ..., z_{k+1}, shape (k + 1, d).
    t : float
        The terminal time.
    d : int
        The space dimension.

    Returns
    -------
    density : Array
        The non-negative density value.
    """
    times = np.asarray(times, dtype=float).reshape(-1)
    points = np.asarray(points, dtype=float).reshape(-1, d)
    if points.shape[0] != times.shape[0] + 1:
        raise ValueError(
            f"Expected {times.shape[0] + 1} points for {times.shape[0]} "
            f"times, got {points.shape[0]}."
        )
    if not bool(np.all(_increments(times, t) > 0)):
        raise DegenerateTimePartitionError(times.tolist())
    return np.exp(log_transition_density(times, points, t))


def g_l1_norm(k: int, t: float) -> Array:
    """
    The L1 norm of the term weight, t^k / k!.
    """
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}.")
    return dku.simplex_volume(k, t)


def _product_h(v: Callable, V: Callable, points: Array) -> Array:
    value = v(points[-1])
    for point in points[:-1]:
        value = value * V(point)
    return value


def product_h(v: Callable, V: Callable, points: Array) -> Array:
    """
    The term integrand h(z_1, ..., z_{k+1}) = v(z_{k+1}) * prod_i V(z_i).

    Parameters
    ----------
    v : Callable
        The initial value function.
    V : Callable
        The potential.
    points : Array
        The path points, shape (k + 1, d).

    Returns
    -------
    h : Array
        The integrand value.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    value = _product_h(v, V, points)
    try:
        finite = bool(np.isfinite(value))
    except ConcretizationTypeError:
        return value
    if not finite:
        raise InvalidFunctionError(points.tolist(), "h")
    return value


class QuadSpec(Base):
    """
    Resolution of the tensor quadrature used for reference term values.

    Spatial increments are standardised and integrated with the probabilists'
    Gauss-Hermite rule, whose nodes stay inside [-6, 6] for up to 12 nodes,
    times are mapped from the unit cube onto the ordered simplex and
    integrated with Gauss-Legendre. None selects a resolution from the
    dimension.

    Attributes
    ----------
    n_space : int, None
        Nodes per spatial coordinate.
    n_time : int, None
        Nodes per simplex coordinate.
    """

    n_space: Optional[int]
    n_time: Optional[int]

    def __init__(
        self: QuadSpec,
        n_space: Optional[int] = None,
        n_time: Optional[int] = None,
    ):
        for name, value in [("n_space", n_space), ("n_time", n_time)]:
            if value is not None and (int(value) != value or value < 2):
                raise ValueError(f"{name} must be an integer >= 2.")
        self.n_space = None if n_space is None else int(n_space)
        self.n_time = None if n_time is None else int(n_time)

    def resolve(self: QuadSpec, k: int, d: int) -> tuple:
        """
        The (n_space, n_time) resolution for a term.
        """
        n_space = self.n_space
        if n_space is None:
            n_space = min(12, max(4, int(4096 ** (1 / ((k + 1) * d)))))
        n_time = self.n_time
        if n_time is None:
            n_time = 12 if k == 0 else min(12, max(3, int(4096 ** (1 / k))))
        return n_space, n_time


class TermReference(Base):
    """
    Reference value of one series term.

    Attributes
    ----------
    k : int
        The term index.
    value : float
        The quadrature value.
    error_estimate : float
        Difference against a coarser rule.
    """

    k: int
    value: float
    error_estimate: float

    def __init__(self, k: int, value: float, error_estimate: float):
        self.k = int(k)
        self.value = float(value)
        self.error_estimate = float(error_estimate)


def _tensor_rule(nodes: Array, weights: Array, ndim: int) -> tuple:
    if ndim == 0:
        return np.zeros((1, 0)), np.ones(1)
    grids = np.meshgrid(*([nodes] * ndim), indexing="ij")
    wgrids = np.meshgrid(*([weights] * ndim), indexing="ij")
    points = np.stack([g.reshape(-1) for g in grids], axis=-1)
    return points, np.stack([w.reshape(-1) for w in wgrids], -1).prod(-1)


def _term_quadrature(
    spec: ProblemSpec, k: int, n_space: int, n_time: int
) -> Array:
    d, t = spec.d, spec.t_star

    # Standard normal rule, weights sum to one
    x, w = onp.polynomial.hermite_e.hermegauss(n_space)
    xi, w_space = _tensor_rule(
        np.asarray(x), np.asarray(w / math.sqrt(2 * math.pi)), (k + 1) * d
    )
    xi = xi.reshape(-1, k + 1, d)

    # Unit cube onto the ordered simplex, t_i = t * prod_{j >= i} y_j
    y, wy = onp.polynomial.legendre.leggauss(n_time)
    y, w_time = _tensor_rule(np.asarray((y + 1) / 2), np.asarray(wy / 2), k)
    jacobian = t**k * (y ** np.arange(k)).prod(-1)
    times = t * np.cumprod(y[:, ::-1], axis=-1)[:, ::-1]

    h = vmap(lambda p: _product_h(spec.v, spec.V, p))

    def spatial(time_node):
        scale = np.sqrt(_increments(time_node, t))[:, None]
        points = np.cumsum(scale * xi, axis=-2)
        return (w_space * h(points)).sum()

    values = lax.map(spatial, times)
    return (w_time * jacobian * values).sum()


def term_reference_value(
    k: int, spec: ProblemSpec, quad_spec: QuadSpec = None
) -> TermReference:
    """
    Brute force tensor quadrature of a single series term S_{k+1}(v, V), for
    (k + 1) * d <= 6.

    Parameters
    ----------
    k : int
        The term index.
    spec : ProblemSpec
        The problem, shifted to the origin before integrating.
    quad_spec : QuadSpec = None
        The quadrature resolution, None to choose from the dimension.

    Returns
    -------
    reference : TermReference
        The value and an error estimate from a coarser rule.
    """
    k = TermIndex(k).k
    dimension = (k + 1) * spec.d
    if dimension > ORACLE_DIMENSION_LIMIT:
        raise OracleDimensionError(dimension, ORACLE_DIMENSION_LIMIT)

    spec = shift_to_origin(spec)
    quad_spec = QuadSpec() if quad_spec is None else quad_spec
    n_space, n_time = quad_spec.resolve(k, spec.d)

    value = _term_quadrature(spec, k, n_space, n_time)
    coarse = _term_quadrature(
        spec, k, max(2, n_space - 2), max(2, n_time - 2)
    )
    if not bool(np.isfinite(value)):
        raise InvalidFunctionError("quadrature nodes", "h")

    error = float(np.abs(value - coarse))
    logger.debug(
        "Reference term k=%d: %.12g (n_space=%d, n_time=%d, error %.3g)",
        k,
        float(value),
        n_space,
        n_time,
        error,
    )
    return TermReference(k, value, error)
