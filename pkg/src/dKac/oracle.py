from __future__ import annotations
from typing import Callable, Union
import logging
import numpy as onp
import jax.numpy as np
import jax.random as jr
from jax import Array, vmap
from zodiax import Base

from .errors import PotentialOverflowError
from .functions import BaseFunction, as_function
from .model import ProblemSpec, integration_problem, shift_to_origin
from .sampler import RngStream
from .series import ORACLE_DIMENSION_LIMIT, QuadSpec, term_reference_value


__all__ = [
    "METHODS",
    "OracleResult",
    "oracle_v_only",
    "oracle_constant_potential",
    "oracle_dense_path",
    "reference_value",
]

logger = logging.getLogger(__name__)

METHODS = ("closed_form", "quadrature", "dense_path_mc")

# Stream id of the dense path simulation
_DENSE_STREAM = 0xD3A5E
_CHUNK_ENTRIES = 2**22


class OracleResult(Base):
    """
    An independent reference value of a Feynman-Kac problem.

    Attributes
    ----------
    value : float
        The reference value.
    method : str
        One of "closed_form", "quadrature" or "dense_path_mc".
    error_estimate : float
        The statistical or quadrature error, zero for closed forms.
    discretization_error : float
        The time discretisation error of the dense path simulation, zero
        for the other methods.
    """

    value: float
    method: str
    error_estimate: float
    discretization_error: float

    def __init__(
        self: OracleResult,
        value: float,
        method: str,
        error_estimate: float = 0.0,
        discretization_error: float = 0.0,
    ):
        if method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {method}.")
        self.value = float(value)
        self.method = method
        self.error_estimate = 0.0 if method == "closed_form" else float(
            error_estimate
        )
        self.discretization_error = float(discretization_error)
        if self.error_estimate < 0 or self.discretization_error < 0:
            raise ValueError("Error estimates must be non-negative.")

    @property
    def total_error(self: OracleResult) -> float:
        return self.error_estimate + self.discretization_error

    def to_dict(self: OracleResult) -> dict:
        return {
            "value": self.value,
            "method": self.method,
            "error_estimate": self.error_estimate,
            "discretization_error": self.discretization_error,
        }


def oracle_v_only(
    v: Union[BaseFunction, Callable, float],
    d: int,
    t: float,
    quad_spec: QuadSpec = None,
) -> OracleResult:
    """
    The Gaussian integral of v against N(0, t I_d), which is the solution
    with zero potential. Uses the closed form of the preset when there is
    one, else tensor quadrature (d <= 6).

    Parameters
    ----------
    v : BaseFunction, Callable, float
        The initial value function.
    d : int
        The space dimension.
    t : float
        The time.
    quad_spec : QuadSpec = None
        The quadrature resolution of the fallback.

    Returns
    -------
    result : OracleResult
        The reference value.
    """
    v = as_function(v)
    mean = v.gaussian_mean(t, d)
    if mean is not None:
        return OracleResult(mean, "closed_form")
    reference = term_reference_value(
        0, integration_problem(v, d, t), quad_spec
    )
    return OracleResult(
        reference.value, "quadrature", reference.error_estimate
    )


def oracle_constant_potential(
    v: Union[BaseFunction, Callable, float],
    c: float,
    d: int,
    t: float,
    quad_spec: QuadSpec = None,
) -> OracleResult:
    """
    The solution with the constant potential V = c, exp(c t) times the
    Gaussian integral of v.

    Parameters
    ----------
    v : BaseFunction, Callable, float
        The initial value function.
    c : float
        The constant potential.
    d : int
        The space dimension.
    t : float
        The time.
    quad_spec : QuadSpec = None
        The quadrature resolution of the fallback.

    Returns
    -------
    result : OracleResult
        The reference value.
    """
    base = oracle_v_only(v, d, t, quad_spec)
    factor = float(np.exp(c * t))
    return OracleResult(
        factor * base.value, base.method, factor * base.error_estimate
    )


def _path_values(spec: ProblemSpec, n_steps: int) -> Callable:
    dt = spec.t_star / n_steps
    v, V = spec.v, spec.V

    def trapezoid(values, step):
        return step * (values.sum() - 0.5 * (values[0] + values[-1]))

    def values(key):
        steps = np.sqrt(dt) * jr.normal(key, (n_steps, spec.d))
        path = np.concatenate([np.zeros((1, spec.d)), np.cumsum(steps, 0)])
        potential = vmap(V)(path)
        end = v(path[-1])
        fine = end * np.exp(trapezoid(potential, dt))
        coarse = end * np.exp(trapezoid(potential[::2], 2 * dt))
        return np.stack([fine, coarse])

    return vmap(values)


def oracle_dense_path(
    spec: ProblemSpec, n_steps: int = 1000, n_paths: int = 10**4, seed=0
) -> OracleResult:
    """
    Direct simulation of the Feynman-Kac expectation: Brownian paths on a
    uniform grid of n_steps steps, the trapezoid rule for the time integral
    of V, and the average of v(x(t)) exp(integral of V) over n_paths paths.
    The discretisation error is estimated by re-using every second grid
    point of the same paths.

    Parameters
    ----------
    spec : ProblemSpec
        The problem.
    n_steps : int = 1000
        The number of time steps, even and >= 100.
    n_paths : int = 10**4
        The number of paths, >= 10^4.
    seed : int = 0
        The seed.

    Returns
    -------
    result : OracleResult
        The estimate, its standard error and the discretisation error.
    """
    if n_steps < 100 or n_steps % 2:
        raise ValueError(f"n_steps must be even and >= 100, got {n_steps}.")
    if n_paths < 10**4:
        raise ValueError(f"n_paths must be >= 10^4, got {n_paths}.")

    spec = shift_to_origin(spec)
    rng = RngStream(seed, _DENSE_STREAM)
    path_values = _path_values(spec, n_steps)
    chunk = max(1, _CHUNK_ENTRIES // (n_steps * spec.d))

    values = []
    for start in range(0, n_paths, chunk):
        size = min(chunk, n_paths - start)
        keys = vmap(rng.sample_key)(start + np.arange(size))
        values.append(onp.asarray(path_values(keys)))
    values = onp.concatenate(values)

    n_bad = int((~onp.isfinite(values)).any(-1).sum())
    if n_bad:
        raise PotentialOverflowError(n_bad)

    fine, coarse = values[:, 0], values[:, 1]
    value = fine.mean()
    error = fine.std(ddof=1) / onp.sqrt(n_paths)
    discretization = abs(value - coarse.mean())
    logger.info(
        "Dense path oracle: %.8g +/- %.3g (discretization %.3g)",
        value,
        error,
        discretization,
    )
    return OracleResult(value, "dense_path_mc", error, discretization)


def reference_value(
    spec: ProblemSpec,
    n_steps: int = 1000,
    n_paths: int = 10**5,
    seed: int = 0,
) -> OracleResult:
    """
    The best available reference value of a problem: closed forms for
    constant potentials with a preset initial value, quadrature for other
    constant potentials in low dimension, else the dense path simulation.

    Parameters
    ----------
    spec : ProblemSpec
        The problem.
    n_steps : int = 1000
        Time steps of the dense path fallback.
    n_paths : int = 10**5
        Paths of the dense path fallback.
    seed : int = 0
        Seed of the dense path fallback.

    Returns
    -------
    result : OracleResult
        The reference value.
    """
    spec = shift_to_origin(spec)
    c = spec.V.constant_value()
    if c is not None and (
        spec.v.gaussian_mean(spec.t_star, spec.d) is not None
        or spec.d <= ORACLE_DIMENSION_LIMIT
    ):
        return oracle_constant_potential(spec.v, c, spec.d, spec.t_star)
    return oracle_dense_path(spec, n_steps, n_paths, seed)
