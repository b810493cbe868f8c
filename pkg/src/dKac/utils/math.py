from jax import lax, Array
import jax.numpy as np
from typing import Any

__all__ = [
    "simplex_volume",
    "nandiv",
    "loglog_slope",
]


def simplex_volume(k: int, t: float) -> float:
    """
    Volume of the ordered time simplex 0 < t_1 < ... < t_k < t, ie t^k / k!.
    Evaluated in log space so that large k does not overflow.

    Parameters
    ----------
    k : int
        The number of ordered times.
    t : float
        The terminal time.

    Returns
    -------
    volume : float
        t^k / k!.
    """
    t = np.asarray(t, dtype=float)
    k = np.asarray(k, dtype=float)
    return lax.exp(k * np.log(t) - lax.lgamma(k + 1.0))


def nandiv(a: Array, b: Array, fill: Any = np.inf) -> Array:
    """
    Divides two arrays, replacing the result with a fill value wherever the
    denominator is zero.

    Parameters
    ----------
    a : Array
        The numerator.
    b : Array
        The denominator.
    fill : Any = np.inf
        The value to use where b == 0.

    Returns
    -------
    a / b : Array
        The result of the division.
    """
    safe_b = np.where(b == 0, 1.0, b)
    return np.where(b == 0, fill, a / safe_b)


def loglog_slope(x: Array, y: Array) -> float:
    """
    Least-squares slope of log(y) against log(x). Returns nan when fewer than
    two distinct abscissae are supplied.

    Parameters
    ----------
    x : Array
        The positive abscissae.
    y : Array
        The positive ordinates.

    Returns
    -------
    slope : float
        The fitted slope.
    """
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.asarray(y, dtype=float))
    if x.size < 2 or float(np.ptp(x)) == 0.0:
        return float("nan")
    xc = x - x.mean()
    return float((xc * (y - y.mean())).sum() / (xc**2).sum())
