from __future__ import annotations
import jax.numpy as np
import jax.random as jr
from jax import Array, vmap, lax
from zodiax import Base

import dKac.utils as dku


__all__ = ["RngStream", "PathSample", "sample_path", "sample_batch"]


class RngStream(Base):
    """
    A counter based random stream, identified by a seed and a 64 bit stream
    id. Every random draw in the package is derived from a stream and an
    integer index, so results do not depend on how work is partitioned.

    Attributes
    ----------
    seed : int
        The root seed.
    stream_id : int
        The 64 bit stream identifier.
    """

    seed: int
    stream_id: int

    def __init__(self: RngStream, seed: int = 0, stream_id: int = 0):
        """
        Parameters
        ----------
        seed : int = 0
            The root seed.
        stream_id : int = 0
            The stream identifier, reduced modulo 2^64.
        """
        if int(seed) != seed:
            raise ValueError(f"seed must be an integer, got {seed}.")
        self.seed = int(seed)
        self.stream_id = int(stream_id) % 2**64

    @property
    def key(self: RngStream) -> Array:
        """
        The jax PRNG key of the stream.
        """
        hi, lo = dku.split_uint64(self.stream_id)
        key = jr.PRNGKey(self.seed % 2**32)
        key = jr.fold_in(key, self.seed // 2**32 % 2**32)
        return jr.fold_in(jr.fold_in(key, hi), lo)

    def spawn(self: RngStream, index: int) -> RngStream:
        """
        Derives an independent child stream.

        Parameters
        ----------
        index : int
            The child index, eg a term index or a replicate number.

        Returns
        -------
        stream : RngStream
            The child stream.
        """
        return RngStream(self.seed, dku.mix_stream_id(self.stream_id, index))

    def sample_key(self: RngStream, index: Array) -> Array:
        """
        The key of the index-th draw of the stream.
        """
        return jr.fold_in(self.key, index)


class PathSample(Base):
    """
    Ordered times and path points drawn from the normalised term weight.
    Holds either a single path or a batch of paths in its leading axes.

    Attributes
    ----------
    times : Array
        The ordered times 0 < t_1 < ... < t_k < t, shape (..., k).
    points : Array
        The path points z_1, ..., z_{k+1}, shape (..., k + 1, d).
    """

    times: Array
    points: Array

    def __init__(self: PathSample, times: Array, points: Array):
        """
        Parameters
        ----------
        times : Array
            The ordered times, shape (..., k).
        points : Array
            The path points, shape (..., k + 1, d).
        """
        self.times = np.asarray(times, dtype=float)
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim < 2:
            raise ValueError("points must have shape (..., k + 1, d).")
        if self.points.shape[-2] != self.times.shape[-1] + 1:
            raise ValueError(
                f"Expected {self.times.shape[-1] + 1} points for "
                f"{self.times.shape[-1]} times, got {self.points.shape[-2]}."
            )

    @property
    def k(self: PathSample) -> int:
        return self.times.shape[-1]

    @property
    def d(self: PathSample) -> int:
        return self.points.shape[-1]

    @property
    def batch_shape(self: PathSample) -> tuple:
        return self.points.shape[:-2]

    @property
    def flat_points(self: PathSample) -> Array:
        """
        The points as (k + 1) * d coordinate vectors, z_1 first.
        """
        return self.points.reshape(*self.batch_shape, -1)

    def __len__(self: PathSample) -> int:
        if not self.batch_shape:
            return 1
        return self.batch_shape[0]

    def __getitem__(self: PathSample, index) -> PathSample:
        if not self.batch_shape:
            raise IndexError("Can not index a single path sample.")
        return PathSample(self.times[index], self.points[index])


def _has_ties(times: Array, t: float) -> Array:
    grid = np.concatenate([np.zeros(1), times, np.full(1, t)])
    return np.any(np.diff(grid) <= 0)


def _draw(key: Array, k: int, t: float, d: int) -> tuple:
    time_key, space_key = jr.split(key)

    def draw_times(key):
        return np.sort(jr.uniform(key, (k,), minval=0.0, maxval=t))

    # Ties have probability zero, re-draw rather than return them
    def redraw(state):
        key, _ = state
        key, subkey = jr.split(key)
        return key, draw_times(subkey)

    _, times = lax.while_loop(
        lambda state: _has_ties(state[1], t),
        redraw,
        (time_key, draw_times(time_key)),
    )

    grid = np.concatenate([np.zeros(1), times, np.full(1, t)])
    scale = np.sqrt(np.diff(grid))[:, None]
    steps = scale * jr.normal(space_key, (k + 1, d))
    return times, np.cumsum(steps, axis=0)


def _check(k: int, t: float, d: int):
    if int(k) != k or k < 0:
        raise ValueError(f"k must be a non-negative integer, got {k}.")
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}.")
    if int(d) != d or d < 1:
        raise ValueError(f"d must be a positive integer, got {d}.")


def sample_path(
    k: int, t: float, d: int, rng: RngStream, index: int = 0
) -> PathSample:
    """
    Draws one path from the normalised term weight: k sorted uniform times on
    (0, t) and Brownian increments with variances t_1, t_2 - t_1, ..., t - t_k.

    Parameters
    ----------
    k : int
        The number of ordered times.
    t : float
        The terminal time.
    d : int
        The space dimension.
    rng : RngStream
        The random stream.
    index : int = 0
        The index of the draw within the stream.

    Returns
    -------
    sample : PathSample
        The path.
    """
    _check(k, t, d)
    times, points = _draw(rng.sample_key(index), int(k), float(t), int(d))
    return PathSample(times, points)


def sample_batch(
    k: int, t: float, d: int, m: int, rng: RngStream, start: int = 0
) -> PathSample:
    """
    Draws m independent paths. Path j is drawn from index start + j of the
    stream, so any split of a batch into chunks reproduces the same paths.

    Parameters
    ----------
    k : int
        The number of ordered times.
    t : float
        The terminal time.
    d : int
        The space dimension.
    m : int
        The number of paths, m >= 1.
    rng : RngStream
        The random stream.
    start : int = 0
        The stream index of the first path.

    Returns
    -------
    samples : PathSample
        The batch, with times of shape (m, k) and points (m, k + 1, d).
    """
    _check(k, t, d)
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m}.")
    keys = vmap(rng.sample_key)(start + np.arange(int(m)))
    times, points = vmap(lambda key: _draw(key, int(k), float(t), int(d)))(
        keys
    )
    return PathSample(times, points)
