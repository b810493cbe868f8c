"""
Binary cache files for precomputed control-variate weights and sparse grid
approximants.

Layout: the 5 byte magic ``FKCV1``, the 32 byte sha256 digest of the cache key
and a little-endian float64 array.
"""
from pathlib import Path
from typing import Optional
import hashlib
import logging
import numpy as onp
import jax.numpy as np
from jax import Array

__all__ = [
    "MAGIC",
    "key_digest",
    "cache_path",
    "write_weights",
    "read_weights",
]

logger = logging.getLogger(__name__)

MAGIC = b"FKCV1"
_DIGEST_SIZE = 32


def key_digest(key: str) -> bytes:
    """
    Hashes a cache key string.

    Parameters
    ----------
    key : str
        The canonical cache key.

    Returns
    -------
    digest : bytes
        The 32 byte sha256 digest.
    """
    return hashlib.sha256(key.encode("utf-8")).digest()


def cache_path(directory, key: str) -> Path:
    """
    The file that stores the weights for a key inside a cache directory.
    """
    return Path(directory) / f"cv_{key_digest(key).hex()[:24]}.fkcv"


def write_weights(directory, key: str, weights: Array) -> Path:
    """
    Writes a weight vector to the cache directory, creating it if needed.

    Parameters
    ----------
    directory : str, Path
        The cache directory.
    key : str
        The canonical cache key.
    weights : Array
        The weights to store.

    Returns
    -------
    path : Path
        The written file.
    """
    path = cache_path(directory, key)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = onp.asarray(weights, dtype="<f8").tobytes()
    tmp = path.with_suffix(".tmp")
    tmp.write_bytes(MAGIC + key_digest(key) + payload)
    tmp.replace(path)
    return path


def read_weights(
    directory, key: str, size: int = None
) -> Optional[Array]:
    """
    Reads a weight vector from the cache. Returns None on a miss, and also on
    a corrupted file (bad magic, wrong key digest, wrong length or non-finite
    values), in which case a warning is logged.

    Parameters
    ----------
    directory : str, Path
        The cache directory.
    key : str
        The canonical cache key.
    size : int = None
        The expected number of weights, None to accept any length.

    Returns
    -------
    weights : Array, None
        The cached weights, or None.
    """
    path = cache_path(directory, key)
    if not path.exists():
        return None

    data = path.read_bytes()
    header = len(MAGIC) + _DIGEST_SIZE
    if (
        data[: len(MAGIC)] != MAGIC
        or data[len(MAGIC) : header] != key_digest(key)
        or (len(data) - header) % 8
        or (size is not None and len(data) != header + 8 * size)
    ):
        logger.warning("Corrupted cache file %s, recomputing.", path)
        return None

    weights = onp.frombuffer(data[header:], dtype="<f8")
    if not onp.all(onp.isfinite(weights)):
        logger.warning("Non-finite weights in %s, recomputing.", path)
        return None
    return np.asarray(weights, dtype=float)
