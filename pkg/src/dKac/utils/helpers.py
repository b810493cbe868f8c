from typing import Any
import hashlib
import math
import jax.numpy as np
import numpy as onp
import jax.tree_util as jtu
from jax import Array

__all__ = ["mix_stream_id", "split_uint64", "to_builtin", "tree_digest"]

_MASK64 = (1 << 64) - 1


def mix_stream_id(stream_id: int, index: int) -> int:
    """
    Derives a child stream id from a parent id and an index with the
    splitmix64 finaliser. Distinct (stream_id, index) pairs map to distinct,
    well separated 64 bit ids with overwhelming probability.

    Parameters
    ----------
    stream_id : int
        The parent stream id.
    index : int
        The child index.

    Returns
    -------
    stream_id : int
        The child stream id, in [0, 2^64).
    """
    z = (int(stream_id) * 0x9E3779B97F4A7C15 + int(index) + 1) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def split_uint64(value: int) -> tuple:
    """
    Splits a 64 bit integer into its (high, low) 32 bit words.

    Parameters
    ----------
    value : int
        The integer, reduced modulo 2^64.

    Returns
    -------
    words : tuple
        The (high, low) words.
    """
    value = int(value) & _MASK64
    return value >> 32, value & 0xFFFFFFFF


def to_builtin(tree: Any) -> Any:
    """
    Recursively converts arrays and numpy scalars inside dictionaries, lists
    and tuples to python floats, ints and lists so the result can be written
    with the json module. Non-finite floats become None.

    Parameters
    ----------
    tree : Any
        The structure to convert.

    Returns
    -------
    tree : Any
        The converted structure.
    """
    if isinstance(tree, dict):
        return {str(key): to_builtin(value) for key, value in tree.items()}
    if isinstance(tree, (list, tuple)):
        return [to_builtin(value) for value in tree]
    if isinstance(tree, (Array, onp.ndarray, onp.generic)):
        array = onp.asarray(tree)
        if array.ndim > 0:
            return [to_builtin(value) for value in array]
        tree = array.item()
    if isinstance(tree, bool) or tree is None or isinstance(tree, str):
        return tree
    if isinstance(tree, int):
        return tree
    if isinstance(tree, float):
        return tree if math.isfinite(tree) else None
    return str(tree)


def tree_digest(tree: Any) -> str:
    """
    Hex sha256 digest of a pytree: its structure, and the dtype, shape and
    bytes of every array leaf. Other leaves, eg the callables of user
    functions, enter through their repr so they only match within a process.

    Parameters
    ----------
    tree : Any
        The pytree, eg a zodiax model.

    Returns
    -------
    digest : str
        The hex digest.
    """
    leaves, treedef = jtu.tree_flatten(tree)
    digest = hashlib.sha256(str(treedef).encode("utf-8"))
    for leaf in leaves:
        if isinstance(leaf, (Array, onp.ndarray, onp.generic, float, int)):
            array = onp.asarray(leaf)
            digest.update(f"{array.dtype}{array.shape}".encode("utf-8"))
            digest.update(array.tobytes())
        else:
            digest.update(repr(leaf).encode("utf-8"))
    return digest.hexdigest()
