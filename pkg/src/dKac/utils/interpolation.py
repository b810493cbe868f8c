import jax.numpy as np
from jax import Array

__all__ = [
    "nested_nodes",
    "stencil_indices",
    "lagrange_basis",
]


def nested_nodes(level: int, halfwidth: float) -> Array:
    """
    Generates the nested, equispaced one dimensional node set of a given
    level on [-halfwidth, halfwidth]. Level 0 is the single node at the
    origin, level l >= 1 has 2^l + 1 nodes including both end points, so that
    every level contains all nodes of the levels below it.

    Parameters
    ----------
    level : int
        The node level, must be non-negative.
    halfwidth : float
        The half width of the interval.

    Returns
    -------
    nodes : Array
        The sorted nodes.
    """
    if level < 0:
        raise ValueError(f"level must be non-negative, got {level}.")
    if level == 0:
        return np.zeros(1)
    # Dyadic fractions are exact, so shared nodes agree bit for bit
    n = 2**level
    return halfwidth * ((2 * np.arange(n + 1) - n) / n)


def stencil_indices(x: Array, nodes: Array, degree: int) -> Array:
    """
    Finds the degree + 1 consecutive nodes used to interpolate at each point.
    The stencil is centred on the cell containing the point and clipped at the
    ends of the node set.

    Parameters
    ----------
    x : Array
        The points, shape (npoints,).
    nodes : Array
        The sorted nodes, shape (nnodes,), with nnodes > degree.
    degree : int
        The local polynomial degree.

    Returns
    -------
    indices : Array
        Integer node indices, shape (npoints, degree + 1).
    """
    nnodes = nodes.shape[0]
    cell = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, nnodes - 2)
    start = np.clip(cell - (degree - 1) // 2, 0, nnodes - 1 - degree)
    return start[:, None] + np.arange(degree + 1)[None, :]


def lagrange_basis(x: Array, nodes: Array, degree: int) -> Array:
    """
    Evaluates the cardinal basis of piecewise Lagrange interpolation of a
    given degree at some points. Basis function j is one at node j and zero at
    every other node, and each point only sees the nodes of its stencil, so
    each row has at most degree + 1 non-zero entries.

    Parameters
    ----------
    x : Array
        The points to evaluate at, shape (npoints,).
    nodes : Array
        The sorted nodes, shape (nnodes,).
    degree : int
        The polynomial degree, reduced to nnodes - 1 for small node sets.

    Returns
    -------
    basis : Array
        The basis values, shape (npoints, nnodes).
    """
    x = np.asarray(x, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    npoints, nnodes = x.shape[0], nodes.shape[0]
    if nnodes == 1:
        return np.ones((npoints, 1))

    degree = min(int(degree), nnodes - 1)
    indices = stencil_indices(x, nodes, degree)
    local = nodes[indices]

    # w_j = prod_{m != j} (x - x_m) / (x_j - x_m)
    eye = np.eye(degree + 1, dtype=bool)[None]
    numerator = np.where(eye, 1.0, (x[:, None] - local)[:, None, :])
    denominator = np.where(eye, 1.0, local[:, :, None] - local[:, None, :])
    weights = (numerator / denominator).prod(-1)

    rows = np.arange(npoints)[:, None]
    return np.zeros((npoints, nnodes)).at[rows, indices].add(weights)
