from __future__ import annotations
from math import comb, ceil
from typing import Callable, Optional
import logging
import numpy as onp
import jax.numpy as np
from jax import Array, vmap
from zodiax import Base

import dKac.utils as dku
from .errors import InvalidFunctionError, SparseGridBudgetError
from .model import ClassParams, FunctionClassTag, probe_points
from .sampler import RngStream, sample_batch


__all__ = [
    "Level1DOperator",
    "SparseApprox",
    "build_1d_operator",
    "count_nodes",
    "combination_levels",
    "build_sparse",
    "save_sparse",
    "load_sparse",
    "eval_sparse",
    "precompute_cv_weights",
]

logger = logging.getLogger(__name__)

# Integer node keys live on the dyadic grid of this level
_KEY_LEVEL = 40
_PILOT_SAMPLES = 2**12
_CHUNK_ENTRIES = 2**22


class Level1DOperator(Base):
    """
    One dimensional weighted piecewise polynomial interpolation of a given
    level on [-L, L]. Basis function j is the local Lagrange cardinal function
    of node j multiplied by rho(x) / rho(node_j). Weighted bases vanish outside
    the interval, unweighted ones extend it by their value at the nearest
    end.

    Attributes
    ----------
    level : int
        The level, level 0 is the single node at the origin.
    nodes : Array
        The nodes, 2^level + 1 of them for level >= 1.
    degree : int
        The local polynomial degree, the smoothness r of the class.
    halfwidth : float
        The truncation radius L.
    weighted : bool
        Whether the Gaussian weight is used.
    error_bound : float
        The certified sup error embed_K * 2^(-r * level) on the class.
    """

    level: int
    nodes: Array
    degree: int
    halfwidth: float
    weighted: bool
    error_bound: float

    def __init__(
        self: Level1DOperator,
        level: int,
        halfwidth: float,
        degree: int = 1,
        weighted: bool = True,
        constant: float = 1.0,
    ):
        """
        Parameters
        ----------
        level : int
            The level, must be non-negative.
        halfwidth : float
            The truncation radius L.
        degree : int = 1
            The local polynomial degree.
        weighted : bool = True
            Whether the Gaussian weight is used.
        constant : float = 1.0
            The constant C of the error bound C * 2^(-degree * level).
        """
        self.level = int(level)
        self.halfwidth = float(halfwidth)
        self.nodes = dku.nested_nodes(self.level, self.halfwidth)
        self.degree = int(degree)
        self.weighted = bool(weighted)
        self.error_bound = float(constant * 2.0 ** (-self.degree * level))

    def log_weight(self: Level1DOperator, x: Array) -> Array:
        return -(x**2) if self.weighted else np.zeros_like(x)

    def basis(
        self: Level1DOperator, x: Array, normalise: bool = True
    ) -> Array:
        """
        Evaluates the basis at some points.

        Parameters
        ----------
        x : Array
            The points, shape (npoints,).
        normalise : bool = True
            Whether to divide by rho(node_j). Without it basis j is the
            cardinal function times rho(x).

        Returns
        -------
        basis : Array
            The basis values, shape (npoints, nnodes).
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not self.weighted:
            x = np.clip(x, -self.halfwidth, self.halfwidth)
        cardinal = dku.lagrange_basis(x, self.nodes, self.degree)
        log_ratio = self.log_weight(x)[:, None]
        if normalise:
            log_ratio = log_ratio - self.log_weight(self.nodes)
        inside = (np.abs(x) <= self.halfwidth)[:, None]
        return np.where(inside, cardinal * np.exp(log_ratio), 0.0)

    def interpolate(self: Level1DOperator, f: Callable, x: Array) -> Array:
        """
        Applies the operator to a scalar function and evaluates the result.
        """
        return self.basis(x) @ vmap(f)(self.nodes)


def build_1d_operator(
    level: int,
    function_class: FunctionClassTag,
    params: ClassParams,
    t: float = 1.0,
) -> Level1DOperator:
    """
    Builds the one dimensional operator of a given level for a function
    class.

    Parameters
    ----------
    level : int
        The level, must be non-negative.
    function_class : FunctionClassTag
        The function class, which sets the weight and the truncation radius.
    params : ClassParams
        The class parameters, setting the degree r and the constant K.
    t : float = 1.0
        The time horizon used to derive the truncation radius.

    Returns
    -------
    operator : Level1DOperator
        The operator.
    """
    if level < 0:
        raise ValueError(f"level must be non-negative, got {level}.")
    return Level1DOperator(
        level,
        function_class.halfwidth(t),
        params.smoothness_r,
        function_class.weighted,
        params.embed_K,
    )


def _new_nodes(level: int) -> int:
    if level == 0:
        return 1
    if level == 1:
        return 2
    return 2 ** (level - 1)


def count_nodes(q: int, D: int) -> int:
    """
    Number of distinct nodes of the sparse grid of level q in D dimensions,
    the union of the tensor grids with |l|_1 <= q. Level -1 is the empty
    grid of the zero approximant.

    Parameters
    ----------
    q : int
        The sparse grid level.
    D : int
        The number of dimensions.

    Returns
    -------
    n_nodes : int
        The node count.
    """
    if q < 0:
        return 0
    counts = [1] + [0] * q
    increments = [_new_nodes(level) for level in range(q + 1)]
    for _ in range(D):
        counts = [
            sum(counts[s - i] * increments[i] for i in range(s + 1))
            for s in range(q + 1)
        ]
    return sum(counts)


def _multi_levels(D: int, budget: int):
    # All D-tuples of non-negative levels with sum <= budget
    if D == 1:
        for level in range(budget + 1):
            yield (level,)
        return
    for level in range(budget + 1):
        for rest in _multi_levels(D - 1, budget - level):
            yield (level,) + rest


def combination_levels(q: int, D: int) -> list:
    """
    The multi-levels l and coefficients (-1)^(q - |l|) C(D - 1, q - |l|) of
    the combination technique, for q - D + 1 <= |l|_1 <= q.

    Parameters
    ----------
    q : int
        The sparse grid level.
    D : int
        The number of dimensions.

    Returns
    -------
    levels : list
        Pairs of (level tuple, coefficient).
    """
    if q < 0:
        return []
    out = []
    for levels in _multi_levels(D, q):
        j = q - sum(levels)
        if j < D:
            out.append((levels, (-1) ** j * comb(D - 1, j)))
    return out


class SparseApprox(Base):
    """
    A Smolyak approximant of a term integrand in the combination technique
    form, stored as a flat list of entries. Entry i has a node tuple, a
    coefficient and the precomputed integral of its basis function against
    the term weight. The basis function of entry i is the product over the
    (k + 1) * d coordinates of the cardinal functions of its levels times
    rho(x), the factor 1 / rho(node) being absorbed into the coefficient.

    Attributes
    ----------
    eps : float
        The target relative sup accuracy.
    tolerance : float
        The absolute sup accuracy, eps * beta1 * beta2^k.
    k : int
        The term index.
    d : int
        The space dimension.
    level : int
        The sparse grid level q, -1 for the zero approximant.
    halfwidth : float
        The truncation radius L.
    degree : int
        The local polynomial degree.
    weighted : bool
        Whether the Gaussian weight is used.
    node_tuples : Array
        The entry nodes, shape (n_entries, k + 1, d).
    columns : Array
        Per coordinate column of each entry in the stacked 1d basis of
        levels 0..q, shape (n_entries, (k + 1) * d).
    coefficients : Array
        The combination coefficients times h(node) / rho(node).
    cv_weights : Array, None
        The integrals of the entry basis functions, None until precomputed.
    cv_errors : Array, None
        The standard errors of cv_weights.
    cv_integral_error : float, None
        The standard error of `integral`, measured on the same samples as
        the weights.
    precision_met : bool
        False when the precompute hit its sample cap before reaching its
        precision.
    n_nodes : int
        The number of distinct nodes, ie evaluations of h.
    probe_error : float
        The measured sup error over the probe set.
    certificate : float
        The a priori relative error bound K^(k+1) C(q+D-1, D-1) 2^(-r q).
    """

    eps: float
    tolerance: float
    k: int
    d: int
    level: int
    halfwidth: float
    degree: int
    weighted: bool
    node_tuples: Array
    columns: Array
    coefficients: Array
    cv_weights: Optional[Array]
    cv_errors: Optional[Array]
    cv_integral_error: Optional[float]
    precision_met: bool
    n_nodes: int
    probe_error: float
    certificate: float

    def __init__(
        self: SparseApprox,
        eps: float,
        k: int,
        d: int,
        level: int,
        halfwidth: float,
        degree: int,
        weighted: bool,
        node_tuples: Array,
        columns: Array,
        coefficients: Array,
        n_nodes: int,
        probe_error: float = np.nan,
        certificate: float = np.inf,
        tolerance: float = None,
    ):
        self.eps = float(eps)
        self.tolerance = self.eps if tolerance is None else float(tolerance)
        self.k = int(k)
        self.d = int(d)
        self.level = int(level)
        self.halfwidth = float(halfwidth)
        self.degree = int(degree)
        self.weighted = bool(weighted)
        D = (self.k + 1) * self.d
        self.node_tuples = np.asarray(node_tuples, dtype=float).reshape(
            -1, self.k + 1, self.d
        )
        self.columns = np.asarray(columns, dtype=int).reshape(-1, D)
        self.coefficients = np.asarray(coefficients, dtype=float).reshape(-1)
        if not (
            len(self.node_tuples)
            == len(self.columns)
            == len(self.coefficients)
        ):
            raise ValueError("Entry arrays must have the same length.")
        self.cv_weights = None
        self.cv_errors = None
        self.cv_integral_error = None
        self.precision_met = True
        self.n_nodes = int(n_nodes)
        self.probe_error = float(probe_error)
        self.certificate = float(certificate)

    @property
    def dimension(self: SparseApprox) -> int:
        return (self.k + 1) * self.d

    @property
    def n_entries(self: SparseApprox) -> int:
        return int(self.coefficients.shape[0])

    @property
    def is_zero(self: SparseApprox) -> bool:
        return self.n_entries == 0

    @property
    def has_cv_weights(self: SparseApprox) -> bool:
        return self.cv_weights is not None

    def operator(self: SparseApprox, level: int) -> Level1DOperator:
        return Level1DOperator(
            level, self.halfwidth, self.degree, self.weighted
        )

    def integral(self: SparseApprox) -> Array:
        """
        The integral of the approximant, sum_i coefficients_i cv_weights_i.
        """
        if not self.has_cv_weights:
            raise ValueError("cv_weights have not been precomputed.")
        return np.dot(self.coefficients, self.cv_weights)

    def integral_error(self: SparseApprox) -> Array:
        """
        The standard error of `integral`. Falls back to the bound
        sum_i |coefficients_i| cv_errors_i when only per weight errors are
        known.
        """
        if not self.has_cv_weights:
            raise ValueError("cv_weights have not been precomputed.")
        if self.cv_integral_error is not None:
            return np.asarray(self.cv_integral_error)
        return np.dot(np.abs(self.coefficients), self.cv_errors)

    def __call__(self: SparseApprox, points: Array) -> Array:
        return eval_sparse(self, points)


def _basis_table(approx: SparseApprox, x: Array) -> Array:
    # The 1d bases of levels 0..q side by side, shape (npoints, ncolumns)
    return np.concatenate(
        [
            approx.operator(level).basis(x, normalise=False)
            for level in range(approx.level + 1)
        ],
        axis=1,
    )


def _entry_basis(approx: SparseApprox, flat: Array) -> Array:
    values = np.ones((flat.shape[0], approx.n_entries))
    for j in range(approx.dimension):
        table = _basis_table(approx, flat[:, j])
        values = values * table[:, approx.columns[:, j]]
    return values


def _chunks(n: int, n_entries: int):
    size = max(64, _CHUNK_ENTRIES // max(n_entries, 1))
    for start in range(0, n, size):
        yield start, min(start + size, n)


def eval_sparse(approx: SparseApprox, points: Array) -> Array:
    """
    Evaluates the approximant, sum_i coefficients_i zeta_i(points).

    Parameters
    ----------
    approx : SparseApprox
        The approximant.
    points : Array
        The paths, shape (..., k + 1, d) or flattened to (..., (k + 1) * d).

    Returns
    -------
    values : Array
        The approximant values, with the leading shape of points.
    """
    points = np.asarray(points, dtype=float)
    D = approx.dimension
    path_shape = (approx.k + 1, approx.d)
    if points.ndim >= 2 and points.shape[-2:] == path_shape:
        batch_shape = points.shape[:-2]
    elif points.ndim >= 1 and points.shape[-1] == D:
        batch_shape = points.shape[:-1]
    else:
        raise ValueError(
            f"Expected paths with {approx.k + 1} points in {approx.d} "
            f"dimensions, got shape {points.shape}."
        )
    flat = points.reshape(-1, D)

    if approx.is_zero:
        return np.zeros(batch_shape)

    values = [
        _entry_basis(approx, flat[start:stop]) @ approx.coefficients
        for start, stop in _chunks(flat.shape[0], approx.n_entries)
    ]
    return np.concatenate(values).reshape(batch_shape)


def _grid_entries(q: int, D: int, halfwidth: float) -> tuple:
    """
    Enumerates the entries of the combination technique of level q.
    Returns the integer node keys, stacked basis columns, node coordinates
    and combination coefficients.
    """
    offsets = onp.cumsum([0] + [2**lv + 1 if lv else 1 for lv in range(q)])
    keys, columns, coeffs = [], [], []
    for levels, coeff in combination_levels(q, D):
        axes = []
        for lv in levels:
            n = 2**lv + 1 if lv else 1
            idx = onp.arange(n)
            key = (2 * idx - 2**lv) * 2 ** (_KEY_LEVEL - lv) if lv else idx
            axes.append((idx + offsets[lv], key))
        grid_cols = onp.stack(
            onp.meshgrid(*[a[0] for a in axes], indexing="ij"), -1
        ).reshape(-1, D)
        grid_keys = onp.stack(
            onp.meshgrid(*[a[1] for a in axes], indexing="ij"), -1
        ).reshape(-1, D)
        columns.append(grid_cols)
        keys.append(grid_keys)
        coeffs.append(onp.full(len(grid_cols), float(coeff)))
    keys = onp.concatenate(keys).astype(onp.int64)
    coords = halfwidth * (keys / 2.0**_KEY_LEVEL)
    return keys, onp.concatenate(columns), coords, onp.concatenate(coeffs)


def _certificate(q: int, D: int, k: int, params: ClassParams) -> float:
    if q < 0:
        return float("inf")
    r = params.smoothness_r
    return params.embed_K ** (k + 1) * comb(q + D - 1, D - 1) * 2.0 ** (-r * q)


def _sparse_key(
    h_key: str,
    eps: float,
    k: int,
    d: int,
    function_class: FunctionClassTag,
    params: ClassParams,
    t: float,
    max_nodes: int,
    n_probes: int,
    seed: int,
) -> str:
    return (
        f"sparse|h={h_key}|{function_class.kind}|"
        f"L={function_class.halfwidth(t)!r}|r={params.smoothness_r}|"
        f"beta1={params.beta1!r}|beta2={params.beta2!r}|"
        f"K={params.embed_K!r}|eps={float(eps)!r}|k={k}|t={float(t)!r}|"
        f"d={d}|max_nodes={max_nodes}|probes={n_probes}|seed={seed}"
    )


def save_sparse(directory, key: str, approx: SparseApprox):
    """
    Writes the structure of an approximant to the cache: its level, node
    count, probe error, certificate and entry arrays. The weights are cached
    separately by `precompute_cv_weights`.
    """
    header = onp.array(
        [
            approx.level,
            approx.n_nodes,
            approx.probe_error,
            approx.certificate,
            approx.n_entries,
        ],
        dtype=float,
    )
    dku.write_weights(
        directory,
        key,
        onp.concatenate(
            [
                header,
                onp.asarray(approx.node_tuples).reshape(-1),
                onp.asarray(approx.columns).reshape(-1),
                onp.asarray(approx.coefficients),
            ]
        ),
    )


def load_sparse(
    directory,
    key: str,
    eps: float,
    k: int,
    d: int,
    function_class: FunctionClassTag,
    params: ClassParams,
    t: float = 1.0,
) -> Optional[SparseApprox]:
    """
    Reads an approximant written by `save_sparse`, None on a miss or a
    payload of the wrong length.
    """
    data = dku.read_weights(directory, key)
    if data is None or len(data) < 5:
        return None
    data = onp.asarray(data)
    level, n_nodes, probe_error, certificate, n = data[:5]
    n, D = int(n), (k + 1) * d
    if len(data) != 5 + n * (2 * D + 1):
        logger.warning("Sparse grid cache entry has the wrong size.")
        return None
    body = data[5:]
    approx = SparseApprox(
        eps,
        k,
        d,
        int(level),
        function_class.halfwidth(t),
        params.smoothness_r,
        function_class.weighted,
        body[: n * D],
        body[n * D : 2 * n * D].astype(int),
        body[2 * n * D :],
        int(n_nodes),
        float(probe_error),
        float(certificate),
        eps * params.term_bound(k),
    )
    return approx


def build_sparse(
    h: Callable,
    eps: float,
    k: int,
    d: int,
    function_class: FunctionClassTag,
    params: ClassParams,
    t: float = 1.0,
    max_nodes: int = 50000,
    n_probes: int = 4096,
    seed: int = 0,
    cache_dir=None,
    h_key: str = None,
) -> SparseApprox:
    """
    Builds a Smolyak approximant of a term integrand h on R^((k+1)d). The
    level is increased from the zero approximant until the measured sup
    error over the probe set is at most eps * beta1 * beta2^k. Entries with
    a zero coefficient are dropped.

    The probe set holds n_probes paths drawn from the normalised term weight
    and n_probes low discrepancy points of the truncation cube.

    Parameters
    ----------
    h : Callable
        The integrand, mapping a path of shape (k + 1, d) to a scalar.
    eps : float
        The target relative accuracy.
    k : int
        The term index.
    d : int
        The space dimension.
    function_class : FunctionClassTag
        The function class.
    params : ClassParams
        The class parameters.
    t : float = 1.0
        The time horizon.
    max_nodes : int = 50000
        The node budget.
    n_probes : int = 4096
        The number of probe points of each kind.
    seed : int = 0
        The seed of the probe set.
    cache_dir : str, Path = None
        The cache directory, None to disable caching.
    h_key : str = None
        A string identifying h, eg `dKac.utils.tree_digest` of v and V.
        The approximant is only cached when it is given.

    Returns
    -------
    approx : SparseApprox
        The approximant, without cv_weights.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}.")
    use_cache = cache_dir is not None and h_key is not None
    if use_cache:
        key = _sparse_key(
            h_key, eps, k, d, function_class, params, t, max_nodes,
            n_probes, seed,
        )  # fmt: skip
        approx = load_sparse(
            cache_dir, key, eps, k, d, function_class, params, t
        )
        if approx is not None:
            logger.info(
                "Cache hit for the sparse grid of k=%d: level %d, %d "
                "entries.",
                k,
                approx.level,
                approx.n_entries,
            )
            return approx

    D = (k + 1) * d
    L = function_class.halfwidth(t)
    target = eps * params.term_bound(k)
    h_paths = vmap(h)

    rng = RngStream(seed, 0x5EED).spawn(k)
    probes = np.concatenate(
        [
            sample_batch(k, t, d, n_probes, rng).flat_points,
            probe_points(n_probes, D, L, seed),
        ]
    )
    h_probes = h_paths(probes.reshape(-1, k + 1, d))
    finite = np.isfinite(h_probes)
    if not bool(finite.all()):
        bad = int(np.argmin(finite))
        raise InvalidFunctionError(probes[bad].tolist(), "h")

    known = {}
    q = -1
    while True:
        n_nodes = count_nodes(q, D)
        if n_nodes > max_nodes:
            raise SparseGridBudgetError(n_nodes, max_nodes, q)

        if q < 0:
            coords = onp.zeros((0, D))
            columns = onp.zeros((0, D), dtype=int)
            coefficients = onp.zeros(0)
        else:
            keys, columns, coords, combination = _grid_entries(q, D, L)
            unique, first, inverse = onp.unique(
                keys, axis=0, return_index=True, return_inverse=True
            )
            inverse = inverse.reshape(-1)

            # h is only evaluated at nodes new to this level
            rows = [tuple(row) for row in unique]
            missing = [i for i, row in enumerate(rows) if row not in known]
            if missing:
                new = coords[first[missing]].reshape(-1, k + 1, d)
                values = onp.asarray(h_paths(np.asarray(new)))
                known.update(zip([rows[i] for i in missing], values))
            values = onp.array([known[row] for row in rows])[inverse]
            n_nodes = len(rows)

            coefficients = combination * values
            if function_class.weighted:
                coefficients = coefficients * onp.exp((coords**2).sum(-1))
            nonzero = coefficients != 0
            coords, columns = coords[nonzero], columns[nonzero]
            coefficients = coefficients[nonzero]

        approx = SparseApprox(
            eps,
            k,
            d,
            q,
            L,
            params.smoothness_r,
            function_class.weighted,
            coords,
            columns,
            coefficients,
            n_nodes,
            certificate=_certificate(q, D, k, params),
            tolerance=target,
        )
        error = float(np.abs(eval_sparse(approx, probes) - h_probes).max())
        logger.debug(
            "Sparse grid k=%d level %d: %d nodes, probe error %.3g "
            "(target %.3g)",
            k,
            q,
            approx.n_nodes,
            error,
            target,
        )
        if error <= target:
            break
        q += 1

    logger.info(
        "Built sparse grid for k=%d, D=%d: level %d, %d nodes, %d entries, "
        "probe error %.3g.",
        k,
        D,
        q,
        approx.n_nodes,
        approx.n_entries,
        error,
    )
    approx = approx.set("probe_error", error)
    if use_cache:
        save_sparse(cache_dir, key, approx)
    return approx


def _cache_key(approx: SparseApprox, t: float, precision: float, rng) -> str:
    kind = "WeightedSobolevGaussian" if approx.weighted else "Custom"
    return (
        f"{kind}|L={approx.halfwidth!r}|r={approx.degree}|"
        f"eps={approx.eps!r}|k={approx.k}|t={float(t)!r}|d={approx.d}|"
        f"level={approx.level}|entries={approx.n_entries}|"
        f"precision={float(precision)!r}|seed={rng.seed}|"
        f"stream={rng.stream_id}"
    )


def _moments(approx: SparseApprox, t: float, rng, start: int, stop: int):
    # Sums of the entry basis values, their squares, and the same for the
    # combined approximant u = basis @ coefficients
    k, d = approx.k, approx.d
    s1 = np.zeros(approx.n_entries)
    s2 = np.zeros(approx.n_entries)
    u1, u2 = 0.0, 0.0
    for lo, hi in _chunks(stop - start, approx.n_entries):
        paths = sample_batch(k, t, d, hi - lo, rng, start=start + lo)
        values = _entry_basis(approx, paths.flat_points)
        u = values @ approx.coefficients
        s1 = s1 + values.sum(0)
        s2 = s2 + (values**2).sum(0)
        u1, u2 = u1 + u.sum(), u2 + (u**2).sum()
    return s1, s2, u1, u2


def _std_error(s1, s2, n: int) -> Array:
    mean = s1 / n
    var = np.maximum(s2 / n - mean**2, 0.0) * n / (n - 1)
    return np.sqrt(var / n)


def precompute_cv_weights(
    approx: SparseApprox,
    k: int,
    t: float,
    d: int,
    precision: float = None,
    rng: RngStream = None,
    cache_dir=None,
    max_samples: int = 2**18,
) -> SparseApprox:
    """
    Estimates the integrals of the entry basis functions against the term
    weight by Monte Carlo over paths of the normalised weight, scaled by
    t^k / k!. A pilot run sets the number of samples so that the standard
    error of the combined integral sum_i coefficients_i cv_weights_i is at
    most precision, capped at max_samples. Hitting the cap logs a warning and
    clears `precision_met`, the larger error then shows in
    `integral_error`.

    Results are cached in cache_dir, keyed by the class, the accuracy, the
    term, the grid structure, the precision and the random stream.

    Parameters
    ----------
    approx : SparseApprox
        The approximant.
    k : int
        The term index.
    t : float
        The time horizon.
    d : int
        The space dimension.
    precision : float = None
        The target standard error of the combined integral, None for a tenth
        of t^k / k! times the approximant tolerance.
    rng : RngStream = None
        The random stream, defaults to RngStream(0).
    cache_dir : str, Path = None
        The cache directory, None to disable caching.
    max_samples : int = 2**18
        The largest number of samples to use.

    Returns
    -------
    approx : SparseApprox
        The approximant with cv_weights, cv_errors and cv_integral_error
        filled.
    """
    if k != approx.k or d != approx.d:
        raise ValueError(
            f"Approximant was built for k={approx.k}, d={approx.d}, got "
            f"k={k}, d={d}."
        )
    volume = float(dku.simplex_volume(k, t))
    if precision is None:
        precision = 0.1 * volume * approx.tolerance
    if not precision > 0:
        raise ValueError(f"precision must be positive, got {precision}.")
    rng = RngStream(0) if rng is None else rng
    fields = ["cv_weights", "cv_errors", "cv_integral_error", "precision_met"]

    if approx.is_zero:
        return approx.set(fields, [np.zeros(0), np.zeros(0), 0.0, True])

    n = approx.n_entries
    key = _cache_key(approx, t, precision, rng)
    if cache_dir is not None:
        cached = dku.read_weights(cache_dir, key, 2 * n + 2)
        if cached is not None:
            logger.info("Cache hit for k=%d (%d weights).", k, n)
            return approx.set(
                fields,
                [
                    cached[:n],
                    cached[n : 2 * n],
                    float(cached[2 * n]),
                    bool(cached[2 * n + 1]),
                ],
            )

    s1, s2, u1, u2 = _moments(approx, t, rng, 0, _PILOT_SAMPLES)
    pilot = volume * _std_error(u1, u2, _PILOT_SAMPLES)
    needed = ceil(_PILOT_SAMPLES * (float(pilot) / precision) ** 2)
    n_samples = max(_PILOT_SAMPLES, needed)
    precision_met = n_samples <= max_samples
    if not precision_met:
        logger.warning(
            "Precompute for k=%d needs %d samples for precision %.3g, "
            "capped at %d.",
            k,
            n_samples,
            precision,
            max_samples,
        )
        n_samples = max_samples

    if n_samples > _PILOT_SAMPLES:
        t1, t2, v1, v2 = _moments(approx, t, rng, _PILOT_SAMPLES, n_samples)
        s1, s2, u1, u2 = s1 + t1, s2 + t2, u1 + v1, u2 + v2
    weights = volume * s1 / n_samples
    errors = volume * _std_error(s1, s2, n_samples)
    integral_error = float(volume * _std_error(u1, u2, n_samples))

    logger.info(
        "Precomputed %d cv weights for k=%d from %d samples, integral "
        "standard error %.3g (target %.3g).",
        n,
        k,
        n_samples,
        integral_error,
        precision,
    )
    if cache_dir is not None:
        dku.write_weights(
            cache_dir,
            key,
            np.concatenate(
                [weights, errors, np.array([integral_error, precision_met])]
            ),
        )
    return approx.set(
        fields, [weights, errors, integral_error, precision_met]
    )
