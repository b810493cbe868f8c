__all__ = [
    "InvalidFunctionError",
    "DegenerateTimePartitionError",
    "OracleDimensionError",
    "SparseGridBudgetError",
    "InvalidIntegrandError",
    "EncodingRangeError",
    "PotentialOverflowError",
    "ConfigError",
]


class InvalidFunctionError(ValueError):
    """Raised when v or V returns a non-finite value at a finite point."""

    def __init__(self, point, name: str = "function"):
        self.point = point
        super().__init__(
            f"invalid input function: {name} is not finite at {point}"
        )


class DegenerateTimePartitionError(ValueError):
    def __init__(self, times):
        self.times = times
        super().__init__(
            "degenerate time partition: consecutive times must be strictly "
            f"increasing inside (0, t), got {times}"
        )


class OracleDimensionError(ValueError):
    def __init__(self, dimension: int, limit: int):
        super().__init__(
            f"oracle dimension limit: (k+1)*d = {dimension} exceeds {limit}"
        )


class SparseGridBudgetError(RuntimeError):
    def __init__(self, n_nodes: int, max_nodes: int, level: int):
        self.n_nodes = n_nodes
        self.max_nodes = max_nodes
        super().__init__(
            f"sparse grid budget exceeded: level {level} needs {n_nodes} "
            f"nodes, cap is {max_nodes}"
        )


class InvalidIntegrandError(ValueError):
    """Raised by the estimators, carries the offending samples."""

    def __init__(self, index: int, sample):
        self.index = index
        self.sample = sample
        super().__init__(
            f"invalid integrand sample: non-finite value at sample {index}: "
            f"{sample}"
        )


class EncodingRangeError(ValueError):
    def __init__(self, index: int, value: float, bound: float):
        self.index = index
        super().__init__(
            f"quantum encoding range exceeded: |f| = {value} > {bound} at "
            f"sample {index}"
        )


class PotentialOverflowError(RuntimeError):
    def __init__(self, n_bad: int):
        super().__init__(
            "potential unbounded above on sampled paths: exp of the path "
            f"integral overflowed on {n_bad} paths"
        )


class ConfigError(ValueError):
    """
    Raised for malformed or incomplete run configurations.

    Attributes
    ----------
    field : str
        The offending configuration field.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config error in '{field}': {message}")
