from __future__ import annotations
from abc import abstractmethod
from typing import Callable, Optional
import jax.numpy as np
from jax import Array
from zodiax import Base


__all__ = [
    "BaseFunction",
    "GaussianBump",
    "Constant",
    "HarmonicPotential",
    "Translated",
    "UserFunction",
    "PRESETS",
    "as_function",
    "function_from_dict",
]


class BaseFunction(Base):
    """
    Base class for the scalar input functions v and V on R^d. Functions are
    evaluated on a single d-vector and vectorised with `vmap`.
    """

    @abstractmethod
    def __call__(self, z: Array) -> Array:  # pragma: no cover
        pass

    def shift(self: BaseFunction, offset: Array) -> BaseFunction:
        """
        Returns the translate z -> f(z + offset).

        Parameters
        ----------
        offset : Array
            The translation vector.

        Returns
        -------
        function : BaseFunction
            The translated function.
        """
        return Translated(self, offset)

    def gaussian_mean(self: BaseFunction, t: float, d: int) -> Optional[float]:
        """
        The expectation E[f(X)] for X ~ N(0, t I_d) when a closed form is
        known, else None.
        """
        return None

    def constant_value(self: BaseFunction) -> Optional[float]:
        """
        The value of the function if it is constant, else None.
        """
        return None


class GaussianBump(BaseFunction):
    """
    The Gaussian bump f(z) = amplitude * exp(-||z - centre||^2 / width^2). With
    unit amplitude and width this is exactly the weight of the weighted
    Sobolev class.

    Attributes
    ----------
    amplitude : Array
        The peak value.
    width : Array
        The width of the bump.
    centre : Array
        The centre of the bump, a scalar is broadcast to every coordinate.
    """

    amplitude: Array
    width: Array
    centre: Array

    def __init__(
        self: GaussianBump,
        amplitude: float = 1.0,
        width: float = 1.0,
        centre: Array = 0.0,
    ):
        """
        Parameters
        ----------
        amplitude : float = 1.0
            The peak value.
        width : float = 1.0
            The width of the bump, must be positive.
        centre : Array = 0.0
            The centre of the bump.
        """
        self.amplitude = np.asarray(amplitude, dtype=float)
        self.width = np.asarray(width, dtype=float)
        self.centre = np.asarray(centre, dtype=float)
        if self.width.ndim != 0 or self.width <= 0:
            raise ValueError("width must be a positive scalar.")
        if self.centre.ndim > 1:
            raise ValueError("centre must be a scalar or a 1d array.")

    def __call__(self: GaussianBump, z: Array) -> Array:
        r2 = ((z - self.centre) ** 2).sum()
        return self.amplitude * np.exp(-r2 / self.width**2)

    def shift(self: GaussianBump, offset: Array) -> GaussianBump:
        return self.set("centre", self.centre - np.asarray(offset, float))

    def gaussian_mean(self: GaussianBump, t: float, d: int) -> float:
        w2 = self.width**2
        centre = np.broadcast_to(self.centre, (d,))
        scale = (w2 / (w2 + 2 * t)) ** (d / 2)
        return float(
            self.amplitude * scale * np.exp(-(centre**2).sum() / (w2 + 2 * t))
        )


class Constant(BaseFunction):
    """
    The constant function f(z) = value.

    Attributes
    ----------
    value : Array
        The constant.
    """

    value: Array

    def __init__(self: Constant, value: float = 0.0):
        """
        Parameters
        ----------
        value : float = 0.0
            The constant.
        """
        self.value = np.asarray(value, dtype=float)
        if self.value.ndim != 0:
            raise ValueError("value must be a scalar.")

    def __call__(self: Constant, z: Array) -> Array:
        return self.value + 0.0 * z.sum()

    def shift(self: Constant, offset: Array) -> Constant:
        return self

    def gaussian_mean(self: Constant, t: float, d: int) -> float:
        return float(self.value)

    def constant_value(self: Constant) -> float:
        return float(self.value)


class HarmonicPotential(BaseFunction):
    """
    The truncated quadratic f(z) = coefficient * min(||z - centre||^2,
    radius^2). The default is the potential -||z||^2 / 2, cut off at radius 6
    so the function stays bounded.

    Attributes
    ----------
    coefficient : Array
        The quadratic coefficient.
    centre : Array
        The centre of the well.
    radius : Array
        The truncation radius.
    """

    coefficient: Array
    centre: Array
    radius: Array

    def __init__(
        self: HarmonicPotential,
        coefficient: float = -0.5,
        centre: Array = 0.0,
        radius: float = 6.0,
    ):
        """
        Parameters
        ----------
        coefficient : float = -0.5
            The quadratic coefficient.
        centre : Array = 0.0
            The centre of the well.
        radius : float = 6.0
            The truncation radius, must be positive.
        """
        self.coefficient = np.asarray(coefficient, dtype=float)
        self.centre = np.asarray(centre, dtype=float)
        self.radius = np.asarray(radius, dtype=float)
        if self.radius.ndim != 0 or self.radius <= 0:
            raise ValueError("radius must be a positive scalar.")

    def __call__(self: HarmonicPotential, z: Array) -> Array:
        r2 = ((z - self.centre) ** 2).sum()
        return self.coefficient * np.minimum(r2, self.radius**2)

    def shift(self: HarmonicPotential, offset: Array) -> HarmonicPotential:
        return self.set("centre", self.centre - np.asarray(offset, float))


class Translated(BaseFunction):
    """
    The translate z -> function(z + offset) of an arbitrary function.

    Attributes
    ----------
    function : Callable
        The wrapped function.
    offset : Array
        The translation vector.
    """

    function: Callable
    offset: Array

    def __init__(self: Translated, function: Callable, offset: Array):
        self.function = function
        self.offset = np.asarray(offset, dtype=float)

    def __call__(self: Translated, z: Array) -> Array:
        return self.function(z + self.offset)

    def shift(self: Translated, offset: Array) -> Translated:
        return self.add("offset", np.asarray(offset, dtype=float))


class UserFunction(BaseFunction):
    """
    Wraps a user supplied, jax traceable callable.

    Attributes
    ----------
    function : Callable
        The wrapped callable, mapping a d-vector to a scalar.
    """

    function: Callable

    def __init__(self: UserFunction, function: Callable):
        if not callable(function):
            raise TypeError(f"Expected a callable, got {type(function)}.")
        self.function = function

    def __call__(self: UserFunction, z: Array) -> Array:
        return np.asarray(self.function(z), dtype=float)


PRESETS = {
    "gaussian_bump": GaussianBump,
    "constant": Constant,
    "harmonic_potential": HarmonicPotential,
}


def as_function(function) -> BaseFunction:
    """
    Converts presets, plain callables and scalars to a `BaseFunction`.

    Parameters
    ----------
    function : BaseFunction, Callable, float
        The input. Scalars become `Constant` functions.

    Returns
    -------
    function : BaseFunction
        The wrapped function.
    """
    if isinstance(function, BaseFunction):
        return function
    if isinstance(function, (int, float)):
        return Constant(function)
    return UserFunction(function)


def function_from_dict(entry: dict) -> BaseFunction:
    """
    Builds a preset from a config entry of the form
    {"preset": name, **parameters}.

    Parameters
    ----------
    entry : dict
        The config entry.

    Returns
    -------
    function : BaseFunction
        The preset function.
    """
    if not isinstance(entry, dict) or "preset" not in entry:
        raise ValueError("function entries need a 'preset' field.")
    parameters = dict(entry)
    name = parameters.pop("preset")
    if name not in PRESETS:
        raise ValueError(
            f"unknown preset '{name}', expected one of {list(PRESETS)}."
        )
    return PRESETS[name](**parameters)
