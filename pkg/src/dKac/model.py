from __future__ import annotations
from typing import Callable, Optional, Union
import logging
import jax.numpy as np
from jax import Array, vmap
from scipy.stats import qmc
from zodiax import Base

from .errors import ConfigError, InvalidFunctionError
from .functions import (
    BaseFunction,
    Constant,
    GaussianBump,
    HarmonicPotential,
    as_function,
    function_from_dict,
)


__all__ = [
    "ClassParams",
    "FunctionClassTag",
    "ProblemSpec",
    "MembershipReport",
    "validate_membership",
    "shift_to_origin",
    "integration_problem",
    "probe_points",
    "SUITE",
    "suite_case",
    "problem_from_dict",
]

logger = logging.getLogger(__name__)

KINDS = ("WeightedSobolevGaussian", "Custom")


class ClassParams(Base):
    """
    Parameters of the function class F that v and V are assumed to belong to.
    They are user supplied and only checked advisorily by
    `validate_membership`.

    Attributes
    ----------
    beta1 : float
        Bound on the class norm of v.
    beta2 : float
        Bound on the class norm of V.
    alpha : float
        The exponent of the uniform approximation complexity of the class.
    embed_K : float
        The embedding constant, ||f||_inf <= embed_K ||f||_F.
    smoothness_r : int
        The derivative order r of the class, also the local polynomial degree
        of the sparse grid interpolants.
    """

    beta1: float
    beta2: float
    alpha: float
    embed_K: float
    smoothness_r: int

    def __init__(
        self: ClassParams,
        beta1: float = 1.0,
        beta2: float = 1.0,
        alpha: float = 1.0,
        embed_K: float = 1.0,
        smoothness_r: int = 1,
    ):
        """
        Parameters
        ----------
        beta1 : float = 1.0
            Bound on the class norm of v.
        beta2 : float = 1.0
            Bound on the class norm of V.
        alpha : float = 1.0
            The uniform approximation exponent, d / r for the built-in class.
        embed_K : float = 1.0
            The embedding constant.
        smoothness_r : int = 1
            The derivative order of the class.
        """
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.alpha = float(alpha)
        self.embed_K = float(embed_K)
        if int(smoothness_r) != smoothness_r:
            raise ValueError("smoothness_r must be an integer.")
        self.smoothness_r = int(smoothness_r)

        for name in ["beta1", "beta2", "alpha", "embed_K", "smoothness_r"]:
            if not getattr(self, name) > 0:
                raise ValueError(
                    f"{name} must be strictly positive, got "
                    f"{getattr(self, name)}."
                )

    @staticmethod
    def for_dimension(d: int, smoothness_r: int = 1, **kwargs) -> ClassParams:
        """
        Builds the parameters of the r-smooth class on R^d, with alpha = d / r.
        """
        return ClassParams(
            alpha=d / smoothness_r, smoothness_r=smoothness_r, **kwargs
        )

    def term_bound(self: ClassParams, k: int) -> float:
        """
        The bound beta1 * beta2^k on ||v||_F ||V||_F^k.
        """
        return self.beta1 * self.beta2**k


class FunctionClassTag(Base):
    """
    Identifies the function class used by the sparse grid approximation.

    WeightedSobolevGaussian uses the weight rho(z) = exp(-||z||^2), Custom is
    the unweighted class (rho = 1) truncated to the same cube.

    Attributes
    ----------
    kind : str
        One of "WeightedSobolevGaussian" or "Custom".
    domain_halfwidth_L : float, None
        The truncation radius. None selects max(6 sqrt(t), 4).
    """

    kind: str
    domain_halfwidth_L: Optional[float]

    def __init__(
        self: FunctionClassTag,
        kind: str = "WeightedSobolevGaussian",
        domain_halfwidth_L: Optional[float] = None,
    ):
        """
        Parameters
        ----------
        kind : str = "WeightedSobolevGaussian"
            The class kind.
        domain_halfwidth_L : float = None
            The truncation radius, None to derive it from the time horizon.
        """
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got '{kind}'.")
        self.kind = kind
        if domain_halfwidth_L is not None:
            domain_halfwidth_L = float(domain_halfwidth_L)
            if domain_halfwidth_L <= 0:
                raise ValueError("domain_halfwidth_L must be positive.")
        self.domain_halfwidth_L = domain_halfwidth_L

    @property
    def weighted(self: FunctionClassTag) -> bool:
        return self.kind == "WeightedSobolevGaussian"

    def halfwidth(self: FunctionClassTag, t: float) -> float:
        """
        The truncation radius L for time horizon t.
        """
        if self.domain_halfwidth_L is not None:
            return self.domain_halfwidth_L
        return max(6 * float(t) ** 0.5, 4.0)

    def log_weight(self: FunctionClassTag, z: Array) -> Array:
        """
        Coordinate-wise log of the class weight, ie -z^2 or 0.
        """
        z = np.asarray(z, dtype=float)
        return -(z**2) if self.weighted else np.zeros_like(z)

    def weight(self: FunctionClassTag, z: Array) -> Array:
        """
        The class weight rho of d-vectors, reducing over the last axis.
        """
        return np.exp(self.log_weight(z).sum(-1))


class ProblemSpec(Base):
    """
    The Feynman-Kac problem: the solution z(u*, t*) of the heat equation with
    potential V and initial value v, evaluated at one space-time point.

    Attributes
    ----------
    d : int
        The space dimension.
    t_star : float
        The terminal time.
    u_star : Array
        The evaluation point, shape (d,).
    v : BaseFunction
        The initial value function.
    V : BaseFunction
        The potential.
    params : ClassParams
        The class parameters of v and V.
    function_class : FunctionClassTag
        The function class used for the sparse grid approximation.
    """

    d: int
    t_star: float
    u_star: Array
    v: BaseFunction
    V: BaseFunction
    params: ClassParams
    function_class: FunctionClassTag

    def __init__(
        self: ProblemSpec,
        d: int,
        t_star: float,
        v: Union[BaseFunction, Callable, float],
        V: Union[BaseFunction, Callable, float] = 0.0,
        u_star: Array = None,
        params: ClassParams = None,
        function_class: FunctionClassTag = None,
    ):
        """
        Parameters
        ----------
        d : int
            The space dimension, d >= 1.
        t_star : float
            The terminal time, t_star > 0.
        v : BaseFunction, Callable, float
            The initial value function.
        V : BaseFunction, Callable, float = 0.0
            The potential.
        u_star : Array = None
            The evaluation point, defaults to the origin.
        params : ClassParams = None
            The class parameters, defaults to the r = 1 class on R^d.
        function_class : FunctionClassTag = None
            The function class, defaults to the Gaussian weighted class.
        """
        if int(d) != d or d < 1:
            raise ValueError(f"d must be a positive integer, got {d}.")
        self.d = int(d)

        self.t_star = float(t_star)
        if not self.t_star > 0:
            raise ValueError(f"t_star must be positive, got {t_star}.")

        if u_star is None:
            u_star = np.zeros(self.d)
        self.u_star = np.asarray(u_star, dtype=float).reshape(-1)
        if self.u_star.shape != (self.d,):
            raise ValueError(
                f"u_star must have exactly {self.d} coordinates, got shape "
                f"{np.shape(u_star)}."
            )

        self.v = as_function(v)
        self.V = as_function(V)

        if params is None:
            params = ClassParams.for_dimension(self.d)
        if not isinstance(params, ClassParams):
            raise TypeError("params must be a ClassParams object.")
        self.params = params

        if function_class is None:
            function_class = FunctionClassTag()
        if not isinstance(function_class, FunctionClassTag):
            raise TypeError("function_class must be a FunctionClassTag.")
        self.function_class = function_class

    @property
    def at_origin(self: ProblemSpec) -> bool:
        return bool(np.all(self.u_star == 0))

    @property
    def halfwidth(self: ProblemSpec) -> float:
        return self.function_class.halfwidth(self.t_star)


class MembershipReport(Base):
    """
    Result of the sampled class-membership check.

    Attributes
    ----------
    v_norm : float
        Measured sup of |v| / rho over the probe set.
    V_norm : float
        Measured sup of |V| / rho over the probe set.
    v_ok : bool
        Whether v_norm <= beta1.
    V_ok : bool
        Whether V_norm <= beta2.
    probe_count : int
        The number of probe points.
    seed : int
        The seed of the probe set.
    """

    v_norm: float
    V_norm: float
    v_ok: bool
    V_ok: bool
    probe_count: int
    seed: int

    def __init__(self, v_norm, V_norm, v_ok, V_ok, probe_count, seed):
        self.v_norm = float(v_norm)
        self.V_norm = float(V_norm)
        self.v_ok = bool(v_ok)
        self.V_ok = bool(V_ok)
        self.probe_count = int(probe_count)
        self.seed = int(seed)

    @property
    def passed(self: MembershipReport) -> bool:
        return self.v_ok and self.V_ok

    def to_dict(self: MembershipReport) -> dict:
        return {
            "v_norm": self.v_norm,
            "V_norm": self.V_norm,
            "v_ok": self.v_ok,
            "V_ok": self.V_ok,
            "passed": self.passed,
            "probe_count": self.probe_count,
            "seed": self.seed,
        }


def probe_points(n: int, d: int, halfwidth: float, seed: int) -> Array:
    """
    Deterministic low-discrepancy probe set on [-halfwidth, halfwidth]^d: the
    origin followed by the first n - 1 points of a scrambled Sobol sequence
    seeded by seed.

    Parameters
    ----------
    n : int
        The number of points, n >= 1.
    d : int
        The dimension.
    halfwidth : float
        Half the side length of the cube.
    seed : int
        The seed of the scrambling.

    Returns
    -------
    points : Array
        The probe points, shape (n, d).
    """
    if n < 1:
        raise ValueError(f"probe_count must be >= 1, got {n}.")
    sampler = qmc.Sobol(d, scramble=True, seed=seed)
    unit = sampler.random_base2(max(n - 2, 0).bit_length())[: n - 1]
    points = halfwidth * (2 * np.asarray(unit) - 1)
    return np.concatenate([np.zeros((1, d)), points.reshape(-1, d)])


def _sup_ratio(
    function: BaseFunction, points: Array, tag: FunctionClassTag, name: str
) -> float:
    values = vmap(function)(points)
    finite = np.isfinite(values)
    if not bool(finite.all()):
        bad = int(np.argmin(finite))
        raise InvalidFunctionError(points[bad].tolist(), name)
    # |f| / rho, evaluated in log space to avoid under/overflow of rho
    log_rho = tag.log_weight(points).sum(-1)
    ratio = np.abs(values) * np.exp(-log_rho)
    return float(ratio.max())


def validate_membership(
    spec: ProblemSpec,
    params: ClassParams = None,
    probe_count: int = 1024,
    seed: int = 0,
) -> MembershipReport:
    """
    Certifies the class norms of v and V by sampling: measures the sup of
    |f| / rho over a deterministic probe set on [-L, L]^d and compares it to
    beta1 and beta2. Violations are advisory and only logged as warnings.

    Parameters
    ----------
    spec : ProblemSpec
        The problem.
    params : ClassParams = None
        The class parameters, defaults to spec.params.
    probe_count : int = 1024
        The number of probe points.
    seed : int = 0
        The seed of the probe set.

    Returns
    -------
    report : MembershipReport
        The measured norms and flags.
    """
    params = spec.params if params is None else params
    tag = spec.function_class
    points = probe_points(probe_count, spec.d, spec.halfwidth, seed)

    v_norm = _sup_ratio(spec.v, points, tag, "v")
    V_norm = _sup_ratio(spec.V, points, tag, "V")

    # Equality must pass, allow for round-off in the weight ratio
    tol = 1e-9
    v_ok = v_norm <= params.beta1 * (1 + tol)
    V_ok = V_norm <= params.beta2 * (1 + tol)
    if not v_ok:
        logger.warning(
            "Measured norm of v is %.6g > beta1 = %.6g.", v_norm, params.beta1
        )
    if not V_ok:
        logger.warning(
            "Measured norm of V is %.6g > beta2 = %.6g.", V_norm, params.beta2
        )
    return MembershipReport(v_norm, V_norm, v_ok, V_ok, probe_count, seed)


def shift_to_origin(spec: ProblemSpec) -> ProblemSpec:
    """
    Moves the evaluation point to the origin by translating the input
    functions, v -> v(. + u*) and V -> V(. + u*). Returns the input unchanged
    when u* is already zero.

    Parameters
    ----------
    spec : ProblemSpec
        The problem.

    Returns
    -------
    spec : ProblemSpec
        The equivalent problem with u* = 0.
    """
    if spec.at_origin:
        return spec
    offset = spec.u_star
    return spec.set(
        ["v", "V", "u_star"],
        [spec.v.shift(offset), spec.V.shift(offset), np.zeros(spec.d)],
    )


def integration_problem(
    v: Union[BaseFunction, Callable, float], d: int, t: float, **kwargs
) -> ProblemSpec:
    """
    The Gaussian weighted integration problem S(v, 0) = I(v), the expectation
    of v under N(0, t I_d), as a `ProblemSpec` with zero potential.
    """
    return ProblemSpec(d, t, v, Constant(0.0), **kwargs)


def _suite():
    custom = FunctionClassTag("Custom")
    return {
        "v1_V0_d1": dict(
            d=1, t_star=1.0, v=Constant(1.0), V=Constant(0.0),
            function_class=custom,
        ),
        "bump_V0_d1": dict(
            d=1, t_star=1.0, v=GaussianBump(), V=Constant(0.0)
        ),
        "bump_V0_d2": dict(
            d=2, t_star=1.0, v=GaussianBump(), V=Constant(0.0)
        ),
        "bump_Vbump_d1": dict(
            d=1, t_star=1.0, v=GaussianBump(), V=GaussianBump(0.5),
            params=ClassParams(beta2=0.5),
        ),
        "v1_Vconst_d1": dict(
            d=1, t_star=1.0, v=Constant(1.0), V=Constant(0.25),
            params=ClassParams(beta2=0.25), function_class=custom,
        ),
        "bump_Vneg_d1": dict(
            d=1, t_star=1.0, v=GaussianBump(), V=Constant(-0.5),
            params=ClassParams(beta2=0.5), function_class=custom,
        ),
        # Well cut at the cube edge, where |V| reaches beta2
        "harmonic_d1": dict(
            d=1, t_star=1.0, v=Constant(1.0), V=HarmonicPotential(radius=1.4),
            params=ClassParams(beta2=0.98, alpha=0.5, smoothness_r=2),
            function_class=FunctionClassTag("Custom", domain_halfwidth_L=1.4),
        ),
    }  # fmt: skip


SUITE = tuple(_suite())


def suite_case(name: str) -> ProblemSpec:
    """
    Builds one of the named suite problems.

    Parameters
    ----------
    name : str
        The case name, one of `SUITE`.

    Returns
    -------
    spec : ProblemSpec
        The problem.
    """
    cases = _suite()
    if name not in cases:
        raise ValueError(f"unknown suite case '{name}', expected {SUITE}.")
    return ProblemSpec(**cases[name])


def problem_from_dict(entry: Union[str, dict]) -> ProblemSpec:
    """
    Builds a problem from its config entry: either a suite case name or an
    object with d, t_star, u_star, v, V and the optional class_params and
    function_class objects.

    Parameters
    ----------
    entry : str, dict
        The config entry.

    Returns
    -------
    spec : ProblemSpec
        The problem.
    """
    if isinstance(entry, str):
        try:
            return suite_case(entry)
        except ValueError as error:
            raise ConfigError("problem", str(error)) from error
    if not isinstance(entry, dict):
        raise ConfigError("problem", "expected a suite name or an object.")

    for field in ["d", "t_star", "v"]:
        if field not in entry:
            raise ConfigError(f"problem.{field}", "missing required field.")

    d = entry["d"]
    kwargs = {}
    try:
        if "class_params" in entry:
            class_entry = dict(entry["class_params"])
            r = class_entry.get("smoothness_r", 1)
            class_entry.setdefault("alpha", d / r)
            kwargs["params"] = ClassParams(**class_entry)
        if "function_class" in entry:
            kwargs["function_class"] = FunctionClassTag(
                **entry["function_class"]
            )
    except (TypeError, ValueError) as error:
        raise ConfigError("problem.class_params", str(error)) from error

    functions = {}
    for name in ["v", "V"]:
        value = entry.get(name, 0.0)
        try:
            functions[name] = (
                function_from_dict(value) if isinstance(value, dict) else value
            )
        except (TypeError, ValueError) as error:
            raise ConfigError(f"problem.{name}", str(error)) from error
        if not isinstance(functions[name], (BaseFunction, int, float)):
            raise ConfigError(
                f"problem.{name}", "expected a preset object or a number."
            )

    try:
        return ProblemSpec(
            d,
            entry["t_star"],
            functions["v"],
            functions["V"],
            u_star=entry.get("u_star"),
            **kwargs,
        )
    except (TypeError, ValueError) as error:
        raise ConfigError("problem", str(error)) from error
