from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from math import ceil, lgamma, log, exp
from typing import Optional
import logging
import time
import jax.numpy as np
from zodiax import Base

import dKac.utils as dku
from .estimators import TermEstimate, phi_rand
from .model import ClassParams, ProblemSpec, shift_to_origin
from .quantum import QueryModel, phi_quant
from .sampler import RngStream
from .series import product_h
from .smolyak import SparseApprox, build_sparse, precompute_cv_weights


__all__ = [
    "MODES",
    "BudgetRecord",
    "BudgetPlan",
    "TermReport",
    "SolveReport",
    "SweepResult",
    "plan_budget",
    "solve",
    "precompute",
    "cost_sweep",
    "fit_loglog_slope",
]

logger = logging.getLogger(__name__)

MODES = ("rand", "quant")
_MAX_TERMS = 200


class BudgetRecord(Base):
    """
    The plan of a single series term.

    Attributes
    ----------
    k : int
        The term index.
    eps_term : float
        The relative accuracy of the sparse approximant.
    m_or_kappa : int
        Residual samples (rand) or quantum queries (quant).
    skip : bool
        Whether the zero algorithm is used for the term.
    skip_reason : str, None
        "magnitude" when the term bound is below its share of eps,
        "embedding" when the cutoff on eps_term / m holds, else None.
    magnitude_bound : float
        The bound K^(k+1) beta1 beta2^k t^k / k! on the term.
    """

    k: int
    eps_term: float
    m_or_kappa: int
    skip: bool
    skip_reason: Optional[str]
    magnitude_bound: float

    def __init__(
        self, k, eps_term, m_or_kappa, skip_reason=None, magnitude_bound=0.0
    ):
        self.k = int(k)
        self.eps_term = float(eps_term)
        self.m_or_kappa = int(m_or_kappa)
        self.skip_reason = skip_reason
        self.skip = skip_reason is not None
        self.magnitude_bound = float(magnitude_bound)

    def to_dict(self: BudgetRecord) -> dict:
        return {
            "k": self.k,
            "eps_term": self.eps_term,
            "m_or_kappa": self.m_or_kappa,
            "skip": self.skip,
            "skip_reason": self.skip_reason,
            "magnitude_bound": self.magnitude_bound,
        }


class BudgetPlan(Base):
    """
    Per term accuracies and sample budgets of a complete algorithm.

    Attributes
    ----------
    eps : float
        The global target accuracy.
    mode : str
        "rand" or "quant".
    per_term : list
        The `BudgetRecord` of every planned term, in order of k.
    N_trunc : int
        The largest non skipped term index, -1 if every term is skipped.
    """

    eps: float
    mode: str
    per_term: list
    N_trunc: int

    def __init__(self, eps: float, mode: str, per_term: list):
        self.eps = float(eps)
        self.mode = mode
        self.per_term = list(per_term)
        active = [record.k for record in self.per_term if not record.skip]
        self.N_trunc = max(active) if active else -1

    @property
    def active(self: BudgetPlan) -> list:
        return [record for record in self.per_term if not record.skip]

    @property
    def trivial(self: BudgetPlan) -> bool:
        return self.N_trunc < 0

    def to_dict(self: BudgetPlan) -> dict:
        return {
            "eps": self.eps,
            "mode": self.mode,
            "N_trunc": self.N_trunc,
            "per_term": [record.to_dict() for record in self.per_term],
        }


def _ceil(value: float) -> int:
    # Powers like 0.01^-0.5 land a rounding error above the integer
    return max(1, ceil(value * (1 - 1e-12)))


def plan_budget(
    eps: float, params: ClassParams, t: float, mode: str = "rand"
) -> BudgetPlan:
    """
    Plans the per term accuracies and budgets. For the randomised algorithm
    eps_k = eps^(2/(alpha+2)) k! / (beta1 beta2^k t^k 2^(k+1)) and
    m = ceil(eps^(-2 alpha / (alpha+2))), for the quantum algorithm
    eps_k = eps^(1/(alpha+1)) k! / (beta1 beta2^k t^k 2^(k+2)) and
    kappa = ceil(eps^(-alpha/(alpha+1))).

    A term is skipped when its magnitude bound is at most eps / 2^(k+1), or
    when eps_k / m (eps_k / kappa) is at least K^(k+1). Terms are planned
    until every later term is certain to be skipped by magnitude.

    Parameters
    ----------
    eps : float
        The target accuracy.
    params : ClassParams
        The class parameters.
    t : float
        The time horizon.
    mode : str = "rand"
        "rand" or "quant".

    Returns
    -------
    plan : BudgetPlan
        The plan.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}.")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got '{mode}'.")
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}.")

    alpha, K = params.alpha, params.embed_K
    b1, b2 = params.beta1, params.beta2
    if mode == "rand":
        scale = eps ** (2 / (alpha + 2))
        budget = _ceil(eps ** (-2 * alpha / (alpha + 2)))
        split = 0
    else:
        scale = eps ** (1 / (alpha + 1))
        budget = _ceil(eps ** (-alpha / (alpha + 1)))
        split = 1

    records = []
    for k in range(_MAX_TERMS):
        # log of beta1 beta2^k t^k / k!
        log_size = log(b1) + k * log(b2 * t) - lgamma(k + 1)
        eps_term = scale * exp(-log_size - (k + 1 + split) * log(2))
        magnitude = exp(log_size + (k + 1) * log(K))

        if magnitude <= eps / 2 ** (k + 1):
            reason = "magnitude"
        elif eps_term / budget >= K ** (k + 1):
            reason = "embedding"
        else:
            reason = None
        records.append(BudgetRecord(k, eps_term, budget, reason, magnitude))

        # The ratio of consecutive magnitude tests is 2 K beta2 t / (k + 1)
        if reason == "magnitude" and k + 1 >= 2 * K * b2 * t:
            break

    plan = BudgetPlan(eps, mode, records)
    logger.info(
        "Planned %s budget for eps=%.3g: N_trunc=%d, %s=%d.",
        mode,
        eps,
        plan.N_trunc,
        "m" if mode == "rand" else "kappa",
        budget,
    )
    return plan


class TermReport(Base):
    """
    Itemised cost and result of one term of a solve.

    Attributes
    ----------
    record : BudgetRecord
        The plan of the term.
    estimate : TermEstimate
        The term estimate.
    n_nodes : int
        Evaluations of h at the sparse grid nodes.
    level : int
        The sparse grid level.
    probe_error : float
        The measured sup error of the approximant.
    precision_met : bool
        Whether the cv weight precompute reached its precision.
    """

    record: BudgetRecord
    estimate: TermEstimate
    n_nodes: int
    level: int
    probe_error: float
    precision_met: bool

    def __init__(
        self, record, estimate, n_nodes, level, probe_error, precision_met
    ):
        self.record = record
        self.estimate = estimate
        self.n_nodes = int(n_nodes)
        self.level = int(level)
        self.probe_error = float(probe_error)
        self.precision_met = bool(precision_met)

    def to_dict(self: TermReport) -> dict:
        return {
            "k": self.record.k,
            "eps_term": self.record.eps_term,
            "m_or_kappa": self.record.m_or_kappa,
            "value": self.estimate.value,
            "std_error": self.estimate.std_error,
            "precompute_error": self.estimate.precompute_error,
            "evals": self.estimate.n_evals,
            "queries": self.estimate.queries_used,
            "n_nodes": self.n_nodes,
            "level": self.level,
            "probe_error": self.probe_error,
            "precision_met": self.precision_met,
        }


class SolveReport(Base):
    """
    The result of a complete algorithm.

    Attributes
    ----------
    estimate : float
        The sum of the term estimates.
    eps : float
        The target accuracy.
    mode : str
        "rand" or "quant".
    total_evals : int
        Online evaluations: residual samples plus sparse grid nodes.
    total_queries : int
        Quantum queries, zero in randomised mode.
    precompute_evals : int
        The sparse grid node evaluations included in total_evals.
    per_term_estimates : list
        The `TermReport` of every computed term.
    plan : BudgetPlan
        The budget plan.
    seed : int
        The seed.
    wall_time : float
        Seconds spent in the solve.
    trivial : bool
        Whether every term was skipped and the estimate is zero.
    """

    estimate: float
    eps: float
    mode: str
    total_evals: int
    total_queries: int
    precompute_evals: int
    per_term_estimates: list
    plan: BudgetPlan
    seed: int
    wall_time: float
    trivial: bool

    def __init__(self, plan, per_term_estimates, seed, wall_time):
        self.plan = plan
        self.eps = plan.eps
        self.mode = plan.mode
        self.per_term_estimates = list(per_term_estimates)
        self.seed = int(seed)
        self.wall_time = float(wall_time)
        self.trivial = plan.trivial

        terms = self.per_term_estimates
        self.estimate = float(sum(term.estimate.value for term in terms))
        self.precompute_evals = sum(term.n_nodes for term in terms)
        self.total_evals = self.precompute_evals + sum(
            term.estimate.n_evals for term in terms
        )
        self.total_queries = sum(
            term.estimate.queries_used for term in terms
        )

    @property
    def reported_error(self: SolveReport) -> float:
        """
        Term standard errors and precompute errors combined in quadrature.
        """
        squares = sum(
            term.estimate.std_error**2 + term.estimate.precompute_error**2
            for term in self.per_term_estimates
        )
        return float(np.sqrt(squares))

    @property
    def budget_met(self: SolveReport) -> bool:
        """
        False when some term precompute stopped at its sample cap short of
        its precision, so reported_error exceeds the planned budget.
        """
        return all(term.precision_met for term in self.per_term_estimates)

    @property
    def cost(self: SolveReport) -> int:
        return self.total_evals + self.total_queries

    def to_dict(self: SolveReport) -> dict:
        return dku.to_builtin(
            {
                "estimate": self.estimate,
                "reported_error": self.reported_error,
                "budget_met": self.budget_met,
                "eps": self.eps,
                "mode": self.mode,
                "trivial_accuracy": self.trivial,
                "N_trunc": self.plan.N_trunc,
                "total_evals": self.total_evals,
                "total_queries": self.total_queries,
                "precompute_evals": self.precompute_evals,
                "online_evals": self.total_evals - self.precompute_evals,
                "seed": self.seed,
                "per_term": [t.to_dict() for t in self.per_term_estimates],
                "plan": self.plan.to_dict(),
                "wall_time": self.wall_time,
            }
        )


def _cv_precision(eps: float, k: int) -> float:
    # A quarter of the eps / 2^(k+1) share of term k
    return eps / 2 ** (k + 3)


def _build_term(
    spec: ProblemSpec,
    record: BudgetRecord,
    eps: float,
    rng: RngStream,
    seed: int,
    precompute_dir,
    max_nodes: int,
    cv_precision: Optional[float],
) -> SparseApprox:
    k, d, t = record.k, spec.d, spec.t_star
    approx = build_sparse(
        lambda points: product_h(spec.v, spec.V, points),
        record.eps_term,
        k,
        d,
        spec.function_class,
        spec.params,
        t=t,
        max_nodes=max_nodes,
        seed=seed,
        cache_dir=precompute_dir,
        h_key=dku.tree_digest((spec.v, spec.V)),
    )
    if cv_precision is None:
        cv_precision = _cv_precision(eps, k)
    return precompute_cv_weights(
        approx, k, t, d, cv_precision, rng.spawn(0), precompute_dir
    )


def _solve_term(
    spec: ProblemSpec,
    record: BudgetRecord,
    eps: float,
    mode: str,
    rng: RngStream,
    seed: int,
    precompute_dir,
    max_nodes: int,
    cv_precision: Optional[float],
    model: Optional[QueryModel],
) -> TermReport:
    k = record.k
    approx = _build_term(
        spec, record, eps, rng, seed, precompute_dir, max_nodes, cv_precision
    )
    if mode == "rand":
        estimate = phi_rand(
            spec, record.eps_term, record.m_or_kappa, k, approx, rng.spawn(1)
        )
    else:
        estimate = phi_quant(
            spec,
            record.eps_term,
            record.m_or_kappa,
            k,
            approx,
            rng.spawn(1),
            model,
        )
    logger.info(
        "Term k=%d: %.10g +/- %.3g (%d nodes, %d evals, %d queries)",
        k,
        estimate.value,
        estimate.total_error,
        approx.n_nodes,
        estimate.n_evals,
        estimate.queries_used,
    )
    return TermReport(
        record,
        estimate,
        approx.n_nodes,
        approx.level,
        approx.probe_error,
        approx.precision_met,
    )


def solve(
    spec: ProblemSpec,
    eps: float,
    mode: str = "rand",
    seed: int = 0,
    precompute_dir=None,
    threads: int = 1,
    max_nodes: int = 50000,
    cv_precision: float = None,
    model: QueryModel = None,
) -> SolveReport:
    """
    Runs the complete randomised or quantum algorithm: plans the budget,
    then estimates every non skipped term with its own random stream and
    sums the estimates.

    Parameters
    ----------
    spec : ProblemSpec
        The problem.
    eps : float
        The target accuracy.
    mode : str = "rand"
        "rand" or "quant".
    seed : int = 0
        The seed of all random streams.
    precompute_dir : str, Path = None
        The cache directory of approximants and cv weights, None to disable
        caching.
    threads : int = 1
        Worker threads over terms. The result does not depend on it.
    max_nodes : int = 50000
        The sparse grid node budget per term.
    cv_precision : float = None
        The standard error target of each term control variate integral,
        None for eps / 2^(k+3) on term k.
    model : QueryModel = None
        Quantum query model overrides, its kappa is replaced by the plan.

    Returns
    -------
    report : SolveReport
        The itemised report.
    """
    start = time.perf_counter()
    spec = shift_to_origin(spec)
    plan = plan_budget(eps, spec.params, spec.t_star, mode)
    if plan.trivial:
        logger.info("Trivial accuracy: every term is below eps.")

    rng = RngStream(seed)

    def run(record):
        return _solve_term(
            spec,
            record,
            eps,
            mode,
            rng.spawn(record.k),
            seed,
            precompute_dir,
            max_nodes,
            cv_precision,
            model,
        )

    if threads > 1 and len(plan.active) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            terms = list(pool.map(run, plan.active))
    else:
        terms = [run(record) for record in plan.active]

    report = SolveReport(plan, terms, seed, time.perf_counter() - start)
    logger.info(
        "Solved (%s, eps=%.3g): %.10g +/- %.3g, %d evals, %d queries.",
        mode,
        eps,
        report.estimate,
        report.reported_error,
        report.total_evals,
        report.total_queries,
    )
    return report


def precompute(
    spec: ProblemSpec,
    eps: float,
    mode: str = "rand",
    seed: int = 0,
    precompute_dir=None,
    max_nodes: int = 50000,
    cv_precision: float = None,
) -> list:
    """
    Builds the sparse approximants and cv weights of every planned term
    with the same streams `solve` uses, so a following solve with the same
    arguments hits the cache for every term.

    Parameters
    ----------
    spec : ProblemSpec
        The problem.
    eps : float
        The target accuracy.
    mode : str = "rand"
        "rand" or "quant".
    seed : int = 0
        The seed.
    precompute_dir : str, Path = None
        The cv weight cache directory.
    max_nodes : int = 50000
        The sparse grid node budget per term.
    cv_precision : float = None
        The cv weight precision.

    Returns
    -------
    approximants : list
        The `SparseApprox` of every non skipped term.
    """
    spec = shift_to_origin(spec)
    plan = plan_budget(eps, spec.params, spec.t_star, mode)
    rng = RngStream(seed)
    return [
        _build_term(
            spec,
            record,
            eps,
            rng.spawn(record.k),
            seed,
            precompute_dir,
            max_nodes,
            cv_precision,
        )
        for record in plan.active
    ]


def fit_loglog_slope(x, y) -> Optional[float]:
    """
    Least squares slope of log(y) against log(x), None when fewer than two
    distinct x are given.
    """
    slope = dku.loglog_slope(x, y)
    return None if slope != slope else slope


class SweepResult(Base):
    """
    The empirical cost curve of a solver.

    Attributes
    ----------
    mode : str
        "rand" or "quant".
    reference : float
        The reference value the errors are measured against.
    rows : list
        One dictionary per eps with eps, rmse, evals and queries, the costs
        averaged over replicates.
    slope : float, None
        Fitted slope of log(evals + queries) against log(1 / eps).
    """

    mode: str
    reference: float
    rows: list
    slope: Optional[float]

    def __init__(self, mode: str, reference: float, rows: list):
        self.mode = mode
        self.reference = float(reference)
        self.rows = list(rows)
        self.slope = fit_loglog_slope(
            [1 / row["eps"] for row in self.rows],
            [row["evals"] + row["queries"] for row in self.rows],
        )


def cost_sweep(
    spec: ProblemSpec,
    eps_list: list,
    mode: str = "rand",
    replicates: int = 1,
    seed: int = 0,
    reference: float = None,
    **kwargs,
) -> SweepResult:
    """
    Measures the error and cost of `solve` over a list of accuracies. Each
    replicate uses a seed derived from the seed and the replicate index.

    Parameters
    ----------
    spec : ProblemSpec
        The problem.
    eps_list : list
        The target accuracies.
    mode : str = "rand"
        "rand" or "quant".
    replicates : int = 1
        Solves per accuracy.
    seed : int = 0
        The root seed.
    reference : float = None
        The exact value, None to ask the oracle.
    **kwargs
        Passed to `solve`.

    Returns
    -------
    sweep : SweepResult
        The cost table and fitted slope.
    """
    if replicates < 1:
        raise ValueError(f"replicates must be >= 1, got {replicates}.")
    if reference is None:
        from .oracle import reference_value

        reference = reference_value(spec).value

    seeds = [dku.mix_stream_id(seed, r) % 2**31 for r in range(replicates)]
    rows = []
    for eps in eps_list:
        reports = [solve(spec, eps, mode, s, **kwargs) for s in seeds]
        errors = np.array([report.estimate - reference for report in reports])
        evals = [report.total_evals for report in reports]
        queries = [report.total_queries for report in reports]
        rows.append(
            {
                "eps": float(eps),
                "rmse": float(np.sqrt((errors**2).mean())),
                "evals": sum(evals) / len(evals),
                "queries": sum(queries) / len(queries),
            }
        )
        logger.info("Sweep %s eps=%.3g: %s", mode, eps, rows[-1])
    return SweepResult(mode, reference, rows)
