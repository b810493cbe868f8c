import importlib.metadata

import jax

jax.config.update("jax_enable_x64", True)

__version__ = importlib.metadata.version("dKac")

from . import (
    utils,
    errors,
    functions,
    model,
    series,
    sampler,
    smolyak,
    estimators,
    quantum,
    driver,
    oracle,
    cli,
)

# Add to __all__
modules = [
    errors,
    functions,
    model,
    series,
    sampler,
    smolyak,
    estimators,
    quantum,
    driver,
    oracle,
    cli,
]

__all__ = [module.__all__ for module in modules]


from .functions import (
    BaseFunction as BaseFunction,
    GaussianBump as GaussianBump,
    Constant as Constant,
    HarmonicPotential as HarmonicPotential,
    UserFunction as UserFunction,
)
from .model import (
    ClassParams as ClassParams,
    FunctionClassTag as FunctionClassTag,
    ProblemSpec as ProblemSpec,
    validate_membership as validate_membership,
    shift_to_origin as shift_to_origin,
    suite_case as suite_case,
)
from .series import (
    eval_transition_density as eval_transition_density,
    g_l1_norm as g_l1_norm,
    term_reference_value as term_reference_value,
)
from .sampler import (
    RngStream as RngStream,
    PathSample as PathSample,
    sample_path as sample_path,
    sample_batch as sample_batch,
)
from .smolyak import (
    SparseApprox as SparseApprox,
    build_sparse as build_sparse,
    eval_sparse as eval_sparse,
    precompute_cv_weights as precompute_cv_weights,
)
from .estimators import (
    TermEstimate as TermEstimate,
    mc_mean as mc_mean,
    phi_rand as phi_rand,
)
from .quantum import (
    QueryModel as QueryModel,
    ae_outcome_distribution as ae_outcome_distribution,
    q_quant_mean as q_quant_mean,
    phi_quant as phi_quant,
)
from .driver import (
    BudgetPlan as BudgetPlan,
    SolveReport as SolveReport,
    plan_budget as plan_budget,
    solve as solve,
    cost_sweep as cost_sweep,
)
from .oracle import (
    OracleResult as OracleResult,
    reference_value as reference_value,
)
