from __future__ import annotations
from pathlib import Path
from typing import Optional
import argparse
import csv
import io
import json
import logging
import sys
from zodiax import Base

import dKac.utils as dku
from .driver import MODES, cost_sweep, precompute, solve
from .errors import ConfigError
from .model import (
    ClassParams,
    FunctionClassTag,
    ProblemSpec,
    problem_from_dict,
    validate_membership,
)
from .quantum import QueryModel


__all__ = [
    "RunConfig",
    "load_config",
    "config_from_dict",
    "build_parser",
    "cmd_solve",
    "cmd_sweep",
    "cmd_precompute",
    "cmd_validate",
    "main",
]

logger = logging.getLogger(__name__)

RUN_MODES = MODES + ("both",)
CSV_HEADER = ["eps", "rmse", "evals", "queries", "slope_fit"]


class RunConfig(Base):
    """
    A validated run configuration.

    Attributes
    ----------
    problem : ProblemSpec
        The problem.
    eps : float, None
        The target accuracy.
    eps_list : list, None
        The accuracies of a sweep.
    mode : str
        "rand", "quant" or "both".
    seed : int
        The seed.
    replicates : int
        Solves per accuracy in a sweep.
    output_path : str, None
        The output file, None for stdout.
    precompute_dir : str, None
        The cv weight cache directory.
    threads : int
        Worker threads over terms.
    max_nodes : int
        The sparse grid node budget per term.
    cv_precision : float, None
        The cv weight precision.
    query_model : QueryModel, None
        Overrides of the quantum query model.
    """

    problem: ProblemSpec
    eps: Optional[float]
    eps_list: Optional[list]
    mode: str
    seed: int
    replicates: int
    output_path: Optional[str]
    precompute_dir: Optional[str]
    threads: int
    max_nodes: int
    cv_precision: Optional[float]
    query_model: Optional[QueryModel]

    def __init__(
        self: RunConfig,
        problem: ProblemSpec,
        eps: float = None,
        eps_list: list = None,
        mode: str = "rand",
        seed: int = 0,
        replicates: int = 1,
        output_path: str = None,
        precompute_dir: str = None,
        threads: int = 1,
        max_nodes: int = 50000,
        cv_precision: float = None,
        query_model: QueryModel = None,
    ):
        if not isinstance(problem, ProblemSpec):
            raise ConfigError("problem", "expected a problem.")
        self.problem = problem
        self.eps = None if eps is None else _positive("eps", eps)
        if eps_list is not None:
            if isinstance(eps_list, (int, float)) or not len(eps_list):
                raise ConfigError("eps_list", "expected a non-empty list.")
            eps_list = [_positive("eps_list", eps) for eps in eps_list]
        self.eps_list = eps_list
        if mode not in RUN_MODES:
            raise ConfigError("mode", f"expected one of {RUN_MODES}.")
        self.mode = mode
        self.seed = _integer("seed", seed)
        self.replicates = _integer("replicates", replicates, 1)
        self.output_path = output_path
        self.precompute_dir = precompute_dir
        self.threads = _integer("threads", threads, 1)
        self.max_nodes = _integer("max_nodes", max_nodes, 1)
        if cv_precision is not None:
            cv_precision = _positive("cv_precision", cv_precision)
        self.cv_precision = cv_precision
        self.query_model = query_model

    @property
    def modes(self: RunConfig) -> tuple:
        return MODES if self.mode == "both" else (self.mode,)

    def require_eps(self: RunConfig) -> float:
        if self.eps is None:
            raise ConfigError("eps", "missing required field.")
        return self.eps

    def sweep_eps(self: RunConfig) -> list:
        if self.eps_list is not None:
            return self.eps_list
        return [self.require_eps()]

    def solve_kwargs(self: RunConfig) -> dict:
        return {
            "precompute_dir": self.precompute_dir,
            "threads": self.threads,
            "max_nodes": self.max_nodes,
            "cv_precision": self.cv_precision,
            "model": self.query_model,
        }


def _positive(field: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(field, f"expected a number, got {value!r}.")
    if not value > 0:
        raise ConfigError(field, f"must be positive, got {value}.")
    return float(value)


def _integer(field: str, value, minimum: int = None) -> int:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(field, f"expected an integer, got {value!r}.")
    if int(value) != value:
        raise ConfigError(field, f"expected an integer, got {value!r}.")
    if minimum is not None and value < minimum:
        raise ConfigError(field, f"must be >= {minimum}, got {value}.")
    return int(value)


def load_config(path) -> dict:
    """
    Reads a JSON config file, raising `ConfigError` with the line and column
    of a syntax error.
    """
    try:
        text = Path(path).read_text()
    except OSError as error:
        raise ConfigError("config", f"can not read {path}: {error}") from error
    try:
        entry = json.loads(text)
    except json.JSONDecodeError as error:
        raise ConfigError(
            "config",
            f"line {error.lineno} column {error.colno}: {error.msg}",
        ) from error
    if not isinstance(entry, dict):
        raise ConfigError("config", "expected a JSON object.")
    return entry


def _class_overrides(problem: ProblemSpec, entry: dict) -> ProblemSpec:
    try:
        if "class_params" in entry:
            params = dict(entry["class_params"])
            r = params.get("smoothness_r", 1)
            params.setdefault("alpha", problem.d / r)
            problem = problem.set("params", ClassParams(**params))
    except (TypeError, ValueError) as error:
        raise ConfigError("class_params", str(error)) from error
    try:
        if "function_class" in entry:
            function_class = FunctionClassTag(**entry["function_class"])
            problem = problem.set("function_class", function_class)
    except (TypeError, ValueError) as error:
        raise ConfigError("function_class", str(error)) from error
    return problem


def config_from_dict(entry: dict) -> RunConfig:
    """
    Builds a `RunConfig` from a parsed config document.

    Parameters
    ----------
    entry : dict
        The document. "problem" is required, either a suite case name or a
        problem object. Top level "class_params" and "function_class"
        override the ones of the problem.

    Returns
    -------
    config : RunConfig
        The validated configuration.
    """
    if "problem" not in entry or entry["problem"] is None:
        raise ConfigError("problem", "missing required field.")
    problem = _class_overrides(problem_from_dict(entry["problem"]), entry)

    query_model = entry.get("query_model")
    if query_model is not None:
        try:
            query_model = QueryModel(1, **query_model)
        except (TypeError, ValueError) as error:
            raise ConfigError("query_model", str(error)) from error

    known = [
        "eps",
        "eps_list",
        "mode",
        "seed",
        "replicates",
        "precompute_dir",
        "threads",
        "max_nodes",
        "cv_precision",
    ]
    kwargs = {key: entry[key] for key in known if entry.get(key) is not None}
    output = entry.get("output_path", entry.get("output"))
    try:
        return RunConfig(
            problem, output_path=output, query_model=query_model, **kwargs
        )
    except (TypeError, ValueError) as error:
        if isinstance(error, ConfigError):
            raise
        raise ConfigError("config", str(error)) from error


def _emit(text: str, path: Optional[str]):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
        logger.info("Wrote %s", path)


def _json(document) -> str:
    return json.dumps(dku.to_builtin(document), indent=2) + "\n"


def cmd_solve(config: RunConfig) -> dict:
    """
    Solves the configured problem in every requested mode and writes the
    JSON report, keyed by mode when both modes run.
    """
    eps = config.require_eps()
    reports = {}
    for mode in config.modes:
        report = solve(
            config.problem, eps, mode, config.seed, **config.solve_kwargs()
        )
        print(
            f"{mode}: estimate {report.estimate:.10g} +/- "
            f"{report.reported_error:.3g}, evals {report.total_evals}, "
            f"queries {report.total_queries}",
            file=sys.stderr,
        )
        reports[mode] = report.to_dict()
    document = reports if config.mode == "both" else reports[config.mode]
    _emit(_json(document), config.output_path)
    return document


def _format(value) -> str:
    if value is None:
        return ""
    return f"{value:.10g}"


def _sweep_csv(sweep, writer, buffer):
    slope = _format(sweep.slope)
    writer.writerow(CSV_HEADER)
    for row in sweep.rows:
        writer.writerow(
            [_format(row[key]) for key in CSV_HEADER[:-1]] + [slope]
        )
    buffer.write(f"# slope_fit={slope}\n")


def cmd_sweep(config: RunConfig) -> str:
    """
    Runs a cost sweep over the configured accuracies and writes a CSV table
    with header eps,rmse,evals,queries,slope_fit. The fitted slope is
    repeated on every row, empty for a single accuracy, and written again
    as a footer comment.
    """
    eps_list = config.sweep_eps()
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    for mode in config.modes:
        sweep = cost_sweep(
            config.problem,
            eps_list,
            mode,
            config.replicates,
            config.seed,
            **config.solve_kwargs(),
        )
        if config.mode == "both":
            buffer.write(f"# mode={mode}\n")
        _sweep_csv(sweep, writer, buffer)
    text = buffer.getvalue()
    _emit(text, config.output_path)
    return text


def cmd_precompute(config: RunConfig) -> list:
    """
    Builds and caches the sparse approximants and cv weights of every term
    of the plan. Runs with an unchanged config only read the cache.
    """
    eps = config.require_eps()
    if config.precompute_dir is None:
        raise ConfigError("precompute_dir", "missing required field.")
    approximants = []
    for mode in config.modes:
        built = precompute(
            config.problem,
            eps,
            mode,
            config.seed,
            config.precompute_dir,
            config.max_nodes,
            config.cv_precision,
        )
        for approx in built:
            print(
                f"{mode}: k={approx.k} level={approx.level} "
                f"nodes={approx.n_nodes} entries={approx.n_entries}",
                file=sys.stderr,
            )
        approximants.extend(built)
    return approximants


def cmd_validate(config: RunConfig) -> dict:
    """
    Checks v and V against the class parameters and writes the report.
    Violations are advisory and do not change the exit status.
    """
    report = validate_membership(config.problem, seed=config.seed)
    document = report.to_dict()
    _emit(_json(document), config.output_path)
    return document


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "precompute": cmd_precompute,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration.")
    common.add_argument("--problem", help="Suite case name.")
    common.add_argument("--eps", type=float, help="Target accuracy.")
    common.add_argument(
        "--eps-list", type=float, nargs="+", help="Accuracies of a sweep."
    )
    common.add_argument("--mode", choices=RUN_MODES)
    common.add_argument("--seed", type=int)
    common.add_argument("--replicates", type=int)
    common.add_argument("--precompute-dir", help="cv weight cache.")
    common.add_argument("--threads", type=int)
    common.add_argument("--output", help="Output file, stdout if unset.")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(
        prog="dkac",
        description="Feynman-Kac path integrals by series decomposition.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name, command in COMMANDS.items():
        commands.add_parser(
            name, parents=[common], help=command.__doc__.split(".")[0]
        )
    return parser


def _configure_logging(args: argparse.Namespace):
    if args.quiet:
        level = logging.ERROR
    elif args.verbose >= 2:
        level = logging.DEBUG
    elif args.verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _config(args: argparse.Namespace) -> RunConfig:
    entry = {} if args.config is None else load_config(args.config)
    overrides = {
        "problem": args.problem,
        "eps": args.eps,
        "eps_list": args.eps_list,
        "mode": args.mode,
        "seed": args.seed,
        "replicates": args.replicates,
        "precompute_dir": args.precompute_dir,
        "threads": args.threads,
        "output_path": args.output,
    }
    entry.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(entry)


def main(argv: list = None) -> int:
    """
    Entry point of the dkac command. Returns 0 on success, 1 on runtime
    failures and 2 on configuration errors.
    """
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        config = _config(args)
        COMMANDS[args.command](config)
    except ConfigError as error:
        print(f"dkac: {error}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as error:
        print(f"dkac: {error}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
