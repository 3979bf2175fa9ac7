# -*- coding: utf-8 -*-
#
# Copyright © 2024 Genome Research Ltd. All rights reserved.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.
#
# @author Keith James <kdj@sanger.ac.uk>

import argparse
import sys
from pathlib import Path

import numpy as np
import structlog
from npg.cli import add_logging_arguments, integer_in_range
from npg.log import configure_structlog

from npg_probctl import add_appinfo_structlog_processor, version
from npg_probctl.config import SolverConfig, load_config
from npg_probctl.exception import (
    CapacityError,
    ConfigurationError,
    ConsistencyError,
    ControlError,
    DomainError,
    NumericError,
)
from npg_probctl.files import (
    DiscreteProblemFile,
    LQGProblemFile,
    gain_rows,
    load_problem,
    policy_gain_rows,
    read_policy_csv,
    write_estimates_csv,
    write_gains_csv,
    write_lqg_trace_csv,
    write_marginals_csv,
    write_mm_trace_csv,
    write_policy_csv,
    write_problem,
    write_values_csv,
)
from npg_probctl.lqg import leqr, mm_lqg, riccati_lqr
from npg_probctl.mm import (
    Init,
    MMConfig,
    Mode,
    extract_deterministic,
    majorization_report,
    merl_identity_check,
    mm_iterate,
)
from npg_probctl.model import RandomSpec, TabularPolicy, random_policy, random_problem
from npg_probctl.oracle import (
    Objective,
    bellman_residual,
    compare_actions,
    dp_rsoc,
    dp_soc,
    exhaustive_policy_search,
)
from npg_probctl.pic import (
    closed_loop_equivalence_check,
    exact_smoothing,
    pic_policy_mc,
    pic_value_mc,
    smoothing_marginals,
)
from npg_probctl.projection import ProjectionKind, backward_pass
from npg_probctl.trajectory import desired_distribution

description = """
Solves finite-horizon control problems by projecting the distribution of
trajectories weighted by exp(-cost) onto the trajectory distributions that a
policy can induce, and iterating those projections to a fixed point.

Each sub-command reads a problem file, runs one solver and writes CSV files to the
output directory (by default the current directory). The available sub-commands
are described below.

Usage:

To see the CLI options available for the base command, use:

    probctl --help

each sub-command provides additional options which may be seen using:

    probctl <sub-command> --help

Examples:

    probctl --verbose project --kind m problems/chain2.json

    probctl --output-dir out mm --mode soc problems/chain2.json

    probctl --verbose --json check problems/random4.json

    probctl lqg --alpha 1 --oracle problems/scalar_lqg.json

    probctl generate --seed 7 --states 4 --actions 2 --horizon 3 random.json

Problem files are JSON documents with a top-level "kind" of "discrete" or "lqg".

A discrete problem declares "horizon", "initial" (a distribution over states),
"transitions" (a table [x][u][x'] repeated over the horizon, or one such table per
step), "stage_costs" ([x][u] or [t][x][u]), "terminal_costs" ([x]) and optionally
"sigma", a positive scale applied to every cost. Infinite costs are written as the
string "inf".

An LQG problem declares "horizon", "F_xi", "f" and "P" for the dynamics
x' ~ N(F_xi [x; u] + f, P), "R_xixi", "R_xi", "R_xx_T" and "R_x_T" for the
quadratic costs and optionally "x0_mean" and "x0_cov".

Either kind may instead contain a "random" block describing a generated instance.

Solver limits and tolerances may be set in the [solver] section of an INI file
given with --config e.g.

[solver]
max_iters = 500
tol_policy = 1e-9
enumeration_cap = 10000000

Exit codes are 0 on success, 2 for an invalid problem, parameter or a computation
too large to perform, 3 for a numerical failure and 4 for a failed check.
"""

log = structlog.get_logger("main")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3
EXIT_FAILED_CHECK = 4

ORACLE_TOLERANCE = 1e-12
MM_TOLERANCE = 1e-6
IDENTITY_TOLERANCE = 1e-9
SMOOTHING_TOLERANCE = 1e-10


def _discrete(loaded, command: str) -> DiscreteProblemFile:
    if not isinstance(loaded, DiscreteProblemFile):
        raise ConfigurationError(
            f"{command} requires a discrete problem; use the lqg sub-command for "
            f"{loaded.path}",
            path=loaded.path,
        )
    return loaded


def _lqg(loaded, command: str) -> LQGProblemFile:
    if not isinstance(loaded, LQGProblemFile):
        raise ConfigurationError(
            f"{command} requires an lqg problem: {loaded.path}", path=loaded.path
        )
    return loaded


def _prior(cli_args, loaded: DiscreteProblemFile) -> TabularPolicy:
    if getattr(cli_args, "prior", None) is None:
        return TabularPolicy.uniform(loaded.problem)
    return read_policy_csv(cli_args.prior, loaded.problem)


def project(cli_args, config: SolverConfig, output_dir: Path) -> int:
    loaded = _discrete(load_problem(cli_args.problem), "project")
    kind = ProjectionKind.parse(cli_args.kind, cli_args.alpha)
    prior = _prior(cli_args, loaded)

    values, policy = backward_pass(loaded.problem, loaded.cost, prior, kind)
    write_values_csv(output_dir / "values.csv", values)
    write_policy_csv(output_dir / "policy.csv", policy)

    log.info(
        "Projected",
        kind=str(kind),
        initial_value=values.initial_value(loaded.problem.initial),
        output_dir=str(output_dir),
    )
    return EXIT_OK


def mm(cli_args, config: SolverConfig, output_dir: Path) -> int:
    loaded = _discrete(load_problem(cli_args.problem), "mm")
    overrides = {"max_iters": cli_args.iters, "tol_policy": cli_args.tol}
    config = config.with_overrides(**overrides)

    if cli_args.init == Init.UNIFORM.value:
        mm_config = MMConfig.from_solver_config(config)
    else:
        init_policy = read_policy_csv(cli_args.init, loaded.problem)
        mm_config = MMConfig.from_solver_config(
            config, init=Init.CUSTOM, init_policy=init_policy
        )

    mode = Mode(cli_args.mode)
    trace = mm_iterate(loaded.problem, loaded.cost, mode, mm_config)
    write_mm_trace_csv(output_dir / "trace.csv", trace)
    write_policy_csv(output_dir / "policy.csv", trace.policy)

    extracted = extract_deterministic(trace.policy, config.mass_tol)
    log.info(
        "Finished MM iteration",
        mode=str(mode),
        converged=trace.converged,
        iterations=trace.iterations,
        objective=trace.objective[-1],
        collapsed=extracted.collapsed,
        max_residual=extracted.max_residual,
        actions=extracted.actions.tolist(),
    )
    return EXIT_OK


def lqg(cli_args, config: SolverConfig, output_dir: Path) -> int:
    loaded = _lqg(load_problem(cli_args.problem), "lqg")
    config = config.with_overrides(max_iters=cli_args.iters, tol_policy=cli_args.tol)
    dyn, cost = loaded.dynamics, loaded.cost

    trace = mm_lqg(dyn, cost, cli_args.alpha, MMConfig.from_solver_config(config))
    rows = list(policy_gain_rows("mm", trace.policy))
    if cli_args.oracle:
        lqr = riccati_lqr(dyn, cost)
        rows.extend(gain_rows("lqr", lqr.K, lqr.k))
        risk = leqr(dyn, cost)
        rows.extend(gain_rows("leqr", risk.K, risk.k))

    write_gains_csv(output_dir / "gains.csv", rows)
    write_lqg_trace_csv(output_dir / "trace.csv", trace)
    log.info(
        "Finished LQG MM iteration",
        alpha=cli_args.alpha,
        converged=trace.converged,
        iterations=trace.iterations,
        gain_delta=trace.records[-1].gain_delta,
    )
    return EXIT_OK


def pic(cli_args, config: SolverConfig, output_dir: Path) -> int:
    loaded = _discrete(load_problem(cli_args.problem), "pic")
    config = config.with_overrides(chunk_size=cli_args.chunk_size)
    prior = _prior(cli_args, loaded)

    estimate = pic_value_mc(
        loaded.problem,
        prior,
        loaded.cost,
        cli_args.state,
        cli_args.time,
        cli_args.samples,
        cli_args.seed,
        chunk_size=config.chunk_size,
        num_threads=config.num_threads,
    )
    write_estimates_csv(output_dir / "estimate.csv", [estimate])

    if cli_args.policy:
        policy = pic_policy_mc(
            loaded.problem,
            prior,
            loaded.cost,
            cli_args.samples,
            cli_args.seed,
            chunk_size=config.chunk_size,
            num_threads=config.num_threads,
        )
        write_policy_csv(output_dir / "policy.csv", policy)

    return EXIT_OK


def smooth(cli_args, config: SolverConfig, output_dir: Path) -> int:
    loaded = _discrete(load_problem(cli_args.problem), "smooth")
    prior = _prior(cli_args, loaded)

    policy = exact_smoothing(loaded.problem, prior, loaded.cost)
    marginals = smoothing_marginals(loaded.problem, prior, loaded.cost)
    write_policy_csv(output_dir / "policy.csv", policy)
    write_marginals_csv(output_dir / "marginals.csv", marginals)
    return EXIT_OK


def _line(name: str, passed: bool, **details) -> tuple[str, bool]:
    text = " ".join(f"{k}={v!r}" for k, v in details.items())
    return f"{name}: {'PASS' if passed else 'FAIL'} {text}".rstrip(), passed


def _check_discrete(cli_args, config: SolverConfig, loaded: DiscreteProblemFile):
    problem, cost = loaded.problem, loaded.cost
    cap = config.enumeration_cap
    lines = []

    solutions = {
        Objective.A: dp_soc(problem, cost),
        Objective.B: dp_rsoc(problem, cost),
    }
    for objective, solution in solutions.items():
        found = exhaustive_policy_search(
            problem,
            cost,
            objective,
            cap=config.policy_search_cap,
            num_threads=config.num_threads,
        )
        if found.objective == solution.objective:
            gap = 0.0
        else:
            gap = abs(found.objective - solution.objective)
        residual = bellman_residual(problem, cost, solution)
        name = "dp_soc" if objective == Objective.A else "dp_rsoc"
        lines.append(
            _line(
                f"oracle {name} vs exhaustive_policy_search({objective})",
                gap <= ORACLE_TOLERANCE and residual <= ORACLE_TOLERANCE,
                value_gap=gap,
                bellman_residual=residual,
            )
        )

    mm_config = MMConfig.from_solver_config(config)
    for mode, objective in ((Mode.SOC, Objective.A), (Mode.RSOC, Objective.B)):
        trace = mm_iterate(problem, cost, mode, mm_config)
        extracted = extract_deterministic(trace.policy, config.mass_tol)
        agreement = compare_actions(
            solutions[objective],
            extracted.actions,
            tolerance=MM_TOLERANCE,
            gap_tolerance=cli_args.gap_tolerance,
        )
        name = "dp_soc" if objective == Objective.A else "dp_rsoc"
        lines.append(
            _line(
                f"oracle mm_iterate({mode}) vs {name}",
                agreement.passed,
                max_regret=agreement.max_regret,
                near_ties=agreement.num_near_ties,
                iterations=trace.iterations,
            )
        )

    prior = TabularPolicy.uniform(problem)
    rng = np.random.default_rng(cli_args.seed)
    probes = [random_policy(problem, rng) for _ in range(cli_args.probes)]

    report = majorization_report(
        problem, cost, prior, probes, tolerance=IDENTITY_TOLERANCE, cap=cap
    )
    merl = merl_identity_check(
        problem, cost, probes, tolerance=IDENTITY_TOLERANCE, cap=cap
    )
    for r in (report.soc, report.rsoc, merl):
        lines.append(
            _line(
                r.name,
                r.passed,
                constant=r.constant,
                deviation=r.deviation,
                tangency_gap=r.tangency_gap,
                probes=r.num_probes,
                skipped=r.num_skipped,
            )
        )

    smoothed = exact_smoothing(problem, prior, cost)
    _, projected = backward_pass(problem, cost, prior, ProjectionKind.m())
    distance = smoothed.sup_distance(projected)
    desired = desired_distribution(problem, prior, cost, cap=cap)
    marginals = smoothing_marginals(problem, prior, cost)
    expected = np.array(
        [
            desired.state_marginal(t, problem.num_states)
            for t in range(problem.horizon + 1)
        ]
    )
    marginal_distance = float(np.abs(marginals - expected).max())
    lines.append(
        _line(
            "smoothing vs M-projection",
            distance <= SMOOTHING_TOLERANCE
            and marginal_distance <= SMOOTHING_TOLERANCE,
            policy_distance=distance,
            marginal_distance=marginal_distance,
        )
    )

    tv = closed_loop_equivalence_check(problem, prior, cost, cap=cap)
    lines.append(
        _line("closed-loop equivalence", tv < IDENTITY_TOLERANCE, tv_distance=tv)
    )
    return lines


def _relative_gain_error(a: np.ndarray, b: np.ndarray) -> float:
    return float((np.abs(a - b) / (1 + np.abs(b))).max(initial=0))


def _check_lqg(cli_args, config: SolverConfig, loaded: LQGProblemFile):
    dyn, cost = loaded.dynamics, loaded.cost
    mm_config = MMConfig.from_solver_config(config)
    lines = []

    for alpha, name, oracle in ((0.0, "riccati_lqr", riccati_lqr), (1.0, "leqr", leqr)):
        solution = oracle(dyn, cost)
        trace = mm_lqg(dyn, cost, alpha, mm_config, track_objective=alpha == 0)
        error = max(
            _relative_gain_error(trace.policy.K, solution.K),
            _relative_gain_error(trace.policy.k, solution.k),
        )
        lines.append(
            _line(
                f"oracle mm_lqg(alpha={alpha}) vs {name}",
                error <= cli_args.gain_tolerance,
                gain_error=error,
                iterations=trace.iterations,
            )
        )
        if alpha == 0:
            costs = np.array([r.objective_A for r in trace.records])
            rise = float(np.max(np.diff(costs), initial=0))
            lines.append(
                _line(
                    "lqg expected cost descent",
                    rise <= config.descent_slack * (1 + abs(costs[0])),
                    max_increase=rise,
                )
            )
    return lines


def check(cli_args, config: SolverConfig, output_dir: Path) -> int:
    loaded = load_problem(cli_args.problem)
    if isinstance(loaded, LQGProblemFile):
        lines = _check_lqg(cli_args, config, loaded)
    else:
        lines = _check_discrete(cli_args, config, loaded)

    path = output_dir / "report.txt"
    with open(path, "w", encoding="utf-8") as out:
        for text, _ in lines:
            out.write(text + "\n")

    num_failed = sum(1 for _, passed in lines if not passed)
    if num_failed:
        log.error(
            "Some checks did not pass",
            num_checks=len(lines),
            num_failed=num_failed,
            report=str(path),
        )
        return EXIT_FAILED_CHECK

    log.info("All checks passed", num_checks=len(lines), report=str(path))
    return EXIT_OK


def generate(cli_args, config: SolverConfig, output_dir: Path) -> int:
    spec = RandomSpec(
        cli_args.seed,
        cli_args.states,
        cli_args.actions,
        cli_args.horizon,
        deterministic=cli_args.deterministic,
    )
    problem, cost = random_problem(spec)
    write_problem(cli_args.output, problem, cost)
    return EXIT_OK


def _positive_float(value: str) -> float:
    try:
        v = float(value)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"{value!r} is not a number") from e
    if not v > 0:
        raise argparse.ArgumentTypeError(f"{value!r} is not positive")
    return v


def _non_negative_int(value: str) -> int:
    try:
        v = int(value)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"{value!r} is not an integer") from e
    if v < 0:
        raise argparse.ArgumentTypeError(f"{value!r} is negative")
    return v


def _add_problem_argument(parser: argparse.ArgumentParser):
    parser.add_argument("problem", help="A JSON problem file.", type=str)


def _add_prior_argument(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--prior",
        help="A policy CSV file (columns t, x, u, probability) to use as the prior. "
        "Defaults to the uniform policy.",
        type=str,
    )


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probctl",
        description=description,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    add_logging_arguments(parser)
    parser.add_argument(
        "--config",
        help="An INI file whose [solver] section sets solver limits and tolerances.",
        type=str,
    )
    parser.add_argument(
        "--output-dir",
        "--output_dir",
        help="The directory to write results to. Defaults to the current directory.",
        type=str,
        default=".",
    )
    parser.add_argument(
        "-t",
        "--threads",
        help="Number of threads to use for Monte-Carlo sampling and exhaustive "
        "search. Overrides the configuration file; the default is 1.",
        type=integer_in_range(1, 256),
    )
    parser.add_argument(
        "--version",
        help="Print the version and exit.",
        action="version",
        version=version(),
    )

    subparsers = parser.add_subparsers(title="Sub-commands", required=True)

    project_parser = subparsers.add_parser(
        "project",
        help="Run one backward pass, writing values.csv and policy.csv.",
    )
    project_parser.add_argument(
        "--kind",
        help="The projection; i, m or renyi. Defaults to i.",
        choices=["i", "m", "renyi"],
        default="i",
    )
    project_parser.add_argument(
        "--alpha",
        help="The order of the Renyi projection, strictly inside (0, 1).",
        type=float,
    )
    _add_prior_argument(project_parser)
    _add_problem_argument(project_parser)
    project_parser.set_defaults(func=project)

    mm_parser = subparsers.add_parser(
        "mm",
        help="Iterate projections to a fixed point, writing trace.csv and policy.csv.",
    )
    mm_parser.add_argument(
        "--mode",
        help="The objective to minimize; soc (expected cost), rsoc (exponential "
        "utility) or em (exponential utility by exact smoothing). Defaults to soc.",
        choices=[str(m) for m in Mode],
        default=str(Mode.SOC),
    )
    mm_parser.add_argument(
        "--iters",
        help="The maximum number of iterations.",
        type=integer_in_range(1, 10**7),
    )
    mm_parser.add_argument(
        "--tol", help="The policy change tolerance.", type=_positive_float
    )
    mm_parser.add_argument(
        "--init",
        help="The initial policy; uniform, or a policy CSV file. Defaults to uniform.",
        type=str,
        default=Init.UNIFORM.value,
    )
    _add_problem_argument(mm_parser)
    mm_parser.set_defaults(func=mm)

    lqg_parser = subparsers.add_parser(
        "lqg",
        help="Iterate linear-Gaussian projections, writing gains.csv and trace.csv.",
    )
    lqg_parser.add_argument(
        "--alpha",
        help="The projection; 0 for expected cost, 1 for exponential utility. "
        "Defaults to 0.",
        type=float,
        default=0.0,
    )
    lqg_parser.add_argument(
        "--iters",
        help="The maximum number of iterations.",
        type=integer_in_range(1, 10**7),
    )
    lqg_parser.add_argument(
        "--tol", help="The gain change tolerance.", type=_positive_float
    )
    lqg_parser.add_argument(
        "--oracle",
        help="Also write the Riccati (lqr) and exponential-cost Riccati (leqr) gains.",
        action="store_true",
    )
    _add_problem_argument(lqg_parser)
    lqg_parser.set_defaults(func=lqg)

    pic_parser = subparsers.add_parser(
        "pic",
        help="Estimate a value by Monte-Carlo path integrals, writing estimate.csv.",
    )
    pic_parser.add_argument(
        "--samples",
        help="The number of rollouts. Defaults to 10000.",
        type=integer_in_range(1, 10**9),
        default=10_000,
    )
    pic_parser.add_argument(
        "--seed",
        help="The random seed. Defaults to 0.",
        type=_non_negative_int,
        default=0,
    )
    pic_parser.add_argument(
        "--state",
        help="The starting state. Defaults to 0.",
        type=_non_negative_int,
        default=0,
    )
    pic_parser.add_argument(
        "--time",
        help="The starting time. Defaults to 0.",
        type=_non_negative_int,
        default=0,
    )
    pic_parser.add_argument(
        "--chunk-size",
        "--chunk_size",
        help="The number of rollouts drawn from each random stream.",
        type=integer_in_range(1, 10**9),
    )
    pic_parser.add_argument(
        "--policy",
        help="Also estimate the policy, using --samples rollouts per state and "
        "action, and write policy.csv.",
        action="store_true",
    )
    _add_prior_argument(pic_parser)
    _add_problem_argument(pic_parser)
    pic_parser.set_defaults(func=pic)

    smooth_parser = subparsers.add_parser(
        "smooth",
        help="Compute the exact smoothing policy and state marginals, writing "
        "policy.csv and marginals.csv.",
    )
    _add_prior_argument(smooth_parser)
    _add_problem_argument(smooth_parser)
    smooth_parser.set_defaults(func=smooth)

    check_parser = subparsers.add_parser(
        "check",
        help="Compare the solvers with brute-force oracles and check their "
        "identities, writing report.txt.",
    )
    check_parser.add_argument(
        "--probes",
        help="The number of random probe policies. Defaults to 50.",
        type=integer_in_range(1, 10**6),
        default=50,
    )
    check_parser.add_argument(
        "--seed",
        help="The random seed for probe policies. Defaults to 0.",
        type=_non_negative_int,
        default=0,
    )
    check_parser.add_argument(
        "--gap-tolerance",
        "--gap_tolerance",
        help="Accept an MM action with regret below this value where the two best "
        "oracle actions are this close. Defaults to 0, a strict comparison.",
        type=float,
        default=0.0,
    )
    check_parser.add_argument(
        "--gain-tolerance",
        "--gain_tolerance",
        help="The largest relative difference accepted between LQG MM gains and "
        "Riccati gains. Defaults to 0.02.",
        type=_positive_float,
        default=0.02,
    )
    _add_problem_argument(check_parser)
    check_parser.set_defaults(func=check)

    generate_parser = subparsers.add_parser(
        "generate", help="Write a random discrete problem file."
    )
    generate_parser.add_argument(
        "--seed",
        help="The random seed.",
        type=_non_negative_int,
        required=True,
    )
    generate_parser.add_argument(
        "--states",
        help="The number of states.",
        type=integer_in_range(1, 10**6),
        required=True,
    )
    generate_parser.add_argument(
        "--actions",
        help="The number of actions.",
        type=integer_in_range(1, 10**6),
        required=True,
    )
    generate_parser.add_argument(
        "--horizon", help="The horizon.", type=integer_in_range(1, 10**6), required=True
    )
    generate_parser.add_argument(
        "--deterministic",
        help="Generate point-mass transitions.",
        action="store_true",
    )
    generate_parser.add_argument("output", help="The problem file to write.", type=str)
    generate_parser.set_defaults(func=generate)

    return parser


def _context(e: ControlError) -> dict:
    return {k: str(v) for k, v in vars(e).items() if k != "message" and v is not None}


def _fail(e: ControlError, code: int) -> int:
    message = e.message if hasattr(e, "message") else str(e)
    log.error(message, error=type(e).__name__, **_context(e))
    print(f"probctl: error: {message}", file=sys.stderr)
    if isinstance(e, DomainError) and e.hint is not None:
        print(f"probctl: hint: {e.hint}", file=sys.stderr)
    return code


def run(argv: list[str] | None = None) -> int:
    """Parse the arguments, run a sub-command and return its exit code.

    Usage errors exit via argparse with code 2.
    """
    args = _parser().parse_args(argv)
    configure_structlog(
        config_file=args.log_config,
        debug=args.debug,
        verbose=args.verbose,
        colour=args.colour,
        json=args.json,
    )
    add_appinfo_structlog_processor()

    try:
        config = load_config(args.config).with_overrides(num_threads=args.threads)
        output_dir = Path(args.output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        return args.func(args, config, output_dir)
    except (ConfigurationError, CapacityError) as e:
        return _fail(e, EXIT_INVALID)
    except NumericError as e:
        return _fail(e, EXIT_NUMERIC)
    except ConsistencyError as e:
        return _fail(e, EXIT_FAILED_CHECK)


def main():
    sys.exit(run())
