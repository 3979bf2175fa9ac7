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

"""Problem files and result tables.

Problem files are JSON documents with a top-level "kind" of either "discrete" or
"lqg". Tables may be given once, to be repeated over the horizon, or once per
step. Infinite costs are written as the string "inf". Instead of explicit tables a
file may contain a "random" block naming the seed and sizes of a generated
instance.

Result tables are CSV files. Floating point numbers are written at full
precision, so that they read back to the same values.
"""

import csv
import json
import math
import re
from dataclasses import dataclass
from enum import Enum, unique
from pathlib import Path
from typing import Any, Iterable

import numpy as np
from structlog import get_logger

from npg_probctl.exception import ConfigurationError
from npg_probctl.lqg import (
    LinearGaussianDynamics,
    LinearGaussianPolicy,
    LQGTrace,
    QuadraticCost,
    random_lqg,
)
from npg_probctl.mm import MMTrace
from npg_probctl.model import (
    CostModel,
    DiscreteProblem,
    RandomSpec,
    TabularPolicy,
    random_problem,
)
from npg_probctl.pic import McEstimate
from npg_probctl.projection import ValueTables

log = get_logger(__name__)

INF_TOKENS = frozenset(["inf", "+inf", "infinity", "+infinity"])


@unique
class Kind(Enum):
    DISCRETE = "discrete"
    LQG = "lqg"

    def __str__(self):
        return self.value


@dataclass(frozen=True, eq=False)
class DiscreteProblemFile:
    path: Path
    problem: DiscreteProblem
    cost: CostModel
    kind: Kind = Kind.DISCRETE


@dataclass(frozen=True, eq=False)
class LQGProblemFile:
    path: Path
    dynamics: LinearGaussianDynamics
    cost: QuadraticCost
    kind: Kind = Kind.LQG


DISCRETE_KEYS = frozenset(
    [
        "kind",
        "num_states",
        "num_actions",
        "horizon",
        "initial",
        "transitions",
        "stage_costs",
        "terminal_costs",
        "sigma",
        "random",
    ]
)
LQG_KEYS = frozenset(
    [
        "kind",
        "horizon",
        "state_dim",
        "action_dim",
        "F_xi",
        "f",
        "P",
        "R_xixi",
        "R_xi",
        "R_xx_T",
        "R_x_T",
        "x0_mean",
        "x0_cov",
        "random",
    ]
)

# Model field names that differ from their document keys
FIELD_KEYS = {"R_uu": "R_xixi"}


def _line_of(text: str, key: Any) -> int | None:
    if key is None:
        return None
    key = FIELD_KEYS.get(key, key)
    match = re.search(rf'"{re.escape(str(key))}"\s*:', text)
    if match is None:
        return None
    return text.count("\n", 0, match.start()) + 1


def _error(path: Path, text: str, key: Any, message: str) -> ConfigurationError:
    line = _line_of(text, key)
    location = f"{path}:{line}" if line is not None else f"{path}"
    return ConfigurationError(f"{location}: {message}", path=path)


def _decode(value: Any, key: str) -> Any:
    """Return value with the infinity sentinel strings replaced by floats."""
    if isinstance(value, list):
        return [_decode(v, key) for v in value]
    if isinstance(value, str):
        if value.strip().lower() in INF_TOKENS:
            return math.inf
        raise ConfigurationError(f"Invalid value {value!r} in {key}", path=key)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"Invalid value {value!r} in {key}", path=key)
    return value


def _encode(a: np.ndarray) -> Any:
    """Return nested lists of floats, with +inf replaced by its sentinel string."""
    if a.ndim == 0:
        v = float(a)
        return "inf" if v == math.inf else v
    return [_encode(x) for x in a]


def _array(value: Any, key: str) -> np.ndarray:
    try:
        return np.array(_decode(value, key), dtype=float)
    except ValueError as e:
        raise ConfigurationError(f"{key} is not a regular table: {e}", path=key) from e


def _table(doc: dict, key: str, ndim: int, horizon: int | None) -> np.ndarray:
    """Return a table from the document, repeating a time-invariant table over the
    horizon when the table has one dimension fewer than a per-step table."""
    if key not in doc:
        raise ConfigurationError(f"Missing required key {key!r}", path=key)
    a = _array(doc[key], key)
    if horizon is not None and a.ndim == ndim - 1:
        a = np.array(np.broadcast_to(a, (horizon, *a.shape)))
    if a.ndim != ndim:
        raise ConfigurationError(
            f"{key} must have {ndim - 1} or {ndim} dimensions, but has shape "
            f"{a.shape}",
            path=key,
        )
    if horizon is not None and a.shape[0] != horizon:
        raise ConfigurationError(
            f"{key} has {a.shape[0]} steps, but the horizon is {horizon}", path=key
        )
    return a


def _integer(doc: dict, key: str, required: bool = True) -> int | None:
    if key not in doc:
        if required:
            raise ConfigurationError(f"Missing required key {key!r}", path=key)
        return None
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigurationError(
            f"{key} must be a positive integer, but was {value!r}", path=key
        )
    return value


def _check_keys(doc: dict, allowed: frozenset):
    unknown = sorted(set(doc.keys()) - allowed)
    if unknown:
        raise ConfigurationError(f"Unknown key {unknown[0]!r}", path=unknown[0])


def _load_discrete(doc: dict) -> tuple[DiscreteProblem, CostModel]:
    _check_keys(doc, DISCRETE_KEYS)
    if "random" in doc:
        block = doc["random"]
        if not isinstance(block, dict):
            raise ConfigurationError("random must be an object", path="random")
        try:
            spec = RandomSpec(**block)
        except TypeError as e:
            raise ConfigurationError(f"Invalid random block: {e}", path="random")
        return random_problem(spec)

    horizon = _integer(doc, "horizon")
    initial = _array(doc.get("initial"), "initial")
    transitions = _table(doc, "transitions", 4, horizon)
    stage = _table(doc, "stage_costs", 3, horizon)
    terminal = _array(doc.get("terminal_costs"), "terminal_costs")
    sigma = doc.get("sigma", 1.0)
    if isinstance(sigma, bool) or not isinstance(sigma, (int, float)):
        raise ConfigurationError(f"sigma must be a number, not {sigma!r}", path="sigma")

    problem = DiscreteProblem(initial, transitions)
    for key, expected in (
        ("num_states", problem.num_states),
        ("num_actions", problem.num_actions),
    ):
        declared = _integer(doc, key, required=False)
        if declared is not None and declared != expected:
            raise ConfigurationError(
                f"{key} is {declared}, but the tables have {expected}", path=key
            )
    cost = CostModel.scaled(stage, terminal, float(sigma))
    cost.check(problem)
    return problem, cost


def _load_lqg(doc: dict) -> tuple[LinearGaussianDynamics, QuadraticCost]:
    _check_keys(doc, LQG_KEYS)
    if "random" in doc:
        block = doc["random"]
        if not isinstance(block, dict):
            raise ConfigurationError("random must be an object", path="random")
        try:
            return random_lqg(**block)
        except TypeError as e:
            raise ConfigurationError(f"Invalid random block: {e}", path="random")

    horizon = _integer(doc, "horizon")
    optional = {
        key: _array(doc[key], key)
        for key in ("x0_mean", "x0_cov")
        if key in doc
    }
    dyn = LinearGaussianDynamics(
        _table(doc, "F_xi", 3, horizon),
        _table(doc, "f", 2, horizon),
        _table(doc, "P", 3, horizon),
        **optional,
    )
    for key, expected in (("state_dim", dyn.state_dim), ("action_dim", dyn.action_dim)):
        declared = _integer(doc, key, required=False)
        if declared is not None and declared != expected:
            raise ConfigurationError(
                f"{key} is {declared}, but the tables have {expected}", path=key
            )
    cost = QuadraticCost(
        _table(doc, "R_xixi", 3, horizon),
        _table(doc, "R_xi", 2, horizon),
        _table(doc, "R_xx_T", 2, None),
        _table(doc, "R_x_T", 1, None),
    )
    cost.check(dyn)
    return dyn, cost


def load_problem(path: Path | str) -> DiscreteProblemFile | LQGProblemFile:
    """Load a problem file.

    Every table is validated as it is loaded. Errors are raised as
    ConfigurationError with a message prefixed by the file path and, where it can be
    found, the line of the offending key.

    Args:
        path: A JSON problem file.

    Returns:
        The problem with its costs.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"{path}: {e.strerror}", path=path) from e

    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}:{e.lineno}: {e.msg}", path=path) from e
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}:1: expected a JSON object", path=path)

    try:
        kind = Kind(doc.get("kind"))
    except ValueError as e:
        raise _error(
            path,
            text,
            "kind",
            f"kind must be one of {', '.join(str(k) for k in Kind)}, but was "
            f"{doc.get('kind')!r}",
        ) from e

    try:
        if kind == Kind.DISCRETE:
            problem, cost = _load_discrete(doc)
            loaded = DiscreteProblemFile(path, problem, cost)
        else:
            dyn, cost = _load_lqg(doc)
            loaded = LQGProblemFile(path, dyn, cost)
    except ConfigurationError as e:
        raise _error(path, text, e.path, e.message) from e

    log.info("Loaded problem file", path=str(path), kind=str(kind))
    return loaded


def write_problem(path: Path | str, problem: DiscreteProblem, cost: CostModel):
    """Write a discrete problem file with one table per step.

    The costs are written as stored, that is with any scale already applied, so
    the file declares sigma = 1 and loads back to bit-identical tables.
    """
    doc = {
        "kind": str(Kind.DISCRETE),
        "num_states": problem.num_states,
        "num_actions": problem.num_actions,
        "horizon": problem.horizon,
        "initial": _encode(problem.initial),
        "transitions": _encode(problem.transitions),
        "stage_costs": _encode(cost.stage),
        "terminal_costs": _encode(cost.terminal),
        "sigma": 1.0,
    }
    with open(path, "w", encoding="utf-8") as out:
        json.dump(doc, out, indent=2, allow_nan=False)
        out.write("\n")
    log.info("Wrote problem file", path=str(path))


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return repr(float(value))


def write_csv(path: Path | str, header: list[str], rows: Iterable[Iterable[Any]]):
    """Write rows to a CSV file with the given header."""
    with open(path, "w", newline="", encoding="utf-8") as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    log.debug("Wrote CSV file", path=str(path))


def write_policy_csv(path: Path | str, policy: TabularPolicy):
    tables = policy.tables
    write_csv(
        path,
        ["t", "x", "u", "probability"],
        (
            (t, x, u, tables[t, x, u])
            for t in range(tables.shape[0])
            for x in range(tables.shape[1])
            for u in range(tables.shape[2])
        ),
    )


def write_values_csv(path: Path | str, values: ValueTables):
    """Write Q and V, with terminal rows (t = T) carrying only V."""
    q, v = values.Q, values.V
    horizon, num_x, num_u = q.shape

    def rows():
        for t in range(horizon):
            for x in range(num_x):
                for u in range(num_u):
                    yield t, x, u, q[t, x, u], v[t, x]
        for x in range(num_x):
            yield horizon, x, None, None, v[horizon, x]

    write_csv(path, ["t", "x", "u", "Q", "V"], rows())


def write_mm_trace_csv(path: Path | str, trace: MMTrace):
    write_csv(
        path,
        ["iter", "objective_A", "objective_B", "policy_delta", "residual_mass"],
        (
            (
                r.iteration,
                r.objective_A,
                r.objective_B,
                None if math.isnan(r.policy_delta) else r.policy_delta,
                r.residual_mass,
            )
            for r in trace.records
        ),
    )


def write_lqg_trace_csv(path: Path | str, trace: LQGTrace):
    write_csv(
        path,
        ["iter", "objective_A", "gain_delta"],
        (
            (
                r.iteration,
                None if math.isnan(r.objective_A) else r.objective_A,
                None if math.isnan(r.gain_delta) else r.gain_delta,
            )
            for r in trace.records
        ),
    )


def write_estimates_csv(path: Path | str, estimates: Iterable[McEstimate]):
    write_csv(
        path,
        ["t", "x", "value", "std_err", "n_samples", "seed"],
        ((e.t, e.x, e.value, e.std_err, e.n_samples, e.seed) for e in estimates),
    )


def write_marginals_csv(path: Path | str, marginals: np.ndarray):
    write_csv(
        path,
        ["t", "x", "probability"],
        (
            (t, x, marginals[t, x])
            for t in range(marginals.shape[0])
            for x in range(marginals.shape[1])
        ),
    )


def _matrix_rows(source: str, param: str, stack: np.ndarray):
    for t, a in enumerate(stack):
        a = a.reshape(a.shape[0], -1)
        for i in range(a.shape[0]):
            for j in range(a.shape[1]):
                yield source, t, param, i, j, a[i, j]


def gain_rows(source: str, K: np.ndarray, k: np.ndarray, Sigma=None):
    """Yield gains.csv rows for the gains, offsets and optional covariances of one
    solution."""
    yield from _matrix_rows(source, "K", K)
    yield from _matrix_rows(source, "k", k[..., None])
    if Sigma is not None:
        yield from _matrix_rows(source, "Sigma", Sigma)


def policy_gain_rows(source: str, policy: LinearGaussianPolicy):
    return gain_rows(source, policy.K, policy.k, policy.Sigma)


def write_gains_csv(path: Path | str, rows: Iterable[tuple]):
    write_csv(path, ["source", "t", "param", "row", "col", "value"], rows)


def read_policy_csv(path: Path | str, problem: DiscreteProblem) -> TabularPolicy:
    """Read a policy written by write_policy_csv. Entries absent from the file are
    zero.

    Raises:
        ConfigurationError: naming the file and line of any invalid row.
    """
    path = Path(path)
    shape = (problem.horizon, problem.num_states, problem.num_actions)
    tables = np.zeros(shape)
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            missing = {"t", "x", "u", "probability"} - set(reader.fieldnames or [])
            if missing:
                raise ConfigurationError(
                    f"{path}:1: missing columns {', '.join(sorted(missing))}",
                    path=path,
                )
            for row in reader:
                try:
                    t, x, u = int(row["t"]), int(row["x"]), int(row["u"])
                    if min(t, x, u) < 0:
                        raise IndexError(f"negative index in ({t}, {x}, {u})")
                    tables[t, x, u] = float(row["probability"])
                except (ValueError, IndexError) as e:
                    raise ConfigurationError(
                        f"{path}:{reader.line_num}: invalid policy row: {e}",
                        path=path,
                    ) from e
    except OSError as e:
        raise ConfigurationError(f"{path}: {e.strerror}", path=path) from e

    try:
        policy = TabularPolicy(tables)
        policy.check(problem)
    except ConfigurationError as e:
        raise ConfigurationError(f"{path}: {e.message}", path=path) from e
    return policy
