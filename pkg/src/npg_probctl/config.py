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

"""Solver configuration, loadable from an INI file section."""

from dataclasses import dataclass, fields, replace
from pathlib import Path

from npg.conf import IniData
from structlog import get_logger

from npg_probctl.exception import ConfigurationError

log = get_logger(__name__)

SECTION = "solver"


@dataclass(frozen=True)
class SolverConfig:
    """Limits and tolerances shared by the solvers.

    Values read from an INI file arrive as strings and are coerced to the type of
    the field default. An INI file section looks like this:

    [solver]
    enumeration_cap = 10000000
    max_iters = 500
    tol_policy = 1e-9
    num_threads = 4
    """

    enumeration_cap: int = 10_000_000
    """Largest trajectory support that may be enumerated exhaustively."""
    exact_monitor_cap: int = 1_000_000
    """Largest support for which the MM objectives of the first and last policies
    are checked against enumeration."""
    policy_search_cap: int = 1_000_000
    """Largest number of deterministic policies an exhaustive search may visit."""
    max_iters: int = 500
    tol_policy: float = 1e-9
    tol_objective: float = 1e-12
    descent_slack: float = 1e-10
    mass_tol: float = 1e-6
    chunk_size: int = 4096
    """Number of Monte-Carlo samples drawn from each random stream."""
    num_threads: int = 1

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            kind = type(f.default)
            try:
                if value is None or value == "":
                    coerced = f.default
                elif kind is int:
                    coerced = int(float(value))
                else:
                    coerced = kind(value)
            except (TypeError, ValueError) as e:
                raise ConfigurationError(
                    f"Invalid value for {f.name}: {value!r}", path=f.name
                ) from e
            object.__setattr__(self, f.name, coerced)

        for name in (
            "enumeration_cap",
            "exact_monitor_cap",
            "policy_search_cap",
            "max_iters",
            "chunk_size",
            "num_threads",
        ):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be at least 1", path=name)
        for name in ("tol_policy", "tol_objective", "descent_slack", "mass_tol"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive", path=name)

    def with_overrides(self, **kwargs) -> "SolverConfig":
        """Return a copy with the non-None keyword values replacing the current
        ones."""
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


def load_config(path: Path | str | None) -> SolverConfig:
    """Load a solver configuration from the [solver] section of an INI file.

    Args:
        path: The INI file. If None, the defaults are returned.

    Returns:
        A new configuration.
    """
    if path is None:
        return SolverConfig()

    if not Path(path).is_file():
        raise ConfigurationError(f"Configuration file not found: {path}", path=path)

    try:
        config = IniData(SolverConfig).from_file(path, SECTION)
    except ConfigurationError:
        raise
    except Exception as e:
        raise ConfigurationError(
            f"Failed to read section [{SECTION}] of {path}: {e}", path=path
        ) from e

    log.debug("Loaded solver configuration", path=str(path), config=config)
    return config
