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

from typing import Any


class ControlError(Exception):
    """The base class of all exceptions originating in this package."""

    pass


class ConfigurationError(ControlError):
    """Exception raised when a problem, policy, file or parameter is invalid.

    Examples of configuration errors are; tables whose dimensions do not agree,
    transition rows that do not sum to one, or a malformed problem file.

    Args:
        args: Optional positional arguments, the first of which should be a message
        string.
        path: The path of the offending file or the name of the offending field, if
        known.
    """

    def __init__(self, *args, path: Any = None):
        super().__init__(*args)
        self.message = args[0] if len(args) > 0 else ""
        self.path = path


class DomainError(ConfigurationError):
    """Exception raised when a parameter lies outside its admissible domain e.g. a
    Rényi order outside the open interval (0, 1).

    Args:
        args: Optional positional arguments, the first of which should be a message
        string.
        observed: The rejected value.
        hint: A suggestion for the caller e.g. the closed-form branch to use instead.
    """

    def __init__(self, *args, observed: Any = None, hint: str = None):
        super().__init__(*args)
        self.observed = observed
        self.hint = hint


class CapacityError(ControlError):
    """Exception raised when an exhaustive computation would exceed its size limit.

    Args:
        args: Optional positional arguments, the first of which should be a message
        string.
        observed: The size that would have been required.
        limit: The configured limit.
    """

    def __init__(self, *args, observed: Any = None, limit: Any = None):
        super().__init__(*args)
        self.message = args[0] if len(args) > 0 else ""
        self.observed = observed
        self.limit = limit


class NumericError(ControlError):
    """Exception raised when a computation produces a non-finite or otherwise
    unusable number.

    Args:
        args: Optional positional arguments, the first of which should be a message
        string.
        t: The time step at which the problem was detected, if known.
        x: The state at which the problem was detected, if known.
    """

    def __init__(self, *args, t: Any = None, x: Any = None):
        super().__init__(*args)
        self.message = args[0] if len(args) > 0 else ""
        self.t = t
        self.x = x


class DegenerateError(NumericError):
    """Exception raised when a normalizer is zero e.g. a prior row with no mass, a
    desired distribution with no surviving trajectory or a set of importance weights
    that all underflow."""

    pass


class InstabilityError(NumericError):
    """Exception raised when an iteration diverges."""

    pass


class BreakdownError(NumericError):
    """Exception raised when the risk-sensitive resolvent loses positivity."""

    pass


class ConsistencyError(ControlError):
    """Exception raised when an internal identity, such as monotone descent of a
    majorize-minimize iteration, is violated.

    Args:
        args: Optional positional arguments, the first of which should be a message
        string.
        observed: The observed value.
        expected: The expected value or bound.
    """

    def __init__(self, *args, observed: Any = None, expected: Any = None):
        super().__init__(*args)
        self.message = args[0] if len(args) > 0 else ""
        self.observed = observed
        self.expected = expected
