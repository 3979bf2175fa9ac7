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

# From the pytest docs:
#
# "The conftest.py file serves as a means of providing fixtures for an entire
# directory. Fixtures defined in a conftest.py can be used by any test in that
# package without needing to import them (pytest will automatically discover
# them)."

import logging

import pytest
import structlog

from helpers import PROBLEMS_DIR, chain2, mode_separation, scalar_lqg
from npg_probctl.model import TabularPolicy

logging.basicConfig(level=logging.ERROR)

structlog.configure(
    logger_factory=structlog.stdlib.LoggerFactory(),
    processors=[structlog.processors.JSONRenderer()],
)


@pytest.fixture(scope="function")
def chain2_problem():
    """The deterministic two-state chain with its costs."""
    return chain2()


@pytest.fixture(scope="function")
def stochastic_chain2_problem():
    """The two-state chain whose successor is flipped with probability 1/4."""
    return chain2(flip=0.25)


@pytest.fixture(scope="function")
def chain2_uniform(chain2_problem):
    problem, _ = chain2_problem
    return TabularPolicy.uniform(problem)


@pytest.fixture(scope="function")
def mode_separation_problem():
    return mode_separation()


@pytest.fixture(scope="function")
def scalar_benchmark():
    """The noiseless scalar LQG benchmark, horizon 1."""
    return scalar_lqg()


@pytest.fixture(scope="function")
def problems_dir():
    return PROBLEMS_DIR


@pytest.fixture(scope="function")
def output_dir(tmp_path):
    path = tmp_path / "out"
    path.mkdir()
    return path
