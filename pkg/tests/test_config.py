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


import pytest
from pytest import mark as m

from npg_probctl.config import SolverConfig, load_config
from npg_probctl.exception import ConfigurationError
from npg_probctl.mm import MMConfig


@m.describe("Solver configuration")
class TestSolverConfig:
    @m.context("When no file is given")
    @m.it("Returns the defaults")
    def test_defaults(self):
        config = load_config(None)
        assert config == SolverConfig()
        assert config.enumeration_cap == 10_000_000
        assert config.max_iters == 500
        assert config.num_threads == 1

    @m.context("When an INI file is given")
    @m.it("Reads and coerces the [solver] section")
    def test_load(self, tmp_path):
        path = tmp_path / "probctl.ini"
        path.write_text(
            "[solver]\n"
            "enumeration_cap = 1e6\n"
            "max_iters = 50\n"
            "tol_policy = 1e-6\n"
            "num_threads = 4\n"
        )
        config = load_config(path)
        assert config.enumeration_cap == 1_000_000
        assert config.max_iters == 50
        assert config.tol_policy == 1e-6
        assert config.num_threads == 4
        assert config.chunk_size == 4096

    @m.context("When the file does not exist")
    @m.it("Raises a configuration error naming the path")
    def test_missing(self, tmp_path):
        path = tmp_path / "absent.ini"
        with pytest.raises(ConfigurationError) as info:
            load_config(path)
        assert info.value.path == path

    @m.context("When a value cannot be coerced")
    @m.it("Raises a configuration error")
    def test_invalid(self, tmp_path):
        path = tmp_path / "probctl.ini"
        path.write_text("[solver]\nmax_iters = many\n")
        with pytest.raises(ConfigurationError):
            load_config(path)

    @m.context("When a limit is not positive")
    @m.it("Raises a configuration error naming the field")
    def test_not_positive(self):
        with pytest.raises(ConfigurationError) as info:
            SolverConfig(max_iters=0)
        assert info.value.path == "max_iters"
        with pytest.raises(ConfigurationError):
            SolverConfig(tol_policy=0.0)

    @m.context("When overrides are applied")
    @m.it("Replaces only the values given")
    def test_overrides(self):
        config = SolverConfig(max_iters=20).with_overrides(
            max_iters=None, num_threads=8
        )
        assert config.max_iters == 20
        assert config.num_threads == 8

    @m.context("When an MM configuration is made from a solver configuration")
    @m.it("Takes its limits, with keyword overrides")
    def test_mm_config(self):
        config = SolverConfig(max_iters=20, tol_policy=1e-5)
        mm_config = MMConfig.from_solver_config(config, max_iters=7)
        assert mm_config.max_iters == 7
        assert mm_config.tol_policy == 1e-5
        assert mm_config.exact_monitor_cap == config.exact_monitor_cap
