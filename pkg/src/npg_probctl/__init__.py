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


import importlib.metadata
import sys

import structlog

try:
    __version__ = importlib.metadata.version("npg-probctl-python")
except importlib.metadata.PackageNotFoundError:
    # Running from a source tree without an installed distribution
    __version__ = "0.0.0"


def _add_executable_info(_logger, _method_name, event: dict):
    """Add executable name and version to all log entries."""
    event["application"] = "npg-probctl-python"
    event["executable"] = sys.argv[0]
    event["version"] = version()
    return event


def add_appinfo_structlog_processor():
    """Add a custom structlog processor reporting executable information to the
    configuration. The processor is added once, however often this is called."""
    c = structlog.get_config()
    if _add_executable_info in c["processors"]:
        return
    c["processors"] = [_add_executable_info] + c["processors"]
    structlog.configure(**c)


def version() -> str:
    """Return the current version."""
    return __version__
