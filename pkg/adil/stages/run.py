"""End-to-end experiment stage"""
# Copyright (C) 2024  Adil Developers
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

from adil.command import Context
from adil.stage import Stage
from adil.util.config import METHODS


class Run(Stage):
    name = "Run"

    def cmd_run(self, ctx: Context) -> None:
        """Run split, learn-metric, train for every method, then evaluate."""
        steps = (
            [("split", {}), ("learn-metric", {})]
            + [("train", {"method": method}) for method in METHODS]
            + [("evaluate", {"models": None})]
        )
        for invoker, overrides in steps:
            self.pipeline.invoke(ctx.derive(invoker, **overrides))
