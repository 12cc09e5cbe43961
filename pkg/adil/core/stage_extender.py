"""Adil stage extender"""
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

import inspect
from types import ModuleType as StageModule
from typing import TYPE_CHECKING, Any, Iterable, MutableMapping, Optional, Type

from adil import stage, stages
from adil.error import ExistingStageError

from .adil_mixin_base import MixinBase

if TYPE_CHECKING:
    from .adil_pipeline import Adil


class StageExtender(MixinBase):
    # Initialized during instantiation
    stages: MutableMapping[str, stage.Stage]

    def __init__(self: "Adil", **kwargs: Any) -> None:
        # Initialize stage map
        self.stages = {}

        # Propagate initialization to other mixins
        super().__init__(**kwargs)

    def load_stage(self: "Adil", cls: Type[stage.Stage], *, comment: Optional[str] = None) -> None:
        self.log.debug("Loading %s", cls.format_desc(comment))

        if cls.name in self.stages:
            old = type(self.stages[cls.name])
            raise ExistingStageError(old, cls)

        stg = cls(self)
        stg.comment = comment
        self.register_commands(stg)
        self.stages[cls.name] = stg

    def _load_all_from_package(
        self: "Adil", substages: Iterable[StageModule], *, comment: Optional[str] = None
    ) -> None:
        for module in substages:
            for sym in dir(module):
                cls = getattr(module, sym)
                if inspect.isclass(cls) and issubclass(cls, stage.Stage) and cls is not stage.Stage:
                    self.load_stage(cls, comment=comment)

    def load_all_stages(self: "Adil") -> None:
        self._load_all_from_package(stages.substages)
        self.log.debug("All stages loaded: %s", ", ".join(sorted(self.stages)))
