"""Adil base pipeline"""
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

import logging
from typing import Optional, Sequence

from .artifact_store import ArtifactStore
from .command_dispatcher import CommandDispatcher
from .stage_extender import StageExtender


class Adil(StageExtender, CommandDispatcher, ArtifactStore):
    # Initialized during instantiation
    log: logging.Logger

    def __init__(self) -> None:
        self.log = logging.getLogger("pipeline")

        # Initialize mixins
        super().__init__()

        self.load_all_stages()

    @classmethod
    def init_and_run(cls, argv: Optional[Sequence[str]] = None) -> int:
        return cls().dispatch(argv)
