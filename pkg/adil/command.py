"""Adil base command"""
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

import argparse
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Dict, Optional, Sequence, Tuple

from adil.util.config import RunConfig, default_config_path, default_output_dir, load_config

if TYPE_CHECKING:
    from adil.core import Adil

CommandFunc = Callable[["Context"], None]
Decorator = Callable[[CommandFunc], CommandFunc]
ArgSpec = Tuple[Tuple[str, ...], Dict[str, Any]]


def arg(*flags: str, **kwargs: Any) -> ArgSpec:
    """Describes one argparse argument, see :meth:`argparse.ArgumentParser.add_argument`."""
    return flags, kwargs


def arguments(*specs: ArgSpec) -> Decorator:
    """Sets command-specific arguments on a command function."""

    def arguments_decorator(func: CommandFunc) -> CommandFunc:
        setattr(func, "_cmd_arguments", specs)
        return func

    return arguments_decorator


class Command:
    name: str
    stage: Any
    func: CommandFunc
    arguments: Sequence[ArgSpec]

    def __init__(self, name: str, stage: Any, func: CommandFunc, args: Sequence[ArgSpec]) -> None:
        self.name = name
        self.stage = stage
        self.func = func
        self.arguments = args

    @property
    def help(self) -> str:
        doc = (self.func.__doc__ or "").strip()
        return doc.splitlines()[0] if doc else ""

    def __repr__(self) -> str:
        return f"<command '{self.name}' from stage '{self.stage.name}'>"


# Command invocation context
class Context:
    pipeline: "Adil"
    args: argparse.Namespace
    invoker: str

    config: RunConfig
    output: Path
    force: bool

    def __init__(self, pipeline: "Adil", args: argparse.Namespace, invoker: str) -> None:
        self.pipeline = pipeline
        self.args = args
        self.invoker = invoker
        self.force = bool(getattr(args, "force", False))

    # Lazily resolve expensive fields
    def __getattr__(self, name: str) -> Any:
        if name == "config":
            return self._get_config()
        if name == "output":
            return self._get_output()

        raise AttributeError(f"'{type(self).__name__}' object has no attribute '{name}'")

    def _get_config(self) -> RunConfig:
        path: Optional[str] = getattr(self.args, "config", None)
        seed = getattr(self.args, "seed", None)
        self.config = load_config(path or default_config_path(), seed=seed)
        return self.config

    def _get_output(self) -> Path:
        output = getattr(self.args, "output", None)
        if output is None:
            output = self.config.output or default_output_dir()
        self.output = Path(output)
        return self.output

    def derive(self, invoker: str, **overrides: Any) -> "Context":
        """A context for another command sharing this one's config and output."""
        args = argparse.Namespace(**{**vars(self.args), **overrides})
        ctx = Context(self.pipeline, args, invoker)
        ctx.config = self.config
        ctx.output = self.output
        return ctx
