"""Adil command dispatcher"""
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
from typing import TYPE_CHECKING, Any, MutableMapping, Optional, Sequence

from adil import __version__, command, stage, util
from adil.error import AdilException, ExistingCommandError, exit_code_of

from .adil_mixin_base import MixinBase
from .metrics import (
    CommandCount,
    CommandLatencySecond,
    FailedCommand,
    UnhandledError,
    write_metrics,
)

if TYPE_CHECKING:
    from .adil_pipeline import Adil

METRICS_FILE = "metrics.prom"


def _global_flags(parser: argparse.ArgumentParser, default: Any) -> None:
    parser.add_argument("--config", metavar="PATH", default=default, help="JSON run config")
    parser.add_argument("--output", metavar="DIR", default=default, help="artifact directory")
    parser.add_argument(
        "--seed", metavar="N", type=int, default=default, help="overrides the config seed"
    )
    parser.add_argument(
        "--force",
        action="store_true",
        default=False if default is None else default,
        help="overwrite existing artifacts",
    )


class CommandDispatcher(MixinBase):
    # Initialized during instantiation
    commands: MutableMapping[str, command.Command]

    def __init__(self: "Adil", **kwargs: Any) -> None:
        # Initialize command map
        self.commands = {}

        # Propagate initialization to other mixins
        super().__init__(**kwargs)

    def register_command(
        self: "Adil", stg: stage.Stage, name: str, func: command.CommandFunc
    ) -> None:
        cmd = command.Command(name, stg, func, getattr(func, "_cmd_arguments", ()))

        if name in self.commands:
            orig = self.commands[name]
            raise ExistingCommandError(orig, cmd)

        self.commands[name] = cmd

    def unregister_command(self: "Adil", cmd: command.Command) -> None:
        del self.commands[cmd.name]

    def register_commands(self: "Adil", stg: stage.Stage) -> None:
        for name, func in sorted(util.misc.find_prefixed_funcs(stg, "cmd_"), key=lambda x: x[0]):
            done = False

            try:
                self.register_command(stg, name.replace("_", "-"), func)
                done = True
            finally:
                if not done:
                    self.unregister_commands(stg)

    def unregister_commands(self: "Adil", stg: stage.Stage) -> None:
        # Can't unregister while iterating, so collect commands to unregister afterwards
        to_unreg = [cmd for cmd in self.commands.values() if cmd.stage == stg]

        for cmd in to_unreg:
            self.unregister_command(cmd)

    def build_parser(self: "Adil") -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(
            prog="adil", description="Individually fair credit classifiers and fairness audits"
        )
        parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
        _global_flags(parser, None)

        # Subcommand flags only override the top-level ones when given
        common = argparse.ArgumentParser(add_help=False)
        _global_flags(common, argparse.SUPPRESS)

        subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
        for name in sorted(self.commands):
            cmd = self.commands[name]
            sub = subparsers.add_parser(name, parents=[common], help=cmd.help, description=cmd.help)
            for flags, kwargs in cmd.arguments:
                sub.add_argument(*flags, **kwargs)

        return parser

    def invoke(self: "Adil", ctx: command.Context) -> None:
        cmd = self.commands[ctx.invoker]
        CommandCount.labels(name=cmd.name).inc()
        with CommandLatencySecond.labels(name=cmd.name).time():
            self.log.info("Running '%s'", cmd.name)
            start = util.time.usec()
            cmd.func(ctx)
            elapsed = util.time.format_duration_us(util.time.usec() - start)
            self.log.info("'%s' finished in %s", cmd.name, elapsed)

    def dispatch(self: "Adil", argv: Optional[Sequence[str]] = None) -> int:
        """Parses `argv`, runs the command and returns the process exit code."""
        args = self.build_parser().parse_args(argv)
        ctx = command.Context(self, args, args.command)

        err: Optional[BaseException] = None
        try:
            self.invoke(ctx)
        except AdilException as exc:
            err = exc
            self.log.error("%s", util.error.describe(exc))
            self.log.debug("%s", util.error.format_exception(exc))
        except Exception as exc:  # skipcq: PYL-W0703
            err = exc
            UnhandledError.labels(type=type(exc).__name__).inc()
            self.log.error("Unexpected error in '%s'", ctx.invoker, exc_info=exc)

        code = exit_code_of(err)
        if code:
            FailedCommand.labels(name=ctx.invoker, exit_code=str(code)).inc()
        self._dump_metrics(ctx)
        return code

    def _dump_metrics(self: "Adil", ctx: command.Context) -> None:
        try:
            output = ctx.output
        except AdilException:
            # No readable config, nowhere to write
            return
        if output.is_dir():
            write_metrics(output / METRICS_FILE)
