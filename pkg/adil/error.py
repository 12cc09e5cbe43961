"""Adil Errors Constructor"""
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

from typing import TYPE_CHECKING, Any, ClassVar, Iterable, Optional, Type

if TYPE_CHECKING:
    from .command import Command
    from .stage import Stage

__all__ = [
    "AdilException",
    "AdilWarning",
    "AdversaryWarning",
    "ArtifactExistsError",
    "BoostingWarning",
    "ConfigError",
    "ConvergenceNotice",
    "DataError",
    "DegenerateSubspaceError",
    "DimensionMismatch",
    "DivergenceError",
    "ExistingCommandError",
    "ExistingStageError",
    "IntegrityError",
    "InvalidArgument",
    "IsolationError",
    "MissingArtifactError",
    "PreprocessWarning",
    "RoleError",
    "SchemaError",
    "UndefinedMetricError",
]


class AdilException(Exception):
    """Base exception class for Adil"""

    exit_code: ClassVar[int] = 1


class ConfigError(AdilException):
    """Invalid run configuration or command line usage"""

    exit_code: ClassVar[int] = 2


class InvalidArgument(ConfigError, ValueError):
    """An argument is outside of its documented range"""


class ArtifactExistsError(ConfigError):
    """Refused to overwrite an existing artifact without --force

    Attributes:
        path (`str`): The artifact that already exists.
    """

    def __init__(self, path: Any) -> None:
        self.path = str(path)
        super().__init__(f"Artifact '{self.path}' already exists, pass --force to overwrite")


class MissingArtifactError(ConfigError):
    """A stage input produced by an earlier stage is not present"""


class DataError(AdilException):
    """The data can't be used as given"""

    exit_code: ClassVar[int] = 3


class SchemaError(DataError):
    """Missing or mismatching columns"""


class DimensionMismatch(SchemaError, ValueError):
    """Feature dimension of an input does not match the model or metric"""

    def __init__(self, expected: int, got: int, what: str = "input") -> None:
        self.expected = expected
        self.got = got
        super().__init__(f"Dimension mismatch on {what}: expected {expected}, got {got}")


class RoleError(DataError):
    """A dataset with the wrong split role was passed to an operation

    Attributes:
        expected (`Iterable[str]`): Roles accepted by the operation.
        got (`str`): Role of the dataset that was passed.
    """

    def __init__(self, expected: Iterable[str], got: str, operation: str) -> None:
        self.expected = tuple(expected)
        self.got = got
        super().__init__(
            f"'{operation}' accepts datasets with role {'/'.join(self.expected)}, got '{got}'"
        )


class IntegrityError(DataError):
    """Artifact checksum does not match its content"""


class DegenerateSubspaceError(DataError):
    """The sensitive subspace can't be estimated from the metric split"""


class DivergenceError(DataError):
    """Training produced a non-finite or exploding loss

    Attributes:
        diagnostics (`dict`): Where the divergence was detected.
    """

    def __init__(self, message: str, **diagnostics: Any) -> None:
        self.diagnostics = diagnostics
        detail = ", ".join(f"{key}={value}" for key, value in diagnostics.items())
        super().__init__(f"{message} ({detail})" if detail else message)


class UndefinedMetricError(DataError):
    """A metric has no defined value for the given data"""


class IsolationError(AdilException):
    """Sensitive-data isolation between the metric and training rows is violated"""

    exit_code: ClassVar[int] = 4


class ExistingCommandError(AdilException):
    """Exception that raised when a command registered more then one.

    Attributes:
        old_cmd (:obj:`Command`): The old command that already registered.
        new_cmd (:obj:`Command`): The new command that already registered.
    """

    def __init__(self, old_cmd: "Command", new_cmd: "Command") -> None:
        old_name = type(old_cmd.stage).__name__
        new_name = type(new_cmd.stage).__name__
        self.old_cmd = old_cmd
        self.new_cmd = new_cmd
        super().__init__(
            f"Attempt to replace existing command '{old_cmd.name}' (from {old_name}) with '{new_cmd.name}' (from {new_name})"
        )


class ExistingStageError(AdilException):
    """Exception that raised when two same Stage name registered."""

    def __init__(self, old_stage: Type["Stage"], new_stage: Type["Stage"]) -> None:
        self.old_stage = old_stage
        self.new_stage = new_stage
        super().__init__(f"Stage '{old_stage.name}' ({old_stage.__name__}) already exists")


class AdilWarning(UserWarning):
    """Base warning class for recoverable conditions"""


class PreprocessWarning(AdilWarning):
    """A column was encoded differently than requested"""


class ConvergenceNotice(AdilWarning):
    """An iterative solver stopped before converging"""


class AdversaryWarning(AdilWarning):
    """The adversary hit a non-finite objective and fell back to its best iterate"""


class BoostingWarning(AdilWarning):
    """Boosting produced a degenerate ensemble"""


def exit_code_of(err: Optional[BaseException]) -> int:
    if err is None:
        return 0
    if isinstance(err, AdilException):
        return err.exit_code
    return 1
