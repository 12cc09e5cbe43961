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

from pathlib import Path
from typing import Union

from prometheus_client import REGISTRY, Counter, Gauge, write_to_textfile

CommandCount = Counter("adil_command_stats", "Number of commands run", labelnames=["name"])
UnhandledError = Counter("adil_unhandled_error", "Number of unhandled errors", labelnames=["type"])
FailedCommand = Counter(
    "adil_failed_command",
    "Number of commands ending with an error",
    labelnames=["name", "exit_code"],
)

CommandLatencySecond = Gauge(
    "adil_command_latency",
    "Latency of command processed",
    labelnames=["name"],
    unit="second",
)
SplitRows = Gauge("adil_split_rows", "Rows per split role", labelnames=["role"])
TrainingSteps = Counter(
    "adil_training_steps", "Epochs or boosting rounds completed", labelnames=["method"]
)
AuditPairs = Counter("adil_audit_pairs", "Pairs evaluated by fairness audits", labelnames=["audit"])


def write_metrics(path: Union[str, Path]) -> None:
    """Dumps the default registry in the node-exporter textfile format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_to_textfile(str(path), REGISTRY)
