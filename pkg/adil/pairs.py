"""Pair enumeration and sampling over dataset rows"""
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

from typing import Iterator, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

# Rows per exhaustive block and pairs per sampled chunk, bounds peak memory
BLOCK_ROWS = 512
SAMPLE_CHUNK = 1 << 20


class PairSampling(BaseModel):
    """How the pairs of an audit were chosen."""

    model_config = ConfigDict(extra="forbid")

    mode: Literal["exhaustive", "sampled"]
    count: int
    seed: Optional[int] = None


def total_pairs(n_rows: int) -> int:
    return n_rows * (n_rows - 1) // 2


def plan_pairs(n_rows: int, budget: Optional[int] = None, seed: int = 0) -> PairSampling:
    """Exhaustive unless a budget smaller than the number of unordered pairs is given."""
    total = total_pairs(n_rows)
    if budget is None or budget >= total:
        return PairSampling(mode="exhaustive", count=total)

    return PairSampling(mode="sampled", count=max(int(budget), 0), seed=seed)


def iter_pairs(n_rows: int, sampling: PairSampling) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Yields blocks of (i, j) row positions with i != j.

    Exhaustive mode visits every unordered pair once with i < j. Sampled mode draws pairs
    uniformly with replacement.
    """
    if n_rows < 2 or sampling.count == 0:
        return

    if sampling.mode == "exhaustive":
        cols = np.arange(n_rows)
        for start in range(0, n_rows - 1, BLOCK_ROWS):
            rows = np.arange(start, min(start + BLOCK_ROWS, n_rows - 1))
            first, second = np.nonzero(cols[None, :] > rows[:, None])
            yield first + start, second
        return

    rng = np.random.default_rng(sampling.seed)
    remaining = sampling.count
    while remaining > 0:
        size = min(remaining, SAMPLE_CHUNK)
        first = rng.integers(0, n_rows, size=size)
        second = rng.integers(0, n_rows - 1, size=size)
        second += second >= first
        yield first, second
        remaining -= size
