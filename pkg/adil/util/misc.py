"""Adil misc utils"""
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

import contextlib
import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Callable, Mapping, MutableMapping, Set, Tuple, Union

import numpy as np

from adil.error import IntegrityError

CHECKSUM_KEY = "checksum"


def find_prefixed_funcs(obj: Any, prefix: str) -> Set[Tuple[str, Callable[..., Any]]]:
    """Finds functions with symbol names matching the prefix on the given object."""

    results: Set[Tuple[str, Callable[..., Any]]] = set()

    for sym in dir(obj):
        if sym.startswith(prefix):
            name = sym[len(prefix) :]
            func = getattr(obj, sym)
            if not callable(func):
                continue

            results.add((name, func))

    return results


def canonical_json(doc: Any) -> str:
    """Serializes a document deterministically.

    Floats go through `repr`, the shortest decimal that parses back to the same double,
    so a save/load cycle is bit-exact.
    """
    return json.dumps(doc, sort_keys=True, indent=1, ensure_ascii=False, allow_nan=False) + "\n"


def sha256_hex(data: Any) -> str:
    if isinstance(data, str):
        data = data.encode()
    return hashlib.sha256(data).hexdigest()


def array_checksum(*arrays: Any) -> str:
    """Checksum of the raw bytes, dtype and shape of each array."""

    digest = hashlib.sha256()
    for arr in arrays:
        arr = np.ascontiguousarray(arr)
        digest.update(str(arr.dtype).encode())
        digest.update(repr(arr.shape).encode())
        if arr.dtype == object:
            digest.update("\x1f".join(map(str, arr.ravel())).encode())
        else:
            digest.update(arr.tobytes())

    return digest.hexdigest()


def seal(doc: Mapping[str, Any]) -> MutableMapping[str, Any]:
    """Returns a copy of `doc` with a checksum over every other key."""

    body = {key: value for key, value in doc.items() if key != CHECKSUM_KEY}
    body[CHECKSUM_KEY] = sha256_hex(canonical_json(body))
    return body


def unseal(doc: Mapping[str, Any], *, what: str = "artifact") -> MutableMapping[str, Any]:
    """Verifies the checksum of a sealed document and returns it without the checksum."""

    if CHECKSUM_KEY not in doc:
        raise IntegrityError(f"{what} has no checksum")

    body = {key: value for key, value in doc.items() if key != CHECKSUM_KEY}
    if sha256_hex(canonical_json(body)) != doc[CHECKSUM_KEY]:
        raise IntegrityError(f"{what} checksum mismatch, the file was modified after it was written")

    return body


def atomic_write(path: Union[str, Path], content: Union[str, bytes]) -> None:
    """Writes through a temporary file in the same directory, then renames over `path`."""

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = content.encode() if isinstance(content, str) else content
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise
