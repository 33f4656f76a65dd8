"""Small helper so CSV writers accept either a path or an open text handle."""

from __future__ import annotations

import contextlib
from pathlib import Path


@contextlib.contextmanager
def csv_target(path_or_handle):
    if isinstance(path_or_handle, (str, Path)):
        with open(path_or_handle, "w", newline="") as fh:
            yield fh
    else:
        yield path_or_handle
