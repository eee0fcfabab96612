"""Atomic text-file writes shared by checkpoint and plot output."""

from __future__ import annotations

import os

# Test-only fault hook: called once mid-write with the byte count written
# so far; raising simulates a crash between tmp-write and rename.
_fault_hook = None


def atomic_write_text(path, text: str, keep: int = 1) -> None:
    """Serialize to `<path>.tmp`, flush to disk, then rename over `<path>`.
    With keep >= 2 the previous file rotates to `<path>.1`, `<path>.2`, ...
    A crash at any point leaves the previous `<path>` intact."""
    path = str(path)
    data = text.encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        half = len(data) // 2
        fh.write(data[:half])
        if _fault_hook is not None:
            _fault_hook(half)
        fh.write(data[half:])
        fh.flush()
        os.fsync(fh.fileno())
    for i in range(keep - 1, 0, -1):
        src = path if i == 1 else f"{path}.{i - 1}"
        if os.path.exists(src):
            os.replace(src, f"{path}.{i}")
    os.replace(tmp, path)
