"""Atomic file writes: outputs appear fully-written or not at all."""

import os
import tempfile


def _atomic_write(path, data, mode: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=os.path.basename(path) + ".tmp")
    encoding = None if "b" in mode else "utf-8"
    try:
        with os.fdopen(fd, mode, encoding=encoding) as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    _atomic_write(path, text, "w")


def atomic_write_bytes(path, data: bytes) -> None:
    _atomic_write(path, data, "wb")


def atomic_write_lines(path, lines) -> None:
    atomic_write_text(path, "".join(line + "\n" for line in lines))
