"""Core utility functions for monitoring, file output and provenance."""
import hashlib
import os
import tempfile
from pathlib import Path
from typing import Union

import psutil

PathLike = Union[str, Path]


def get_memory_mb() -> float:
    """
    Get the current memory usage of the process in megabytes.

    Returns:
        float: Memory usage in MB
    """
    process = psutil.Process(os.getpid())
    return process.memory_info().rss / (1024 * 1024)


def make_dirs_if_not_exists(dir_path: PathLike) -> None:
    """
    Create directories if they do not already exist.

    Args:
        dir_path: Path to the directory to create
    """
    Path(dir_path).mkdir(parents=True, exist_ok=True)


def atomic_write_bytes(path: PathLike, payload: bytes) -> Path:
    """
    Write `payload` to a temp file next to `path`, then rename it into place,
    so readers never observe a partially written artifact.
    """
    path = Path(path)
    make_dirs_if_not_exists(path.parent)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path: PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
