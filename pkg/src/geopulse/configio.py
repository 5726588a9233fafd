"""Flat ``key = value`` config files and atomic text output."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Mapping


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        out[key] = value
    return out


def format_kv(data: Mapping[str, object]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in data.items())


def read_kv(path: str | os.PathLike) -> dict[str, str]:
    return parse_kv(Path(path).read_text(encoding="utf-8"))


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_kv(path: str | os.PathLike, data: Mapping[str, object]) -> None:
    atomic_write_text(path, format_kv(data))
