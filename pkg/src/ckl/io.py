"""Atomic, byte-deterministic file output shared by the CLI."""

from __future__ import annotations

import json
import os
import tempfile


def format_float(x) -> str:
    """Shortest round-trip decimal form; identical across reruns."""
    return repr(float(x))


def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the target directory plus rename, so readers
    never observe partial output and reruns overwrite byte-identically."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(c) if isinstance(c, (str, int)) else format_float(c) for c in row))
    return "\n".join(lines) + "\n"


def json_text(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def emit(path: str | None, text: str) -> None:
    """Write to a file atomically, or to stdout when no path is given."""
    if path is None:
        print(text, end="")
    else:
        atomic_write_text(path, text)
