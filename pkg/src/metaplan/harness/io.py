"""Atomic file writes and CSV helpers."""
from __future__ import annotations

import csv
import hashlib
import io
import os
import tempfile
from pathlib import Path


def ensure_writable_dir(path) -> Path:
    """Create ``path`` if needed and prove it accepts files; raises ``OSError`` otherwise."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    fd, probe = tempfile.mkstemp(dir=path, prefix=".probe-")
    os.close(fd)
    os.unlink(probe)
    return path


def atomic_write_bytes(path, data: bytes) -> Path:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def _cell(value) -> str:
    # repr keeps every float bit, so CSVs round-trip exactly
    return repr(value) if isinstance(value, float) else str(value)


def csv_bytes(fieldnames, rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fieldnames)
    for row in rows:
        writer.writerow([_cell(row[k]) for k in fieldnames])
    return buf.getvalue().encode("utf-8")


def write_csv(path, fieldnames, rows) -> str:
    """Write rows atomically; returns the sha256 of the bytes written."""
    data = csv_bytes(fieldnames, rows)
    atomic_write_bytes(path, data)
    return hashlib.sha256(data).hexdigest()


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
