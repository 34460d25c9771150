"""CSV tables with a comment header; files are written atomically."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

OUTPUT_ENV = "REPLIBOUND_OUTPUT_DIR"


def version() -> str:
    try:
        from importlib.metadata import version as _v

        return _v("artifact")
    except Exception:  # not installed
        return "0.1.0"


@dataclass
class Table:
    name: str
    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        return [row[name] for row in self.rows]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def render(table: Table, config: dict | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"# replibound {version()}\n")
    merged = dict(config or {})
    merged.update(table.meta)
    for key, value in merged.items():
        buf.write(f"# {key}={_fmt(value)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_fmt(row.get(c)) for c in table.columns])
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_table(table: Table, directory, config: dict | None = None) -> Path:
    path = Path(directory) / f"{table.name}.csv"
    write_atomic(path, render(table, config))
    return path


def read_table(path) -> tuple[dict, list[dict]]:
    """Parse a file written by :func:`write_table` into (meta, rows of strings)."""
    meta, lines = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    meta[k] = v
            else:
                lines.append(line)
    return meta, list(csv.DictReader(lines))


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "results"))
