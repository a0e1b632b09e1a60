"""CSV output with ``#`` metadata lines, and grid parsing for the command line."""

from __future__ import annotations

import io
import json
import math
import sys
from typing import Iterable, Sequence

import numpy as np


def fmt(v) -> str:
    """12 significant digits for floats, plain text otherwise."""
    if isinstance(v, (float, np.floating)):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return f"{v:.12g}"
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return str(v)


def dumps_json(obj, **kw) -> str:
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.generic):
            return o.item()
        return str(o)
    return json.dumps(obj, sort_keys=True, default=default, **kw)


def csv_text(columns: Sequence[str], rows: Iterable[Sequence], config: dict, seed) -> str:
    buf = io.StringIO()
    buf.write(f"# config: {dumps_json(config)}\n")
    buf.write(f"# seed: {seed}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def emit(text: str, path: str | None):
    """Write ``text`` to ``path``, or to standard output when ``path`` is None or ``-``."""
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def read_csv(path_or_text: str):
    """Parse a CSV written by :func:`csv_text`.

    Returns ``(meta, columns, rows)`` where ``meta`` maps the ``#`` keys to
    their raw text and ``rows`` is a list of lists of strings.
    """
    text = path_or_text if "\n" in path_or_text else open(path_or_text).read()
    meta, columns, rows = {}, None, []
    for ln in text.splitlines():
        if ln.startswith("#"):
            key, _, val = ln[1:].partition(":")
            meta[key.strip()] = val.strip()
        elif not ln.strip():
            continue
        elif columns is None:
            columns = ln.split(",")
        else:
            rows.append(ln.split(","))
    return meta, columns or [], rows


def parse_grid(spec: str | Sequence[float]) -> np.ndarray:
    """Parse ``"a,b,c"`` or ``"start:stop:points[:log]"`` into an array.

    An empty string gives an empty grid.
    """
    if not isinstance(spec, str):
        return np.asarray(spec, dtype=float)
    s = spec.strip()
    if not s:
        return np.zeros(0)
    if ":" in s:
        parts = s.split(":")
        if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] not in ("log", "lin")):
            raise ValueError(f"bad range {spec!r}; expected start:stop:points[:log]")
        start, stop, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise ValueError("range needs at least one point")
        if len(parts) == 4 and parts[3] == "log":
            if start <= 0 or stop <= 0:
                raise ValueError("log ranges need positive end points")
            return np.logspace(math.log10(start), math.log10(stop), n)
        return np.linspace(start, stop, n)
    return np.array([float(p) for p in s.split(",") if p.strip()])


def parse_ints(spec: str | Sequence[int]) -> list[int]:
    if not isinstance(spec, str):
        return [int(v) for v in spec]
    return [int(p) for p in spec.split(",") if p.strip()]
