"""Curve CSV serialization and atomic file writes.

Floats are rendered with repr (shortest round-trip form), so a written
curve re-read through JSON or CSV reproduces the exact doubles and
repeated runs of the same configuration emit byte-identical files.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import ValidationError

CSV_HEADER = "t_us,signal"


def curve_to_csv(times_us, values) -> str:
    lines = [CSV_HEADER]
    for t, v in zip(times_us, values):
        lines.append(f"{float(t)!r},{float(v)!r}")
    return "\n".join(lines) + "\n"


def curve_from_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != CSV_HEADER:
        raise ValidationError(
            f"curve CSV must start with the header {CSV_HEADER!r}")
    times, values = [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 2:
            raise ValidationError(f"malformed curve CSV row: {ln!r}")
        try:
            times.append(float(parts[0]))
            values.append(float(parts[1]))
        except ValueError:
            raise ValidationError(f"malformed curve CSV row: {ln!r}") from None
    return np.asarray(times), np.asarray(values)


def write_atomic(path: Path | str, data: str) -> None:
    """Write via a temp file and rename so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(data)
    os.replace(tmp, path)
