"""CSV, JSON and aligned-text emission.

CSV float cells use ``repr`` so identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

from pfqubo.harness.pipeline import ABSENT_HARDWARE_METRICS


def cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def csv_text(header: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([cell(r.get(h)) for h in header])
    return buf.getvalue()


def write_csv(path, header: Sequence[str], rows: Iterable[dict]) -> Path:
    path = Path(path)
    path.write_text(csv_text(header, rows))
    return path


def _short(value) -> str:
    if isinstance(value, float) and math.isfinite(value):
        return f"{value:.6g}"
    return cell(value)


def text_table(header: Sequence[str], rows: Sequence[dict], title: str = "") -> str:
    """Aligned plain-text rendering, with a footer naming the hardware-only columns."""
    cells = [list(header)] + [[_short(r.get(h)) for h in header] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(header))]
    lines = [title] if title else []
    for j, c in enumerate(cells):
        lines.append("  ".join(v.rjust(w) for v, w in zip(c, widths)))
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    lines.append("")
    lines.append("hardware-only columns (n/a without a quantum processor): " + ", ".join(ABSENT_HARDWARE_METRICS))
    return "\n".join(lines) + "\n"


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if hasattr(obj, "item"):
        return obj.item()
    if isinstance(obj, (set, tuple)):
        return list(obj)
    return str(obj)
