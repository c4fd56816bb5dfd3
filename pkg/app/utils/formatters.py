import os
from typing import Dict, Iterable, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel

CSV_FLOAT_FORMAT = "%.9g"


def format_number(value, digits: int = 4, default: str = "-") -> str:
    """Fixed-point text, or ``default`` for None/NaN"""
    try:
        v = float(value)
    except (TypeError, ValueError):
        return default
    if np.isnan(v):
        return default
    return f"{v:.{digits}f}"


def format_matrix(m, digits: int = 4) -> str:
    rows = [[format_number(v, digits) for v in row] for row in np.asarray(m)]
    width = max(len(c) for row in rows for c in row) if rows else 0
    return "\n".join("[" + "  ".join(c.rjust(width) for c in row) + "]" for row in rows)


def format_metrics_table(frame: pd.DataFrame) -> str:
    header = f"{'channel':<8}{'segment':>16}{'rise ms':>10}{'settle ms':>11}{'sse':>11}{'os %':>8}"
    lines = [header]
    for row in frame.itertuples(index=False):
        segment = f"{row.t_start:.2f}-{row.t_end:.2f}s"
        lines.append(f"{row.channel:<8}{segment:>16}{format_number(row.rise_ms, 2):>10}"
                     f"{format_number(row.settling_ms, 2):>11}{format_number(row.sse, 5):>11}"
                     f"{format_number(row.overshoot_pct, 2):>8}")
    return "\n".join(lines)


def write_csv(frame: pd.DataFrame, path: str, meta: Optional[Dict[str, object]] = None) -> str:
    """CSV with optional ``# key=value`` header lines; no index, LF endings."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        for key in sorted(meta or {}):
            f.write(f"# {key}={meta[key]}\n")
        frame.to_csv(f, index=False, lineterminator="\n", float_format=CSV_FLOAT_FORMAT)
    return path


def write_json(model: BaseModel, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(model.model_dump_json(indent=2))
        f.write("\n")
    return path


def format_check_lines(checks: Iterable) -> List[str]:
    lines = []
    for c in checks:
        status = "ok" if c.passed else ("FAIL" if c.severity.value == "hard" else "mismatch")
        value = ""
        if c.computed is not None:
            value = f" computed={c.computed:.6g}"
            if c.expected is not None:
                value += f" expected={c.expected:.6g}"
        lines.append(f"[{c.severity.value:<4}] {status:<8} {c.name}{value}")
    return lines
