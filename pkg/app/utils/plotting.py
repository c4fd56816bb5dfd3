import logging
import os
from typing import List, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ..services.sim_engine import Trace  # noqa: E402

logger = logging.getLogger(__name__)

# 같은 입력이면 같은 SVG 바이트
plt.rcParams["svg.hashsalt"] = "workbench"
SVG_METADATA = {"Date": None}


def _save(fig, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    return path


def plot_channel(trace: Trace, channel: str, path: str, ref_column: Optional[str] = None,
                 title: Optional[str] = None) -> str:
    frame = trace.frame
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(frame["t"], frame[channel], label=channel, linewidth=1.0)
    if ref_column and ref_column in frame:
        ax.plot(frame["t"], frame[ref_column], "--", label=ref_column, linewidth=0.8)
    ax.set_xlabel("t (s)")
    ax.set_ylabel(channel)
    ax.set_title(title or channel)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best")
    return _save(fig, path)


def plot_duties(trace: Trace, path: str, columns: List[str]) -> str:
    frame = trace.frame
    fig, ax = plt.subplots(figsize=(8, 4))
    for col in columns:
        ax.plot(frame["t"], frame[col], label=col, linewidth=0.8)
    ax.set_xlabel("t (s)")
    ax.set_ylabel("duty")
    ax.set_ylim(0.0, 1.0)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best")
    return _save(fig, path)


def plot_gamma_trace(gammas: List[float], path: str, title: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(gammas)), gammas, marker="o", markersize=3)
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("γ")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_case(trace: Trace, case: str, channels: List[tuple], duty_columns: List[str], out_dir: str) -> List[str]:
    paths = []
    for channel, ref_col in channels:
        paths.append(plot_channel(trace, channel, os.path.join(out_dir, f"{case}_{channel}.svg"),
                                  ref_column=ref_col, title=f"{case} {channel}"))
    paths.append(plot_duties(trace, os.path.join(out_dir, f"{case}_duties.svg"), duty_columns))
    logger.info(f"Wrote {len(paths)} plots for {case}")
    return paths
