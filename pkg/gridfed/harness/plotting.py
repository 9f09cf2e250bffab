"""
Plotting - seed-averaged learning curves rendered as SVG
"""

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence
from xml.sax.saxutils import escape

import numpy as np
import pandas as pd

from gridfed.core.errors import MetricsFormatError
from gridfed.core.io import PathLike, write_text_atomic
from gridfed.core.settings import Variant
from gridfed.harness.runner import METRICS_COLUMNS

logger = logging.getLogger(__name__)

LEGEND_ORDER = [Variant.UPPERBOUND, Variant.FL, Variant.IND_AGENT, Variant.FL_PERSONALIZATION]
COLORS = {
    Variant.UPPERBOUND: "#1f77b4",
    Variant.FL: "#2ca02c",
    Variant.IND_AGENT: "#d62728",
    Variant.FL_PERSONALIZATION: "#ff7f0e",
}
METRICS = ["reward", "emission", "cost"]
UNITS = {"reward": "reward", "emission": "emission (kgCO2e)", "cost": "cost"}

WIDTH, HEIGHT = 720, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 190, 40, 50


@dataclass
class Series:
    variant: Variant
    rounds: np.ndarray
    mean: np.ndarray
    low: np.ndarray
    high: np.ndarray


def _read_one(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise MetricsFormatError(f"{path} is empty") from None
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise MetricsFormatError(f"{path}: wrong number of fields",
                                 int(match.group(1)) if match else None) from None
    if list(frame.columns) != METRICS_COLUMNS:
        raise MetricsFormatError(f"{path}: header must be {','.join(METRICS_COLUMNS)}", 1)

    rows = []
    variants = {v.value for v in Variant}
    for i, row in enumerate(frame.itertuples(index=False)):
        line = i + 2
        try:
            if row.variant not in variants:
                raise ValueError(f"unknown variant {row.variant!r}")
            parsed = {
                "variant": row.variant,
                "seed": int(row.seed),
                "round": int(row.round),
                "building": int(row.building),
                "reward": float(row.reward),
                "emission": float(row.emission),
                "cost": float(row.cost),
            }
        except ValueError as e:
            raise MetricsFormatError(f"{path}: malformed row ({str(e)})", line) from None
        if not all(np.isfinite(parsed[m]) for m in METRICS):
            raise MetricsFormatError(f"{path}: non-finite metric", line)
        rows.append(parsed)
    return pd.DataFrame(rows, columns=METRICS_COLUMNS)


def load_metrics(paths: Sequence[PathLike]) -> pd.DataFrame:
    frames = [_read_one(Path(p)) for p in paths]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=METRICS_COLUMNS)
    if frame.empty:
        raise MetricsFormatError("No metrics rows to plot")
    return frame


def seed_bands(frame: pd.DataFrame, metric: str) -> List[Series]:
    """Average over buildings per seed, then mean/min/max over seeds"""
    per_seed = frame.groupby(["variant", "seed", "round"], as_index=False)[metric].mean()
    stats = per_seed.groupby(["variant", "round"])[metric].agg(["mean", "min", "max"]).reset_index()
    series = []
    for variant in LEGEND_ORDER:
        part = stats[stats["variant"] == variant.value].sort_values("round")
        if part.empty:
            continue
        series.append(Series(variant, part["round"].to_numpy(float), part["mean"].to_numpy(),
                             part["min"].to_numpy(), part["max"].to_numpy()))
    return series


def _span(lo: float, hi: float) -> tuple:
    if hi - lo < 1e-12:
        return lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _points(xs: np.ndarray, ys: np.ndarray) -> str:
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))


def render_svg(title: str, ylabel: str, series: Sequence[Series]) -> str:
    x0, x1 = _span(min(s.rounds.min() for s in series), max(s.rounds.max() for s in series))
    y0, y1 = _span(min(s.low.min() for s in series), max(s.high.max() for s in series))
    plot_w, plot_h = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(x):
        return LEFT + (np.asarray(x) - x0) / (x1 - x0) * plot_w

    def sy(y):
        return TOP + (1.0 - (np.asarray(y) - y0) / (y1 - y0)) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="24" text-anchor="middle" font-size="16">{escape(title)}</text>',
        f'<line class="axis" x1="{LEFT}" y1="{TOP + plot_h}" x2="{LEFT + plot_w}" '
        f'y2="{TOP + plot_h}" stroke="black"/>',
        f'<line class="axis" x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + plot_h}" stroke="black"/>',
    ]
    for tick in np.linspace(x0, x1, 5):
        parts.append(f'<text x="{float(sx(tick)):.2f}" y="{TOP + plot_h + 18}" '
                     f'text-anchor="middle" font-size="11">{tick:.0f}</text>')
    for tick in np.linspace(y0, y1, 5):
        parts.append(f'<text x="{LEFT - 6}" y="{float(sy(tick)) + 4:.2f}" '
                     f'text-anchor="end" font-size="11">{tick:.3g}</text>')
    parts.append(f'<text x="{LEFT + plot_w / 2:.0f}" y="{HEIGHT - 10}" text-anchor="middle" '
                 f'font-size="12">round</text>')
    parts.append(f'<text x="16" y="{TOP + plot_h / 2:.0f}" text-anchor="middle" font-size="12" '
                 f'transform="rotate(-90 16 {TOP + plot_h / 2:.0f})">{escape(ylabel)}</text>')

    for s in series:
        color = COLORS[s.variant]
        xs = sx(s.rounds)
        band = _points(np.concatenate([xs, xs[::-1]]),
                       np.concatenate([sy(s.high), sy(s.low)[::-1]]))
        parts.append(f'<g class="series" data-variant="{s.variant.value}">')
        parts.append(f'<polygon class="band" points="{band}" fill="{color}" '
                     f'fill-opacity="0.2" stroke="none"/>')
        parts.append(f'<polyline class="line" points="{_points(xs, sy(s.mean))}" fill="none" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append('</g>')

    parts.append('<g class="legend">')
    for i, s in enumerate(series):
        y = TOP + 10 + 20 * i
        parts.append(f'<rect x="{WIDTH - RIGHT + 20}" y="{y}" width="14" height="10" '
                     f'fill="{COLORS[s.variant]}"/>')
        parts.append(f'<text x="{WIDTH - RIGHT + 40}" y="{y + 9}" font-size="12">'
                     f'{escape(s.variant.label)}</text>')
    parts.append('</g>')
    parts.append('</svg>')
    return "\n".join(parts) + "\n"


def plot(csv_paths: Sequence[PathLike], out_dir: PathLike) -> List[Path]:
    """One chart per metric over the building average, plus reward/emission per building"""
    frame = load_metrics(csv_paths)
    out_dir = Path(out_dir)
    charts = []
    for metric in METRICS:
        charts.append((out_dir / f"{metric}.svg",
                       render_svg(f"Average {metric} of all buildings", UNITS[metric],
                                  seed_bands(frame, metric))))
    for building in sorted(frame["building"].unique()):
        part = frame[frame["building"] == building]
        for metric in ("reward", "emission"):
            charts.append((out_dir / f"{metric}_building{building}.svg",
                           render_svg(f"Building {building + 1} {metric}", UNITS[metric],
                                      seed_bands(part, metric))))

    written = [write_text_atomic(path, svg) for path, svg in charts]
    logger.info(f"Wrote {len(written)} charts to {out_dir}")
    return written
