"""Static SVG charts plus the CSVs behind them.

Charts are built with ``xml.etree`` and all coordinates are printed with a
fixed number of decimals, so the same inputs always give the same bytes.
"""

from __future__ import annotations

import csv
import io
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .aggregate import BinFeatures, SummaryStats
from .trace import format_ts

SVG_NS = "http://www.w3.org/2000/svg"
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


@dataclass(frozen=True)
class Series:
    label: str
    xs: Sequence[float]
    ys: Sequence[float]


def _num(v: float) -> str:
    return f"{v:.2f}"


def _nice_max(v: float) -> float:
    if not v > 0 or not math.isfinite(v):
        return 1.0
    exp = 10 ** math.floor(math.log10(v))
    for m in (1, 2, 2.5, 5, 10):
        if v <= m * exp:
            return m * exp
    return 10 * exp


def _tick_label(v: float) -> str:
    if v == 0:
        return "0"
    a = abs(v)
    if a >= 1e4 or a < 1e-2:
        return f"{v:.2e}"
    return f"{v:g}"


class _Canvas:
    def __init__(self, title: str, ylabel: str, width=800, height=320, y_max=None, x_range=None, all_series=()):
        self.w, self.h = width, height
        self.left, self.right, self.top, self.bottom = 70, 150, 30, 40
        xs = [x for s in all_series for x in s.xs]
        ys = [y for s in all_series for y in s.ys if math.isfinite(y)]
        self.x0, self.x1 = x_range or ((min(xs), max(xs)) if xs else (0.0, 1.0))
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1
        self.y1 = y_max if y_max is not None else _nice_max(max(ys, default=0.0))
        self.root = ET.Element(
            "svg",
            {
                "xmlns": SVG_NS,
                "width": str(width),
                "height": str(height),
                "viewBox": f"0 0 {width} {height}",
                "font-family": "sans-serif",
                "font-size": "11",
            },
        )
        ET.SubElement(self.root, "title").text = title
        ET.SubElement(self.root, "rect", {"x": "0", "y": "0", "width": str(width), "height": str(height), "fill": "white"})
        t = ET.SubElement(self.root, "text", {"x": _num(width / 2), "y": "18", "text-anchor": "middle", "font-size": "14"})
        t.text = title
        self._axes(ylabel)

    def px(self, x):
        return self.left + (x - self.x0) / (self.x1 - self.x0) * (self.w - self.left - self.right)

    def py(self, y):
        return self.h - self.bottom - y / self.y1 * (self.h - self.top - self.bottom)

    def _axes(self, ylabel):
        g = ET.SubElement(self.root, "g", {"class": "axes", "stroke": "#444", "fill": "none"})
        xb, yb = self.h - self.bottom, self.left
        ET.SubElement(g, "line", {"x1": _num(yb), "y1": _num(xb), "x2": _num(self.w - self.right), "y2": _num(xb)})
        ET.SubElement(g, "line", {"x1": _num(yb), "y1": _num(self.top), "x2": _num(yb), "y2": _num(xb)})
        labels = ET.SubElement(self.root, "g", {"class": "ticks", "fill": "#444"})
        for k in range(5):
            v = self.y1 * k / 4
            t = ET.SubElement(labels, "text", {"x": _num(yb - 4), "y": _num(self.py(v) + 4), "text-anchor": "end"})
            t.text = _tick_label(v)
        for k in range(5):
            v = self.x0 + (self.x1 - self.x0) * k / 4
            t = ET.SubElement(labels, "text", {"x": _num(self.px(v)), "y": _num(xb + 15), "text-anchor": "middle"})
            t.text = _tick_label(round(v, 6))
        t = ET.SubElement(
            labels,
            "text",
            {"x": "14", "y": _num((self.top + xb) / 2), "text-anchor": "middle",
             "transform": f"rotate(-90 14 {_num((self.top + xb) / 2)})"},
        )
        t.text = ylabel

    def polyline(self, s: Series, color: str):
        pts = " ".join(f"{_num(self.px(x))},{_num(self.py(y))}" for x, y in zip(s.xs, s.ys) if math.isfinite(y))
        ET.SubElement(
            self.root,
            "polyline",
            {"class": "series", "data-series": s.label, "points": pts, "fill": "none", "stroke": color,
             "stroke-width": "1.2"},
        )

    def band(self, label: str, xs, lower, upper, color: str):
        top = [f"{_num(self.px(x))},{_num(self.py(y))}" for x, y in zip(xs, upper)]
        bot = [f"{_num(self.px(x))},{_num(self.py(y))}" for x, y in zip(reversed(xs), reversed(lower))]
        ET.SubElement(
            self.root,
            "polygon",
            {"class": "series", "data-series": label, "points": " ".join(top + bot), "fill": color,
             "fill-opacity": "0.75", "stroke": "none"},
        )

    def legend(self, labels: Sequence[str]):
        g = ET.SubElement(self.root, "g", {"class": "legend"})
        x = self.w - self.right + 12
        for k, label in enumerate(labels):
            y = self.top + 10 + 18 * k
            ET.SubElement(g, "rect", {"x": _num(x), "y": _num(y - 8), "width": "12", "height": "8",
                                      "fill": PALETTE[k % len(PALETTE)]})
            t = ET.SubElement(g, "text", {"x": _num(x + 18), "y": _num(y)})
            t.text = label

    def to_bytes(self) -> bytes:
        ET.indent(self.root)
        return b'<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(self.root, encoding="utf-8") + b"\n"


def line_chart(series: Sequence[Series], title: str, ylabel: str, **kw) -> bytes:
    c = _Canvas(title, ylabel, all_series=series, **kw)
    for k, s in enumerate(series):
        c.polyline(s, PALETTE[k % len(PALETTE)])
    c.legend([s.label for s in series])
    return c.to_bytes()


# --- chart data ------------------------------------------------------------


def rate_rows(bins: Sequence[BinFeatures]) -> list[tuple[str, float, float]]:
    """(bin_start, hit_fraction, miss_fraction) for bins with any accesses."""
    rows = []
    for b in bins:
        n = b.hit_count + b.miss_count
        if n:
            rows.append((format_ts(b.bin_start), b.hit_count / n, b.miss_count / n))
    return rows


def volume_rows(bins: Sequence[BinFeatures]) -> list[tuple[str, int, int]]:
    return [(format_ts(b.bin_start), b.hit_bytes, b.miss_bytes) for b in bins]


def rate_chart(bins: Sequence[BinFeatures], title="Hit and miss fractions") -> bytes:
    rows = rate_rows(bins)
    xs = list(range(len(rows)))
    hit = [r[1] for r in rows]
    c = _Canvas(title, "fraction of requests", y_max=1.0, x_range=(0, max(1, len(rows) - 1)))
    c.band("hit_fraction", xs, [0.0] * len(xs), hit, PALETTE[0])
    c.band("miss_fraction", xs, hit, [1.0] * len(xs), PALETTE[1])
    c.legend(["hit_fraction", "miss_fraction"])
    return c.to_bytes()


def volume_chart(bins: Sequence[BinFeatures], title="Transferred volume") -> bytes:
    rows = volume_rows(bins)
    xs = list(range(len(rows)))
    return line_chart(
        [Series("hit_bytes", xs, [r[1] for r in rows]), Series("miss_bytes", xs, [r[2] for r in rows])],
        title,
        "bytes per bin",
    )


def overlay_chart(rows: Sequence[dict], title: str) -> bytes:
    """Actual vs predicted for one target; rows come from a predictions CSV."""
    rows = sorted(rows, key=lambda r: r["bin_index"])
    xs = [r["bin_index"] for r in rows]
    return line_chart(
        [Series("actual", xs, [r["actual"] for r in rows]), Series("predicted", xs, [r["predicted"] for r in rows])],
        title,
        rows[0]["target"] if rows else "",
    )


def _csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue().encode("utf-8")


def _md_table(header, rows) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for r in rows:
        lines.append("| " + " | ".join(f"{v:.4g}" if isinstance(v, float) else str(v) for v in r) + " |")
    return "\n".join(lines)


def write_report(
    out_dir,
    bins: Sequence[BinFeatures] | None = None,
    predictions: Sequence[dict] | None = None,
    evaluations: Sequence | None = None,
    summary: SummaryStats | None = None,
) -> list[Path]:
    """Write every chart the inputs allow plus ``summary.md``; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(name, data: bytes):
        p = out / name
        p.write_bytes(data)
        written.append(p)

    md = ["# Report", ""]
    if summary is not None and summary.total_accesses:
        md += [
            "## Hit rates",
            "",
            _md_table(
                ("accesses", "hits", "misses", "file_hit_rate", "byte_hit_rate"),
                [(summary.total_accesses, summary.total_hits, summary.total_misses,
                  summary.file_hit_rate, summary.byte_hit_rate)],
            ),
            "",
        ]
    if bins:
        emit("rates.csv", _csv_bytes(("bin_start", "hit_fraction", "miss_fraction"), rate_rows(bins)))
        emit("rates.svg", rate_chart(bins))
        emit("volume.csv", _csv_bytes(("bin_start", "hit_bytes", "miss_bytes"), volume_rows(bins)))
        emit("volume.svg", volume_chart(bins))
        md += ["## Traffic", "", f"{len(bins)} {bins[0].granularity.value} bins: rates.svg, volume.svg", ""]
    if predictions:
        groups: dict[tuple[str, int], list[dict]] = {}
        for r in predictions:
            groups.setdefault((r["target"], r["smoothing_window"]), []).append(r)
        md += ["## Forecasts", ""]
        for (target, sw), rows in sorted(groups.items()):
            name = f"forecast_{target}" + (f"_ma{sw}" if sw > 1 else "")
            emit(f"{name}.svg", overlay_chart(rows, f"{target} (moving average {sw})" if sw > 1 else target))
            md.append(f"- {name}.svg")
        md.append("")
    if evaluations:
        md += [
            "## Forecast errors",
            "",
            _md_table(
                ("target", "granularity", "smoothing", "train_rmse", "test_rmse", "series_std", "relative_rmse"),
                [(e.target, e.granularity, e.smoothing_window, e.train_rmse, e.test_rmse, e.series_std,
                  e.relative_rmse) for e in evaluations],
            ),
            "",
        ]
    emit("summary.md", ("\n".join(md).rstrip() + "\n").encode("utf-8"))
    return written
