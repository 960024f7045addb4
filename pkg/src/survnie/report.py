"""Analysis records, summary tables, and dependency-free SVG plots.

Records serialize to a flat JSON schema with sorted keys so that identical
runs produce byte-identical files. Plots are built from polyline and text
primitives only.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from .errors import ValidationError

RECORD_SCHEMA_VERSION = 1


@dataclass
class AnalysisRecord:
    """One analysis result in report-ready form."""

    method: str
    qn: int
    orderings: int
    alpha: float
    estimate: float
    se: float
    ci_low: float
    ci_high: float
    p_value: float
    combined_p: float | None = None
    k_used: str | None = None
    selected: list = field(default_factory=list)   # [label, count] pairs
    config: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = ""
    schema: int = RECORD_SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "AnalysisRecord":
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        missing = [f for f in ("method", "qn", "estimate", "se", "p_value") if f not in data]
        if missing:
            raise ValidationError(f"record is missing fields: {missing}")
        return cls(**known)


def write_records(path, records) -> None:
    payload = {"records": [r.to_dict() for r in records]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_records(path) -> list[AnalysisRecord]:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read record file {path}: {exc}") from None
    if not isinstance(payload, dict) or "records" not in payload:
        raise ValidationError(f"malformed record file {path}: no 'records' key")
    return [AnalysisRecord.from_dict(item) for item in payload["records"]]


def format_table(records) -> str:
    """Render records in the per-method summary layout, sorted by qn."""
    headers = ("qn", "Method", "Est.", "S.E.", "C.I.", "P-Value", "Comb. P")
    rows = []
    for r in sorted(records, key=lambda r: (r.qn, r.method)):
        rows.append((
            str(r.qn),
            r.method,
            f"{r.estimate:.4f}",
            f"{r.se:.4f}",
            f"({r.ci_low:.4f}, {r.ci_high:.4f})",
            f"{r.p_value:.4g}",
            "-" if r.combined_p is None else f"{r.combined_p:.4g}",
        ))
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    def fmt(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    lines = [fmt(headers), fmt(tuple("-" * w for w in widths))]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# SVG primitives


class SvgCanvas:
    """Minimal SVG builder: polylines and text only."""

    def __init__(self, width: int = 640, height: int = 420):
        self.width = width
        self.height = height
        self.parts: list[str] = []

    def polyline(self, points, stroke: str = "black", stroke_width: float = 1.5,
                 dash: str | None = None) -> None:
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
            f'stroke-width="{stroke_width}"{dash_attr}/>'
        )

    def text(self, x: float, y: float, s: str, size: int = 12,
             anchor: str = "start") -> None:
        self.parts.append(
            f'<text x="{x:.2f}" y="{y:.2f}" font-size="{size}" '
            f'font-family="sans-serif" text-anchor="{anchor}">{_escape(s)}</text>'
        )

    def marker(self, x: float, y: float, half: float = 3.0, stroke: str = "black") -> None:
        """A small x-cross built from two 2-point polylines."""
        self.polyline([(x - half, y - half), (x + half, y + half)], stroke=stroke, stroke_width=1.2)
        self.polyline([(x - half, y + half), (x + half, y - half)], stroke=stroke, stroke_width=1.2)

    def to_string(self) -> str:
        body = "\n".join(self.parts)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
            f"{body}\n</svg>\n"
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_string())


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_MARGIN = 56.0


class _Frame:
    """Maps data coordinates into the plotting viewport and draws axes."""

    def __init__(self, canvas: SvgCanvas, xlim, ylim, xlabel: str, ylabel: str,
                 title: str = ""):
        self.c = canvas
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.left = _MARGIN
        self.right = canvas.width - 20.0
        self.top = 36.0
        self.bottom = canvas.height - _MARGIN
        self._axes(xlabel, ylabel, title)

    def px(self, x: float) -> float:
        return self.left + (x - self.x0) / (self.x1 - self.x0) * (self.right - self.left)

    def py(self, y: float) -> float:
        return self.bottom - (y - self.y0) / (self.y1 - self.y0) * (self.bottom - self.top)

    def _axes(self, xlabel: str, ylabel: str, title: str) -> None:
        c = self.c
        c.polyline([(self.left, self.top), (self.left, self.bottom),
                    (self.right, self.bottom)], stroke="#333", stroke_width=1.0)
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            xv = self.x0 + frac * (self.x1 - self.x0)
            yv = self.y0 + frac * (self.y1 - self.y0)
            c.text(self.px(xv), self.bottom + 16, f"{xv:.3g}", size=10, anchor="middle")
            c.text(self.left - 6, self.py(yv) + 4, f"{yv:.3g}", size=10, anchor="end")
        c.text((self.left + self.right) / 2, self.c.height - 12, xlabel, anchor="middle")
        c.text(14, (self.top + self.bottom) / 2, ylabel, anchor="middle")
        if title:
            c.text((self.left + self.right) / 2, 20, title, size=13, anchor="middle")

    def line(self, xs, ys, color: str, dash: str | None = None) -> None:
        self.c.polyline([(self.px(x), self.py(y)) for x, y in zip(xs, ys)],
                        stroke=color, dash=dash)

    def markers(self, xs, ys, color: str) -> None:
        for x, y in zip(xs, ys):
            self.c.marker(self.px(x), self.py(y), stroke=color)


def svg_series_chart(series: dict, xlabel: str, ylabel: str, title: str = "",
                     nominal: float | None = None, log_x: bool = False,
                     ylim=None) -> SvgCanvas:
    """Polyline chart of one series per label; optional dashed nominal line."""
    canvas = SvgCanvas()
    all_x, all_y = [], []
    tf = (lambda v: math.log10(v)) if log_x else (lambda v: v)
    for xs, ys in series.values():
        all_x.extend(tf(x) for x in xs)
        all_y.extend(ys)
    if nominal is not None:
        all_y.append(nominal)
    pad = 0.05 * (max(all_y) - min(all_y) or 1.0)
    ylim = ylim or (min(all_y) - pad, max(all_y) + pad)
    frame = _Frame(canvas, (min(all_x), max(all_x)), ylim,
                   xlabel + (" (log10)" if log_x else ""), ylabel, title)
    if nominal is not None:
        frame.line([frame.x0, frame.x1], [nominal, nominal], "#555", dash="6,4")
    for i, (label, (xs, ys)) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        txs = [tf(x) for x in xs]
        frame.line(txs, ys, color)
        frame.markers(txs, ys, color)
        canvas.text(frame.right - 4, frame.top + 16 * (i + 1), label,
                    size=11, anchor="end")
        canvas.polyline(
            [(frame.right - 64, frame.top + 16 * (i + 1) - 4),
             (frame.right - 48, frame.top + 16 * (i + 1) - 4)],
            stroke=color,
        )
    return canvas


def svg_qq(theoretical, observed, title: str = "") -> SvgCanvas:
    """Quantile-quantile scatter with the identity reference line."""
    canvas = SvgCanvas(width=480, height=480)
    lo = min(min(theoretical), min(observed))
    hi = max(max(theoretical), max(observed))
    frame = _Frame(canvas, (lo, hi), (lo, hi),
                   "standard normal quantile", "standardized statistic", title)
    frame.line([lo, hi], [lo, hi], "#555", dash="6,4")
    frame.markers(theoretical, observed, _PALETTE[0])
    return canvas


def svg_interval_chart(records, title: str = "") -> SvgCanvas:
    """Point estimates with vertical confidence segments, one per record."""
    canvas = SvgCanvas()
    recs = sorted(records, key=lambda r: (r.qn, r.method))
    ys = [v for r in recs for v in (r.ci_low, r.ci_high)]
    pad = 0.05 * (max(ys) - min(ys) or 1.0)
    frame = _Frame(canvas, (0.0, max(len(recs) - 1, 1)), (min(ys) - pad, max(ys) + pad),
                   "analysis", "estimate", title)
    frame.line([frame.x0, frame.x1], [0.0, 0.0], "#555", dash="6,4")
    for i, r in enumerate(recs):
        color = _PALETTE[i % len(_PALETTE)]
        frame.line([i, i], [r.ci_low, r.ci_high], color)
        frame.markers([i], [r.estimate], color)
        canvas.text(frame.px(i), frame.bottom + 28, f"qn={r.qn}", size=9, anchor="middle")
    return canvas
