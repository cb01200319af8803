"""Static SVG 1.1 figures: adjacency/graph layout, learning curves, prediction
overlays and grouped box plots.

Output is plain text assembled from rounded coordinates, so identical input
gives identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import networkx as nx
import numpy as np

from .stats import BoxStats

BLUE = "#1f77b4"
ORANGE = "#ff7f0e"
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
FONT = 'font-family="DejaVu Sans, Arial, sans-serif"'


class FigureError(ValueError):
    pass


def _n(x: float) -> str:
    s = f"{x:.2f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _doc(width: float, height: float, body: list[str]) -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_n(width)}" '
        f'height="{_n(height)}" viewBox="0 0 {_n(width)} {_n(height)}">\n'
        f'<rect x="0" y="0" width="{_n(width)}" height="{_n(height)}" fill="white"/>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def _text(x, y, s, size=12, anchor="middle", rotate=None) -> str:
    tr = f' transform="rotate({rotate} {_n(x)} {_n(y)})"' if rotate is not None else ""
    return (f'<text x="{_n(x)}" y="{_n(y)}" font-size="{size}" text-anchor="{anchor}" '
            f'{FONT}{tr}>{escape(str(s))}</text>')


@dataclass(frozen=True)
class Panel:
    """Plot area in pixels plus the data ranges mapped onto it."""

    left: float
    top: float
    width: float
    height: float
    x_range: tuple[float, float]
    y_range: tuple[float, float]

    def x(self, v: float) -> float:
        lo, hi = self.x_range
        return self.left + (v - lo) / (hi - lo) * self.width

    def y(self, v: float) -> float:
        lo, hi = self.y_range
        return self.top + self.height - (v - lo) / (hi - lo) * self.height

    def frame(self, title: str, xlabel: str, ylabel: str, n_ticks: int = 5) -> list[str]:
        out = [
            f'<rect x="{_n(self.left)}" y="{_n(self.top)}" width="{_n(self.width)}" '
            f'height="{_n(self.height)}" fill="none" stroke="black" stroke-width="1"/>',
            _text(self.left + self.width / 2, self.top - 10, title, 14),
            _text(self.left + self.width / 2, self.top + self.height + 38, xlabel),
            _text(self.left - 48, self.top + self.height / 2, ylabel, rotate=-90),
        ]
        for v in np.linspace(*self.y_range, n_ticks):
            y = self.y(v)
            out.append(f'<line x1="{_n(self.left - 4)}" y1="{_n(y)}" x2="{_n(self.left)}" '
                       f'y2="{_n(y)}" stroke="black"/>')
            out.append(_text(self.left - 7, y + 4, f"{v:.3g}", 10, "end"))
        for v in np.linspace(*self.x_range, n_ticks):
            x = self.x(v)
            out.append(f'<line x1="{_n(x)}" y1="{_n(self.top + self.height)}" x2="{_n(x)}" '
                       f'y2="{_n(self.top + self.height + 4)}" stroke="black"/>')
            out.append(_text(x, self.top + self.height + 17, f"{v:.4g}", 10))
        return out


def _padded(lo: float, hi: float) -> tuple[float, float]:
    if hi <= lo:
        return lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _polyline(panel: Panel, xs, ys, color: str, label: str) -> str:
    pts = " ".join(f"{_n(panel.x(a))},{_n(panel.y(b))}" for a, b in zip(xs, ys))
    return (f'<polyline class="series" data-label="{escape(label)}" points="{pts}" '
            f'fill="none" stroke="{color}" stroke-width="1.5"/>')


def _legend(x, y, entries: Sequence[tuple[str, str]]) -> list[str]:
    out = []
    for i, (label, color) in enumerate(entries):
        yy = y + 16 * i
        out.append(f'<line x1="{_n(x)}" y1="{_n(yy)}" x2="{_n(x + 18)}" y2="{_n(yy)}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(_text(x + 23, yy + 4, label, 11, "start"))
    return out


# ------------------------------------------------------------------ figures


def spring_positions(A: np.ndarray, seed: int = 7) -> np.ndarray:
    """Deterministic force-directed layout in [-1, 1]^2 (aesthetic only)."""
    n = A.shape[0]
    g = nx.Graph()
    g.add_nodes_from(range(n))
    g.add_edges_from(zip(*np.nonzero(np.asarray(A))))
    pos = nx.spring_layout(g, seed=seed)
    return np.array([pos[i] for i in range(n)])


def adjacency_figure(A: np.ndarray, codes: Sequence[str], groups: Sequence[str] | None = None,
                     seed: int = 7, title: str = "plant graph") -> str:
    """Graph layout (left) and directed adjacency heat grid (right).

    Cell ``(row i, column j)`` is filled when edge ``i -> j`` exists.
    """
    A = np.asarray(A)
    n = A.shape[0]
    if n == 0:
        raise FigureError("empty graph")
    groups = list(groups) if groups is not None else [""] * n
    colors = {g: PALETTE[i % len(PALETTE)] for i, g in enumerate(sorted(set(groups)))}
    size, margin = 420.0, 70.0
    body = [
        '<defs><marker id="arrow" viewBox="0 0 10 10" refX="10" refY="5" markerWidth="6" '
        'markerHeight="6" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="#555"/></marker></defs>',
        _text(margin + size / 2, 30, f"{title}: graph layout", 14),
        _text(2 * margin + size + size / 2, 30, f"{title}: adjacency (row → column)", 14),
    ]
    pos = spring_positions(A, seed)
    px = margin + (pos[:, 0] + 1.05) / 2.1 * size
    py = 50 + (pos[:, 1] + 1.05) / 2.1 * size
    for i, j in zip(*np.nonzero(A)):
        body.append(f'<line class="edge" x1="{_n(px[i])}" y1="{_n(py[i])}" x2="{_n(px[j])}" '
                    f'y2="{_n(py[j])}" stroke="#555" stroke-width="1" marker-end="url(#arrow)"/>')
    for i in range(n):
        body.append(f'<circle class="node" cx="{_n(px[i])}" cy="{_n(py[i])}" r="6" '
                    f'fill="{colors[groups[i]]}" stroke="black" stroke-width="0.5">'
                    f'<title>{escape(codes[i])}</title></circle>')
    body += _legend(margin, size + 75, [(f"group {g}" if g else "nodes", c) for g, c in colors.items()])

    left, top = 2 * margin + size, 50.0
    cell = size / n
    body.append(f'<rect x="{_n(left)}" y="{_n(top)}" width="{_n(size)}" height="{_n(size)}" '
                f'fill="white" stroke="black"/>')
    for i, j in zip(*np.nonzero(A)):
        body.append(f'<rect class="cell" x="{_n(left + j * cell)}" y="{_n(top + i * cell)}" '
                    f'width="{_n(cell)}" height="{_n(cell)}" fill="#08306b"/>')
    if n <= 60:
        for i, code in enumerate(codes):
            c = top + (i + 0.5) * cell
            body.append(_text(left - 4, c + 3, code, 7, "end"))
            body.append(_text(left + (i + 0.5) * cell, top + size + 6, code, 7, "end", rotate=-90))
    height = size + 75 + 16 * len(colors) + 20
    return _doc(3 * margin + 2 * size, height, body)


def learning_curve_figure(epochs: Sequence[int], train_loss: Sequence[float],
                          test_loss: Sequence[float], model: str) -> str:
    if len(epochs) == 0:
        raise FigureError("empty learning curve")
    values = np.r_[np.asarray(train_loss, float), np.asarray(test_loss, float)]
    values = values[np.isfinite(values)]
    panel = Panel(80, 40, 480, 300, (float(epochs[0]), float(epochs[-1]) if len(epochs) > 1 else epochs[0] + 1.0),
                  _padded(0.0, float(values.max())))
    body = panel.frame(f"{model.upper()} learning curve", "epoch", "MSE loss")
    body.append(_polyline(panel, epochs, train_loss, BLUE, "train"))
    body.append(_polyline(panel, epochs, test_loss, ORANGE, "test"))
    body += _legend(panel.left + panel.width - 90, panel.top + 18, [("train", BLUE), ("test", ORANGE)])
    return _doc(600, 400, body)


def series_figure(t: np.ndarray, actual: np.ndarray, predicted: np.ndarray,
                  codes: Sequence[str], model: str, products: Sequence[int] | None = None) -> str:
    """Actual (blue) and predicted (orange) values over time, one row per product.

    ``actual`` and ``predicted`` are K x N arrays aligned with ``t``.
    """
    actual, predicted = np.asarray(actual), np.asarray(predicted)
    if actual.size == 0:
        raise FigureError("empty series")
    products = list(range(min(3, actual.shape[1]))) if products is None else list(products)
    row_h = 230
    body = []
    for r, j in enumerate(products):
        lo = float(min(actual[:, j].min(), predicted[:, j].min()))
        hi = float(max(actual[:, j].max(), predicted[:, j].max()))
        x_hi = float(t[-1]) if t[-1] > t[0] else float(t[0]) + 1.0
        panel = Panel(80, 40 + r * row_h, 560, row_h - 90, (float(t[0]), x_hi), _padded(lo, hi))
        body += panel.frame(f"{model.upper()}: {codes[j]}", "time index", "z-scored sales order", 4)
        body.append(_polyline(panel, t, actual[:, j], BLUE, f"actual {codes[j]}"))
        body.append(_polyline(panel, t, predicted[:, j], ORANGE, f"predicted {codes[j]}"))
    body += _legend(660, 50, [("actual", BLUE), ("predicted", ORANGE)])
    return _doc(780, 40 + row_h * len(products), body)


def box_figure(panels: Sequence[tuple[str, Mapping[str, BoxStats]]], title: str) -> str:
    """Side-by-side panels of box plots, one box per model."""
    if not panels or any(not boxes for _, boxes in panels):
        raise FigureError("no box statistics")
    width, body = 80.0, []
    for p_no, (label, boxes) in enumerate(panels):
        lo = min(b.whisker_low for b in boxes.values())
        hi = max(b.whisker_high for b in boxes.values())
        panel = Panel(width, 50, 90 * len(boxes), 300, (0.0, float(len(boxes))), _padded(lo, hi))
        body += _box_panel(panel, label, boxes)
        width += panel.width + 110
    body.insert(0, _text(width / 2, 22, title, 15))
    return _doc(width, 410, body)


def _box_panel(panel: Panel, label: str, boxes: Mapping[str, BoxStats]) -> list[str]:
    out = [
        f'<rect x="{_n(panel.left)}" y="{_n(panel.top)}" width="{_n(panel.width)}" '
        f'height="{_n(panel.height)}" fill="none" stroke="black"/>',
        _text(panel.left + panel.width / 2, panel.top - 10, label, 13),
        _text(panel.left - 48, panel.top + panel.height / 2, label, rotate=-90),
    ]
    for v in np.linspace(*panel.y_range, 5):
        out.append(_text(panel.left - 7, panel.y(v) + 4, f"{v:.3g}", 10, "end"))
    for k, (model, b) in enumerate(boxes.items()):
        cx = panel.x(k + 0.5)
        half = 0.3 * panel.width / len(boxes)
        color = PALETTE[k % len(PALETTE)]
        out.append(f'<g class="box" data-model="{escape(model)}">')
        out.append(f'<line class="whisker" x1="{_n(cx)}" y1="{_n(panel.y(b.whisker_low))}" x2="{_n(cx)}" '
                   f'y2="{_n(panel.y(b.whisker_high))}" stroke="black"/>')
        for w in (b.whisker_low, b.whisker_high):
            out.append(f'<line x1="{_n(cx - half / 2)}" y1="{_n(panel.y(w))}" x2="{_n(cx + half / 2)}" '
                       f'y2="{_n(panel.y(w))}" stroke="black"/>')
        out.append(f'<rect class="iqr" x="{_n(cx - half)}" y="{_n(panel.y(b.q3))}" width="{_n(2 * half)}" '
                   f'height="{_n(panel.y(b.q1) - panel.y(b.q3))}" fill="{color}" fill-opacity="0.5" '
                   f'stroke="black"/>')
        out.append(f'<line class="median" x1="{_n(cx - half)}" y1="{_n(panel.y(b.median))}" '
                   f'x2="{_n(cx + half)}" y2="{_n(panel.y(b.median))}" stroke="black" stroke-width="2"/>')
        if b.outlier_count:
            out.append(_text(cx, panel.top + 12, f"+{b.outlier_count} outliers", 9))
        out.append("</g>")
        out.append(_text(cx, panel.top + panel.height + 17, model.upper(), 11))
    return out


def write_svg(text: str, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
