"""Self-contained SVG charts written as plain text.

Output is a pure function of the data: fixed canvas, axes from the data
extent, fixed-precision coordinates. Every mark carries its value in a
``data-value`` attribute.
"""

import math
from html import escape
from pathlib import Path
from typing import List, Sequence, Tuple

from ai_exposure.analysis.kitagawa import DecompResult
from ai_exposure.analysis.oaxaca import ObResult, sorted_blocks

WIDTH = 800
HEIGHT = 420
MARGIN = (70, 30, 40, 60)  # left, right, top, bottom
COLORS = {"composition": "#4c72b0", "within": "#dd8452", "interaction": "#55a868", "total": "#222222"}


def _value(x: float) -> str:
    return f"{x:.10g}"


class SvgBuilder:
    def __init__(self, width: int = WIDTH, height: int = HEIGHT):
        self.width = width
        self.height = height
        self.parts: List[str] = []

    def header(self, title: str) -> None:
        self.parts.append(
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{self.width}" height="{self.height}" '
            f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif" font-size="11">\n'
        )
        self.parts.append(f"<title>{escape(title)}</title>\n")
        self.parts.append(f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="#ffffff"/>\n')

    def rect(self, x: float, y: float, width: float, height: float, fill: str, extra: str = "") -> None:
        self.parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{max(width, 0):.2f}" height="{max(height, 0):.2f}" fill="{fill}" {extra}/>\n'
        )

    def line(self, x1: float, y1: float, x2: float, y2: float, stroke: str = "#999999", extra: str = "") -> None:
        self.parts.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" stroke="{stroke}" {extra}/>\n')

    def polyline(self, points: Sequence[Tuple[float, float]], stroke: str, extra: str = "") -> None:
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
        self.parts.append(f'<polyline points="{coords}" fill="none" stroke="{stroke}" stroke-width="2" {extra}/>\n')

    def circle(self, x: float, y: float, r: float, fill: str, extra: str = "") -> None:
        self.parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r:.2f}" fill="{fill}" {extra}/>\n')

    def text(self, x: float, y: float, string: str, extra: str = "") -> None:
        self.parts.append(f'<text x="{x:.2f}" y="{y:.2f}" {extra}>{escape(string)}</text>\n')

    def get_svg(self) -> str:
        return "".join(self.parts) + "</svg>\n"

    def write(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as file:
            file.write(self.get_svg())
        return path


def nice_ticks(low: float, high: float, count: int = 5) -> List[float]:
    if high <= low:
        high = low + 1.0
    raw = (high - low) / count
    magnitude = 10 ** math.floor(math.log10(raw))
    step = next(m * magnitude for m in (1, 2, 2.5, 5, 10) if m * magnitude >= raw)
    first = math.floor(low / step) * step
    ticks = []
    value = first
    while value <= high + step * 1e-9:
        ticks.append(round(value, 12))
        value += step
    if ticks[-1] < high:
        ticks.append(round(value, 12))
    return ticks


def _y_axis(svg: SvgBuilder, ticks: List[float], scale, left: float, right: float) -> None:
    for tick in ticks:
        y = scale(tick)
        svg.line(left, y, right, y, stroke="#e5e5e5")
        svg.text(left - 6, y + 4, f"{tick:g}", 'text-anchor="end"')
    svg.line(left, scale(0.0), right, scale(0.0), stroke="#555555")


def decomposition_chart(results: Sequence[DecompResult], title: str = "Decomposition of exposure change") -> SvgBuilder:
    """Grouped bars for the three components per period with a line for the total."""
    svg = SvgBuilder()
    svg.header(title)
    left, right, top, bottom = MARGIN[0], WIDTH - MARGIN[1], MARGIN[2], HEIGHT - MARGIN[3]
    components = ["composition", "within", "interaction"]
    values = [getattr(r, c) for r in results for c in components] + [r.total for r in results] + [0.0]
    ticks = nice_ticks(min(values), max(values))
    low, high = ticks[0], ticks[-1]

    def scale(v: float) -> float:
        return bottom - (v - low) / (high - low) * (bottom - top)

    _y_axis(svg, ticks, scale, left, right)
    slot = (right - left) / max(len(results), 1)
    bar = slot * 0.8 / len(components)
    points = []
    for i, r in enumerate(results):
        x0 = left + i * slot + slot * 0.1
        for j, name in enumerate(components):
            v = getattr(r, name)
            y = min(scale(v), scale(0.0))
            svg.rect(
                x0 + j * bar,
                y,
                bar,
                abs(scale(v) - scale(0.0)),
                COLORS[name],
                f'class="{name}" data-period="{r.period}" data-value="{_value(v)}"',
            )
        cx = left + (i + 0.5) * slot
        points.append((cx, scale(r.total)))
        svg.text(cx, bottom + 16, r.period, 'text-anchor="middle"')
    if points:
        svg.polyline(points, COLORS["total"], 'class="total-line"')
        for (x, y), r in zip(points, results):
            svg.circle(x, y, 3, COLORS["total"], f'class="total" data-period="{r.period}" data-value="{_value(r.total)}"')

    for k, name in enumerate(components + ["total"]):
        svg.rect(left + k * 110, 10, 10, 10, COLORS[name])
        svg.text(left + k * 110 + 14, 19, name)
    return svg


def block_chart(result: ObResult, title: str = "Explained component by block") -> SvgBuilder:
    """Horizontal bars of block contributions, largest magnitude first."""
    svg = SvgBuilder()
    svg.header(title)
    blocks = sorted_blocks(result)
    left, right, top, bottom = 140, WIDTH - MARGIN[1], MARGIN[2], HEIGHT - MARGIN[3]
    values = [v for _, v in blocks] + [0.0]
    ticks = nice_ticks(min(values), max(values))
    low, high = ticks[0], ticks[-1]

    def scale(v: float) -> float:
        return left + (v - low) / (high - low) * (right - left)

    for tick in ticks:
        x = scale(tick)
        svg.line(x, top, x, bottom, stroke="#e5e5e5")
        svg.text(x, bottom + 16, f"{tick:g}", 'text-anchor="middle"')
    svg.line(scale(0.0), top, scale(0.0), bottom, stroke="#555555")

    row = (bottom - top) / max(len(blocks), 1)
    for i, (name, v) in enumerate(blocks):
        y = top + i * row + row * 0.15
        svg.rect(
            min(scale(v), scale(0.0)),
            y,
            abs(scale(v) - scale(0.0)),
            row * 0.7,
            COLORS["composition"],
            f'class="block" data-block="{escape(name)}" data-value="{_value(v)}"',
        )
        svg.text(left - 6, y + row * 0.45, name, 'text-anchor="end"')
    svg.text(left, 19, f"explained {result.explained:.4f}, unexplained {result.unexplained:.4f}")
    return svg
