#!/usr/bin/env python3
"""
Sparsebench SVG Charts Module
Writes the phase-transition panels and n_f histogram bar charts as plain SVG
"""

import logging
from pathlib import Path

logger = logging.getLogger(__name__)

ALGORITHM_COLORS = {
    'OMP_e': '#d62728',
    'OMP_K': '#1f77b4',
    'SP': '#2ca02c',
    'BP': '#ff7f0e',
}
FALLBACK_COLORS = ['#9467bd', '#8c564b', '#17becf']
ENSEMBLE_ORDER = ['gaussian', 'uniform', 'cars']
ENSEMBLE_TITLES = {'gaussian': 'Gaussian', 'uniform': 'Uniform', 'cars': 'CARS'}

LAMBDA_RANGE = (0.1, 0.9)
RHO_RANGE = (0.0, 1.0)

PANEL_WIDTH = 380
PANEL_HEIGHT = 360
MARGIN = {'left': 60, 'right': 20, 'top': 50, 'bottom': 55}
LEGEND_HEIGHT = 40
FONT = 'font-family="Arial"'


def _escape(text):
    return (
        str(text).replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
        .replace("'", "&#39;")
    )


def _color(label, index):
    return ALGORITHM_COLORS.get(label, FALLBACK_COLORS[index % len(FALLBACK_COLORS)])


class Frame:
    """Linear mapping from data coordinates to one plot area"""

    def __init__(self, left, top, width, height, x_range, y_range):
        self.left = left
        self.top = top
        self.width = width
        self.height = height
        self.x_range = x_range
        self.y_range = y_range

    @property
    def right(self):
        return self.left + self.width

    @property
    def bottom(self):
        return self.top + self.height

    def x(self, value):
        low, high = self.x_range
        return self.left + (value - low) / (high - low) * self.width

    def y(self, value):
        low, high = self.y_range
        return self.bottom - (value - low) / (high - low) * self.height

    def axes(self, x_ticks, y_ticks, x_label, y_label, tick_format='{:.1f}'):
        lines = [
            f'<rect x="{self.left}" y="{self.top}" width="{self.width}" height="{self.height}" '
            f'fill="none" stroke="#000000" stroke-width="1"/>'
        ]
        for value in y_ticks:
            y = self.y(value)
            lines.append(f'<line x1="{self.left}" y1="{y:.2f}" x2="{self.right}" y2="{y:.2f}" '
                         f'stroke="#e0e0e0" stroke-width="1"/>')
            lines.append(f'<text x="{self.left - 8}" y="{y + 4:.2f}" text-anchor="end" font-size="11" {FONT}>'
                         f'{tick_format.format(value)}</text>')
        for value in x_ticks:
            x = self.x(value)
            lines.append(f'<line x1="{x:.2f}" y1="{self.bottom}" x2="{x:.2f}" y2="{self.bottom + 5}" '
                         f'stroke="#000000" stroke-width="1"/>')
            lines.append(f'<text x="{x:.2f}" y="{self.bottom + 18}" text-anchor="middle" font-size="11" {FONT}>'
                         f'{tick_format.format(value)}</text>')
        mid_x = self.left + self.width / 2
        mid_y = self.top + self.height / 2
        lines.append(f'<text x="{mid_x:.1f}" y="{self.bottom + 40}" text-anchor="middle" font-size="13" {FONT}>'
                     f'{_escape(x_label)}</text>')
        lines.append(f'<text x="{self.left - 42}" y="{mid_y:.1f}" text-anchor="middle" font-size="13" {FONT} '
                     f'transform="rotate(-90 {self.left - 42} {mid_y:.1f})">{_escape(y_label)}</text>')
        return lines


def _document(width, height, body):
    return '\n'.join(
        [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
         '<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>']
        + body + ['</svg>']
    ) + '\n'


def phase_panels_svg(curves, title='Phase transitions'):
    """One lambda-rho panel per ensemble, one polyline per algorithm"""
    by_ensemble = {}
    for curve in curves:
        by_ensemble.setdefault(curve.ensemble.value, []).append(curve)
    ensembles = [e for e in ENSEMBLE_ORDER if e in by_ensemble] + sorted(set(by_ensemble) - set(ENSEMBLE_ORDER))
    labels = []
    for curve in curves:
        if curve.algorithm.label not in labels:
            labels.append(curve.algorithm.label)

    width = max(1, len(ensembles)) * PANEL_WIDTH
    height = PANEL_HEIGHT + LEGEND_HEIGHT + 30
    body = [f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="18" {FONT}>{_escape(title)}</text>']

    lambda_ticks = [round(0.1 * i, 1) for i in range(1, 10)]
    rho_ticks = [round(0.2 * i, 1) for i in range(6)]
    for p, ensemble in enumerate(ensembles):
        frame = Frame(p * PANEL_WIDTH + MARGIN['left'], 30 + MARGIN['top'],
                      PANEL_WIDTH - MARGIN['left'] - MARGIN['right'],
                      PANEL_HEIGHT - MARGIN['top'] - MARGIN['bottom'], LAMBDA_RANGE, RHO_RANGE)
        body.append(f'<g class="panel" data-ensemble="{_escape(ensemble)}">')
        body.append(f'<text x="{frame.left + frame.width / 2:.1f}" y="{frame.top - 12}" text-anchor="middle" '
                    f'font-size="15" {FONT}>{_escape(ENSEMBLE_TITLES.get(ensemble, ensemble))}</text>')
        body.extend(frame.axes(lambda_ticks, rho_ticks, 'lambda = M/N', 'rho = K/M'))

        for curve in by_ensemble[ensemble]:
            label = curve.algorithm.label
            color = _color(label, labels.index(label))
            points = sorted((pt.lam, pt.rho_50) for pt in curve.points)
            # rho_50 outside [0, 1] is clipped to the panel
            coords = [(frame.x(lam), frame.y(min(max(rho, 0.0), 1.0))) for lam, rho in points]
            if len(coords) > 1:
                poly = ' '.join(f'{x:.2f},{y:.2f}' for x, y in coords)
                body.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{poly}"/>')
            for (lam, rho), (x, y) in zip(points, coords):
                body.append(f'<circle class="point" cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{color}" '
                            f'data-algorithm="{_escape(label)}" data-lambda="{lam!r}" data-rho="{rho!r}"/>')
        body.append('</g>')

    legend_y = PANEL_HEIGHT + 40
    for i, label in enumerate(labels):
        x = 20 + i * 120
        color = _color(label, i)
        body.append(f'<line x1="{x}" y1="{legend_y}" x2="{x + 26}" y2="{legend_y}" stroke="{color}" stroke-width="3"/>')
        body.append(f'<text class="legend" x="{x + 32}" y="{legend_y + 5}" font-size="13" {FONT}>{_escape(label)}</text>')

    return _document(width, height, body)


def histogram_svg(counts, k, title=None):
    """Bar chart of n_f frequencies with the ceil(K/2)-1 and K/4 reference lines"""
    nf_limit = (k + 1) // 2 - 1
    quarter = k / 4.0
    max_nf = max(counts) if counts else 0
    x_high = max(max_nf, nf_limit, quarter) + 1
    y_high = max(max(counts.values(), default=0), 1) * 1.1

    width, height = 640, 420
    frame = Frame(70, 60, width - 100, height - 130, (-0.5, x_high + 0.5), (0.0, y_high))
    title = title or f'n_f after successful OMP_e runs (K = {k})'
    body = [f'<text x="{width / 2:.1f}" y="30" text-anchor="middle" font-size="18" {FONT}>{_escape(title)}</text>']

    x_ticks = list(range(0, int(x_high) + 1, max(1, int(x_high) // 10 or 1)))
    y_step = max(1, int(y_high / 5))
    y_ticks = list(range(0, int(y_high) + 1, y_step))
    body.extend(frame.axes(x_ticks, y_ticks, 'n_f', 'frequency', tick_format='{:g}'))

    bar_width = frame.width / (x_high + 1) * 0.8
    for nf, count in sorted(counts.items()):
        x = frame.x(nf) - bar_width / 2
        y = frame.y(count)
        body.append(f'<rect class="bar" x="{x:.2f}" y="{y:.2f}" width="{bar_width:.2f}" '
                    f'height="{frame.bottom - y:.2f}" fill="#1f77b4" data-nf="{nf}" data-count="{count}"/>')

    for value, label, color in ((nf_limit, f'ceil(K/2)-1 = {nf_limit}', '#d62728'),
                                (quarter, f'K/4 = {quarter:g}', '#2ca02c')):
        x = frame.x(value)
        body.append(f'<line class="reference" x1="{x:.2f}" y1="{frame.top}" x2="{x:.2f}" y2="{frame.bottom}" '
                    f'stroke="{color}" stroke-width="2" stroke-dasharray="6,4"/>')
        body.append(f'<text x="{x + 4:.2f}" y="{frame.top + 14}" font-size="12" fill="{color}" {FONT}>'
                    f'{_escape(label)}</text>')

    return _document(width, height, body)


def write_svg(path, svg):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg, encoding='utf-8')
    logger.info(f"🖼️ Wrote {path}")
