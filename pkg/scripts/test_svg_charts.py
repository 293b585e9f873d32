#!/usr/bin/env python3
"""
Sparsebench SVG Chart Tests
"""

import xml.etree.ElementTree as ET

from experiments import FitDiagnostics, TransitionCurve, TransitionPoint
from svg_charts import histogram_svg, phase_panels_svg, write_svg

SVG = '{http://www.w3.org/2000/svg}'


def _curve(algorithm, ensemble, points):
    curve = TransitionCurve(algorithm, ensemble)
    for lam, rho in points:
        curve.points.append(TransitionPoint(lam, rho, FitDiagnostics(True, 5)))
    return curve


def _find(root, tag, cls):
    return [el for el in root.iter(SVG + tag) if el.get('class') == cls]


def test_phase_panels_one_per_ensemble():
    curves = [
        _curve('omp_e', 'gaussian', [(0.3, 0.25), (0.5, 0.33)]),
        _curve('omp_k', 'gaussian', [(0.3, 0.2), (0.5, 0.28)]),
        _curve('omp_e', 'cars', [(0.5, 0.3)]),
    ]
    root = ET.fromstring(phase_panels_svg(curves))
    panels = _find(root, 'g', 'panel')
    assert [p.get('data-ensemble') for p in panels] == ['gaussian', 'cars']

    points = _find(root, 'circle', 'point')
    assert len(points) == 5
    assert {p.get('data-algorithm') for p in points} == {'OMP_e', 'OMP_K'}
    assert float(points[0].get('data-rho')) == 0.25

    legend = [t.text for t in _find(root, 'text', 'legend')]
    assert legend == ['OMP_e', 'OMP_K']


def test_phase_panel_clips_extrapolated_rho():
    root = ET.fromstring(phase_panels_svg([_curve('sp', 'uniform', [(0.2, -0.3), (0.4, 1.4)])]))
    ys = [float(p.get('cy')) for p in _find(root, 'circle', 'point')]
    top = min(float(r.get('y')) for r in root.iter(SVG + 'rect') if r.get('fill') == 'none')
    assert all(y >= top for y in ys)


def test_histogram_bars_and_reference_lines():
    root = ET.fromstring(histogram_svg({0: 120, 1: 50, 3: 4}, k=40))
    bars = _find(root, 'rect', 'bar')
    assert [(b.get('data-nf'), b.get('data-count')) for b in bars] == [('0', '120'), ('1', '50'), ('3', '4')]
    heights = [float(b.get('height')) for b in bars]
    assert heights[0] > heights[1] > heights[2] > 0

    references = _find(root, 'line', 'reference')
    assert len(references) == 2
    # ceil(40/2) - 1 = 19 lies to the right of 40/4 = 10
    assert float(references[0].get('x1')) > float(references[1].get('x1'))


def test_titles_are_escaped(tmp_path):
    svg = histogram_svg({}, k=4, title='n_f < K & more')
    ET.fromstring(svg)
    path = tmp_path / 'nested' / 'chart.svg'
    write_svg(path, svg)
    assert path.read_text().startswith('<svg')
