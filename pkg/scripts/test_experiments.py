#!/usr/bin/env python3
"""
Sparsebench Experiment Tests
Logistic crossing fits, phase grids, n_f histograms and guarantee sweeps.
Set SPARSEBENCH_SLOW=1 for the full-size histogram cases.
"""

import logging
import math
import os

import numpy as np
import pytest

import experiments
from experiments import (CellResult, PhaseGridConfig, build_transition_curves, count_guarantee_violations,
                         find_online_certificate, fit_rho_50, guarantee_sweep, read_curves_csv, read_histogram_csv,
                         run_first_iteration_study, run_nf_histogram, run_phase_grid, write_cells_csv,
                         write_curves_csv, write_histogram_csv)
from guarantees import Verdict
from sparse_errors import ConfigError, DegenerateData

slow = pytest.mark.skipif(os.environ.get('SPARSEBENCH_SLOW') != '1', reason='set SPARSEBENCH_SLOW=1')


def logistic_cells(a, b, lam=0.5, trials=1000, algorithm='omp_e'):
    cells = []
    for rho in np.linspace(0.1, 0.8, 15):
        p = 1.0 / (1.0 + math.exp(-(a + b * rho)))
        cells.append(CellResult(lam, rho, algorithm, int(round(p * trials)), trials, 'gaussian'))
    return cells


def step_cells(successes, trials=10, lam=0.5):
    rhos = [0.1, 0.2, 0.3, 0.4, 0.5][:len(successes)]
    return [CellResult(lam, rho, 'omp_k', s, trials, 'gaussian') for rho, s in zip(rhos, successes)]


def test_fit_recovers_logistic_crossing():
    rho_50, diagnostics = fit_rho_50(logistic_cells(10.0, -25.0))
    assert rho_50 == pytest.approx(0.4, abs=0.02)
    assert diagnostics.converged
    assert not diagnostics.degenerate
    assert not diagnostics.extrapolated
    assert diagnostics.slope < 0


def test_fit_of_separated_data_returns_midpoint():
    rho_50, diagnostics = fit_rho_50(step_cells([10, 10, 0, 0, 0]))
    assert rho_50 == pytest.approx(0.25)
    assert diagnostics.degenerate


@pytest.mark.parametrize('successes', [[0, 0, 0, 0, 0], [10, 10, 10, 10, 10], [10, 3]])
def test_fit_rejects_degenerate_data(successes):
    with pytest.raises(DegenerateData):
        fit_rho_50(step_cells(successes))


def test_transition_curves_skip_lambdas_without_crossing(tmp_path):
    cells = logistic_cells(10.0, -25.0, lam=0.5) + logistic_cells(10.0, -25.0, lam=0.7)
    cells += [CellResult(0.3, rho, 'omp_e', 0, 10, 'gaussian') for rho in (0.1, 0.2, 0.3)]
    curves = build_transition_curves(cells)
    assert len(curves) == 1
    curve = curves[0]
    assert [p.lam for p in curve.points] == [0.5, 0.7]
    assert curve.rho_at(0.3) is None

    path = tmp_path / 'curves.csv'
    write_curves_csv(path, curves, {'n': 64})
    loaded = read_curves_csv(path)
    assert loaded[0].rho_at(0.7) == pytest.approx(curve.rho_at(0.7), abs=1e-12)
    assert loaded[0].algorithm == curve.algorithm


def small_grid(**overrides):
    params = dict(n=20, lambda_values=[0.5], rho_values=[0.1, 0.3, 0.5], trials_per_cell=6,
                  algorithms=('omp_k', 'omp_e', 'sp'), master_seed=3)
    params.update(overrides)
    return PhaseGridConfig(**params)


def test_phase_grid_is_thread_count_invariant():
    summary = lambda cells: [(c.lam, c.rho, c.algorithm, c.successes) for c in cells]
    single = run_phase_grid(small_grid(), workers=1)
    threaded = run_phase_grid(small_grid(), workers=4)
    assert summary(single) == summary(threaded)
    assert len(single) == 9


def test_phase_grid_progress_counts_every_cell_once(monkeypatch, caplog):
    monkeypatch.setattr(experiments, 'PROGRESS_EVERY', 1)
    with caplog.at_level(logging.INFO, logger='experiments'):
        run_phase_grid(small_grid(rho_values=[0.1, 0.2, 0.3, 0.4, 0.5], trials_per_cell=1), workers=4)
    progress = sorted(r.getMessage().split()[1] for r in caplog.records if 'cells finished' in r.getMessage())
    assert progress == sorted(f"{i}/5" for i in range(1, 6))


def test_phase_grid_single_sparse_cells_always_succeed():
    for cell in run_phase_grid(small_grid()):
        if cell.k == 1:
            assert cell.successes == cell.trials


def test_phase_grid_rejects_k_equal_m():
    with pytest.raises(ConfigError):
        small_grid(rho_values=[0.1, 1.0])


def test_default_rho_grid_stays_below_m():
    cfg = PhaseGridConfig(n=20, lambda_values=[0.2, 0.5], trials_per_cell=1, rho_count=30)
    for _, _, _, _, m, k in cfg.cells():
        assert 1 <= k < m


def test_cells_csv_has_config_header(tmp_path):
    cfg = small_grid(trials_per_cell=2)
    path = tmp_path / 'cells.csv'
    write_cells_csv(path, run_phase_grid(cfg), cfg.to_dict())
    lines = path.read_text().splitlines()
    assert lines[0].startswith('# ')
    columns = next(line for line in lines if not line.startswith('#'))
    assert columns == 'lambda,rho,algorithm,ensemble,successes,trials'


def test_histogram_with_single_sparse_signals(tmp_path):
    histogram = run_nf_histogram(10, 1, 20, trials=12, seed=4)
    assert histogram.counts == {0: 12}
    assert histogram.ompk_successes == 12

    path = tmp_path / 'histogram.csv'
    write_histogram_csv(path, histogram, {'m': 10})
    assert read_histogram_csv(path) == {0: 12}


def test_histogram_records_iterations():
    histogram = run_nf_histogram(20, 4, 40, trials=30, seed=6)
    assert sum(histogram.counts.values()) == histogram.ompe_successes
    for record in histogram.records:
        if record['ompe_success']:
            assert record['iterations'] == 4 + record['n_f']
    assert histogram.counts.get(0, 0) >= histogram.ompk_successes
    for record in histogram.records:
        if record['ompk_success']:
            assert record['ompk_within_tolerance']
            assert record['ompe_success'] and record['n_f'] == 0
    summary = histogram.to_dict()
    assert summary['theorem_nf_limit'] == 1
    assert summary['quarter_k'] == 1.0


def test_histogram_is_thread_count_invariant():
    single = run_nf_histogram(20, 4, 40, trials=12, seed=5, workers=1)
    threaded = run_nf_histogram(20, 4, 40, trials=12, seed=5, workers=3)
    assert single.records == threaded.records


def test_histogram_rejects_bad_case():
    with pytest.raises(ValueError):
        run_nf_histogram(10, 10, 20, trials=1)


@pytest.mark.parametrize('matrix_kind, m, n, k', [('gaussian', 8, 16, 3), ('tight_frame', 15, 18, 2)])
def test_guarantee_sweep_has_no_counterexamples(matrix_kind, m, n, k):
    reports = guarantee_sweep(m, n, k, instances=25, seed=11, matrix_kind=matrix_kind)
    assert len(reports) == 25
    assert count_guarantee_violations(reports) == 0
    for report in reports:
        assert len(report.per_iteration) == report.iterations + 1


def test_online_certificate_on_tight_frames():
    report = find_online_certificate(15, 18, 2, seed=0, search_limit=2000, matrix_kind='tight_frame')
    assert report is not None
    assert report.wang_verdict is Verdict.FAILED
    assert report.exact_recovery
    row = next(r for r in report.per_iteration if r.online_condition_holds)
    assert row.n_c < 2
    assert report.iterations == 2 + row.n_f


def test_first_iteration_study_bounds_hold():
    study = run_first_iteration_study(10, 20, 3, trials=10, seed=2)
    assert set(study) == {'gaussian', 'uniform', 'cars'}
    for row in study.values():
        assert row['bound_violations'] == 0
        assert row['bounded_trials'] == 10
        assert 0.0 <= row['first_miss_rate'] <= 1.0
    assert study['cars']['mean_cars_bound'] is not None
    assert study['gaussian']['mean_cars_bound'] is None


@slow
def test_guarantee_sweep_thousand_instances():
    reports = guarantee_sweep(8, 16, 3, instances=1000, seed=2, workers=4)
    assert count_guarantee_violations(reports) == 0


@slow
@pytest.mark.parametrize('m, k, ompk_range', [(125, 40, (99, 139)), (150, 52, (77, 117))])
def test_full_size_histograms(m, k, ompk_range):
    histogram = run_nf_histogram(m, k, 250, trials=200, seed=20140501, workers=4)
    low, high = ompk_range
    assert low <= histogram.ompk_successes <= high
    assert histogram.ompe_successes >= 190
    assert histogram.counts.get(0, 0) >= histogram.ompk_successes
    assert histogram.ompk_within_tolerance >= histogram.ompk_successes


@slow
@pytest.mark.xfail(strict=True, raises=AssertionError,
                   reason='n_f reaches 22 > ceil(K/2) - 1 at seed 1 and exceeds K/4 at most seeds; see DESIGN.md')
def test_nf_bound_over_seeds():
    k = 40
    max_nfs = [run_nf_histogram(125, k, 250, trials=200, seed=seed, workers=4).max_nf
               for seed in (20140501, 1, 2, 3, 4)]
    assert all(nf <= (k + 1) // 2 - 1 for nf in max_nfs), max_nfs
    assert sum(nf <= k / 4.0 for nf in max_nfs) >= 0.95 * len(max_nfs), max_nfs


@slow
def test_desk_phase_transition_ordering():
    cells = []
    lambdas = [round(0.1 * i, 1) for i in range(1, 10)]
    for ensemble in ('gaussian', 'uniform', 'cars'):
        cfg = PhaseGridConfig(n=64, lambda_values=lambdas, trials_per_cell=50, rho_count=30,
                              algorithms=('omp_k', 'omp_e', 'bp'), ensemble=ensemble, master_seed=9)
        cells += run_phase_grid(cfg, workers=4)
    curves = {(c.ensemble.value, c.algorithm.label): c for c in build_transition_curves(cells)}

    for ensemble in ('gaussian', 'uniform', 'cars'):
        for lam in lambdas:
            omp_e = curves[ensemble, 'OMP_e'].rho_at(lam)
            omp_k = curves[ensemble, 'OMP_K'].rho_at(lam)
            if omp_e is not None and omp_k is not None:
                assert omp_e >= omp_k - 0.02, (ensemble, lam)
    for lam in (0.5, 0.7):
        gaussian, uniform, cars = (curves[e, 'OMP_e'].rho_at(lam) for e in ('gaussian', 'uniform', 'cars'))
        assert gaussian > uniform > cars, lam
        assert gaussian > cars + 0.02
    for lam in (0.3, 0.5, 0.7):
        bp = [curves[e, 'BP'].rho_at(lam) for e in ('gaussian', 'uniform', 'cars')]
        assert max(bp) - min(bp) < 0.05, (lam, bp)
