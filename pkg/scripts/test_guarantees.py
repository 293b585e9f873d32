#!/usr/bin/env python3
"""
Sparsebench Guarantee Tests
RIC oracles, bound arithmetic and online certification of OMP_e traces.
"""

import math
import os

import numpy as np
import pytest

from ensembles import gen_gaussian_matrix, gen_sparse_signal, measure, orthonormal_matrix, trial_seeds
from guarantees import (Exactness, RicCalculator, RicTable, Verdict, build_ric_table, certify_trace,
                        check_online_iteration, check_online_iteration_sharp, check_thrm4_preconditions,
                        check_wang_condition, correlation_bounds, exact_ric, lemma1_check, lemma2_check,
                        monte_carlo_ric, nc_lower_bound, online_bound, ric_inequality_suite, thrm4_delta_window,
                        wang_bound)
from recovery import recover
from sparse_errors import BudgetExceeded, ColumnsNotNormalized, EXIT_BUDGET_EXCEEDED, KTooSmall, RicIndexMissing

slow = pytest.mark.skipif(os.environ.get('SPARSEBENCH_SLOW') != '1', reason='set SPARSEBENCH_SLOW=1')


@pytest.mark.parametrize('degrees', [15, 30, 45, 60, 75])
def test_exact_ric_two_column_coherence(degrees):
    theta = math.radians(degrees)
    Phi = np.array([[1.0, math.cos(theta)], [0.0, math.sin(theta)]])
    assert exact_ric(Phi, 2) == pytest.approx(abs(math.cos(theta)), abs=1e-8)
    assert exact_ric(Phi, 1) == pytest.approx(0.0, abs=1e-12)


def test_exact_ric_of_orthonormal_columns_is_zero():
    Phi = orthonormal_matrix(10, 6, seed=3)
    for k in range(1, 7):
        assert exact_ric(Phi, k) < 1e-12


def test_exact_ric_is_thread_count_invariant():
    Phi = gen_gaussian_matrix(8, 16, seed=4)
    assert exact_ric(Phi, 3, workers=1) == exact_ric(Phi, 3, workers=4)


def test_exact_ric_budget():
    Phi = gen_gaussian_matrix(8, 16, seed=4)
    with pytest.raises(BudgetExceeded) as info:
        exact_ric(Phi, 3, budget=100)
    assert info.value.required == math.comb(16, 3)
    assert info.value.exit_code == EXIT_BUDGET_EXCEEDED
    assert '--mode mc' in info.value.suggestion


def test_monte_carlo_is_a_lower_bound():
    Phi = gen_gaussian_matrix(8, 16, seed=5)
    exact = exact_ric(Phi, 4)
    estimate = monte_carlo_ric(Phi, 4, samples=200, seed=1)
    assert 0.0 <= estimate <= exact + 1e-12
    assert estimate == monte_carlo_ric(Phi, 4, samples=200, seed=1)


def test_monte_carlo_with_every_subset_is_exact():
    Phi = gen_gaussian_matrix(6, 10, seed=6)
    assert monte_carlo_ric(Phi, 3, samples=math.comb(10, 3), seed=0) == exact_ric(Phi, 3)
    table = build_ric_table(Phi, 3, mode='mc', samples=math.comb(10, 3))
    assert table.exactness(3) is Exactness.EXACT


def test_ric_table_orders_above_m_fail_rip():
    Phi = gen_gaussian_matrix(4, 8, seed=7)
    table = build_ric_table(Phi, 6)
    assert table.delta(5) == 1.0
    assert table.exactness(5) is Exactness.LOWER_BOUND
    assert table.exactness(4) is Exactness.EXACT
    assert table.is_monotone()


def test_ric_table_json_and_missing_order():
    table = RicTable('m', [(1, 0.0, 'Exact'), (2, 0.3, 'Exact'), (3, 0.45, 'LowerBound')])
    loaded = RicTable.from_dict(table.to_dict())
    assert loaded.lookup(3) == (0.45, Exactness.LOWER_BOUND)
    assert loaded.k_max == 3
    with pytest.raises(RicIndexMissing):
        loaded.lookup(4)


def test_calculator_answers_from_monotonicity():
    Phi = gen_gaussian_matrix(8, 16, seed=8)
    calculator = RicCalculator(Phi)
    delta_2, _ = calculator.lookup(2)
    delta, exactness = calculator.lookup(5, threshold=delta_2 / 2)
    assert delta == delta_2
    assert exactness is Exactness.LOWER_BOUND
    assert not calculator.table.covers(5)


def test_bound_values():
    assert wang_bound(1) == pytest.approx(0.5)
    assert wang_bound(4) == pytest.approx(1.0 / 3.0)
    assert online_bound(9, 9) == pytest.approx(1.0)
    assert online_bound(9, 0) == pytest.approx(wang_bound(9))
    assert nc_lower_bound(25) == pytest.approx(24.0)
    assert nc_lower_bound(100) == pytest.approx(836.0 / 9.0)
    with pytest.raises(KTooSmall):
        nc_lower_bound(24)


@pytest.mark.parametrize('k, n_c, n_f, expected', [
    (25, 24, 1, True),
    (25, 24, 12, True),
    (25, 24, 13, False),
    (25, 24, 0, False),
    (25, 23, 1, False),
    (25, 25, 1, False),
    (24, 23, 1, False),
    (100, 93, 10, True),
    (100, 92, 10, False),
])
def test_thrm4_preconditions(k, n_c, n_f, expected):
    assert check_thrm4_preconditions(k, n_c, n_f) is expected


@pytest.mark.parametrize('k', [25, 49, 100, 400])
def test_delta_window_opens_exactly_at_nc_lower_bound(k):
    for n_c in range(k):
        low, high = thrm4_delta_window(k, n_c)
        assert (low <= high) == (n_c >= nc_lower_bound(k)), f"K={k}, n_c={n_c}"


def test_online_condition_verdicts():
    table = RicTable('t', [(3, 0.45, 'Exact'), (4, 0.45, 'LowerBound'), (5, 0.6, 'Exact')])
    assert check_online_iteration(table, 2, 1, 0) is Verdict.CERTIFIED
    assert check_online_iteration(table, 2, 0, 0) is Verdict.FAILED
    assert check_online_iteration(table, 2, 1, 1) is Verdict.INCONCLUSIVE_POSITIVE
    assert check_online_iteration(table, 2, 1, 2) is Verdict.FAILED
    assert check_wang_condition(table, 2) is Verdict.FAILED
    assert not Verdict.INCONCLUSIVE_POSITIVE
    assert Verdict.CERTIFIED


def test_online_condition_implies_sharp_condition():
    rng = np.random.default_rng(0)
    for _ in range(200):
        deltas = np.sort(rng.uniform(0.0, 0.8, size=8))
        table = RicTable('r', [(k, d, 'Exact') for k, d in enumerate(deltas, start=1)])
        k = int(rng.integers(1, 5))
        n_c = int(rng.integers(0, k + 1))
        n_f = int(rng.integers(0, 8 - k))
        if check_online_iteration(table, k, n_c, n_f):
            assert check_online_iteration_sharp(table, k, n_c, n_f) is Verdict.CERTIFIED


def _inequality_suite(matrices):
    failures = []
    for seed in range(matrices):
        table = build_ric_table(gen_gaussian_matrix(8, 16, seed=seed), 6)
        for k in range(1, 5):
            failures += [r for r in ric_inequality_suite(table, k) if not r.passed]
    return failures


def test_ric_inequalities_on_random_matrices():
    assert _inequality_suite(5) == []


@slow
def test_ric_inequalities_on_fifty_matrices():
    assert _inequality_suite(50) == []


def test_ric_inequalities_on_orthonormal_columns():
    table = build_ric_table(orthonormal_matrix(10, 8, seed=1), 6)
    results = ric_inequality_suite(table, 4)
    assert all(r.passed for r in results)
    assert results[-1].vacuous


def test_ric_inequality_suite_needs_exact_values():
    table = RicTable('t', [(k, 0.1 * k, 'LowerBound') for k in range(1, 7)])
    with pytest.raises(RicIndexMissing):
        ric_inequality_suite(table, 2)


@pytest.mark.parametrize('seed', range(3))
def test_lemma_checks_on_random_matrices(seed):
    Phi = gen_gaussian_matrix(8, 16, seed=100 + seed)
    table = build_ric_table(Phi, 6)
    for k in range(1, 5):
        assert lemma1_check(Phi, table, k, trials=20, seed=seed) == 0
    assert lemma2_check(Phi, table, trials=20, seed=seed) == 0


@pytest.mark.parametrize('ensemble', ['gaussian', 'uniform', 'cars'])
def test_correlation_bounds_hold(ensemble):
    for seed in range(100):
        matrix_seed, signal_seed = trial_seeds(seed, 10, 20)
        Phi = gen_gaussian_matrix(10, 20, matrix_seed)
        x = gen_sparse_signal(20, 3, ensemble, signal_seed)
        observed, general, cars = correlation_bounds(Phi, x, exact_ric(Phi, 3))
        assert observed <= general + 1e-9
        if ensemble == 'cars':
            assert observed <= cars + 1e-9
        else:
            assert cars is None


def test_correlation_bounds_need_unit_columns():
    Phi = gen_gaussian_matrix(10, 20, seed=0, normalize=False)
    with pytest.raises(ColumnsNotNormalized):
        correlation_bounds(Phi, gen_sparse_signal(20, 3, 'gaussian', 0), 0.5)


def test_certify_trace_on_orthonormal_columns():
    Phi = orthonormal_matrix(16, 8, seed=2)
    x = gen_sparse_signal(8, 3, 'gaussian', seed=5)
    trace = recover('omp_e', Phi, measure(Phi, x))
    report = certify_trace(trace, x, RicCalculator(Phi))

    assert report.wang_condition_holds
    assert all(row.verdict is Verdict.CERTIFIED for row in report.per_iteration)
    assert all(row.next_correct for row in report.per_iteration[:-1])
    assert report.first_certified_iteration == 0
    assert report.completed_in_k_plus_nf
    assert not report.thrm4_preconditions_hold

    data = report.to_dict()
    assert data['K'] == 3
    assert len(data['per_iteration']) == trace.iterations + 1
    assert 'Certified' in report.render_table()


def test_certify_trace_marks_orders_above_m_as_failed():
    Phi = gen_gaussian_matrix(4, 8, seed=3)
    x = gen_sparse_signal(8, 3, 'gaussian', seed=3)
    report = certify_trace(recover('omp_e', Phi, measure(Phi, x)), x, RicCalculator(Phi))
    # delta_{K+1} = delta_4 is fine at M = 4 but delta_5 and beyond are not
    for row in report.per_iteration:
        if row.ric_order > 4:
            assert row.verdict is Verdict.FAILED
            assert row.ric_exactness is Exactness.LOWER_BOUND


def test_certify_trace_reports_exact_delta_after_monotone_shortcut():
    for seed in range(10):
        matrix_seed, signal_seed = trial_seeds(seed, 8, 16, 3)
        Phi = gen_gaussian_matrix(8, 16, matrix_seed)
        x = gen_sparse_signal(16, 3, 'gaussian', signal_seed)
        calculator = RicCalculator(Phi)
        report = certify_trace(recover('omp_e', Phi, measure(Phi, x)), x, calculator)
        for row in report.per_iteration:
            if row.ric_used >= 1.0:
                continue
            assert row.ric_exactness is Exactness.EXACT, f"seed {seed}, l={row.l}"
            assert row.ric_used == calculator.table.delta(row.ric_order)
