#!/usr/bin/env python3
"""
Sparsebench Experiments Module
Implements the Monte-Carlo studies: lambda-rho phase transitions with a
logistic 50% crossing per lambda, n_f histograms of successful OMP_e runs,
and guarantee sweeps that certify OMP_e traces on enumerable instances.

Every trial draws from substreams keyed by (master seed, cell indices, trial
index), and results are gathered in grid order, so tables do not depend on
the number of worker threads.
"""

import csv
import json
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ensembles import EnsembleKind, gen_gaussian_matrix, gen_matrix, gen_sparse_signal, measure, trial_seeds
from experiment_config import default_rho_values, grid_dimensions, validate_grid
from guarantees import RicCalculator, Verdict, certify_trace, correlation_bounds
from recovery import Algorithm, diagnose, is_exact_recovery, recover
from sparse_errors import BudgetExceeded, DegenerateData, SolverError

logger = logging.getLogger(__name__)

FIT_TOLERANCE = 1e-8
FIT_MAX_ITERATIONS = 100
MIN_SLOPE = 1e-6
PROGRESS_EVERY = 25


def _pool_map(fn, items, workers):
    """Ordered map over items, threaded when workers > 1"""
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Phase transitions
# ---------------------------------------------------------------------------

class PhaseGridConfig:
    """One ensemble's lambda-rho grid

    ``rho_values=None`` uses rho_count evenly spaced values in [1/M, 1) for
    each lambda.
    """

    def __init__(self, n=64, lambda_values=None, rho_values=None, trials_per_cell=50,
                 algorithms=('omp_k', 'omp_e', 'sp'), ensemble='gaussian', master_seed=0,
                 normalize_columns=True, rho_count=30):
        self.n = int(n)
        self.lambda_values = [float(v) for v in (lambda_values or [i / 10 for i in range(1, 10)])]
        self.rho_values = [float(v) for v in rho_values] if rho_values else None
        self.rho_count = int(rho_count)
        self.trials_per_cell = int(trials_per_cell)
        self.algorithms = [Algorithm.parse(a) for a in algorithms]
        self.ensemble = EnsembleKind.parse(ensemble)
        self.master_seed = int(master_seed)
        self.normalize_columns = bool(normalize_columns)
        validate_grid(self.to_dict())

    def rhos_for(self, lam):
        m, _ = grid_dimensions(self.n, lam, 0.0)
        return self.rho_values or default_rho_values(m, self.rho_count)

    def cells(self):
        """(lambda index, rho index, lambda, rho, M, K) for every valid cell"""
        for li, lam in enumerate(self.lambda_values):
            for ri, rho in enumerate(self.rhos_for(lam)):
                m, k = grid_dimensions(self.n, lam, rho)
                if k < m:
                    yield li, ri, lam, rho, m, k

    def to_dict(self):
        return {
            'n': self.n,
            'lambda_values': self.lambda_values,
            'rho_values': self.rho_values,
            'rho_count': self.rho_count,
            'trials_per_cell': self.trials_per_cell,
            'algorithms': [a.value for a in self.algorithms],
            'ensemble': self.ensemble.value,
            'master_seed': self.master_seed,
            'normalize_columns': self.normalize_columns,
        }


class CellResult:
    def __init__(self, lam, rho, algorithm, successes, trials, ensemble, m=None, k=None):
        if not 0 <= successes <= trials:
            raise ValueError(f"successes {successes} outside [0, {trials}]")
        self.lam = float(lam)
        self.rho = float(rho)
        self.algorithm = Algorithm.parse(algorithm)
        self.successes = int(successes)
        self.trials = int(trials)
        self.ensemble = EnsembleKind.parse(ensemble)
        self.m = m
        self.k = k

    @property
    def rate(self):
        return self.successes / self.trials if self.trials else 0.0

    def to_row(self):
        return [repr(self.lam), repr(self.rho), self.algorithm.label, self.ensemble.value,
                self.successes, self.trials]

    def __repr__(self):
        return (f"CellResult(lambda={self.lam}, rho={self.rho:.4f}, {self.algorithm.label}, "
                f"{self.successes}/{self.trials})")


def _run_cell(cfg, cell):
    li, ri, lam, rho, m, k = cell
    successes = {a: 0 for a in cfg.algorithms}

    for j in range(cfg.trials_per_cell):
        matrix_seed, signal_seed = trial_seeds(cfg.master_seed, li, ri, j)
        Phi = gen_gaussian_matrix(m, cfg.n, matrix_seed, normalize=cfg.normalize_columns)
        x = gen_sparse_signal(cfg.n, k, cfg.ensemble, signal_seed)
        y = measure(Phi, x)

        for algorithm in cfg.algorithms:
            try:
                trace = recover(algorithm, Phi, y, k=k)
                if is_exact_recovery(x, trace.estimate):
                    successes[algorithm] += 1
            except Exception as e:
                logger.warning(f"⚠️ {algorithm.label} failed at lambda={lam}, rho={rho:.4f}, trial {j}: {e}")

    return [CellResult(lam, rho, a, successes[a], cfg.trials_per_cell, cfg.ensemble, m, k)
            for a in cfg.algorithms]


def run_phase_grid(cfg, workers=1):
    """Success counts for every (lambda, rho, algorithm) cell of the grid"""
    cells = list(cfg.cells())
    logger.info(f"🗺️ Phase grid: {cfg.ensemble.value}, N={cfg.n}, {len(cells)} cells x "
                f"{cfg.trials_per_cell} trials, {len(cfg.algorithms)} algorithms, {workers} workers")
    start_time = time.time()

    done = [0]
    done_lock = threading.Lock()

    def run(cell):
        results = _run_cell(cfg, cell)
        with done_lock:
            done[0] += 1
            finished = done[0]
        if finished % PROGRESS_EVERY == 0:
            logger.info(f"🗺️ {finished}/{len(cells)} cells finished")
        return results

    results = [r for cell_results in _pool_map(run, cells, workers) for r in cell_results]
    logger.info(f"✅ Phase grid {cfg.ensemble.value} finished in {time.time() - start_time:.1f}s")
    return results


class FitDiagnostics:
    def __init__(self, converged, iterations, degenerate=False, extrapolated=False, intercept=None, slope=None):
        self.converged = converged
        self.iterations = iterations
        self.degenerate = degenerate
        self.extrapolated = extrapolated
        self.intercept = intercept
        self.slope = slope

    def to_dict(self):
        return {
            'converged': self.converged,
            'iterations': self.iterations,
            'degenerate': self.degenerate,
            'extrapolated': self.extrapolated,
            'intercept': self.intercept,
            'slope': self.slope,
        }


def _sigmoid(t):
    return 1.0 / (1.0 + np.exp(-t))


def fit_rho_50(cells):
    """rho at which a logistic fit of success against rho crosses 50%

    Fits P(success) = 1 / (1 + exp(-(a + b rho))) by Newton / IRLS on the
    binomial likelihood and returns (-a/b, FitDiagnostics). Completely
    separated data have no finite maximum; they return the midpoint between
    the last all-success rho and the first all-failure rho, flagged degenerate.
    """
    rho = np.array([c.rho for c in cells], dtype=np.float64)
    s = np.array([c.successes for c in cells], dtype=np.float64)
    t = np.array([c.trials for c in cells], dtype=np.float64)

    if np.unique(rho).size < 3:
        raise DegenerateData(f"need at least 3 distinct rho values, got {np.unique(rho).size}")
    if s.sum() == 0 or s.sum() == t.sum():
        raise DegenerateData("responses are constant (all success or all failure)")

    last_success = rho[s > 0].max()
    first_failure = rho[s < t].min()
    if last_success <= first_failure:
        estimate = 0.5 * (last_success + first_failure)
        return estimate, FitDiagnostics(False, 0, degenerate=True, intercept=None, slope=None)

    X = np.column_stack([np.ones_like(rho), rho])
    coef = np.zeros(2)
    converged = False
    iterations = 0
    for iterations in range(1, FIT_MAX_ITERATIONS + 1):
        p = _sigmoid(X @ coef)
        gradient = X.T @ (s - t * p)
        hessian = (X * (t * p * (1.0 - p))[:, None]).T @ X
        try:
            step = np.linalg.solve(hessian, gradient)
        except np.linalg.LinAlgError:
            raise DegenerateData("logistic Hessian is singular")
        coef = coef + step
        if np.max(np.abs(step)) < FIT_TOLERANCE:
            converged = True
            break

    a, b = float(coef[0]), float(coef[1])
    if not (np.isfinite(a) and np.isfinite(b)) or abs(b) < MIN_SLOPE:
        raise DegenerateData(f"fitted slope {b:.3g} is numerically zero")
    if not converged:
        logger.warning(f"⚠️ logistic fit did not converge in {FIT_MAX_ITERATIONS} iterations")

    rho_50 = -a / b
    extrapolated = not rho.min() <= rho_50 <= rho.max()
    return rho_50, FitDiagnostics(converged, iterations, False, extrapolated, a, b)


class TransitionPoint:
    def __init__(self, lam, rho_50, diagnostics):
        self.lam = lam
        self.rho_50 = rho_50
        self.diagnostics = diagnostics


class TransitionCurve:
    def __init__(self, algorithm, ensemble, points=None):
        self.algorithm = Algorithm.parse(algorithm)
        self.ensemble = EnsembleKind.parse(ensemble)
        self.points = points or []

    def rho_at(self, lam):
        for point in self.points:
            if math.isclose(point.lam, lam):
                return point.rho_50
        return None

    def to_rows(self):
        return [
            [self.algorithm.label, self.ensemble.value, repr(p.lam), repr(float(p.rho_50)),
             p.diagnostics.converged, p.diagnostics.iterations, p.diagnostics.degenerate,
             p.diagnostics.extrapolated]
            for p in self.points
        ]

    def to_dict(self):
        return {
            'algorithm': self.algorithm.label,
            'ensemble': self.ensemble.value,
            'points': [
                {'lambda': p.lam, 'rho_50': float(p.rho_50), 'fit_diagnostics': p.diagnostics.to_dict()}
                for p in self.points
            ],
        }


def build_transition_curves(cells):
    """Group cells by (ensemble, algorithm, lambda) and fit rho_50 per group"""
    groups = {}
    for cell in cells:
        groups.setdefault((cell.ensemble, cell.algorithm), {}).setdefault(cell.lam, []).append(cell)

    curves = []
    for (ensemble, algorithm), by_lambda in groups.items():
        curve = TransitionCurve(algorithm, ensemble)
        for lam in sorted(by_lambda):
            try:
                rho_50, diagnostics = fit_rho_50(by_lambda[lam])
            except DegenerateData as e:
                logger.warning(f"⚠️ {ensemble.value} {algorithm.label} lambda={lam}: no crossing ({e})")
                continue
            curve.points.append(TransitionPoint(lam, rho_50, diagnostics))
        curves.append(curve)
    return curves


# ---------------------------------------------------------------------------
# n_f histograms
# ---------------------------------------------------------------------------

class NfHistogram:
    """Final n_f over the OMP_e-successful trials of one (M, K, N) case"""

    def __init__(self, m, k, n, trials, ensemble, seed):
        self.m = m
        self.k = k
        self.n = n
        self.trials = trials
        self.ensemble = EnsembleKind.parse(ensemble)
        self.seed = seed
        self.ompk_successes = 0
        self.ompk_within_tolerance = 0
        self.ompe_successes = 0
        self.counts = {}
        self.support_mismatches = 0
        self.records = []

    @property
    def max_nf(self):
        return max(self.counts) if self.counts else 0

    def add(self, record):
        self.records.append(record)
        if record['ompk_success']:
            self.ompk_successes += 1
        if record['ompk_within_tolerance']:
            self.ompk_within_tolerance += 1
        if record['ompe_success']:
            self.ompe_successes += 1
            n_f = record['n_f']
            self.counts[n_f] = self.counts.get(n_f, 0) + 1
            if record['iterations'] != self.k + n_f:
                self.support_mismatches += 1

    def to_dict(self):
        return {
            'm': self.m,
            'k': self.k,
            'n': self.n,
            'trials': self.trials,
            'ensemble': self.ensemble.value,
            'seed': self.seed,
            'ompk_successes': self.ompk_successes,
            'ompk_within_tolerance': self.ompk_within_tolerance,
            'ompe_successes': self.ompe_successes,
            'counts': {str(nf): c for nf, c in sorted(self.counts.items())},
            'max_nf': self.max_nf,
            'support_mismatches': self.support_mismatches,
            'theorem_nf_limit': (self.k + 1) // 2 - 1,
            'quarter_k': self.k / 4.0,
        }


def _histogram_trial(m, k, n, ensemble, seed, j):
    matrix_seed, signal_seed = trial_seeds(seed, j)
    Phi = gen_gaussian_matrix(m, n, matrix_seed)
    x = gen_sparse_signal(n, k, ensemble, signal_seed)
    y = measure(Phi, x)
    record = {'trial': j, 'ompk_success': False, 'ompk_within_tolerance': False, 'ompe_success': False,
              'n_f': None, 'iterations': None}

    try:
        trace = recover(Algorithm.OMP_K, Phi, y, k=k)
        # OMP_K counts only when it found the support; these are the n_f = 0 runs of OMP_e
        record['ompk_success'] = set(trace.selected) == set(int(i) for i in x.support)
        record['ompk_within_tolerance'] = is_exact_recovery(x, trace.estimate)
    except SolverError as e:
        logger.warning(f"⚠️ OMP_K failed on trial {j}: {e}")

    try:
        trace = recover(Algorithm.OMP_E, Phi, y)
        if is_exact_recovery(x, trace.estimate):
            record['ompe_success'] = True
            record['n_f'] = diagnose(trace, x).n_f
            record['iterations'] = trace.iterations
    except SolverError as e:
        logger.warning(f"⚠️ OMP_e failed on trial {j}: {e}")
    return record


def run_nf_histogram(m, k, n, trials, ensemble='gaussian', seed=0, workers=1):
    if not k < m < n:
        raise ValueError(f"histogram needs k < m < n, got m={m}, k={k}, n={n}")
    ensemble = EnsembleKind.parse(ensemble)
    logger.info(f"📊 n_f histogram: M={m}, K={k}, N={n}, {trials} trials, {ensemble.value}")
    start_time = time.time()

    histogram = NfHistogram(m, k, n, trials, ensemble, seed)
    for record in _pool_map(lambda j: _histogram_trial(m, k, n, ensemble, seed, j), range(trials), workers):
        histogram.add(record)

    logger.info(f"✅ Histogram done in {time.time() - start_time:.1f}s: OMP_K {histogram.ompk_successes}/{trials}, "
                f"OMP_e {histogram.ompe_successes}/{trials}, max n_f {histogram.max_nf}")
    if histogram.support_mismatches:
        logger.warning(f"⚠️ {histogram.support_mismatches} OMP_e successes missed a tiny support entry")
    return histogram


# ---------------------------------------------------------------------------
# Guarantee sweeps
# ---------------------------------------------------------------------------

def _certify_instance(m, n, k, ensemble, seed, index, budget, matrix_kind):
    matrix_seed, signal_seed = trial_seeds(seed, index)
    Phi = gen_matrix(matrix_kind, m, n, matrix_seed)
    x = gen_sparse_signal(n, k, ensemble, signal_seed)
    trace = recover(Algorithm.OMP_E, Phi, measure(Phi, x))
    calculator = RicCalculator(Phi, f"instance-{index}", budget=budget)
    instance = {'index': index, 'm': m, 'n': n, 'k': k, 'matrix_kind': matrix_kind,
                'ensemble': EnsembleKind.parse(ensemble).value,
                'seed': seed, 'matrix_seed': matrix_seed, 'signal_seed': signal_seed}
    return certify_trace(trace, x, calculator, instance), calculator


def guarantee_sweep(m, n, k, ensemble='gaussian', instances=20, seed=0, budget=2_000_000, workers=1,
                    matrix_kind='gaussian'):
    """Certify the OMP_e trace of `instances` random small instances with exact RICs"""
    logger.info(f"🛡️ Guarantee sweep: {instances} instances at M={m}, N={n}, K={k}")

    def run(index):
        try:
            return _certify_instance(m, n, k, ensemble, seed, index, budget, matrix_kind)[0]
        except SolverError as e:
            logger.warning(f"⚠️ instance {index} skipped: {e}")
            return None

    reports = [r for r in _pool_map(run, range(instances), workers) if r is not None]
    logger.info(f"✅ Guarantee sweep certified {sum(r.first_certified_iteration is not None for r in reports)}"
                f"/{len(reports)} traces at some iteration")
    return reports


def count_guarantee_violations(reports):
    """Certified states whose next pick was wrong or whose run missed K + n_f iterations"""
    violations = 0
    for report in reports:
        for row in report.per_iteration:
            if row.verdict is not Verdict.CERTIFIED:
                continue
            if row.next_correct is False:
                violations += 1
            elif not (report.exact_recovery and report.iterations == report.K + row.n_f):
                violations += 1
    return violations


def find_online_certificate(m, n, k, ensemble='gaussian', seed=0, search_limit=5000, budget=2_000_000,
                            matrix_kind='gaussian'):
    """First instance where the K-step condition fails yet an intermediate state is certified

    An intermediate state has n_c < K; recovery must then complete exactly in
    K + n_f iterations. Returns the GuaranteeReport or None.
    """
    logger.info(f"🔍 Searching up to {search_limit} seeds for an online certificate (M={m}, N={n}, K={k})")
    for index in range(search_limit):
        try:
            report, _ = _certify_instance(m, n, k, ensemble, seed, index, budget, matrix_kind)
        except SolverError as e:
            logger.debug(f"instance {index} skipped: {e}")
            continue

        if report.wang_verdict is not Verdict.FAILED or not report.exact_recovery:
            continue
        for row in report.per_iteration:
            if row.online_condition_holds and row.n_c < k and report.iterations == k + row.n_f:
                logger.info(f"✅ Certificate found at instance {index}, iteration {row.l} "
                            f"(n_c={row.n_c}, n_f={row.n_f})")
                return report
    logger.warning(f"⚠️ No online certificate within {search_limit} seeds")
    return None


def run_first_iteration_study(m, n, k, trials, seed=0, budget=2_000_000):
    """Per ensemble: how often OMP's first pick misses T, and the correlation bounds

    Each trial reuses the same matrix across ensembles, so the rows differ
    only in the signal amplitudes.
    """
    study = {}
    for ensemble in EnsembleKind:
        misses = 0
        violations = 0
        observed, general, cars = [], [], []
        for j in range(trials):
            matrix_seed, signal_seed = trial_seeds(seed, j)
            Phi = gen_gaussian_matrix(m, n, matrix_seed)
            x = gen_sparse_signal(n, k, ensemble, signal_seed)
            y = measure(Phi, x)
            first = int(np.argmax(np.abs(Phi.matrix.T @ y)))
            if first not in set(int(i) for i in x.support):
                misses += 1

            try:
                delta = RicCalculator(Phi, budget=budget).delta(k)
            except BudgetExceeded:
                continue
            obs, gen, car = correlation_bounds(Phi, x, delta)
            observed.append(obs)
            general.append(gen)
            if obs > gen + 1e-9 or (car is not None and obs > car + 1e-9):
                violations += 1
            if car is not None:
                cars.append(car)

        study[ensemble.value] = {
            'first_miss_rate': misses / trials,
            'mean_observed': float(np.mean(observed)) if observed else None,
            'mean_general_bound': float(np.mean(general)) if general else None,
            'mean_cars_bound': float(np.mean(cars)) if cars else None,
            'bound_violations': violations,
            'bounded_trials': len(observed),
        }
        logger.info(f"🎯 {ensemble.value:>8}: first pick misses T in {misses}/{trials} trials")
    return study


# ---------------------------------------------------------------------------
# Writers and readers
# ---------------------------------------------------------------------------

CELL_COLUMNS = ['lambda', 'rho', 'algorithm', 'ensemble', 'successes', 'trials']
CURVE_COLUMNS = ['algorithm', 'ensemble', 'lambda', 'rho_50', 'converged', 'iterations', 'degenerate', 'extrapolated']


def _header(f, config):
    for key, value in config.items():
        f.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")


def _write_csv(path, config, columns, rows):
    with open(path, 'w', newline='') as f:
        _header(f, config)
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        writer.writerows(rows)
    logger.debug(f"Wrote {len(rows)} rows to {path}")


def _read_csv(path):
    with open(path, newline='') as f:
        lines = [line for line in f if not line.startswith('#')]
    return list(csv.DictReader(lines))


def write_cells_csv(path, cells, config):
    _write_csv(path, config, CELL_COLUMNS, [c.to_row() for c in cells])


def write_curves_csv(path, curves, config):
    _write_csv(path, config, CURVE_COLUMNS, [row for curve in curves for row in curve.to_rows()])


def write_curves_json(path, curves, config):
    with open(path, 'w') as f:
        json.dump({'config': config, 'curves': [c.to_dict() for c in curves]}, f, indent=2, sort_keys=True)


def read_curves_csv(path):
    curves = {}
    for row in _read_csv(path):
        key = (row['algorithm'], row['ensemble'])
        if key not in curves:
            curves[key] = TransitionCurve(row['algorithm'], row['ensemble'])
        diagnostics = FitDiagnostics(row['converged'] == 'True', int(row['iterations']),
                                     row['degenerate'] == 'True', row['extrapolated'] == 'True')
        curves[key].points.append(TransitionPoint(float(row['lambda']), float(row['rho_50']), diagnostics))
    return list(curves.values())


def write_histogram_csv(path, histogram, config):
    rows = [[nf, histogram.counts.get(nf, 0)] for nf in range(histogram.max_nf + 1)]
    _write_csv(path, config, ['n_f', 'count'], rows)


def write_histogram_json(path, histogram, config):
    with open(path, 'w') as f:
        json.dump({'config': config, 'summary': histogram.to_dict()}, f, indent=2, sort_keys=True)


def read_histogram_csv(path):
    return {int(row['n_f']): int(row['count']) for row in _read_csv(path)}


def main():
    """Small phase grid and histogram run"""
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    cfg = PhaseGridConfig(n=32, lambda_values=[0.5], trials_per_cell=10, rho_count=10, master_seed=1)
    cells = run_phase_grid(cfg)
    for curve in build_transition_curves(cells):
        for point in curve.points:
            logger.info(f"📈 {curve.algorithm.label}: rho_50({point.lam}) = {point.rho_50:.3f}")

    histogram = run_nf_histogram(32, 6, 64, 20, seed=1)
    logger.info(f"📊 counts: {histogram.counts}")


if __name__ == "__main__":
    main()
