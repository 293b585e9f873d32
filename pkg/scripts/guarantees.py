#!/usr/bin/env python3
"""
Sparsebench Guarantees Module
Restricted isometry constants (exact by subset enumeration, Monte-Carlo
lower bounds) and evaluators for the K-step and online OMP recovery
conditions, including per-iteration certification of OMP_e traces.
"""

import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from enum import Enum

import numpy as np

from ensembles import ObservationMatrix, substream
from linalg import column_norms
from recovery import diagnose, is_exact_recovery
from sparse_errors import (BudgetExceeded, ColumnsNotNormalized, InputError, InvalidSparsity,
                           KTooSmall, RicIndexMissing)

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 2_000_000
CHUNK_SIZE = 4096
ZERO_RIC = 1e-12
BOUND_SLACK = 1e-9
THEOREM4_MIN_K = 25


class Exactness(Enum):
    EXACT = 'Exact'
    LOWER_BOUND = 'LowerBound'


class Verdict(Enum):
    """Outcome of a guarantee check

    A condition evaluated on a lower-bound RIC cannot certify anything, so a
    positive result there is only INCONCLUSIVE_POSITIVE; negative results are
    definitive either way.
    """
    CERTIFIED = 'Certified'
    INCONCLUSIVE_POSITIVE = 'InconclusivePositive'
    FAILED = 'Failed'

    def __bool__(self):
        return self is Verdict.CERTIFIED


def _matrix(Phi):
    return Phi.matrix if isinstance(Phi, ObservationMatrix) else np.asarray(Phi, dtype=np.float64)


# ---------------------------------------------------------------------------
# RIC computation
# ---------------------------------------------------------------------------

def _subset_violation(A, subsets):
    """max over the given k-subsets of max(sigma_max^2 - 1, 1 - sigma_min^2)"""
    columns = A[:, subsets]                      # (M, count, k)
    gram = np.einsum('mci,mcj->cij', columns, columns)
    eigenvalues = np.linalg.eigvalsh(gram)       # ascending per subset
    upper = eigenvalues[:, -1] - 1.0
    lower = 1.0 - eigenvalues[:, 0]
    return float(max(upper.max(), lower.max()))


def _subset_chunks(n, k, chunk_size=CHUNK_SIZE):
    combos = itertools.combinations(range(n), k)
    while True:
        block = list(itertools.islice(combos, chunk_size))
        if not block:
            return
        yield np.array(block, dtype=np.intp)


def _parallel_max(A, chunks, workers):
    """Max-reduce chunk violations; the result does not depend on the partitioning"""
    if workers <= 1:
        return max((_subset_violation(A, chunk) for chunk in chunks), default=0.0)

    best = 0.0
    with ThreadPoolExecutor(max_workers=workers) as pool:
        while True:
            wave = list(itertools.islice(chunks, workers * 2))
            if not wave:
                break
            for value in pool.map(lambda chunk: _subset_violation(A, chunk), wave):
                best = max(best, value)
    return best


def exact_ric(Phi, k, budget=DEFAULT_BUDGET, workers=1):
    """delta_k by enumerating all k-subsets of columns"""
    A = _matrix(Phi)
    m, n = A.shape
    if not 1 <= k <= min(m, n):
        raise InvalidSparsity(f"exact RIC needs 1 <= k <= min(M, N), got k={k} for {m}x{n}")
    required = math.comb(n, k)
    if required > budget:
        raise BudgetExceeded(required, budget, k)

    start_time = time.time()
    delta = _parallel_max(A, _subset_chunks(n, k), workers)
    logger.debug(f"🧮 exact delta_{k} = {delta:.6g} over {required} subsets in {time.time() - start_time:.2f}s")
    return max(delta, 0.0)


def monte_carlo_ric(Phi, k, samples, seed, workers=1):
    """Lower bound on delta_k from `samples` random k-subsets

    When `samples` covers C(N, k) the subsets are enumerated instead, so the
    value equals exact_ric.
    """
    A = _matrix(Phi)
    m, n = A.shape
    if not 1 <= k <= min(m, n):
        raise InvalidSparsity(f"RIC needs 1 <= k <= min(M, N), got k={k} for {m}x{n}")
    if samples >= math.comb(n, k):
        return exact_ric(A, k, budget=samples, workers=workers)

    rng = substream(seed, k)

    def chunks():
        remaining = samples
        while remaining > 0:
            count = min(CHUNK_SIZE, remaining)
            keys = rng.random((count, n))
            yield np.argpartition(keys, k - 1, axis=1)[:, :k]
            remaining -= count

    # chunks are drawn in order on this thread, so the draws are seed-deterministic
    return max(_parallel_max(A, chunks(), workers), 0.0)


class RicTable:
    """delta_k values for one matrix, each labelled Exact or LowerBound"""

    def __init__(self, matrix_id='matrix', entries=None):
        self.matrix_id = matrix_id
        self.entries = {}
        for k, delta, exactness in entries or ():
            self.add(k, delta, exactness)

    def add(self, k, delta, exactness=Exactness.EXACT):
        if delta < 0:
            raise InputError(f"RIC values are non-negative, got delta_{k} = {delta}")
        self.entries[int(k)] = (float(delta), Exactness(exactness))

    @property
    def k_max(self):
        return max(self.entries) if self.entries else 0

    def covers(self, k):
        return k in self.entries

    def lookup(self, k, threshold=None):
        try:
            return self.entries[k]
        except KeyError:
            raise RicIndexMissing(k, sorted(self.entries))

    def delta(self, k):
        return self.lookup(k)[0]

    def exactness(self, k):
        return self.lookup(k)[1]

    def is_monotone(self):
        exact = sorted((k, d) for k, (d, e) in self.entries.items() if e is Exactness.EXACT)
        return all(a[1] <= b[1] + ZERO_RIC for a, b in zip(exact, exact[1:]))

    def to_dict(self):
        return {
            'matrix_id': self.matrix_id,
            'k_max': self.k_max,
            'deltas': [
                {'k': k, 'delta': d, 'exactness': e.value}
                for k, (d, e) in sorted(self.entries.items())
            ],
        }

    @classmethod
    def from_dict(cls, data):
        try:
            entries = [(row['k'], row['delta'], row['exactness']) for row in data['deltas']]
        except KeyError as e:
            raise InputError(f"RIC table JSON is missing field {e}")
        return cls(data.get('matrix_id', 'matrix'), entries)

    def render(self):
        lines = [f"RIC table for {self.matrix_id}", f"{'k':>4}  {'delta_k':>14}  exactness"]
        for k, (d, e) in sorted(self.entries.items()):
            lines.append(f"{k:>4}  {d:>14.10f}  {e.value}")
        return '\n'.join(lines)


class RicCalculator:
    """Lazily fills a RicTable for one matrix as guarantee checks ask for orders

    Orders above M are recorded as the RIP-failing value 1.0 (sigma_min = 0
    there) and labelled LowerBound. Orders beyond the enumeration budget fall
    back to Monte-Carlo lower bounds when ``mc_samples`` is set.
    """

    def __init__(self, Phi, matrix_id='matrix', budget=DEFAULT_BUDGET, workers=1,
                 mc_samples=None, seed=0):
        self.A = _matrix(Phi)
        self.table = RicTable(matrix_id)
        self.budget = budget
        self.workers = workers
        self.mc_samples = mc_samples
        self.seed = seed

    def _best_exact_below(self, k):
        known = [d for j, (d, e) in self.table.entries.items() if j < k and e is Exactness.EXACT]
        return max(known, default=None)

    def lookup(self, k, threshold=None):
        """(delta_k, exactness); with a threshold, monotonicity may answer early

        If some exact delta_j with j < k already reaches the threshold, then
        delta_k >= threshold as well and that value is returned as a lower
        bound without enumerating order k.
        """
        if self.table.covers(k):
            return self.table.lookup(k)

        m, n = self.A.shape
        if k > min(m, n):
            self.table.add(k, 1.0, Exactness.LOWER_BOUND)
            return self.table.lookup(k)

        if threshold is not None:
            best = self._best_exact_below(k)
            if best is not None and best >= threshold:
                return best, Exactness.LOWER_BOUND

        try:
            self.table.add(k, exact_ric(self.A, k, self.budget, self.workers), Exactness.EXACT)
        except BudgetExceeded:
            if self.mc_samples is None:
                raise
            logger.warning(f"🧮 delta_{k} over budget, using {self.mc_samples} Monte-Carlo samples")
            value = monte_carlo_ric(self.A, k, self.mc_samples, self.seed, self.workers)
            self.table.add(k, value, Exactness.LOWER_BOUND)
        return self.table.lookup(k)

    def delta(self, k):
        return self.lookup(k)[0]

    def fill(self, k_max):
        for k in range(1, k_max + 1):
            self.lookup(k)
        return self.table


def build_ric_table(Phi, k_max, mode='exact', samples=10_000, seed=0, budget=DEFAULT_BUDGET,
                    matrix_id='matrix', workers=1):
    """RicTable for orders 1..k_max, exact or Monte-Carlo"""
    if mode == 'exact':
        return RicCalculator(Phi, matrix_id, budget, workers).fill(k_max)
    if mode != 'mc':
        raise InputError(f"unknown RIC mode '{mode}' (choose exact or mc)")

    A = _matrix(Phi)
    m, n = A.shape
    table = RicTable(matrix_id)
    for k in range(1, k_max + 1):
        if k > min(m, n):
            table.add(k, 1.0, Exactness.LOWER_BOUND)
            continue
        exhaustive = samples >= math.comb(n, k)
        value = monte_carlo_ric(A, k, samples, seed, workers)
        table.add(k, value, Exactness.EXACT if exhaustive else Exactness.LOWER_BOUND)
    return table


# ---------------------------------------------------------------------------
# Recovery bounds
# ---------------------------------------------------------------------------

def wang_bound(k):
    """K-step OMP condition: delta_{K+1} < 1 / (sqrt(K) + 1)"""
    return 1.0 / (math.sqrt(k) + 1.0)


def online_bound(k, n_c):
    """Right-hand side of the online condition, 1 / (sqrt(K - n_c) + 1)"""
    if not 0 <= n_c <= k:
        raise InputError(f"need 0 <= n_c <= k, got n_c={n_c}, k={k}")
    return 1.0 / (math.sqrt(k - n_c) + 1.0)


def _verdict(holds, exactness):
    if not holds:
        return Verdict.FAILED
    return Verdict.CERTIFIED if exactness is Exactness.EXACT else Verdict.INCONCLUSIVE_POSITIVE


def check_online_iteration(ric, k, n_c, n_f):
    """delta_{K+n_f+1} < 1/(sqrt(K-n_c)+1): the next iteration picks a correct index"""
    bound = online_bound(k, n_c)
    delta, exactness = ric.lookup(k + n_f + 1, threshold=bound)
    return _verdict(delta < 1.0 and delta < bound, exactness)


def check_online_iteration_sharp(ric, k, n_c, n_f):
    """sqrt(K-n_c) * delta_{K+n_f+1} + delta_{K+n_f} < 1

    The condition the online bound is derived from before RIC monotonicity
    merges the two constants; it holds whenever check_online_iteration does.
    """
    upper, upper_exactness = ric.lookup(k + n_f + 1)
    if k + n_f >= 1:
        lower, lower_exactness = ric.lookup(k + n_f)
    else:
        lower, lower_exactness = 0.0, Exactness.EXACT
    holds = upper < 1.0 and math.sqrt(k - n_c) * upper + lower < 1.0
    exact = upper_exactness is Exactness.EXACT and lower_exactness is Exactness.EXACT
    return _verdict(holds, Exactness.EXACT if exact else Exactness.LOWER_BOUND)


def check_wang_condition(ric, k):
    bound = wang_bound(k)
    delta, exactness = ric.lookup(k + 1, threshold=bound)
    return _verdict(delta < bound, exactness)


def nc_lower_bound(k):
    """Smallest admissible n_c, (8K + 4 sqrt(K) - 4) / 9, defined for K >= 25"""
    if k < THEOREM4_MIN_K:
        raise KTooSmall(f"the n_c bound needs K >= {THEOREM4_MIN_K}, got {k}")
    return (8.0 * k + 4.0 * math.sqrt(k) - 4.0) / 9.0


def check_thrm4_preconditions(k, n_c, n_f):
    """K >= 25, 1 <= n_f < ceil(K/2) and K > n_c >= nc_lower_bound(K)

    When these hold, a certified online condition bounds the total number of
    iterations by K + n_f < 3K/2.
    """
    if k < THEOREM4_MIN_K:
        return False
    if not 1 <= n_f < (k + 1) // 2:
        return False
    return k > n_c >= nc_lower_bound(k)


def thrm4_delta_window(k, n_c):
    """(low, high) with low = 3/(sqrt(K)+1), high = online_bound(K, n_c)

    An RIC inside this window satisfies the online condition although the
    K-step condition is then provably violated; the window is non-empty iff
    low <= high.
    """
    return 3.0 / (math.sqrt(k) + 1.0), online_bound(k, n_c)


class CheckResult:
    def __init__(self, name, passed, detail='', vacuous=False):
        self.name = name
        self.passed = bool(passed)
        self.detail = detail
        self.vacuous = vacuous

    def to_dict(self):
        return {'name': self.name, 'passed': self.passed, 'detail': self.detail, 'vacuous': self.vacuous}

    def __repr__(self):
        return f"CheckResult({self.name}, passed={self.passed})"


def _snap(delta):
    return 0.0 if abs(delta) <= ZERO_RIC else delta


def ric_inequality_suite(ric, k):
    """Evaluate the RIC inequalities used by the K-step analysis on one matrix

    (a) delta_{cr} < c delta_{2r} for all c, r >= 1 with cr, 2r <= k_max,
        read as delta_{cr} = 0 when delta_{2r} = 0;
    (b) delta_{K+1} >= delta_{3 ceil(K/2)} / 3, equality only at zero;
    (c) delta_{3 ceil(K/2)} >= 3/(sqrt(K)+1) implies delta_{K+1} >= 1/(sqrt(K)+1).
    Values within 1e-12 of zero count as zero.
    """
    def exact_delta(order):
        delta, exactness = ric.lookup(order)
        if exactness is not Exactness.EXACT:
            raise RicIndexMissing(order, [j for j, (_, e) in ric.entries.items() if e is Exactness.EXACT])
        return _snap(delta)

    results = []
    k_max = ric.k_max

    for r in range(1, k_max // 2 + 1):
        d2r = exact_delta(2 * r)
        for c in range(1, k_max // r + 1):
            dcr = exact_delta(c * r)
            passed = dcr == 0.0 if d2r == 0.0 else dcr < c * d2r
            results.append(CheckResult(
                f"corollary c={c} r={r}", passed,
                f"delta_{c * r}={dcr:.6g} vs {c}*delta_{2 * r}={c * d2r:.6g}"))

    ceil_half = (k + 1) // 2
    d_next = exact_delta(k + 1)
    d_triple = exact_delta(3 * ceil_half)
    passed = (d_next == 0.0 and d_triple == 0.0) or d_next > d_triple / 3.0
    results.append(CheckResult(
        f"lemma K={k}", passed,
        f"delta_{k + 1}={d_next:.6g} vs delta_{3 * ceil_half}/3={d_triple / 3.0:.6g}"))

    if d_triple >= 3.0 / (math.sqrt(k) + 1.0):
        passed = d_next >= wang_bound(k)
        results.append(CheckResult(f"remark K={k}", passed,
                                   f"delta_{k + 1}={d_next:.6g} vs bound {wang_bound(k):.6g}"))
    else:
        results.append(CheckResult(f"remark K={k}", True, "premise false", vacuous=True))

    return results


def correlation_bounds(Phi, x, delta_k):
    """(observed ||Phi_T^* y||_inf, general bound, CARS bound or None)

    general bound: sqrt(1 + delta_K^2) ||x||_2; CARS bound: 1 + delta_K sqrt(K-1).
    """
    from ensembles import EnsembleKind

    A = _matrix(Phi)
    norms = column_norms(A)
    if np.max(np.abs(norms - 1.0)) > 1e-9:
        raise ColumnsNotNormalized("correlation bounds assume unit-norm columns")

    y = A[:, x.support] @ x.values
    observed = float(np.max(np.abs(A[:, x.support].T @ y)))
    general = math.sqrt(1.0 + delta_k ** 2) * x.norm()
    cars = 1.0 + delta_k * math.sqrt(x.k - 1) if x.ensemble is EnsembleKind.CARS else None
    return observed, general, cars


def lemma1_check(Phi, ric, k, trials=100, seed=0, max_subsets=None):
    """Count z with ||Phi_I^* Phi_I z|| outside [(1-delta)||z||, (1+delta)||z||] over k-subsets I"""
    A = _matrix(Phi)
    delta = ric.lookup(k)[0]
    rng = substream(seed, 1, k)
    violations = 0
    for count, subset in enumerate(itertools.combinations(range(A.shape[1]), k)):
        if max_subsets is not None and count >= max_subsets:
            break
        columns = A[:, subset]
        z = rng.standard_normal((k, trials))
        image = np.linalg.norm(columns.T @ (columns @ z), axis=0)
        size = np.linalg.norm(z, axis=0)
        violations += int(np.count_nonzero(image < (1.0 - delta) * size - BOUND_SLACK))
        violations += int(np.count_nonzero(image > (1.0 + delta) * size + BOUND_SLACK))
    return violations


def lemma2_check(Phi, ric, trials=100, seed=0, pairs_per_order=200):
    """Count z with ||Phi_I^* Phi_J z|| > delta_{|I|+|J|} ||z|| over random disjoint I, J"""
    A = _matrix(Phi)
    n = A.shape[1]
    rng = substream(seed, 2)
    violations = 0
    for order in range(2, ric.k_max + 1):
        if order > n:
            break
        delta = ric.lookup(order)[0]
        for _ in range(pairs_per_order):
            union = rng.choice(n, size=order, replace=False)
            split = int(rng.integers(1, order))
            I, J = union[:split], union[split:]
            z = rng.standard_normal((J.size, trials))
            image = np.linalg.norm(A[:, I].T @ (A[:, J] @ z), axis=0)
            violations += int(np.count_nonzero(image > delta * np.linalg.norm(z, axis=0) + BOUND_SLACK))
    return violations


# ---------------------------------------------------------------------------
# Online certification of OMP traces
# ---------------------------------------------------------------------------

class IterationReport:
    """Guarantee state after iteration l (the condition predicts iteration l+1)"""

    def __init__(self, l, n_c, n_f, bound_rhs, ric_order, ric_used, exactness, verdict,
                 sharp_verdict, thrm4, next_correct):
        self.l = l
        self.n_c = n_c
        self.n_f = n_f
        self.bound_rhs = bound_rhs
        self.ric_order = ric_order
        self.ric_used = ric_used
        self.ric_exactness = exactness
        self.verdict = verdict
        self.sharp_verdict = sharp_verdict
        self.thrm4_preconditions = thrm4
        self.next_correct = next_correct

    @property
    def online_condition_holds(self):
        return self.verdict is Verdict.CERTIFIED

    def to_dict(self):
        return {
            'l': self.l,
            'n_c': self.n_c,
            'n_f': self.n_f,
            'bound_rhs': self.bound_rhs,
            'ric_order': self.ric_order,
            'ric_used': self.ric_used,
            'ric_exactness': self.ric_exactness.value,
            'online_condition_holds': self.online_condition_holds,
            'verdict': self.verdict.value,
            'sharp_verdict': self.sharp_verdict.value,
            'thrm4_preconditions': self.thrm4_preconditions,
            'next_correct': self.next_correct,
        }


class GuaranteeReport:
    def __init__(self, k, per_iteration, wang_verdict, iterations, exact_recovery, instance=None):
        self.K = k
        self.per_iteration = per_iteration
        self.wang_verdict = wang_verdict
        self.iterations = iterations
        self.exact_recovery = exact_recovery
        self.instance = instance or {}

    @property
    def wang_condition_holds(self):
        return self.wang_verdict is Verdict.CERTIFIED

    @property
    def thrm4_preconditions_hold(self):
        return any(row.thrm4_preconditions for row in self.per_iteration)

    @property
    def first_certified_iteration(self):
        for row in self.per_iteration:
            if row.online_condition_holds:
                return row.l
        return None

    @property
    def completed_in_k_plus_nf(self):
        """At the first certified state, did OMP_e finish exactly in K + n_f iterations?"""
        first = self.first_certified_iteration
        if first is None:
            return None
        row = self.per_iteration[first]
        return self.exact_recovery and self.iterations == self.K + row.n_f

    def to_dict(self):
        return {
            'K': self.K,
            'instance': self.instance,
            'iterations': self.iterations,
            'exact_recovery': self.exact_recovery,
            'wang_condition_holds': self.wang_condition_holds,
            'wang_verdict': self.wang_verdict.value,
            'thrm4_preconditions_hold': self.thrm4_preconditions_hold,
            'first_certified_iteration': self.first_certified_iteration,
            'completed_in_k_plus_nf': self.completed_in_k_plus_nf,
            'per_iteration': [row.to_dict() for row in self.per_iteration],
        }

    def render_table(self):
        header = f"{'l':>4} {'n_c':>4} {'n_f':>4} {'delta':>7} {'value':>12} {'bound':>10}  verdict"
        lines = [f"K = {self.K}, iterations = {self.iterations}, exact = {self.exact_recovery}, "
                 f"K-step condition: {self.wang_verdict.value}", header, '-' * len(header)]
        for row in self.per_iteration:
            lines.append(
                f"{row.l:>4} {row.n_c:>4} {row.n_f:>4} {'d_' + str(row.ric_order):>7} "
                f"{row.ric_used:>12.8f} {row.bound_rhs:>10.6f}  {row.verdict.value}"
            )
        return '\n'.join(lines)


def certify_trace(trace, truth, ric, instance=None):
    """Evaluate the online condition at every state of one OMP_e trace"""
    k = truth.k
    diagnostics = diagnose(trace, truth)
    true_support = set(int(i) for i in truth.support)
    rows = []

    for l, (n_c, n_f) in enumerate(diagnostics.per_iteration):
        bound = online_bound(k, n_c)
        order = k + n_f + 1
        delta, exactness = ric.lookup(order, threshold=bound)
        # delta >= 1 already fails the sharp form, no need to enumerate
        if delta >= 1.0:
            sharp = Verdict.FAILED
        else:
            sharp = check_online_iteration_sharp(ric, k, n_c, n_f)
            # the sharp form enumerated delta_{K+n_f+1}; report that value, not the shortcut bound
            delta, exactness = ric.lookup(order)
        verdict = _verdict(delta < 1.0 and delta < bound, exactness)
        next_correct = None
        if l < trace.iterations:
            next_correct = trace.selected[l] in true_support
        rows.append(IterationReport(l, n_c, n_f, bound, order, delta, exactness, verdict, sharp,
                                    check_thrm4_preconditions(k, n_c, n_f), next_correct))

    wang = check_wang_condition(ric, k)
    exact = is_exact_recovery(truth, trace.estimate)
    return GuaranteeReport(k, rows, wang, trace.iterations, exact, instance)


def main():
    """Print the bound tables and the RICs of a small Gaussian matrix"""
    from ensembles import gen_gaussian_matrix

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    for k in (1, 4, 25, 100):
        logger.info(f"📐 K={k}: K-step bound {wang_bound(k):.4f}")
    logger.info(f"📐 n_c lower bound for K=25: {nc_lower_bound(25):.3f}")

    Phi = gen_gaussian_matrix(8, 16, seed=1)
    table = build_ric_table(Phi, 4, matrix_id='gaussian-8x16')
    print(table.render())


if __name__ == "__main__":
    main()
