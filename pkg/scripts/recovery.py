#!/usr/bin/env python3
"""
Sparsebench Recovery Module
Implements Orthogonal Matching Pursuit with sparsity (OMP_K) and residue
(OMP_e) termination, Subspace Pursuit and Basis Pursuit for noise-free
sparse recovery y = Phi x.
"""

import logging
import time
from enum import Enum

import numpy as np
from scipy.optimize import linprog

from ensembles import ObservationMatrix
from linalg import IncrementalLeastSquares, as_vector, frozen, least_squares
from sparse_errors import (DimensionMismatch, Infeasible, InputError, InvalidSparsity,
                           NotConverged, RankDeficient)

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-6
EXACT_RECOVERY_TOLERANCE = 1e-2

SP_MAX_ROUNDS = 100

BP_MAX_ITERATIONS = 200
BP_GAP_TOLERANCE = 1e-8
BP_FEASIBILITY_TOLERANCE = 1e-8


class Algorithm(Enum):
    OMP_K = 'omp_k'
    OMP_E = 'omp_e'
    SP = 'sp'
    BP = 'bp'

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace('-', '_')
        try:
            return cls(key)
        except ValueError:
            raise InputError(f"unknown algorithm '{value}' (choose from {[a.value for a in cls]})")

    @property
    def label(self):
        return {'omp_k': 'OMP_K', 'omp_e': 'OMP_e', 'sp': 'SP', 'bp': 'BP'}[self.value]


class Termination(Enum):
    SPARSITY_REACHED = 'SparsityReached'
    RESIDUE_BELOW_EPSILON = 'ResidueBelowEpsilon'
    MAX_ITERATIONS = 'MaxIterations'
    RESIDUAL_STALLED = 'ResidualStalled'
    CONVERGED = 'Converged'


class TerminationPolicy:
    """OMP stopping rule: SparsityK(k) or Residue(epsilon, max_iterations)"""

    SPARSITY = 'sparsity'
    RESIDUE = 'residue'

    def __init__(self, kind, k=None, epsilon=None, max_iterations=None):
        if kind == self.SPARSITY:
            if k is None or int(k) < 1:
                raise InputError(f"SparsityK policy needs k >= 1, got {k}")
            k = int(k)
        elif kind == self.RESIDUE:
            if epsilon is None or not epsilon > 0:
                raise InputError(f"Residue policy needs epsilon > 0, got {epsilon}")
            if max_iterations is None or int(max_iterations) < 1:
                raise InputError(f"Residue policy needs max_iterations >= 1, got {max_iterations}")
            max_iterations = int(max_iterations)
        else:
            raise InputError(f"unknown termination policy '{kind}'")
        self.kind = kind
        self.k = k
        self.epsilon = epsilon
        self.max_iterations = max_iterations

    @classmethod
    def sparsity(cls, k):
        return cls(cls.SPARSITY, k=k)

    @classmethod
    def residue(cls, epsilon=DEFAULT_EPSILON, max_iterations=None):
        return cls(cls.RESIDUE, epsilon=epsilon, max_iterations=max_iterations)

    def to_dict(self):
        if self.kind == self.SPARSITY:
            return {'kind': 'SparsityK', 'k': self.k}
        return {'kind': 'Residue', 'epsilon': self.epsilon, 'max_iterations': self.max_iterations}

    def __repr__(self):
        return f"TerminationPolicy({self.to_dict()})"


class RecoveryTrace:
    """Per-iteration record of one solver run

    ``selected`` is the ordered list of chosen indices (t_1 ... t_L) for OMP;
    for SP and BP it is the final support in ascending order.
    ``residual_norms`` holds ||r^l||_2 for l = 0 ... L.
    """

    def __init__(self, algorithm, policy, selected, residual_norms, estimate, terminated_by):
        self.algorithm = Algorithm.parse(algorithm)
        self.policy = policy
        self.selected = [int(i) for i in selected]
        self.residual_norms = [float(v) for v in residual_norms]
        self.estimate = frozen(np.array(estimate, dtype=np.float64))
        self.terminated_by = terminated_by

    @property
    def iterations(self):
        return len(self.selected)

    @property
    def n(self):
        return self.estimate.shape[0]

    def to_dict(self, include_estimate=False):
        data = {
            'algorithm': self.algorithm.label,
            'policy': self.policy,
            'selected': list(self.selected),
            'residual_norms': list(self.residual_norms),
            'terminated_by': self.terminated_by.value,
        }
        if include_estimate:
            data['estimate'] = [float(v) for v in self.estimate]
        return data


class SupportDiagnostics:
    """Correct (n_c) and false (n_f) index counts against the true support

    ``per_iteration[l]`` is the pair after iteration l, starting at l = 0.
    """

    def __init__(self, n_c, n_f, per_iteration):
        self.n_c = n_c
        self.n_f = n_f
        self.per_iteration = per_iteration

    def to_dict(self):
        return {'n_c': self.n_c, 'n_f': self.n_f, 'per_iteration': [list(p) for p in self.per_iteration]}


def _matrix(Phi):
    return Phi.matrix if isinstance(Phi, ObservationMatrix) else np.asarray(Phi, dtype=np.float64)


def _measurements(A, y):
    y = as_vector(y, 'y')
    if y.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"y has length {y.shape[0]} but Phi has {A.shape[0]} rows")
    return y


def _scatter(n, support, coefficients):
    estimate = np.zeros(n)
    if len(support):
        estimate[list(support)] = coefficients
    return estimate


def omp(Phi, y, policy):
    """Orthogonal Matching Pursuit

    Each iteration selects t = argmax_i |<phi_i, r>| (lowest index on ties;
    already-selected indices are excluded) and re-projects y onto the
    selected columns.
    """
    A = _matrix(Phi)
    y = _measurements(A, y)
    m, n = A.shape

    if policy.kind == TerminationPolicy.SPARSITY:
        if policy.k > m:
            raise InvalidSparsity(f"OMP_K needs k <= M, got k={policy.k}, M={m}")
        max_iterations = policy.k
        threshold = None
    else:
        max_iterations = min(policy.max_iterations, m, n)
        threshold = policy.epsilon * float(np.linalg.norm(y))

    solver = IncrementalLeastSquares(y, capacity=max(max_iterations, 1))
    residual = y
    selected = []
    norms = [float(np.linalg.norm(y))]
    terminated_by = None

    if threshold is not None and norms[0] <= threshold:
        terminated_by = Termination.RESIDUE_BELOW_EPSILON

    while terminated_by is None:
        correlations = np.abs(A.T @ residual)
        correlations[selected] = -np.inf
        t = int(np.argmax(correlations))

        try:
            solver.append(A[:, t])
        except RankDeficient as e:
            e.trace = RecoveryTrace(
                Algorithm.OMP_K if threshold is None else Algorithm.OMP_E, policy.to_dict(),
                selected, norms, _scatter(n, selected, solver.coefficients()), Termination.MAX_ITERATIONS)
            logger.warning(f"OMP stopped at iteration {len(selected) + 1}: {e}")
            raise

        selected.append(t)
        residual = solver.residual()
        norms.append(float(np.linalg.norm(residual)))
        logger.debug(f"OMP iteration {len(selected)}: t={t}, ||r||={norms[-1]:.3e}")

        if threshold is None:
            if len(selected) == policy.k:
                terminated_by = Termination.SPARSITY_REACHED
        elif norms[-1] <= threshold:
            terminated_by = Termination.RESIDUE_BELOW_EPSILON
        elif len(selected) >= max_iterations:
            terminated_by = Termination.MAX_ITERATIONS

    algorithm = Algorithm.OMP_K if threshold is None else Algorithm.OMP_E
    estimate = _scatter(n, selected, solver.coefficients())
    return RecoveryTrace(algorithm, policy.to_dict(), selected, norms, estimate, terminated_by)


def _top_k(values, k, exclude=()):
    """Indices of the k largest values, lowest index first on ties"""
    values = np.array(values, dtype=np.float64)
    if len(exclude):
        values[list(exclude)] = -np.inf
    order = np.argsort(-values, kind='stable')
    return order[:k]


def _project(A, y, support):
    support = np.sort(np.asarray(support, dtype=np.int64))
    coefficients = least_squares(A[:, support], y)
    residual = y - A[:, support] @ coefficients
    return support, coefficients, residual


def subspace_pursuit(Phi, y, k, max_rounds=SP_MAX_ROUNDS, epsilon=DEFAULT_EPSILON):
    """Subspace Pursuit with the residual-increase stopping rule

    Rounds expand the k-set by the k largest residual correlations, solve
    least squares on the union, prune back to the k largest coefficients and
    stop as soon as the residual norm fails to strictly decrease.
    """
    A = _matrix(Phi)
    y = _measurements(A, y)
    m, n = A.shape
    if k < 1 or 2 * k > m:
        raise InvalidSparsity(f"subspace pursuit needs 1 <= k and 2k <= M, got k={k}, M={m}")

    policy = {'kind': 'SparsityK', 'k': int(k), 'max_rounds': int(max_rounds)}
    y_norm = float(np.linalg.norm(y))
    threshold = epsilon * y_norm

    support = _top_k(np.abs(A.T @ y), k)
    try:
        support, coefficients, residual = _project(A, y, support)
    except RankDeficient as e:
        e.trace = RecoveryTrace(Algorithm.SP, policy, [], [y_norm], np.zeros(n), Termination.MAX_ITERATIONS)
        raise
    residual_norm = float(np.linalg.norm(residual))
    norms = [y_norm, residual_norm]
    terminated_by = Termination.MAX_ITERATIONS

    for round_index in range(1, max_rounds + 1):
        if residual_norm <= threshold:
            terminated_by = Termination.RESIDUE_BELOW_EPSILON
            break

        expansion = _top_k(np.abs(A.T @ residual), k, exclude=support)
        candidates = np.union1d(support, expansion)
        try:
            candidates, candidate_coefficients, _ = _project(A, y, candidates)
            pruned = candidates[_top_k(np.abs(candidate_coefficients), k)]
            new_support, new_coefficients, new_residual = _project(A, y, pruned)
        except RankDeficient as e:
            e.trace = RecoveryTrace(Algorithm.SP, policy, support, norms,
                                    _scatter(n, support, coefficients), Termination.MAX_ITERATIONS)
            raise

        new_norm = float(np.linalg.norm(new_residual))
        logger.debug(f"SP round {round_index}: ||r||={new_norm:.3e}")
        if not new_norm < residual_norm:
            terminated_by = Termination.RESIDUAL_STALLED
            break

        support, coefficients, residual, residual_norm = new_support, new_coefficients, new_residual, new_norm
        norms.append(residual_norm)

    if terminated_by is Termination.MAX_ITERATIONS and residual_norm <= threshold:
        terminated_by = Termination.RESIDUE_BELOW_EPSILON

    estimate = _scatter(n, support, coefficients)
    return RecoveryTrace(Algorithm.SP, policy, support, norms, estimate, terminated_by)


def _solve_bp_lp(A, y, method):
    m, n = A.shape
    cost = np.ones(2 * n)
    # scipy applies maxiter to crossover pivots as well as to interior-point steps
    iteration_limit = max(BP_MAX_ITERATIONS, 2 * (m + 2 * n))
    result = linprog(
        cost,
        A_eq=np.hstack([A, -A]),
        b_eq=y,
        bounds=(0, None),
        method=method,
        options={
            'maxiter': iteration_limit,
            'primal_feasibility_tolerance': 1e-10,
            'dual_feasibility_tolerance': 1e-10,
        },
    )
    return result


def _bp_certificate(A, y, result):
    """Return (x, duality gap, relative feasibility error) for a linprog result"""
    n = A.shape[1]
    z = result.x
    x = z[:n] - z[n:]
    primal = float(np.sum(z))
    duals = getattr(result, 'eqlin', None)
    if duals is not None and getattr(duals, 'marginals', None) is not None:
        dual = float(y @ duals.marginals)
    else:
        dual = primal
    gap = abs(primal - dual)
    feasibility = float(np.linalg.norm(A @ x - y))
    return x, gap, feasibility


def _polish(A, y, x):
    """Re-solve the equality system on the support of a vertex solution"""
    scale = np.max(np.abs(x)) if x.size else 0.0
    support = np.flatnonzero(np.abs(x) > 1e-9 * scale) if scale > 0 else np.array([], dtype=np.int64)
    if support.size == 0 or support.size > A.shape[0]:
        return x
    try:
        coefficients = least_squares(A[:, support], y)
    except RankDeficient:
        return x
    polished = np.zeros_like(x)
    polished[support] = coefficients
    if np.linalg.norm(A @ polished - y) <= np.linalg.norm(A @ x - y):
        return polished
    return x


def basis_pursuit(Phi, y):
    """Minimum l1-norm solution of Phi x = y

    Solved as the LP min sum(u + v) s.t. Phi (u - v) = y, u, v >= 0 with the
    HiGHS interior-point method (crossover to a vertex), falling back to the
    dual simplex when the optimality certificate is not met.
    """
    A = _matrix(Phi)
    y = _measurements(A, y)
    n = A.shape[1]
    y_norm = float(np.linalg.norm(y))
    if y_norm == 0.0:
        return np.zeros(n)

    last_error = None
    for method in ('highs-ipm', 'highs-ds'):
        result = _solve_bp_lp(A, y, method)
        if result.status == 2:
            raise Infeasible(f"measurements are outside the range of Phi ({result.message})")
        if result.status != 0 or result.x is None:
            last_error = NotConverged(f"{method}: {result.message}", iterations=getattr(result, 'nit', None))
            logger.warning(f"BP LP solver {method} did not converge: {result.message}")
            continue

        x, gap, feasibility = _bp_certificate(A, y, result)
        x = _polish(A, y, x)
        feasibility = float(np.linalg.norm(A @ x - y))
        l1 = float(np.sum(np.abs(x)))
        if feasibility > BP_FEASIBILITY_TOLERANCE * y_norm:
            last_error = Infeasible(f"{method}: residual {feasibility:.3e} exceeds tolerance")
            continue
        if gap > BP_GAP_TOLERANCE * (1.0 + l1):
            last_error = NotConverged(f"{method}: duality gap {gap:.3e} exceeds tolerance",
                                      iterations=getattr(result, 'nit', None))
            continue
        return x

    raise last_error


def basis_pursuit_trace(Phi, y):
    A = _matrix(Phi)
    y = _measurements(A, y)
    estimate = basis_pursuit(A, y)
    scale = np.max(np.abs(estimate)) if estimate.size else 0.0
    support = np.flatnonzero(np.abs(estimate) > 1e-8 * scale) if scale > 0 else []
    norms = [float(np.linalg.norm(y)), float(np.linalg.norm(y - A @ estimate))]
    return RecoveryTrace(Algorithm.BP, {'kind': 'L1Minimization'}, support, norms, estimate, Termination.CONVERGED)


def recover(algorithm, Phi, y, k=None, epsilon=DEFAULT_EPSILON, max_iterations=None):
    """Run any of the four solvers and return its RecoveryTrace"""
    algorithm = Algorithm.parse(algorithm)
    A = _matrix(Phi)

    if algorithm is Algorithm.OMP_K:
        return omp(A, y, TerminationPolicy.sparsity(k))
    if algorithm is Algorithm.OMP_E:
        return omp(A, y, TerminationPolicy.residue(epsilon, max_iterations or A.shape[0]))
    if algorithm is Algorithm.SP:
        return subspace_pursuit(A, y, k)
    return basis_pursuit_trace(A, y)


def diagnose(trace, truth):
    """Count correct and false indices of every support estimate"""
    if trace.n != truth.n:
        raise DimensionMismatch(f"trace has length {trace.n} but signal has length {truth.n}")
    true_support = set(int(i) for i in truth.support)

    per_iteration = [(0, 0)]
    n_c = 0
    for l, index in enumerate(trace.selected, start=1):
        if index in true_support:
            n_c += 1
        per_iteration.append((n_c, l - n_c))
    n_c, n_f = per_iteration[-1]
    return SupportDiagnostics(n_c, n_f, per_iteration)


def is_exact_recovery(x, x_est):
    """||x - x_est||_2 <= 1e-2 ||x||_2"""
    x_est = as_vector(x_est, 'estimate')
    if x_est.shape[0] != x.n:
        raise DimensionMismatch(f"estimate has length {x_est.shape[0]} but signal has length {x.n}")
    return bool(np.linalg.norm(x.dense() - x_est) <= EXACT_RECOVERY_TOLERANCE * x.norm())


def main():
    """Recover one Gaussian instance with every algorithm"""
    from ensembles import gen_gaussian_matrix, gen_sparse_signal, measure

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    Phi = gen_gaussian_matrix(64, 128, seed=3)
    x = gen_sparse_signal(128, 12, 'gaussian', seed=5)
    y = measure(Phi, x)

    for algorithm in Algorithm:
        start_time = time.time()
        trace = recover(algorithm, Phi, y, k=x.k)
        verdict = is_exact_recovery(x, trace.estimate)
        logger.info(f"🔎 {algorithm.label:>5}: {trace.iterations} indices, {trace.terminated_by.value}, "
                    f"exact={verdict} in {time.time() - start_time:.3f}s")


if __name__ == "__main__":
    main()
