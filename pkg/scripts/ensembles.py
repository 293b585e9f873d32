#!/usr/bin/env python3
"""
Sparsebench Ensembles Module
Seedable generation of Gaussian observation matrices and of the Gaussian,
uniform and constant-amplitude random-sign (CARS) sparse signal ensembles.

Randomness comes from numpy's PCG64 bit generator. A per-trial substream is
seeded by SeedSequence(master_seed, spawn_key=indices), so a trial's draws
depend only on the master seed and the trial's indices, never on the order
in which trials are executed.
"""

import json
import logging
from enum import Enum
from pathlib import Path

import numpy as np

from linalg import as_matrix, as_vector, column_norms, frozen, load_matrix_csv, save_matrix_csv
from sparse_errors import DimensionMismatch, InputError, InvalidDimensions, InvalidSparsity

logger = logging.getLogger(__name__)

SEED_MODULUS = 2 ** 64
NORM_TOLERANCE = 1e-12


class EnsembleKind(Enum):
    GAUSSIAN = 'gaussian'
    UNIFORM = 'uniform'
    CARS = 'cars'

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InputError(f"unknown ensemble '{value}' (choose from {[e.value for e in cls]})")


def normalize_seed(seed):
    return int(seed) % SEED_MODULUS


def substream(master_seed, *indices):
    """Independent PCG64 generator for the trial identified by indices"""
    sequence = np.random.SeedSequence(normalize_seed(master_seed), spawn_key=tuple(int(i) for i in indices))
    return np.random.Generator(np.random.PCG64(sequence))


def trial_seeds(master_seed, *indices, count=2):
    """64-bit integer seeds derived from (master_seed, indices)"""
    sequence = np.random.SeedSequence(normalize_seed(master_seed), spawn_key=tuple(int(i) for i in indices))
    return [int(s) for s in sequence.generate_state(count, dtype=np.uint64)]


def _generator(seed):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(normalize_seed(seed))))


class ObservationMatrix:
    """Dense M x N observation matrix with column-norm metadata

    Generated matrices satisfy M < N; ``strict=False`` admits the tall
    orthonormal dictionaries used by test harnesses.
    """

    def __init__(self, matrix, column_normalized=False, seed=0, strict=True):
        matrix = as_matrix(matrix, 'observation matrix')
        if strict and matrix.shape[0] >= matrix.shape[1]:
            raise InvalidDimensions(f"observation matrix needs M < N, got {matrix.shape}")
        if column_normalized:
            norms = column_norms(matrix)
            if np.max(np.abs(norms - 1.0)) > NORM_TOLERANCE:
                raise InputError("matrix flagged column_normalized has columns of non-unit norm")
        self.matrix = frozen(matrix.copy())
        self.column_normalized = bool(column_normalized)
        self.seed = normalize_seed(seed)

    @property
    def m(self):
        return self.matrix.shape[0]

    @property
    def n(self):
        return self.matrix.shape[1]

    @property
    def shape(self):
        return self.matrix.shape

    def columns(self, indices):
        return self.matrix[:, list(indices)]

    def __repr__(self):
        return f"ObservationMatrix({self.m}x{self.n}, normalized={self.column_normalized}, seed={self.seed})"


class SparseSignal:
    """Ground-truth K-sparse vector: sorted support T, nonzero values on T"""

    def __init__(self, n, support, values, ensemble=EnsembleKind.GAUSSIAN, seed=0):
        support = np.asarray(support, dtype=np.int64)
        values = as_vector(values, 'signal values') if len(values) else np.zeros(0)
        ensemble = EnsembleKind.parse(ensemble)
        order = np.argsort(support, kind='stable')
        support = support[order]
        values = values[order]

        if support.shape != values.shape:
            raise DimensionMismatch(f"support has {support.size} indices but {values.size} values")
        if support.size and (support[0] < 0 or support[-1] >= n):
            raise InvalidSparsity(f"support indices must lie in [0, {n})")
        if np.unique(support).size != support.size:
            raise InvalidSparsity("support indices must be distinct")
        if np.any(values == 0.0):
            raise InvalidSparsity("every value on the support must be nonzero")
        if ensemble is EnsembleKind.CARS and not np.all(np.abs(values) == 1.0):
            raise InvalidSparsity("CARS values must be +1 or -1")
        if ensemble is EnsembleKind.UNIFORM and np.any(np.abs(values) > 1.0):
            raise InvalidSparsity("uniform ensemble values must lie in [-1, 1]")

        self.n = int(n)
        self.support = frozen(support)
        self.values = frozen(values.copy())
        self.ensemble = ensemble
        self.seed = normalize_seed(seed)

    @property
    def k(self):
        return int(self.support.size)

    def dense(self):
        x = np.zeros(self.n)
        x[self.support] = self.values
        return x

    def norm(self):
        return float(np.sqrt(np.sum(self.values ** 2)))

    def to_dict(self):
        return {
            'n': self.n,
            'k': self.k,
            'ensemble': self.ensemble.value,
            'seed': self.seed,
            'support': [int(i) for i in self.support],
            'values': [float(v) for v in self.values],
        }

    @classmethod
    def from_dict(cls, data):
        try:
            signal = cls(data['n'], data['support'], data['values'], data.get('ensemble', 'gaussian'), data.get('seed', 0))
        except KeyError as e:
            raise InputError(f"signal JSON is missing field {e}")
        if 'k' in data and int(data['k']) != signal.k:
            raise InputError(f"signal JSON field k={data['k']} disagrees with support size {signal.k}")
        return signal

    def __repr__(self):
        return f"SparseSignal(n={self.n}, k={self.k}, ensemble={self.ensemble.value}, seed={self.seed})"


def gen_gaussian_matrix(m, n, seed, normalize=True):
    """I.i.d. N(0, 1/M) entries, optionally scaled to unit-norm columns"""
    if not 1 <= m < n:
        raise InvalidDimensions(f"need 1 <= m < n, got m={m}, n={n}")
    rng = _generator(seed)
    matrix = rng.standard_normal((m, n)) / np.sqrt(m)
    if normalize:
        matrix = matrix / column_norms(matrix)
    return ObservationMatrix(matrix, column_normalized=normalize, seed=seed)


def gen_tight_frame_matrix(m, n, seed):
    """First m rows of a Haar-distributed orthogonal n x n matrix, unit-norm columns

    Columns of such frames are far less coherent than Gaussian columns of the
    same size, which puts small instances near the recovery-condition bounds.
    """
    if not 1 <= m < n:
        raise InvalidDimensions(f"need 1 <= m < n, got m={m}, n={n}")
    rng = _generator(seed)
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    matrix = q[:m, :]
    return ObservationMatrix(matrix / column_norms(matrix), column_normalized=True, seed=seed)


MATRIX_GENERATORS = {
    'gaussian': gen_gaussian_matrix,
    'tight_frame': gen_tight_frame_matrix,
}


def gen_matrix(kind, m, n, seed):
    try:
        generator = MATRIX_GENERATORS[kind]
    except KeyError:
        raise InputError(f"unknown matrix kind '{kind}' (choose from {sorted(MATRIX_GENERATORS)})")
    return generator(m, n, seed)


def orthonormal_matrix(m, n, seed=0):
    """M x N matrix with orthonormal columns (requires M >= N)"""
    if m < n:
        raise InvalidDimensions(f"orthonormal columns need m >= n, got m={m}, n={n}")
    if m == n:
        return ObservationMatrix(np.eye(m), column_normalized=True, seed=seed, strict=False)
    rng = _generator(seed)
    q, _ = np.linalg.qr(rng.standard_normal((m, n)))
    q = q / column_norms(q)
    return ObservationMatrix(q, column_normalized=True, seed=seed, strict=False)


def _draw_values(rng, k, ensemble):
    if ensemble is EnsembleKind.CARS:
        return rng.choice(np.array([-1.0, 1.0]), size=k)

    if ensemble is EnsembleKind.UNIFORM:
        draw = lambda size: rng.uniform(-1.0, 1.0, size)
    else:
        draw = rng.standard_normal

    values = draw(k)
    # exact zeros are redrawn so the support stays exact
    zeros = values == 0.0
    while np.any(zeros):
        values[zeros] = draw(int(np.count_nonzero(zeros)))
        zeros = values == 0.0
    return values


def gen_sparse_signal(n, k, ensemble, seed):
    """Uniformly random k-subset support with ensemble-distributed values"""
    ensemble = EnsembleKind.parse(ensemble)
    if not 1 <= k < n:
        raise InvalidSparsity(f"need 1 <= k < n, got k={k}, n={n}")
    rng = _generator(seed)
    support = np.sort(rng.choice(n, size=k, replace=False))
    values = _draw_values(rng, k, ensemble)
    return SparseSignal(n, support, values, ensemble, seed)


def measure(Phi, x):
    """Noise-free measurements y = Phi x"""
    if Phi.n != x.n:
        raise DimensionMismatch(f"matrix has {Phi.n} columns but signal has length {x.n}")
    return Phi.matrix[:, x.support] @ x.values


def matrix_to_file(path, Phi):
    header = [
        'sparsebench observation matrix',
        f'm: {Phi.m}',
        f'n: {Phi.n}',
        f'seed: {Phi.seed}',
        f'column_normalized: {str(Phi.column_normalized).lower()}',
    ]
    save_matrix_csv(path, Phi.matrix, header)


def matrix_from_file(path):
    """Load a matrix CSV; header metadata is optional"""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"matrix file not found: {path}")
    meta = {}
    with open(path) as f:
        for line in f:
            if not line.startswith('#'):
                break
            key, sep, value = line.lstrip('#').strip().partition(':')
            if sep:
                meta[key.strip()] = value.strip()
    matrix = load_matrix_csv(path)
    normalized = meta.get('column_normalized', 'false') == 'true'
    seed = int(meta.get('seed', 0))
    return ObservationMatrix(matrix, column_normalized=normalized, seed=seed,
                             strict=matrix.shape[0] < matrix.shape[1])


def signal_to_file(path, x):
    with open(path, 'w') as f:
        json.dump(x.to_dict(), f, indent=2)


def signal_from_file(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"signal file not found: {path}")
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: malformed JSON ({e})")
    return SparseSignal.from_dict(data)


def main():
    """Generate one instance of every ensemble and report its statistics"""
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    Phi = gen_gaussian_matrix(125, 250, seed=7, normalize=True)
    logger.info(f"🎲 Generated {Phi}")
    for kind in EnsembleKind:
        x = gen_sparse_signal(250, 40, kind, seed=11)
        logger.info(f"🎲 {kind.value:>8}: ||x||_2 = {x.norm():.4f}, max|x| = {np.max(np.abs(x.values)):.4f}")


if __name__ == "__main__":
    main()
