#!/usr/bin/env python3
"""
Experiment Configuration for Sparsebench
This module defines the default parameter blocks for recovery runs, RIC
computation, phase-transition grids and n_f histograms, and resolves them
against profiles, JSON config files and command-line overrides.
"""

import copy
import json
import logging
import os

from sparse_errors import ConfigError

logger = logging.getLogger(__name__)

SEED_ENV_VAR = 'SPARSEBENCH_SEED'
DEFAULT_SEED = 20140501


class ExperimentConfig:
    """Default parameter blocks for every sparsebench subcommand"""

    def __init__(self):
        # Single-instance recovery
        self.RECOVERY_DEFAULTS = {
            'm': 64,
            'n': 128,
            'k': 12,
            'ensemble': 'gaussian',
            'algorithm': 'omp_e',
            'epsilon': 1e-6,       # relative residue threshold for OMP_e
            'normalize_columns': True,
        }

        # RIC enumeration
        self.RIC_DEFAULTS = {
            'mode': 'exact',
            'k': 3,
            'samples': 10000,      # Monte-Carlo subsets per order
            'budget': 2000000,     # max subsets for exact enumeration
        }

        # Phase-transition grids
        self.DESK_PROFILE = {
            'n': 64,
            'trials_per_cell': 50,
            'lambda_values': [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            'rho_count': 30,
            'algorithms': ['omp_k', 'omp_e', 'sp'],
            'ensembles': ['gaussian', 'uniform', 'cars'],
            'normalize_columns': True,
        }
        self.FULL_PROFILE = {
            'n': 250,
            'trials_per_cell': 200,
            'lambda_values': [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            'rho_count': 30,
            'algorithms': ['omp_k', 'omp_e', 'sp', 'bp'],
            'ensembles': ['gaussian', 'uniform', 'cars'],
            'normalize_columns': True,
        }

        # n_f histograms at (lambda, rho) = (0.5, 0.32) and (0.6, 0.347)
        self.HISTOGRAM_CASES = {
            'M125_K40': {'m': 125, 'k': 40, 'n': 250, 'trials': 200, 'ensemble': 'gaussian'},
            'M150_K52': {'m': 150, 'k': 52, 'n': 250, 'trials': 200, 'ensemble': 'gaussian'},
        }

        # Guarantee certification on small enumerable instances
        self.CERTIFY_DEFAULTS = {
            'm': 8,
            'n': 16,
            'k': 3,
            'ensemble': 'gaussian',
            'matrix_kind': 'gaussian',  # or tight_frame
            'instances': 20,
            'search_limit': 5000,  # seeds tried by the certificate search
            'budget': 2000000,
        }

        self.PROFILES = {'desk': self.DESK_PROFILE, 'full': self.FULL_PROFILE}

        logger.debug("Experiment configuration initialized")

    def log_configuration(self):
        """Log the current parameter blocks"""
        logger.info("=== Sparsebench Experiment Configuration ===")
        logger.info(f"Recovery: {self.RECOVERY_DEFAULTS}")
        logger.info(f"RIC: {self.RIC_DEFAULTS}")
        logger.info(f"Desk profile: {self.DESK_PROFILE}")
        logger.info(f"Full profile: {self.FULL_PROFILE}")
        logger.info("============================================")

    def validate(self):
        """Check every phase-grid profile: M = round(lambda N) >= 2 and 1 <= K < M on the grid"""
        valid = True
        for name, profile in self.PROFILES.items():
            try:
                validate_grid(profile)
            except ConfigError as e:
                logger.error(f"Profile '{name}' is invalid: {e}")
                valid = False
        if valid:
            logger.debug("Experiment profiles validation passed")
        return valid

    def profile(self, name):
        try:
            return copy.deepcopy(self.PROFILES[name])
        except KeyError:
            raise ConfigError(f"unknown profile '{name}' (choose from {sorted(self.PROFILES)})")

    def export_config(self, filename='sparsebench_config.json'):
        """Export configuration to JSON file"""
        config = {
            'recovery_defaults': self.RECOVERY_DEFAULTS,
            'ric_defaults': self.RIC_DEFAULTS,
            'desk_profile': self.DESK_PROFILE,
            'full_profile': self.FULL_PROFILE,
            'histogram_cases': self.HISTOGRAM_CASES,
            'certify_defaults': self.CERTIFY_DEFAULTS,
        }

        with open(filename, 'w') as f:
            json.dump(config, f, indent=2)

        logger.info(f"Experiment configuration exported to {filename}")


def grid_dimensions(n, lam, rho):
    """(M, K) for one grid cell: M = round(lambda N), K = max(1, round(rho M))"""
    m = int(round(lam * n))
    return m, max(1, int(round(rho * m)))


def default_rho_values(m, count=30):
    """`count` evenly spaced rho in [1/M, 1), minus those that round to K = M"""
    low = 1.0 / m
    step = (1.0 - low) / count
    rhos = [low + i * step for i in range(count)]
    return [rho for rho in rhos if int(round(rho * m)) < m]


def validate_grid(grid):
    n = grid.get('n')
    if not isinstance(n, int) or n < 2:
        raise ConfigError(f"n must be an integer >= 2, got {n!r}")
    if grid.get('trials_per_cell', 1) < 1:
        raise ConfigError("trials_per_cell must be positive")
    for lam in grid.get('lambda_values', ()):
        if not 0.0 < lam < 1.0:
            raise ConfigError(f"lambda values must lie in (0, 1), got {lam}")
        m = int(round(lam * n))
        if m < 2:
            raise ConfigError(f"lambda={lam} gives M={m} < 2 at N={n}")
        rhos = grid.get('rho_values') or default_rho_values(m, grid.get('rho_count', 30))
        for rho in rhos:
            if not 0.0 < rho <= 1.0:
                raise ConfigError(f"rho values must lie in (0, 1], got {rho}")
            _, k = grid_dimensions(n, lam, rho)
            if k >= m:
                raise ConfigError(f"(lambda={lam}, rho={rho}) gives K={k} >= M={m}")


def env_seed():
    """Master seed from SPARSEBENCH_SEED, or None when unset"""
    value = os.environ.get(SEED_ENV_VAR)
    if value is None or value == '':
        return None
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got '{value}'")


def load_config_file(path):
    try:
        with open(path) as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: malformed JSON ({e})")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def resolve(defaults, profile=None, file_values=None, overrides=None):
    """defaults < profile < config file < flags; None-valued flags are ignored"""
    resolved = copy.deepcopy(defaults)
    for layer in (profile, file_values):
        if layer:
            resolved.update(copy.deepcopy(layer))
    for key, value in (overrides or {}).items():
        if value is not None:
            resolved[key] = value

    if resolved.get('seed') is None:
        seed = env_seed()
        resolved['seed'] = DEFAULT_SEED if seed is None else seed
    return resolved


# Create global instance
experiment_config = ExperimentConfig()


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    print("Sparsebench Experiment Configuration Test")
    print("=========================================")

    config = ExperimentConfig()
    config.log_configuration()
    print(f"Profiles valid: {config.validate()}")
    config.export_config('test_sparsebench_config.json')
