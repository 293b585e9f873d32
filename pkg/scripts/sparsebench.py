#!/usr/bin/env python3
"""
Sparsebench Command Line
Single entry point for instance generation, recovery, RIC tables, guarantee
certification, phase-transition and n_f histogram experiments, and plots.

Every subcommand writes into --out, including resolved_config.json (the
fully resolved parameters) and sparsebench.log. Passing that file back with
--config reproduces the run.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import psutil

from ensembles import (gen_gaussian_matrix, gen_sparse_signal, matrix_from_file, matrix_to_file, measure,
                       signal_from_file, signal_to_file, trial_seeds)
from experiment_config import experiment_config, load_config_file, resolve
from experiments import (PhaseGridConfig, build_transition_curves, count_guarantee_violations,
                         find_online_certificate, guarantee_sweep, read_curves_csv, read_histogram_csv,
                         run_nf_histogram, run_phase_grid, write_cells_csv, write_curves_csv,
                         write_curves_json, write_histogram_csv, write_histogram_json)
from guarantees import RicCalculator, build_ric_table, certify_trace
from linalg import load_vector_csv
from recovery import Algorithm, is_exact_recovery, recover
from sparse_errors import EXIT_OK, BudgetExceeded, ConfigError, InputError, exit_code_for
from svg_charts import histogram_svg, phase_panels_svg, write_svg

logger = logging.getLogger('sparsebench')

DEFAULT_OUT = 'sparsebench_out'
# keys that only steer execution, never results
RUNTIME_KEYS = ('out', 'config', 'profile', 'threads', 'log_level', 'command')


def default_threads():
    return psutil.cpu_count(logical=True) or 1


def setup_logging(out_dir, level):
    out_dir.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(out_dir / 'sparsebench.log'),
            logging.StreamHandler(),
        ],
        force=True,
    )


def _write_json(path, data):
    with open(path, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write('\n')


def _header_config(params):
    return {k: v for k, v in sorted(params.items()) if k not in RUNTIME_KEYS}


def _require(params, *keys):
    missing = [k for k in keys if params.get(k) is None]
    if missing:
        raise ConfigError(f"missing required parameter(s): {', '.join(missing)}")


def _load_matrix(params):
    if params.get('matrix'):
        return matrix_from_file(params['matrix'])
    _require(params, 'm', 'n')
    matrix_seed, _ = trial_seeds(params['seed'], 0)
    return gen_gaussian_matrix(params['m'], params['n'], matrix_seed, normalize=params.get('normalize_columns', True))


def _output_path(out_dir, params, default):
    name = params.get('output') or default
    if Path(name).is_absolute() or '..' in Path(name).parts:
        raise ConfigError(f"--output must be a relative path inside --out, got '{name}'")
    path = out_dir / name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _load_signal(params, n):
    if params.get('signal'):
        return signal_from_file(params['signal'])
    _require(params, 'k')
    _, signal_seed = trial_seeds(params['seed'], 0)
    return gen_sparse_signal(n, params['k'], params.get('ensemble', 'gaussian'), signal_seed)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_matrix(params, out_dir):
    Phi = _load_matrix({**params, 'matrix': None})
    path = _output_path(out_dir, params, 'matrix.csv')
    matrix_to_file(path, Phi)
    print(f"matrix: {Phi.m}x{Phi.n} -> {path}")


def cmd_gen_signal(params, out_dir):
    _require(params, 'n')
    x = _load_signal({**params, 'signal': None}, params['n'])
    path = _output_path(out_dir, params, 'signal.json')
    signal_to_file(path, x)
    print(f"signal: n={x.n}, k={x.k}, {x.ensemble.value} -> {path}")


def cmd_recover(params, out_dir):
    algorithm = Algorithm.parse(params['algorithm'])
    Phi = _load_matrix(params)

    truth = None
    if params.get('measurements'):
        y = load_vector_csv(params['measurements'])
    else:
        truth = _load_signal(params, Phi.n)
        y = measure(Phi, truth)

    k = params.get('k') if truth is None else truth.k
    if algorithm in (Algorithm.OMP_K, Algorithm.SP) and k is None:
        raise ConfigError(f"{algorithm.label} needs --k")

    trace = recover(algorithm, Phi, y, k=k, epsilon=params['epsilon'],
                    max_iterations=params.get('max_iterations'))
    _write_json(out_dir / 'trace.json', trace.to_dict(include_estimate=True))

    print(f"algorithm: {algorithm.label}")
    print(f"iterations: {trace.iterations}")
    print(f"terminated_by: {trace.terminated_by.value}")
    if truth is not None:
        print(f"exact_recovery: {str(is_exact_recovery(truth, trace.estimate)).lower()}")


def cmd_ric(params, out_dir):
    Phi = _load_matrix(params)
    matrix_id = Path(params['matrix']).stem if params.get('matrix') else f"gaussian-{Phi.m}x{Phi.n}"
    table = build_ric_table(Phi, params['k'], mode=params['mode'], samples=params['samples'],
                            seed=params['seed'], budget=params['budget'], matrix_id=matrix_id,
                            workers=params['threads'])
    _write_json(out_dir / 'ric_table.json', table.to_dict())
    print(table.render())


def cmd_certify(params, out_dir):
    if params.get('matrix') or params.get('signal'):
        Phi = _load_matrix(params)
        truth = _load_signal(params, Phi.n)
        trace = recover(Algorithm.OMP_E, Phi, measure(Phi, truth))
        calculator = RicCalculator(Phi, budget=params['budget'], workers=params['threads'])
        reports = [certify_trace(trace, truth, calculator)]
    else:
        reports = guarantee_sweep(params['m'], params['n'], params['k'], params['ensemble'],
                                  params['instances'], params['seed'], params['budget'], params['threads'],
                                  matrix_kind=params['matrix_kind'])

    _write_json(out_dir / 'certify_report.json',
                {'config': _header_config(params), 'reports': [r.to_dict() for r in reports]})
    for report in reports:
        print(report.render_table())
        print()
    print(f"instances: {len(reports)}")
    print(f"violations: {count_guarantee_violations(reports)}")

    if params.get('search'):
        certificate = find_online_certificate(params['m'], params['n'], params['k'], params['ensemble'],
                                              params['seed'], params['search_limit'], params['budget'],
                                              matrix_kind=params['matrix_kind'])
        if certificate is None:
            print("certificate: none found")
        else:
            _write_json(out_dir / 'certificate.json', certificate.to_dict())
            print(f"certificate: instance {certificate.instance['index']}")
            print(certificate.render_table())


def cmd_phase(params, out_dir):
    algorithms = list(params['algorithms'])
    if params.get('with_bp') and 'bp' not in algorithms:
        algorithms.append('bp')
    header = _header_config(params)

    cells = []
    for ensemble in params['ensembles']:
        cfg = PhaseGridConfig(n=params['n'], lambda_values=params['lambda_values'],
                              rho_values=params.get('rho_values'), trials_per_cell=params['trials_per_cell'],
                              algorithms=algorithms, ensemble=ensemble, master_seed=params['seed'],
                              normalize_columns=params['normalize_columns'], rho_count=params['rho_count'])
        ensemble_cells = run_phase_grid(cfg, workers=params['threads'])
        write_cells_csv(out_dir / f'cells_{cfg.ensemble.value}.csv', ensemble_cells, header)
        cells.extend(ensemble_cells)

    curves = build_transition_curves(cells)
    write_curves_csv(out_dir / 'curves.csv', curves, header)
    write_curves_json(out_dir / 'curves.json', curves, header)
    write_svg(out_dir / 'phase.svg', phase_panels_svg(curves))

    for curve in curves:
        points = ', '.join(f"{p.lam:.1f}:{p.rho_50:.3f}" for p in curve.points)
        print(f"{curve.ensemble.value:>8} {curve.algorithm.label:>5}  {points}")


def cmd_hist(params, out_dir):
    histogram = run_nf_histogram(params['m'], params['k'], params['n'], params['trials'], params['ensemble'],
                                 params['seed'], workers=params['threads'])
    header = _header_config(params)
    write_histogram_csv(out_dir / 'histogram.csv', histogram, header)
    write_histogram_json(out_dir / 'histogram.json', histogram, header)
    write_svg(out_dir / 'histogram.svg', histogram_svg(histogram.counts, histogram.k))

    print(f"OMP_K successes: {histogram.ompk_successes}/{histogram.trials}")
    print(f"OMP_e successes: {histogram.ompe_successes}/{histogram.trials}")
    print(f"max n_f: {histogram.max_nf}")
    for nf, count in sorted(histogram.counts.items()):
        print(f"  n_f={nf:>3}: {count}")


def cmd_plot(params, out_dir):
    if params.get('curves'):
        curves = read_curves_csv(params['curves'])
        write_svg(out_dir / 'phase.svg', phase_panels_svg(curves))
    elif params.get('histogram'):
        _require(params, 'k')
        write_svg(out_dir / 'histogram.svg', histogram_svg(read_histogram_csv(params['histogram']), params['k']))
    else:
        raise ConfigError("plot needs --curves or --histogram")


COMMANDS = {
    'gen-matrix': (cmd_gen_matrix, lambda: experiment_config.RECOVERY_DEFAULTS),
    'gen-signal': (cmd_gen_signal, lambda: experiment_config.RECOVERY_DEFAULTS),
    'recover': (cmd_recover, lambda: experiment_config.RECOVERY_DEFAULTS),
    'ric': (cmd_ric, lambda: {**experiment_config.RECOVERY_DEFAULTS, **experiment_config.RIC_DEFAULTS}),
    'certify': (cmd_certify, lambda: experiment_config.CERTIFY_DEFAULTS),
    'phase': (cmd_phase, lambda: experiment_config.DESK_PROFILE),
    'hist': (cmd_hist, lambda: experiment_config.HISTOGRAM_CASES['M125_K40']),
    'plot': (cmd_plot, dict),
}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _csv_list(cast):
    def parse(text):
        try:
            return [cast(item) for item in text.split(',') if item.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid list '{text}'")
    return parse


def build_parser():
    # SUPPRESS keeps a subparser from resetting a global flag given before the subcommand
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument('--out', type=str, help=f'Output directory (default {DEFAULT_OUT})')
    common.add_argument('--config', type=str, help='JSON config file, e.g. a resolved_config.json')
    common.add_argument('--profile', choices=['desk', 'full'], help='Phase-grid profile')
    common.add_argument('--seed', type=int, help='Master seed (default $SPARSEBENCH_SEED)')
    common.add_argument('--threads', type=int, help='Worker threads (default: logical CPUs)')
    common.add_argument('--log-level', type=str, help='Logging level (default INFO)')

    parser = argparse.ArgumentParser(prog='sparsebench', description='Sparse recovery benchmark toolkit',
                                     parents=[common])
    sub = parser.add_subparsers(dest='command', required=True)

    def instance_args(p, signal=True):
        p.add_argument('--matrix', type=str, help='Matrix CSV file')
        p.add_argument('--m', type=int, help='Rows of a generated matrix')
        p.add_argument('--n', type=int, help='Columns of a generated matrix')
        p.add_argument('--no-normalize', dest='normalize_columns', action='store_false', default=None,
                       help='Keep N(0, 1/M) columns unnormalized')
        if signal:
            p.add_argument('--signal', type=str, help='Signal JSON file')
            p.add_argument('--k', type=int, help='Sparsity of a generated signal')
            p.add_argument('--ensemble', choices=['gaussian', 'uniform', 'cars'])

    p = sub.add_parser('gen-matrix', parents=[common], help='Generate a Gaussian observation matrix')
    instance_args(p, signal=False)
    p.add_argument('--output', type=str, help='File name inside --out')

    p = sub.add_parser('gen-signal', parents=[common], help='Generate a sparse signal')
    p.add_argument('--n', type=int)
    p.add_argument('--k', type=int)
    p.add_argument('--ensemble', choices=['gaussian', 'uniform', 'cars'])
    p.add_argument('--output', type=str, help='File name inside --out')

    p = sub.add_parser('recover', parents=[common], help='Run one recovery algorithm')
    instance_args(p)
    p.add_argument('--measurements', type=str, help='Measurement vector CSV (no ground truth)')
    p.add_argument('--algorithm', choices=[a.value for a in Algorithm])
    p.add_argument('--epsilon', type=float, help='Relative residue threshold for omp_e')
    p.add_argument('--max-iterations', type=int)

    p = sub.add_parser('ric', parents=[common], help='Compute restricted isometry constants')
    instance_args(p, signal=False)
    p.add_argument('--k', type=int, help='Largest order')
    p.add_argument('--mode', choices=['exact', 'mc'])
    p.add_argument('--samples', type=int)
    p.add_argument('--budget', type=int)

    p = sub.add_parser('certify', parents=[common], help='Certify OMP_e traces with the online condition')
    instance_args(p)
    p.add_argument('--instances', type=int)
    p.add_argument('--matrix-kind', choices=['gaussian', 'tight_frame'])
    p.add_argument('--budget', type=int)
    p.add_argument('--search', action='store_true', default=None,
                   help='Also search seeds for an online certificate')
    p.add_argument('--search-limit', type=int)

    p = sub.add_parser('phase', parents=[common], help='Phase-transition experiment')
    p.add_argument('--n', type=int)
    p.add_argument('--trials', dest='trials_per_cell', type=int)
    p.add_argument('--lambdas', dest='lambda_values', type=_csv_list(float))
    p.add_argument('--rhos', dest='rho_values', type=_csv_list(float))
    p.add_argument('--rho-count', type=int)
    p.add_argument('--algorithms', type=_csv_list(str))
    p.add_argument('--ensembles', type=_csv_list(str))
    p.add_argument('--with-bp', action='store_true', default=None, help='Add BP to the algorithms')

    p = sub.add_parser('hist', parents=[common], help='n_f histogram of successful OMP_e runs')
    p.add_argument('--case', choices=sorted(experiment_config.HISTOGRAM_CASES))
    p.add_argument('--m', type=int)
    p.add_argument('--k', type=int)
    p.add_argument('--n', type=int)
    p.add_argument('--trials', type=int)
    p.add_argument('--ensemble', choices=['gaussian', 'uniform', 'cars'])

    p = sub.add_parser('plot', parents=[common], help='Re-render SVG from CSV artifacts')
    p.add_argument('--curves', type=str, help='curves.csv from a phase run')
    p.add_argument('--histogram', type=str, help='histogram.csv from a hist run')
    p.add_argument('--k', type=int, help='Sparsity for the histogram reference lines')

    return parser


def resolve_params(args):
    """defaults < profile < --config file < flags"""
    flags = {k: v for k, v in vars(args).items() if v is not None}
    command = args.command
    defaults = dict(COMMANDS[command][1]())

    profile = None
    if command == 'phase' and getattr(args, 'profile', None):
        profile = experiment_config.profile(args.profile)
    if command == 'hist' and getattr(args, 'case', None):
        profile = experiment_config.HISTOGRAM_CASES[args.case]

    file_values = None
    if getattr(args, 'config', None):
        file_values = {k: v for k, v in load_config_file(args.config).items() if k not in RUNTIME_KEYS}

    params = resolve(defaults, profile, file_values, flags)
    params['command'] = command
    params.setdefault('threads', default_threads())
    if params['threads'] < 1:
        raise ConfigError(f"--threads must be positive, got {params['threads']}")
    return params


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # usage errors are input errors, not solver errors
        return EXIT_OK if e.code in (0, None) else exit_code_for(InputError('bad arguments'))
    out_dir = Path(getattr(args, 'out', None) or DEFAULT_OUT)

    try:
        setup_logging(out_dir, getattr(args, 'log_level', None) or 'INFO')
    except OSError as e:
        print(f"error: cannot use output directory {out_dir}: {e}", file=sys.stderr)
        return exit_code_for(InputError(str(e)))

    try:
        params = resolve_params(args)
        _write_json(out_dir / 'resolved_config.json',
                    {k: v for k, v in sorted(params.items()) if k not in ('out', 'config', 'threads', 'log_level')})
        logger.info(f"🚀 sparsebench {args.command} -> {out_dir}")
        COMMANDS[args.command][0](params, out_dir)
        logger.info(f"✅ {args.command} finished")
        return EXIT_OK
    except BudgetExceeded as e:
        logger.error(f"❌ {e}")
        print(f"error: {e}", file=sys.stderr)
        print(f"suggestion: sparsebench {e.suggestion}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"❌ {args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
