"""
Experiment Configuration

One JSON document describes one experiment run:

    {
      "experiment": "mixture",
      "output_dir": "./results/mixture",
      "seeds": [0],
      "threads": 4,
      "scale_ls_step": true,
      "target": {"n_components": 500, "centers_seed": 0},
      "samplers": [{"label": "sgld", "kind": "sgld", "eta": 0.05, "batch_size": 10}],
      "options": {"iteration_counts": [100000]}
    }

Anything left out falls back to config.py. Unknown keys are errors.
"""

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from errors import ConfigValidationError
from samplers import FULL_GRADIENT_KINDS, KINDS, SamplerSpec
from smoothing_operator import coupling_to_sigma

try:
    import config as defaults
except ImportError:
    defaults = None


def _default(name: str, fallback):
    return getattr(defaults, name, fallback) if defaults is not None else fallback


EXPERIMENTS = ('gauss2d', 'stationarity', 'mixture', 'mixing', 'blr',
               'variance_table', 'gamma_table', 'bounds_sweep')

TOP_LEVEL_KEYS = ('experiment', 'output_dir', 'seeds', 'threads', 'scale_ls_step',
                  'target', 'samplers', 'options')

SAMPLER_KEYS = ('label', 'kind', 'eta', 'batch_size', 'iterations', 'burn_in', 'thin', 'beta', 'sigma',
                'coupling', 'precond_alpha', 'precond_eps', 'ls_order', 'unit_preconditioner', 'scale_step')

# Experiments whose targets live in two dimensions, where "coupling" is defined
TWO_DIMENSIONAL = ('gauss2d', 'stationarity', 'mixture', 'mixing')

BLR_TARGET_KEYS = ('dataset', 'test_dataset', 'test_fraction', 'n_features', 'synthetic',
                   'prior_lambda', 'prior_theta', 'epsilon_norm')

TARGET_KEYS = {
    'gauss2d': ('rho', 'covariance'),
    'stationarity': ('rho', 'covariance'),
    'mixture': ('n_components', 'centers_seed'),
    'mixing': ('name', 'n_components', 'centers_seed'),
    'blr': BLR_TARGET_KEYS,
    'variance_table': BLR_TARGET_KEYS,
    'gamma_table': (),
    'bounds_sweep': (),
}

MH_OPTIONS = {
    'mh_scale': _default('MH_PROPOSAL_SCALE', 1.0),
    'mh_iterations': _default('MH_ITERATIONS', 100000),
    'mh_burn_in': 1000,
}

OPTION_DEFAULTS = {
    'gauss2d': {
        'eta_grid': _default('GAUSS2D_ETA_GRID', [0.19 * 0.8 ** k for k in range(5)]),
        'record_samples': _default('GAUSS2D_RECORD_SAMPLES', 600),
    },
    'stationarity': {
        'chains': _default('STATIONARITY_CHAINS', 200),
    },
    'mixture': {
        'iteration_counts': _default('MIXTURE_ITERATIONS', [100000, 500000, 1000000]),
        'tail_samples': _default('MIXTURE_TAIL_SAMPLES', 10000),
        'w2_max_points': _default('W2_MAX_POINTS', 2000),
        'kde_grid_points': _default('KDE_GRID_POINTS', 100),
        **MH_OPTIONS,
    },
    'mixing': {
        'checkpoints': _default('MIXING_CHECKPOINTS', [1000, 2000, 5000, 10000, 20000, 50000, 100000]),
        **MH_OPTIONS,
    },
    'blr': {
        'eval_every': _default('BLR_EVAL_EVERY', 100),
        'window': None,
    },
    'variance_table': {
        'sigmas': _default('VARIANCE_SIGMAS', [0.0, 0.5, 1.0, 2.0]),
        'batch_sizes': _default('VARIANCE_BATCH_SIZES', [10, 15, 50]),
        'repeats': _default('VARIANCE_REPEATS', 100),
        'path_length': _default('VARIANCE_PATH_LENGTH', 50),
        'path_iterations': 1000,
        'path_eta': _default('BLR_SGLD_ETA', 0.001),
        'path_batch_size': 10,
    },
    'gamma_table': {
        'sigmas': _default('GAMMA_SIGMAS', [1.0, 2.0, 3.0, 4.0, 5.0]),
        'dims': _default('GAMMA_DIMS', [1000, 10000, 100000]),
    },
    'bounds_sweep': {
        'sigmas': _default('BOUNDS_SIGMAS', [0.0, 0.5, 1.0, 1.5, 2.0]),
        'theorems': ['convex', 'nonconvex'],
        'constants': {},
        'use_inverse_trace': False,
    },
}


def _synthetic_defaults() -> Dict[str, Any]:
    return {'n': _default('SYNTHETIC_N', 3000), 'd': _default('SYNTHETIC_D', 122), 'seed': 0}


TARGET_DEFAULTS = {
    'gauss2d': {'rho': 0.9},
    'stationarity': {'rho': 0.9},
    'mixture': {'n_components': _default('MIXTURE_COMPONENTS', 500), 'centers_seed': 0},
    'mixing': {'name': 'gaussian', 'n_components': _default('MIXTURE_COMPONENTS', 500), 'centers_seed': 0},
    'blr': {'test_fraction': 0.2, 'n_features': _default('A3A_DIMENSION', 122),
            'prior_lambda': _default('BLR_PRIOR_LAMBDA', 1.0),
            'prior_theta': _default('BLR_PRIOR_THETA', 1e-2),
            'epsilon_norm': _default('BLR_EPSILON_NORM', 1e-8)},
    'gamma_table': {},
    'bounds_sweep': {},
}
TARGET_DEFAULTS['variance_table'] = dict(TARGET_DEFAULTS['blr'])


def default_samplers(experiment: str) -> List[Dict[str, Any]]:
    """Sampler list used when a config has no "samplers" entry."""
    if experiment == 'gauss2d':
        iterations = _default('GAUSS2D_ITERATIONS', 200000)
        eta = _default('GAUSS2D_ETA', 0.19)
        psgld_eta = _default('GAUSS2D_PSGLD_ETA', 0.19)
        coupling = _default('GAUSS2D_COUPLING', 0.1)
        return [
            {'label': 'sgld', 'kind': 'sgld', 'eta': eta, 'iterations': iterations},
            {'label': 'psgld', 'kind': 'psgld', 'eta': psgld_eta, 'iterations': iterations},
            {'label': 'ls_sgld', 'kind': 'ls_sgld', 'eta': eta, 'coupling': coupling,
             'iterations': iterations, 'scale_step': False},
            {'label': 'ls_sgld_scaled', 'kind': 'ls_sgld', 'eta': eta, 'coupling': coupling,
             'iterations': iterations, 'scale_step': True},
            {'label': 'ls_psgld', 'kind': 'ls_psgld', 'eta': psgld_eta, 'coupling': coupling,
             'iterations': iterations, 'scale_step': False},
            {'label': 'ls_psgld_scaled', 'kind': 'ls_psgld', 'eta': psgld_eta, 'coupling': coupling,
             'iterations': iterations, 'scale_step': True},
        ]
    if experiment == 'stationarity':
        common = {'eta': _default('STATIONARITY_ETA', 1e-3),
                  'iterations': _default('STATIONARITY_ITERATIONS', 200000),
                  'burn_in': _default('STATIONARITY_BURN_IN', 10000)}
        return [
            {'label': 'gld', 'kind': 'sgld', **common},
            {'label': 'ls_gld', 'kind': 'ls_sgld', 'coupling': _default('STATIONARITY_COUPLING', 0.1), **common},
        ]
    if experiment == 'mixture':
        batch = _default('MIXTURE_BATCH_SIZE', 10)
        eta = _default('MIXTURE_ETA', 0.05)
        coupling = _default('MIXTURE_COUPLING', 1.0)
        return [
            {'label': 'sgld', 'kind': 'sgld', 'eta': eta, 'batch_size': batch},
            {'label': 'ls_sgld', 'kind': 'ls_sgld', 'eta': eta, 'batch_size': batch, 'coupling': coupling},
            {'label': 'psgld', 'kind': 'psgld', 'eta': eta, 'batch_size': batch},
            {'label': 'ls_psgld', 'kind': 'ls_psgld', 'eta': eta, 'batch_size': batch, 'coupling': coupling},
        ]
    if experiment == 'mixing':
        eta = _default('MIXING_ETA', 0.1)
        iterations = max(_default('MIXING_CHECKPOINTS', [100000]))
        return [
            {'label': 'ld', 'kind': 'ld_reference', 'eta': eta, 'iterations': iterations},
            {'label': 'ls_ld', 'kind': 'ls_ld_reference', 'eta': eta, 'iterations': iterations,
             'coupling': _default('MIXING_COUPLING', 1.0)},
        ]
    if experiment == 'blr':
        common = {'batch_size': _default('BLR_BATCH_SIZE', 5),
                  'iterations': _default('BLR_ITERATIONS', 5000),
                  'burn_in': _default('BLR_BURN_IN', 1000)}
        sgld_eta = _default('BLR_SGLD_ETA', 0.001)
        psgld_eta = _default('BLR_PSGLD_ETA', 0.002)
        sigma = _default('BLR_SIGMA', 1.0)
        return [
            {'label': 'sgld', 'kind': 'sgld', 'eta': sgld_eta, **common},
            {'label': 'ls_sgld', 'kind': 'ls_sgld', 'eta': sgld_eta, 'sigma': sigma, **common},
            {'label': 'psgld', 'kind': 'psgld', 'eta': psgld_eta, **common},
            {'label': 'ls_psgld', 'kind': 'ls_psgld', 'eta': psgld_eta, 'sigma': sigma, **common},
        ]
    return []


@dataclass
class ExperimentConfig:
    """A validated experiment document with defaults filled in."""
    experiment: str
    output_dir: Path
    seeds: List[int]
    threads: int
    scale_ls_step: bool
    target: Dict[str, Any] = field(default_factory=dict)
    samplers: List[Dict[str, Any]] = field(default_factory=list)
    options: Dict[str, Any] = field(default_factory=dict)
    source: Optional[Path] = None

    def sampler_spec(self, entry: Dict[str, Any], seed: int) -> SamplerSpec:
        return sampler_spec_from_entry(entry, seed, self.scale_ls_step)

    def labels(self) -> List[str]:
        return [entry['label'] for entry in self.samplers]

    def to_dict(self) -> Dict[str, Any]:
        """Echo written into summary.json; paths are kept relative so the bytes do not depend on cwd."""
        return {
            'experiment': self.experiment,
            'seeds': list(self.seeds),
            'scale_ls_step': self.scale_ls_step,
            'target': copy.deepcopy(self.target),
            'samplers': copy.deepcopy(self.samplers),
            'options': copy.deepcopy(self.options),
        }


def sampler_spec_from_entry(entry: Dict[str, Any], seed: int, scale_ls_step: bool) -> SamplerSpec:
    """
    Turn one "samplers" entry into a SamplerSpec.

    A "coupling" entry is converted to sigma; a "scale_step" entry overrides the
    document-wide scale_ls_step for this sampler only.
    """
    sigma = entry.get('sigma', 0.0)
    if entry.get('coupling') is not None:
        sigma = coupling_to_sigma(float(entry['coupling']))
    return SamplerSpec(
        kind=entry['kind'],
        eta=float(entry['eta']),
        batch_size=int(entry.get('batch_size', 1)),
        iterations=int(entry.get('iterations', 1000)),
        burn_in=int(entry.get('burn_in', 0)),
        thin=int(entry.get('thin', 1)),
        seed=int(seed),
        beta=float(entry.get('beta', _default('DEFAULT_BETA', 1.0))),
        sigma=float(sigma),
        precond_alpha=float(entry.get('precond_alpha', _default('PRECOND_ALPHA', 0.99))),
        precond_eps=float(entry.get('precond_eps', _default('PRECOND_EPS', 1e-5))),
        scale_step_for_smoothing=bool(entry.get('scale_step', scale_ls_step)),
        ls_order=entry.get('ls_order', 'smooth_after_precondition'),
        unit_preconditioner=bool(entry.get('unit_preconditioner', False)),
    )


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _unknown_keys(section: str, given: Dict, allowed) -> List[str]:
    prefix = f"{section}." if section else ""
    return [f"{prefix}{key}: unknown key" for key in sorted(set(given) - set(allowed))]


def _count_rows(path: Path) -> Optional[int]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return sum(1 for line in f if line.split('#', 1)[0].strip())
    except OSError:
        return None


def _component_count(experiment: str, target: Dict[str, Any], errors: List[str]) -> Optional[int]:
    """Number of finite-sum components the batches draw from, when it can be known up front."""
    if experiment in ('gauss2d', 'stationarity'):
        return 1
    if experiment == 'mixture' or (experiment == 'mixing' and target.get('name') == 'mixture'):
        n = target.get('n_components')
        if not _is_int(n) or n < 1:
            errors.append(f"target.n_components: must be a positive integer, got {n!r}")
            return None
        return n
    if experiment == 'mixing':
        return 1
    if experiment == 'variance_table':
        return _blr_component_count(target, errors)
    if experiment == 'blr':
        n = _blr_component_count(target, errors)
        fraction = target.get('test_fraction')
        if n is None or target.get('test_dataset') is not None or not _is_number(fraction) or fraction <= 0:
            return n
        # rows left for training after the held-out split
        return n - max(1, int(round(fraction * n)))
    return None


def _blr_component_count(target: Dict[str, Any], errors: List[str]) -> Optional[int]:
    dataset = target.get('dataset')
    synthetic = target.get('synthetic')
    if dataset is not None and synthetic is not None:
        errors.append("target.dataset, target.synthetic: give one or the other, not both")
        return None
    if dataset is None and synthetic is None:
        errors.append("target.dataset, target.synthetic: one of them is required")
        return None
    test_dataset = target.get('test_dataset')
    if test_dataset is not None and not Path(test_dataset).is_file():
        errors.append(f"target.test_dataset: file not found: {test_dataset}")
    fraction = target.get('test_fraction')
    if not _is_number(fraction) or not 0.0 <= fraction < 1.0:
        errors.append(f"target.test_fraction: must be in [0, 1), got {fraction!r}")
    if dataset is not None:
        path = Path(dataset)
        if not path.is_file():
            errors.append(f"target.dataset: file not found: {dataset}")
            return None
        rows = _count_rows(path)
        if rows is None or rows == 0:
            errors.append(f"target.dataset: no data rows in {dataset}")
            return None
        return rows
    if not isinstance(synthetic, dict):
        errors.append("target.synthetic: must be an object with n, d, seed")
        return None
    errors.extend(_unknown_keys('target.synthetic', synthetic, ('n', 'd', 'seed', 'density')))
    merged = {**_synthetic_defaults(), **synthetic}
    for key in ('n', 'd'):
        if not _is_int(merged[key]) or merged[key] < 1:
            errors.append(f"target.synthetic.{key}: must be a positive integer, got {merged[key]!r}")
    if not _is_int(merged['seed']) or merged['seed'] < 0:
        errors.append(f"target.synthetic.seed: must be a nonnegative integer, got {merged['seed']!r}")
    return merged['n'] if _is_int(merged['n']) else None


def _check_covariance(covariance) -> List[str]:
    """A 2x2 symmetric positive-definite matrix given as nested lists."""
    shaped = (isinstance(covariance, list) and len(covariance) == 2
              and all(isinstance(row, list) and len(row) == 2 and all(_is_number(v) for v in row)
                      for row in covariance))
    if not shaped:
        return [f"target.covariance: must be a 2x2 list of numbers, got {covariance!r}"]
    matrix = np.asarray(covariance, dtype=float)
    if not np.allclose(matrix, matrix.T):
        return ["target.covariance: must be symmetric"]
    if np.linalg.eigvalsh(matrix)[0] <= 0:
        return ["target.covariance: must be positive definite"]
    return []


def _scoped(message: str, index: int) -> str:
    """Rewrite "batch_size, n: ..." from SamplerSpec.validate into full field paths."""
    fields, _, text = message.partition(': ')
    names = []
    for name in fields.split(', '):
        names.append('target.n' if name == 'n' else f"samplers[{index}].{name}")
    return f"{', '.join(names)}: {text}"


def _validate_samplers(experiment: str, samplers, n: Optional[int], scale_ls_step: bool) -> List[str]:
    errors = []
    if not isinstance(samplers, list):
        return ["samplers: must be a list"]
    if experiment in ('gauss2d', 'stationarity', 'mixture', 'mixing', 'blr') and not samplers:
        errors.append("samplers: at least one sampler is required")
    labels = set()
    for i, entry in enumerate(samplers):
        if not isinstance(entry, dict):
            errors.append(f"samplers[{i}]: must be an object")
            continue
        errors.extend(_unknown_keys(f"samplers[{i}]", entry, SAMPLER_KEYS))
        if 'kind' not in entry:
            errors.append(f"samplers[{i}].kind: required (one of {', '.join(KINDS)})")
            continue
        if not _is_number(entry.get('eta')):
            errors.append(f"samplers[{i}].eta: required number, got {entry.get('eta')!r}")
            continue
        for key in ('batch_size', 'iterations', 'burn_in', 'thin'):
            if key in entry and not _is_int(entry[key]):
                errors.append(f"samplers[{i}].{key}: must be an integer, got {entry[key]!r}")
        for key in ('beta', 'sigma', 'coupling', 'precond_alpha', 'precond_eps'):
            if key in entry and not _is_number(entry[key]):
                errors.append(f"samplers[{i}].{key}: must be a number, got {entry[key]!r}")
        if 'sigma' in entry and 'coupling' in entry:
            errors.append(f"samplers[{i}].sigma, samplers[{i}].coupling: give one or the other")
        if 'scale_step' in entry and not isinstance(entry['scale_step'], bool):
            errors.append(f"samplers[{i}].scale_step: must be true or false, got {entry['scale_step']!r}")
        if 'coupling' in entry and experiment not in TWO_DIMENSIONAL:
            errors.append(f"samplers[{i}].coupling: only defined for two-dimensional targets")
        label = entry.get('label', entry['kind'])
        if label in labels:
            errors.append(f"samplers[{i}].label: duplicate label {label!r}")
        labels.add(label)
        if errors and any(e.startswith(f"samplers[{i}].") for e in errors):
            continue
        spec = sampler_spec_from_entry(entry, 0, scale_ls_step)
        errors.extend(_scoped(message, i) for message in spec.validate(n))
    return errors


def _validate_options(experiment: str, options: Dict[str, Any], samplers: List[Dict], n: Optional[int]) -> List[str]:
    errors = []

    def positive_int_list(key):
        values = options.get(key)
        if not isinstance(values, list) or not values or not all(_is_int(v) and v > 0 for v in values):
            errors.append(f"options.{key}: must be a nonempty list of positive integers, got {values!r}")
            return False
        return True

    def positive_number_list(key, allow_zero=False):
        values = options.get(key)
        ok = isinstance(values, list) and values and all(
            _is_number(v) and (v >= 0 if allow_zero else v > 0) for v in values)
        if not ok:
            bound = '>= 0' if allow_zero else '> 0'
            errors.append(f"options.{key}: must be a nonempty list of numbers {bound}, got {values!r}")

    def positive_int(key):
        value = options.get(key)
        if not _is_int(value) or value < 1:
            errors.append(f"options.{key}: must be a positive integer, got {value!r}")

    def mh_options():
        if not _is_number(options.get('mh_scale')) or options['mh_scale'] <= 0:
            errors.append(f"options.mh_scale: must be > 0, got {options.get('mh_scale')!r}")
        burn_in = options.get('mh_burn_in')
        total = options.get('mh_iterations')
        if not _is_int(burn_in) or burn_in < 0:
            errors.append(f"options.mh_burn_in: must be a nonnegative integer, got {burn_in!r}")
        elif _is_int(total) and burn_in >= total:
            errors.append("options.mh_burn_in, options.mh_iterations: burn-in must be shorter than the chain")

    if experiment == 'gauss2d':
        positive_number_list('eta_grid')
        positive_int('record_samples')
    elif experiment == 'stationarity':
        positive_int('chains')
        for i, entry in enumerate(samplers):
            if isinstance(entry, dict) and entry.get('kind') in KINDS and entry['kind'] not in FULL_GRADIENT_KINDS:
                errors.append(f"samplers[{i}].kind: stationarity chains need one of "
                              f"{', '.join(FULL_GRADIENT_KINDS)}, got {entry['kind']!r}")
    elif experiment == 'mixture':
        if positive_int_list('iteration_counts'):
            positive_int('tail_samples')
            tail = options.get('tail_samples')
            if _is_int(tail) and tail > min(options['iteration_counts']):
                errors.append("options.tail_samples, options.iteration_counts: "
                              "tail_samples exceeds the shortest chain")
        for key in ('w2_max_points', 'kde_grid_points', 'mh_iterations'):
            positive_int(key)
        mh_options()
        for i, entry in enumerate(samplers):
            if isinstance(entry, dict) and 'iterations' in entry:
                errors.append(f"samplers[{i}].iterations: chain lengths come from options.iteration_counts")
    elif experiment == 'mixing':
        if positive_int_list('checkpoints'):
            for i, entry in enumerate(samplers):
                if not isinstance(entry, dict):
                    continue
                K, burn_in, thin = entry.get('iterations', 1000), entry.get('burn_in', 0), entry.get('thin', 1)
                if not (_is_int(K) and _is_int(burn_in) and _is_int(thin) and thin > 0):
                    continue
                if len(range(burn_in + 1, K + 1, thin)) < max(options['checkpoints']):
                    errors.append(f"samplers[{i}].iterations, options.checkpoints: "
                                  f"chain records fewer samples than the last checkpoint")
        positive_int('mh_iterations')
        mh_options()
    elif experiment == 'blr':
        positive_int('eval_every')
        if options.get('window') is not None and (not _is_int(options['window']) or options['window'] < 1):
            errors.append(f"options.window: must be null or a positive integer, got {options['window']!r}")
    elif experiment == 'variance_table':
        positive_number_list('sigmas', allow_zero=True)
        if positive_int_list('batch_sizes') and n is not None:
            for B in options['batch_sizes']:
                if B > n:
                    errors.append(f"options.batch_sizes, target.n: batch size {B} exceeds n={n}")
        for key in ('repeats', 'path_length', 'path_iterations', 'path_batch_size'):
            positive_int(key)
        if _is_int(options.get('repeats')) and options['repeats'] < 2:
            errors.append("options.repeats: must be >= 2")
        if not _is_number(options.get('path_eta')) or options['path_eta'] <= 0:
            errors.append(f"options.path_eta: must be > 0, got {options.get('path_eta')!r}")
    elif experiment == 'gamma_table':
        positive_number_list('sigmas', allow_zero=True)
        positive_int_list('dims')
    elif experiment == 'bounds_sweep':
        positive_number_list('sigmas', allow_zero=True)
        theorems = options.get('theorems')
        if not isinstance(theorems, list) or not theorems or not set(theorems) <= {'convex', 'nonconvex'}:
            errors.append(f"options.theorems: must be a nonempty subset of ['convex', 'nonconvex'], got {theorems!r}")
        constants = options.get('constants')
        if not isinstance(constants, dict):
            errors.append("options.constants: must be an object")
        else:
            allowed = tuple(_default('BOUNDS_DEFAULTS', {}).keys()) or (
                'K', 'eta', 'beta', 'd', 'omega', 'B', 'lambda_sobolev', 'f0_beta_logLambda', 'b_dissip', 'M')
            errors.extend(_unknown_keys('options.constants', constants, allowed))
            errors.extend(f"options.constants.{k}: must be a number" for k, v in sorted(constants.items())
                          if not _is_number(v))
    return errors


def fill_defaults(document: Dict[str, Any]) -> Dict[str, Any]:
    """Copy of the document with every omitted field taken from config.py."""
    experiment = document.get('experiment')
    filled = copy.deepcopy(document)
    if experiment not in EXPERIMENTS:
        return filled
    filled.setdefault('output_dir', str(Path(_default('OUTPUT_DIR', './results')) / experiment))
    seeds = _default('MIXING_SEEDS', list(range(10))) if experiment == 'mixing' else _default('DEFAULT_SEEDS', [0])
    filled.setdefault('seeds', list(seeds))
    filled.setdefault('threads', _default('DEFAULT_THREADS', 4))
    filled.setdefault('scale_ls_step', _default('SCALE_LS_STEP', True))
    if isinstance(filled.get('target', {}), dict):
        given = filled.get('target', {})
        target_defaults = dict(TARGET_DEFAULTS[experiment])
        if 'covariance' in given:
            target_defaults.pop('rho', None)
        filled['target'] = {**target_defaults, **given}
    if 'samplers' not in filled:
        filled['samplers'] = default_samplers(experiment)
    if isinstance(filled['samplers'], list):
        for entry in filled['samplers']:
            if isinstance(entry, dict) and 'kind' in entry:
                entry.setdefault('label', entry['kind'])
    if isinstance(filled.get('options', {}), dict):
        filled['options'] = {**copy.deepcopy(OPTION_DEFAULTS[experiment]), **filled.get('options', {})}
    return filled


def validate_config(document: Dict[str, Any]) -> List[str]:
    """
    Check every field of a (defaults-filled) config document.

    Returns:
        List of "field.path: problem" strings; empty when the document is valid
    """
    if not isinstance(document, dict):
        return ["<root>: config must be a JSON object"]
    errors = _unknown_keys('', document, TOP_LEVEL_KEYS)
    experiment = document.get('experiment')
    if experiment not in EXPERIMENTS:
        errors.append(f"experiment: expected one of {', '.join(EXPERIMENTS)}, got {experiment!r}")
        return errors

    seeds = document.get('seeds')
    if not isinstance(seeds, list) or not seeds:
        errors.append("seeds: must be a nonempty list")
    elif not all(_is_int(s) and s >= 0 for s in seeds):
        errors.append(f"seeds: must be nonnegative integers, got {seeds!r}")
    elif len(set(seeds)) != len(seeds):
        errors.append("seeds: duplicate seeds")
    threads = document.get('threads')
    if not _is_int(threads) or threads < 1:
        errors.append(f"threads: must be a positive integer, got {threads!r}")
    if not isinstance(document.get('scale_ls_step'), bool):
        errors.append("scale_ls_step: must be true or false")
    if not isinstance(document.get('output_dir'), str) or not document['output_dir']:
        errors.append("output_dir: must be a nonempty path")

    target = document.get('target')
    options = document.get('options')
    if not isinstance(target, dict):
        errors.append("target: must be an object")
        return errors
    if not isinstance(options, dict):
        errors.append("options: must be an object")
        return errors
    errors.extend(_unknown_keys('target', target, TARGET_KEYS[experiment]))
    errors.extend(_unknown_keys('options', options, OPTION_DEFAULTS[experiment]))

    if experiment in ('gauss2d', 'stationarity'):
        if 'covariance' in target:
            if 'rho' in target:
                errors.append("target.rho, target.covariance: give one or the other")
            errors.extend(_check_covariance(target['covariance']))
        else:
            rho = target.get('rho')
            if not _is_number(rho) or not -1.0 < rho < 1.0:
                errors.append(f"target.rho: must be in (-1, 1), got {rho!r}")
    if experiment == 'mixing' and target.get('name') not in ('gaussian', 'mixture'):
        errors.append(f"target.name: expected 'gaussian' or 'mixture', got {target.get('name')!r}")

    n = _component_count(experiment, target, errors)
    samplers = document.get('samplers', [])
    if experiment in ('variance_table', 'gamma_table', 'bounds_sweep') and samplers:
        errors.append(f"samplers: not used by the {experiment} experiment")
    else:
        errors.extend(_validate_samplers(experiment, samplers, n, bool(document.get('scale_ls_step'))))
    errors.extend(_validate_options(experiment, options, samplers if isinstance(samplers, list) else [], n))
    return errors


def apply_overrides(document: Dict[str, Any], output_dir: Optional[str] = None,
                    seed: Optional[int] = None, threads: Optional[int] = None) -> Dict[str, Any]:
    """Command-line overrides; --seed replaces the whole seed list."""
    document = copy.deepcopy(document)
    if output_dir is not None:
        document['output_dir'] = str(output_dir)
    if seed is not None:
        document['seeds'] = [int(seed)]
    if threads is not None:
        document['threads'] = int(threads)
    return document


def config_from_document(document: Dict[str, Any], source: Optional[Path] = None) -> ExperimentConfig:
    """Fill defaults, validate, and build the ExperimentConfig. Raises ConfigValidationError."""
    filled = fill_defaults(document)
    errors = validate_config(filled)
    if errors:
        raise ConfigValidationError(errors)
    return ExperimentConfig(
        experiment=filled['experiment'],
        output_dir=Path(filled['output_dir']),
        seeds=list(filled['seeds']),
        threads=int(filled['threads']),
        scale_ls_step=bool(filled['scale_ls_step']),
        target=filled['target'],
        samplers=filled['samplers'],
        options=filled['options'],
        source=source,
    )


def read_document(path) -> Dict[str, Any]:
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError:
        raise ConfigValidationError([f"{path}: file not found"])
    except json.JSONDecodeError as e:
        raise ConfigValidationError([f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}"])


def load_config(path, output_dir: Optional[str] = None, seed: Optional[int] = None,
                threads: Optional[int] = None) -> ExperimentConfig:
    """
    Read, override and validate a config file.

    Args:
        path: JSON config document
        output_dir, seed, threads: Command-line overrides (None keeps the file's value)

    Returns:
        ExperimentConfig ready for run_experiment
    """
    document = apply_overrides(read_document(path), output_dir, seed, threads)
    return config_from_document(document, source=Path(path))
