"""
Experiment Runners

One runner per experiment kind. Each runner takes a validated ExperimentConfig,
writes its CSV artifacts into cfg.output_dir and returns the artifact paths plus a
few headline numbers per cell. run_experiment adds summary.json on top.

Independent (sampler, seed) cells run on a thread pool; results are collected in
cell order so the files never depend on scheduling.
"""

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from diagnostics import (covering_grid, kde_grid, nll_accuracy, running_mean,
                         scott_bandwidth, summarize_chain, wasserstein2_report, gradient_variance_profile)
from experiment_config import ExperimentConfig
from reports import artifact_manifest, write_csv_report, write_json, write_matrix_csv
from samplers import SampleChain, SamplerSpec, run_chain, run_ensemble
from smoothing_operator import build, gamma2, inverse_trace_mean
from targets import (BlrTarget, GaussianTarget, MixturePairTarget, gaussian_2d_target,
                     isotropic_mixing_target, load_libsvm, make_synthetic_logistic, sample_mixture_centers)
from theory_bounds import BoundInputs, bounds_sweep, sgld_convex_bound

try:
    from config import BOUNDS_DEFAULTS
except ImportError:
    BOUNDS_DEFAULTS = {'K': 1000, 'eta': 0.01, 'beta': 1.0, 'd': 1000, 'omega': 1.0, 'B': 10,
                       'lambda_sobolev': 1.0, 'f0_beta_logLambda': 1.0, 'b_dissip': 1.0, 'M': 1.0}

logger = logging.getLogger(__name__)

# Salts mixed into the run seed for the auxiliary random streams
MH_SALT = 1
SUBSAMPLE_SALT = 2
PATH_SALT = 4
BATCH_SALT = 5
SPLIT_SEED = 0

Artifacts = Tuple[List[Path], List[Dict[str, object]]]


@dataclass
class RunResult:
    experiment: str
    output_dir: Path
    artifacts: List[Path]
    headlines: List[Dict[str, object]]
    summary_path: Path


def derive_seed(seed: int, *salt: int) -> int:
    """Independent 32-bit seed for an auxiliary stream of run seed `seed`."""
    return int(np.random.SeedSequence([int(seed), *salt]).generate_state(1)[0])


def sanitize_filename(name: str) -> str:
    """Convert a sampler label to a safe filename part."""
    safe_name = re.sub(r'[^\w\s.-]', '', name)
    safe_name = re.sub(r'[-\s]+', '_', safe_name)
    return safe_name.strip('_')


def _map_cells(fn: Callable, cells: Sequence, threads: int, progress: bool = False, desc: str = 'cells') -> List:
    """Ordered map over independent cells, on a thread pool when threads > 1."""
    bar = tqdm(total=len(cells), desc=desc, disable=not progress)
    try:
        if threads <= 1 or len(cells) <= 1:
            results = []
            for cell in cells:
                results.append(fn(cell))
                bar.update(1)
            return results
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(fn, cell) for cell in cells]
            results = []
            for future in futures:
                results.append(future.result())
                bar.update(1)
            return results
    finally:
        bar.close()


def _chain_row(label: str, chain: SampleChain) -> Dict[str, object]:
    return {'sampler': label, 'kind': chain.spec.kind, 'sigma': chain.spec.sigma,
            'seed': chain.seed, 'eta_used': float(chain.eta_schedule[0])}


def _mh_reference_spec(options: Dict, seed: int) -> SamplerSpec:
    return SamplerSpec(kind='mh_reference', eta=float(options['mh_scale']),
                       iterations=int(options['mh_iterations']), burn_in=int(options['mh_burn_in']),
                       seed=derive_seed(seed, MH_SALT))


def gaussian_pair_target(target: Dict) -> GaussianTarget:
    """The zero-mean 2D Gaussian named by a gauss2d or stationarity target section."""
    if target.get('covariance') is not None:
        return gaussian_2d_target(covariance=target['covariance'])
    return gaussian_2d_target(float(target['rho']))


def run_gauss2d(cfg: ExperimentConfig, progress: bool = False) -> Artifacts:
    """Autocorrelation time against covariance error over the step-size grid."""
    model = gaussian_pair_target(cfg.target)
    eta_grid = [float(e) for e in cfg.options['eta_grid']]
    record = int(cfg.options['record_samples'])
    cells = [(entry, eta, seed) for entry in cfg.samplers for eta in eta_grid for seed in cfg.seeds]

    def run_cell(cell):
        entry, eta, seed = cell
        chain = run_chain(replace(cfg.sampler_spec(entry, seed), eta=eta), model)
        return chain, summarize_chain(chain, true_mean=model.mean, true_cov=model.covariance)

    results = _map_cells(run_cell, cells, cfg.threads, progress, 'gauss2d')

    rows = []
    artifacts = []
    for (entry, eta, seed), (chain, report) in zip(cells, results):
        row = _chain_row(entry['label'], chain)
        row.update({'eta_base': eta, 'n_samples': report.n_samples, 'act': report.act,
                    'cov_error': report.cov_error, 'cov_abs_error': report.cov_abs_error,
                    'mean_mse': report.mean_mse})
        rows.append(row)
        if eta == eta_grid[0]:
            tail = chain.window(max(0, len(chain) - record), len(chain))
            artifacts.append(tail.to_csv(cfg.output_dir / f"samples_{sanitize_filename(entry['label'])}_seed{seed}.csv"))

    fieldnames = ['sampler', 'kind', 'sigma', 'eta_base', 'eta_used', 'seed', 'n_samples',
                  'act', 'cov_error', 'cov_abs_error', 'mean_mse']
    artifacts.append(write_csv_report(cfg.output_dir / 'act_vs_error.csv', fieldnames, rows))
    headlines = [{k: row[k] for k in ('sampler', 'eta_used', 'seed', 'act', 'cov_error')} for row in rows]
    return artifacts, headlines


def run_stationarity(cfg: ExperimentConfig, progress: bool = False) -> Artifacts:
    """
    Long small-step full-gradient runs; pooled moments against the exact ones.

    Every (sampler, seed) cell advances options.chains independent chains together
    and pools their kept iterates.
    """
    model = gaussian_pair_target(cfg.target)
    n_chains = int(cfg.options['chains'])
    cells = [(entry, seed) for entry in cfg.samplers for seed in cfg.seeds]

    def run_cell(cell):
        entry, seed = cell
        return run_ensemble(cfg.sampler_spec(entry, seed), model, n_chains)

    results = _map_cells(run_cell, cells, cfg.threads, progress, 'stationarity')
    rows = []
    for (entry, seed), moments in zip(cells, results):
        spec = cfg.sampler_spec(entry, seed)
        mean, cov = moments.mean, moments.covariance
        rows.append({'sampler': entry['label'], 'kind': spec.kind, 'sigma': spec.sigma, 'seed': seed,
                     'eta_used': moments.eta, 'chains': moments.chains, 'samples': moments.count,
                     'mean_0': mean[0], 'mean_1': mean[1],
                     'cov_00': cov[0, 0], 'cov_01': cov[0, 1], 'cov_11': cov[1, 1],
                     'max_mean_dev': float(np.max(np.abs(mean - model.mean))),
                     'max_cov_dev': float(np.max(np.abs(cov - model.covariance)))})

    fieldnames = ['sampler', 'kind', 'sigma', 'eta_used', 'seed', 'chains', 'samples', 'mean_0', 'mean_1',
                  'cov_00', 'cov_01', 'cov_11', 'max_mean_dev', 'max_cov_dev']
    path = write_csv_report(cfg.output_dir / 'stationarity.csv', fieldnames, rows)
    headlines = [{k: row[k] for k in ('sampler', 'seed', 'max_mean_dev', 'max_cov_dev')} for row in rows]
    return [path], headlines


def mixture_target(target: Dict) -> MixturePairTarget:
    rng = np.random.default_rng(int(target['centers_seed']))
    return MixturePairTarget(sample_mixture_centers(rng, int(target['n_components'])))


def _write_kde(path: Path, samples: np.ndarray, bandwidth: float, grid) -> Path:
    kde = kde_grid(samples, bandwidth, grid)
    return write_matrix_csv(path, kde.ys, kde.xs, kde.density)


def run_mixture(cfg: ExperimentConfig, progress: bool = False) -> Artifacts:
    """
    Sampler chains on the Gaussian-pair mixture against an MH reference.

    One chain per (sampler, seed) runs to the longest iteration count; the W2 table
    compares the last tail_samples iterates before each count with the reference.
    """
    model = mixture_target(cfg.target)
    options = cfg.options
    counts = sorted(int(c) for c in options['iteration_counts'])
    tail = int(options['tail_samples'])
    max_points = int(options['w2_max_points'])

    cells = [('mh', None, seed) for seed in cfg.seeds]
    cells += [('sampler', entry, seed) for entry in cfg.samplers for seed in cfg.seeds]

    def run_cell(cell):
        role, entry, seed = cell
        if role == 'mh':
            return run_chain(_mh_reference_spec(options, seed), model)
        spec = replace(cfg.sampler_spec(entry, seed), iterations=counts[-1], burn_in=0, thin=1)
        return run_chain(spec, model)

    chains = _map_cells(run_cell, cells, cfg.threads, progress, 'mixture')
    references = {seed: chain for (role, _, seed), chain in zip(cells, chains) if role == 'mh'}

    artifacts = []
    headlines = []
    grids = {}
    for seed, reference in references.items():
        bandwidth = scott_bandwidth(reference.samples)
        grid = covering_grid(reference.samples, bandwidth, int(options['kde_grid_points']))
        grids[seed] = (bandwidth, grid)
        artifacts.append(reference.to_csv(cfg.output_dir / f"reference_seed{seed}.csv"))
        artifacts.append(_write_kde(cfg.output_dir / f"kde_mh_seed{seed}.csv", reference.samples, bandwidth, grid))
        headlines.append({'sampler': 'mh_reference', 'seed': seed, 'acceptance_rate': reference.acceptance_rate})

    rows = []
    for (role, entry, seed), chain in zip(cells, chains):
        if role == 'mh':
            continue
        row = _chain_row(entry['label'], chain)
        for K in counts:
            w2, points = wasserstein2_report(chain.window(K - tail, K), references[seed],
                                             max_points=max_points, seed=derive_seed(seed, SUBSAMPLE_SALT))
            row[f"K={K}"] = w2
            row['w2_points'] = points
        rows.append(row)

        final = chain.window(counts[-1] - tail, counts[-1])
        name = sanitize_filename(entry['label'])
        artifacts.append(final.to_csv(cfg.output_dir / f"chain_{name}_seed{seed}.csv"))
        bandwidth, grid = grids[seed]
        artifacts.append(_write_kde(cfg.output_dir / f"kde_{name}_seed{seed}.csv", final.samples, bandwidth, grid))
        headlines.append({'sampler': entry['label'], 'seed': seed, **{f"w2_K={K}": row[f"K={K}"] for K in counts}})

    fieldnames = ['sampler', 'kind', 'sigma', 'eta_used', 'seed', 'w2_points'] + [f"K={K}" for K in counts]
    artifacts.append(write_csv_report(cfg.output_dir / 'w2_table.csv', fieldnames, rows))
    return artifacts, headlines


def run_mixing(cfg: ExperimentConfig, progress: bool = False) -> Artifacts:
    """Squared error of the running mean at fixed sample counts, averaged over seeds."""
    artifacts = []
    if cfg.target['name'] == 'gaussian':
        model = isotropic_mixing_target()
        true_mean = model.mean
    else:
        model = mixture_target(cfg.target)
        reference = run_chain(_mh_reference_spec(cfg.options, cfg.seeds[0]), model, progress=progress)
        true_mean = reference.samples.mean(axis=0)
        logger.info("mixture mean from %d MH samples: %s", len(reference), np.round(true_mean, 4))
        artifacts.append(reference.to_csv(cfg.output_dir / 'reference.csv'))

    checkpoints = sorted(int(c) for c in cfg.options['checkpoints'])
    cells = [(entry, seed) for entry in cfg.samplers for seed in cfg.seeds]

    def run_cell(cell):
        entry, seed = cell
        chain = run_chain(cfg.sampler_spec(entry, seed), model)
        means = running_mean(chain)
        return [float(np.mean((means[c - 1] - true_mean) ** 2)) for c in checkpoints]

    curves = _map_cells(run_cell, cells, cfg.threads, progress, 'mixing')

    runs = []
    for (entry, seed), curve in zip(cells, curves):
        for c, mse in zip(checkpoints, curve):
            runs.append({'sampler': entry['label'], 'seed': seed, 'samples': c, 'mean_mse': mse})
    artifacts.append(write_csv_report(cfg.output_dir / 'mixing_runs.csv',
                                      ['sampler', 'seed', 'samples', 'mean_mse'], runs))

    labels = cfg.labels()
    averaged = {label: np.mean([curve for (entry, _), curve in zip(cells, curves) if entry['label'] == label], axis=0)
                for label in labels}
    rows = [{'samples': c, **{f"{label}_mse": averaged[label][i] for label in labels}}
            for i, c in enumerate(checkpoints)]
    artifacts.append(write_csv_report(cfg.output_dir / 'mixing.csv',
                                      ['samples'] + [f"{label}_mse" for label in labels], rows))
    headlines = [{'sampler': label, 'final_mean_mse': float(averaged[label][-1])} for label in labels]
    return artifacts, headlines


def _pad_features(target: BlrTarget, d: int) -> BlrTarget:
    if target.d == d:
        return target
    features = np.zeros((target.n, d))
    features[:, :target.d] = target.features
    return BlrTarget(features, target.labels, target.prior_lambda, target.prior_theta, target.epsilon_norm)


def _subset(target: BlrTarget, rows: np.ndarray) -> BlrTarget:
    return BlrTarget(target.features[rows], target.labels[rows],
                     target.prior_lambda, target.prior_theta, target.epsilon_norm)


def load_blr_data(target: Dict, split: bool = True) -> Tuple[BlrTarget, BlrTarget]:
    """
    Training and evaluation targets for the logistic-regression experiments.

    A local libsvm file (plus an optional separate test file) or a seeded synthetic set.
    Without a test file, a fixed fraction of the rows is held out; with split=False
    both returned targets are the full data set.
    """
    prior = {'prior_lambda': target['prior_lambda'], 'prior_theta': target['prior_theta'],
             'epsilon_norm': target['epsilon_norm']}
    if target.get('dataset') is not None:
        full = load_libsvm(target['dataset'], **prior)
        full = _pad_features(full, max(full.d, int(target.get('n_features') or 0)))
    else:
        synthetic = {'n': 3000, 'd': 122, 'seed': 0, 'density': 0.11, **target['synthetic']}
        full = make_synthetic_logistic(np.random.default_rng(int(synthetic['seed'])), n=int(synthetic['n']),
                                       d=int(synthetic['d']), density=float(synthetic['density']), **prior)

    if target.get('test_dataset') is not None:
        test = load_libsvm(target['test_dataset'], **prior)
        d = max(full.d, test.d)
        return _pad_features(full, d), _pad_features(test, d)
    fraction = float(target.get('test_fraction') or 0.0)
    if not split or fraction == 0.0:
        return full, full
    order = np.random.default_rng(SPLIT_SEED).permutation(full.n)
    held_out = max(1, int(round(fraction * full.n)))
    return _subset(full, np.sort(order[held_out:])), _subset(full, np.sort(order[:held_out]))


def run_blr(cfg: ExperimentConfig, progress: bool = False) -> Artifacts:
    """Test NLL and accuracy of the current iterate and of the moving-average parameter."""
    train, test = load_blr_data(cfg.target)
    every = int(cfg.options['eval_every'])
    window = cfg.options.get('window')
    cells = [(entry, seed) for entry in cfg.samplers for seed in cfg.seeds]

    def run_cell(cell):
        entry, seed = cell
        chain = run_chain(cfg.sampler_spec(entry, seed), train)
        averages = running_mean(chain, window)
        trace = []
        for r, step in enumerate(chain.steps):
            if step % every:
                continue
            nll, acc = nll_accuracy(train, chain.samples[r], test.features, test.labels)
            avg_nll, avg_acc = nll_accuracy(train, averages[r], test.features, test.labels)
            train_nll, _ = nll_accuracy(train, averages[r])
            trace.append({'sampler': entry['label'], 'seed': seed, 'step': int(step),
                          'nll': nll, 'accuracy': acc, 'avg_nll': avg_nll,
                          'avg_accuracy': avg_acc, 'avg_train_nll': train_nll})
        return trace

    traces = _map_cells(run_cell, cells, cfg.threads, progress, 'blr')
    rows = [row for trace in traces for row in trace]
    fieldnames = ['sampler', 'seed', 'step', 'nll', 'accuracy', 'avg_nll', 'avg_accuracy', 'avg_train_nll']
    path = write_csv_report(cfg.output_dir / 'blr_trace.csv', fieldnames, rows)
    headlines = [{'sampler': t[-1]['sampler'], 'seed': t[-1]['seed'], 'avg_nll': t[-1]['avg_nll'],
                  'avg_accuracy': t[-1]['avg_accuracy']} for t in traces if t]
    return [path], headlines


def run_variance_table(cfg: ExperimentConfig, progress: bool = False) -> Artifacts:
    """
    Maximum smoothed-gradient variance for every (sigma, batch size) along an SGLD path.

    All cells of one seed share the path and the batch stream.
    """
    model, _ = load_blr_data(cfg.target, split=False)
    options = cfg.options
    sigmas = [float(s) for s in options['sigmas']]
    batch_sizes = [int(b) for b in options['batch_sizes']]
    path_length = int(options['path_length'])
    path_iterations = int(options['path_iterations'])
    thin = max(1, path_iterations // path_length)

    artifacts = []
    rows = []
    for seed in cfg.seeds:
        path_spec = SamplerSpec(kind='sgld', eta=float(options['path_eta']),
                                batch_size=min(int(options['path_batch_size']), model.n),
                                iterations=path_iterations, thin=thin, seed=derive_seed(seed, PATH_SALT))
        path_chain = run_chain(path_spec, model, progress=progress)
        path_chain = path_chain.window(0, path_length)
        artifacts.append(path_chain.to_csv(cfg.output_dir / f"variance_path_seed{seed}.csv"))

        cells = [(sigma, B) for sigma in sigmas for B in batch_sizes]

        def run_cell(cell):
            sigma, B = cell
            return gradient_variance_profile(model, path_chain.samples, sigma, B,
                                             repeats=int(options['repeats']),
                                             seed=derive_seed(seed, BATCH_SALT))

        values = dict(zip(cells, _map_cells(run_cell, cells, cfg.threads, progress, 'variance')))
        for sigma in sigmas:
            rows.append({'seed': seed, 'sigma': sigma, **{f"B={B}": values[(sigma, B)] for B in batch_sizes}})

    fieldnames = ['seed', 'sigma'] + [f"B={B}" for B in batch_sizes]
    artifacts.append(write_csv_report(cfg.output_dir / 'variance_table.csv', fieldnames, rows))
    return artifacts, [dict(row) for row in rows]


def gamma_table_rows(sigmas: Sequence[float], dims: Sequence[int]) -> List[Dict[str, object]]:
    """One row per sigma, one gamma2 column per dimension."""
    rows = []
    for sigma in sigmas:
        row = {'sigma': float(sigma)}
        for d in dims:
            row[f"d={d}"] = gamma2(build(int(d), float(sigma)))
        rows.append(row)
    return rows


def run_gamma_table(cfg: ExperimentConfig, progress: bool = False) -> Artifacts:
    sigmas = [float(s) for s in cfg.options['sigmas']]
    dims = [int(d) for d in cfg.options['dims']]
    rows = gamma_table_rows(sigmas, dims)
    table = write_csv_report(cfg.output_dir / 'gamma_table.csv', ['sigma'] + [f"d={d}" for d in dims], rows)

    long_rows = []
    for d in dims:
        for sigma in sigmas:
            op = build(d, sigma)
            long_rows.append({'d': d, 'sigma': sigma, 'gamma2': gamma2(op),
                              'inverse_trace_mean': inverse_trace_mean(op)})
    spectra = write_csv_report(cfg.output_dir / 'gamma_long.csv',
                               ['d', 'sigma', 'gamma2', 'inverse_trace_mean'], long_rows)
    return [table, spectra], rows


BOUND_FIELDS = ['theorem', 'sigma', 'c0', 'gamma1', 'gamma2', 'gamma2_definition',
                'stochastic_term', 'discretization_term', 'ergodicity_term', 'total']


def bound_constants(overrides: Dict) -> Dict[str, float]:
    return {**BOUNDS_DEFAULTS, **overrides}


def run_bounds_sweep(cfg: ExperimentConfig, progress: bool = False) -> Artifacts:
    """Bound terms over the sigma grid, plus the plain SGLD bound for comparison."""
    base = bound_constants(cfg.options['constants'])
    sigmas = [float(s) for s in cfg.options['sigmas']]
    artifacts = []
    headlines = []
    for theorem in cfg.options['theorems']:
        rows = bounds_sweep(sigmas, base, theorem, bool(cfg.options['use_inverse_trace']))
        artifacts.append(write_csv_report(cfg.output_dir / f"bounds_{theorem}.csv", BOUND_FIELDS, rows))
        headlines.extend({'theorem': theorem, 'sigma': r['sigma'], 'total': r['total']} for r in rows)

    plain = sgld_convex_bound(BoundInputs(c0=1.0, gamma1=1.0, gamma2=1.0, **base))
    row = {'theorem': 'sgld_convex', 'sigma': 0.0, 'c0': 1.0, 'gamma1': 1.0, 'gamma2': 1.0,
           'gamma2_definition': 'identity', **plain.to_dict()}
    artifacts.append(write_csv_report(cfg.output_dir / 'bounds_sgld.csv', BOUND_FIELDS, [row]))
    return artifacts, headlines


RUNNERS = {
    'gauss2d': run_gauss2d,
    'stationarity': run_stationarity,
    'mixture': run_mixture,
    'mixing': run_mixing,
    'blr': run_blr,
    'variance_table': run_variance_table,
    'gamma_table': run_gamma_table,
    'bounds_sweep': run_bounds_sweep,
}


def run_experiment(cfg: ExperimentConfig, progress: bool = False) -> RunResult:
    """
    Run one experiment and write its artifacts plus summary.json.

    Args:
        cfg: Validated configuration
        progress: Show tqdm bars over cells

    Returns:
        RunResult listing the artifacts (summary.json excluded) and headline numbers
    """
    output_dir = Path(cfg.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    logger.info("running %s into %s", cfg.experiment, output_dir)

    artifacts, headlines = RUNNERS[cfg.experiment](cfg, progress)
    summary = {
        'experiment': cfg.experiment,
        'config': cfg.to_dict(),
        'artifacts': artifact_manifest(artifacts, output_dir),
        'cells': headlines,
    }
    summary_path = write_json(output_dir / 'summary.json', summary)
    logger.info("%s finished: %d artifacts", cfg.experiment, len(artifacts))
    return RunResult(experiment=cfg.experiment, output_dir=output_dir, artifacts=list(artifacts),
                     headlines=headlines, summary_path=summary_path)
