import csv
import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from diagnostics import wasserstein2
from errors import ConfigValidationError
from experiment_config import config_from_document, default_samplers, fill_defaults, load_config, validate_config
from experiments import derive_seed, load_blr_data, mixture_target, run_experiment, sanitize_filename
from run_experiments import main
from samplers import SamplerSpec, run_chain

CONFIG_DIR = Path(__file__).parent / 'configs'

GAMMA_TABLE = [0.268, 0.185, 0.149, 0.128, 0.114]


def read_rows(path):
    with open(path, newline='', encoding='utf-8') as f:
        return list(csv.DictReader(f))


def snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(Path(directory).iterdir())}


def errors_for(document):
    return validate_config(fill_defaults(document))


class TestValidation:
    @pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob('*.json')), ids=lambda p: p.stem)
    def test_shipped_configs_are_valid(self, path):
        cfg = load_config(path)
        assert path.stem.startswith(cfg.experiment)

    def test_defaults_only_mixture_is_valid(self):
        assert errors_for({'experiment': 'mixture'}) == []

    def test_batch_larger_than_n_names_both_fields(self):
        errors = errors_for({'experiment': 'mixture', 'target': {'n_components': 5},
                             'samplers': [{'kind': 'sgld', 'eta': 0.05, 'batch_size': 10}]})
        assert any('samplers[0].batch_size' in e and 'target.n' in e for e in errors)

    def test_sigma_with_unsmoothed_kind(self):
        errors = errors_for({'experiment': 'mixture', 'samplers': [{'kind': 'sgld', 'eta': 0.05, 'sigma': 1.0}]})
        assert any(e.startswith('samplers[0].sigma, samplers[0].kind') for e in errors)

    def test_unknown_keys(self):
        errors = errors_for({'experiment': 'gauss2d', 'colour': 'blue', 'target': {'rho': 0.5, 'mu': 1}})
        assert 'colour: unknown key' in errors
        assert 'target.mu: unknown key' in errors

    def test_unknown_experiment(self):
        errors = validate_config({'experiment': 'hmc'})
        assert len(errors) == 1 and errors[0].startswith('experiment:')

    def test_missing_dataset_file(self, tmp_path):
        errors = errors_for({'experiment': 'blr', 'target': {'dataset': str(tmp_path / 'missing.libsvm')}})
        assert any(e.startswith('target.dataset: file not found') for e in errors)

    def test_dataset_and_synthetic_are_exclusive(self, tmp_path):
        path = tmp_path / 'a.libsvm'
        path.write_text('+1 1:1\n')
        errors = errors_for({'experiment': 'blr', 'target': {'dataset': str(path), 'synthetic': {'n': 10}}})
        assert any('give one or the other' in e for e in errors)

    def test_blr_batch_checked_against_training_rows(self):
        document = {'experiment': 'blr', 'target': {'synthetic': {'n': 10, 'd': 3}, 'test_fraction': 0.2},
                    'samplers': [{'kind': 'sgld', 'eta': 0.001, 'batch_size': 9}]}
        assert any('target.n' in e for e in errors_for(document))
        document['samplers'][0]['batch_size'] = 8
        assert errors_for(document) == []

    def test_empty_seed_list(self):
        assert 'seeds: must be a nonempty list' in errors_for({'experiment': 'gamma_table', 'seeds': []})

    def test_coupling_only_for_two_dimensional_targets(self):
        errors = errors_for({'experiment': 'blr', 'target': {'synthetic': {'n': 50, 'd': 3}},
                             'samplers': [{'kind': 'ls_sgld', 'eta': 0.001, 'coupling': 0.1}]})
        assert any(e.startswith('samplers[0].coupling') for e in errors)
        for experiment in ('mixture', 'mixing'):
            document = {'experiment': experiment,
                        'samplers': [{'kind': 'ls_ld_reference', 'eta': 0.1, 'coupling': 1.0, 'iterations': 100000}]}
            assert not any('coupling' in e for e in errors_for(document))

    def test_scale_step_must_be_boolean(self):
        errors = errors_for({'experiment': 'gauss2d',
                             'samplers': [{'kind': 'ls_sgld', 'eta': 0.19, 'coupling': 0.1, 'scale_step': 'yes'}]})
        assert any(e.startswith('samplers[0].scale_step') for e in errors)

    def test_covariance_replaces_default_rho(self):
        cfg = config_from_document({'experiment': 'gauss2d', 'target': {'covariance': [[0.16, 0.0], [0.0, 1.0]]}})
        assert cfg.target == {'covariance': [[0.16, 0.0], [0.0, 1.0]]}

    @pytest.mark.parametrize("covariance,problem", [
        ([[1.0, 2.0], [2.0, 1.0]], 'must be positive definite'),
        ([[1.0, 0.5], [0.4, 1.0]], 'must be symmetric'),
        ([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], 'must be a 2x2 list'),
    ])
    def test_covariance_checked(self, covariance, problem):
        errors = errors_for({'experiment': 'stationarity', 'target': {'covariance': covariance}})
        assert any(e.startswith('target.covariance: ' + problem) for e in errors)

    def test_rho_and_covariance_are_exclusive(self):
        errors = errors_for({'experiment': 'gauss2d', 'target': {'rho': 0.5, 'covariance': [[1.0, 0.0], [0.0, 1.0]]}})
        assert 'target.rho, target.covariance: give one or the other' in errors

    def test_stationarity_needs_full_gradient_kinds(self):
        errors = errors_for({'experiment': 'stationarity', 'samplers': [{'kind': 'psgld', 'eta': 1e-3}]})
        assert any(e.startswith('samplers[0].kind: stationarity') for e in errors)

    @pytest.mark.parametrize("experiment", ['gauss2d', 'mixture'])
    def test_default_samplers_cover_plain_smoothed_and_preconditioned(self, experiment):
        kinds = {entry['kind'] for entry in default_samplers(experiment)}
        assert kinds == {'sgld', 'ls_sgld', 'psgld', 'ls_psgld'}

    def test_gauss2d_defaults_run_smoothed_samplers_scaled_and_unscaled(self):
        cfg = config_from_document({'experiment': 'gauss2d'})
        scaled = {(entry['kind'], cfg.sampler_spec(entry, 0).scale_step_for_smoothing)
                  for entry in cfg.samplers if entry['kind'].startswith('ls_')}
        assert scaled == {('ls_sgld', False), ('ls_sgld', True), ('ls_psgld', False), ('ls_psgld', True)}

    def test_tail_longer_than_shortest_chain(self):
        errors = errors_for({'experiment': 'mixture', 'options': {'iteration_counts': [500], 'tail_samples': 1000}})
        assert any(e.startswith('options.tail_samples') for e in errors)

    def test_config_from_document_raises_with_all_errors(self):
        with pytest.raises(ConfigValidationError) as info:
            config_from_document({'experiment': 'gauss2d', 'seeds': [], 'threads': 0})
        assert len(info.value.errors) == 2

    def test_invalid_json(self, tmp_path):
        path = tmp_path / 'broken.json'
        path.write_text('{"experiment": ')
        with pytest.raises(ConfigValidationError, match='invalid JSON'):
            load_config(path)

    def test_overrides(self, tmp_path):
        cfg = load_config(CONFIG_DIR / 'gauss2d.json', output_dir=str(tmp_path), seed=7, threads=1)
        assert cfg.seeds == [7]
        assert cfg.threads == 1
        assert cfg.output_dir == tmp_path


def gauss2d_document(output_dir, threads):
    return {
        'experiment': 'gauss2d', 'output_dir': str(output_dir), 'seeds': [0, 1], 'threads': threads,
        'samplers': [{'label': 'sgld', 'kind': 'sgld', 'eta': 0.19, 'iterations': 300},
                     {'label': 'ls sgld', 'kind': 'ls_sgld', 'eta': 0.19, 'coupling': 0.1, 'iterations': 300}],
        'options': {'eta_grid': [0.19, 0.1], 'record_samples': 50},
    }


class TestGauss2d:
    def test_artifacts_are_reproducible_across_thread_counts(self, tmp_path):
        run_experiment(config_from_document(gauss2d_document(tmp_path / 'a', threads=1)))
        run_experiment(config_from_document(gauss2d_document(tmp_path / 'b', threads=3)))
        assert snapshot(tmp_path / 'a') == snapshot(tmp_path / 'b')

    def test_rows_and_smoothed_step(self, tmp_path):
        result = run_experiment(config_from_document(gauss2d_document(tmp_path, threads=1)))
        rows = read_rows(tmp_path / 'act_vs_error.csv')
        assert len(rows) == 2 * 2 * 2
        ls_rows = [r for r in rows if r['sampler'] == 'ls sgld' and float(r['eta_base']) == 0.19]
        assert ls_rows and all(float(r['eta_used']) == pytest.approx(0.1988, abs=5e-4) for r in ls_rows)
        assert (tmp_path / 'samples_ls_sgld_seed1.csv').is_file()
        assert len(read_rows(tmp_path / 'samples_sgld_seed0.csv')) == 50

        summary = json.loads(result.summary_path.read_text())
        assert summary['experiment'] == 'gauss2d'
        assert {a['path'] for a in summary['artifacts']} == {p.name for p in result.artifacts}

    def test_scale_step_per_sampler(self, tmp_path):
        document = gauss2d_document(tmp_path, threads=1)
        document['seeds'] = [0]
        document['samplers'] = [
            {'label': 'ls_plain', 'kind': 'ls_sgld', 'eta': 0.19, 'coupling': 0.1, 'iterations': 300,
             'scale_step': False},
            {'label': 'ls_scaled', 'kind': 'ls_sgld', 'eta': 0.19, 'coupling': 0.1, 'iterations': 300,
             'scale_step': True},
        ]
        run_experiment(config_from_document(document))
        used = {r['sampler']: float(r['eta_used']) for r in read_rows(tmp_path / 'act_vs_error.csv')
                if float(r['eta_base']) == 0.19}
        assert used['ls_plain'] == pytest.approx(0.19)
        assert used['ls_scaled'] == pytest.approx(0.19 * 1.2 ** 0.25)

    def test_explicit_covariance(self, tmp_path):
        document = gauss2d_document(tmp_path, threads=1)
        document['target'] = {'covariance': [[0.6, 0.5], [0.5, 1.0]]}
        run_experiment(config_from_document(document))
        rows = read_rows(tmp_path / 'act_vs_error.csv')
        assert len(rows) == 2 * 2 * 2
        assert all(np.isfinite(float(r['cov_error'])) for r in rows)


def test_stationarity(tmp_path):
    cfg = config_from_document({
        'experiment': 'stationarity', 'output_dir': str(tmp_path), 'seeds': [0], 'threads': 1,
        'samplers': [{'label': 'gld', 'kind': 'sgld', 'eta': 0.01, 'iterations': 300, 'burn_in': 100},
                     {'label': 'ls_gld', 'kind': 'ls_sgld', 'eta': 0.01, 'coupling': 0.1, 'iterations': 300,
                      'burn_in': 100}],
        'options': {'chains': 5},
    })
    run_experiment(cfg)
    rows = read_rows(tmp_path / 'stationarity.csv')
    assert [r['sampler'] for r in rows] == ['gld', 'ls_gld']
    assert all(r['chains'] == '5' and r['samples'] == str(200 * 5) for r in rows)
    assert float(rows[1]['sigma']) == pytest.approx(0.05)


class TestMixture:
    DOCUMENT = {
        'experiment': 'mixture', 'seeds': [3], 'threads': 2,
        'target': {'n_components': 20, 'centers_seed': 1},
        'samplers': [{'label': 'sgld', 'kind': 'sgld', 'eta': 0.05, 'batch_size': 5},
                     {'label': 'ls_sgld', 'kind': 'ls_sgld', 'eta': 0.05, 'batch_size': 5, 'sigma': 1.0}],
        'options': {'iteration_counts': [300, 600], 'tail_samples': 200, 'w2_max_points': 100,
                    'kde_grid_points': 20, 'mh_iterations': 2000, 'mh_burn_in': 100},
    }

    def test_tables(self, tmp_path):
        run_experiment(config_from_document({**self.DOCUMENT, 'output_dir': str(tmp_path)}))
        rows = read_rows(tmp_path / 'w2_table.csv')
        assert [r['sampler'] for r in rows] == ['sgld', 'ls_sgld']
        assert all(float(r['K=300']) > 0 and float(r['K=600']) > 0 for r in rows)
        assert all(r['w2_points'] == '100' for r in rows)
        kde = read_rows(tmp_path / 'kde_mh_seed3.csv')
        assert len(kde) == 20
        assert len(read_rows(tmp_path / 'chain_ls_sgld_seed3.csv')) == 200

    def test_reproducible(self, tmp_path):
        run_experiment(config_from_document({**self.DOCUMENT, 'output_dir': str(tmp_path / 'a')}))
        run_experiment(config_from_document({**self.DOCUMENT, 'output_dir': str(tmp_path / 'b')}))
        assert snapshot(tmp_path / 'a') == snapshot(tmp_path / 'b')


def test_mixing(tmp_path):
    cfg = config_from_document({
        'experiment': 'mixing', 'output_dir': str(tmp_path), 'seeds': [0, 1], 'threads': 1,
        'samplers': [{'label': 'ld', 'kind': 'ld_reference', 'eta': 0.1, 'iterations': 100},
                     {'label': 'ls_ld', 'kind': 'ls_ld_reference', 'eta': 0.1, 'iterations': 100, 'sigma': 1.0}],
        'options': {'checkpoints': [50, 100]},
    })
    run_experiment(cfg)
    rows = read_rows(tmp_path / 'mixing.csv')
    assert [r['samples'] for r in rows] == ['50', '100']
    assert set(rows[0]) == {'samples', 'ld_mse', 'ls_ld_mse'}
    assert len(read_rows(tmp_path / 'mixing_runs.csv')) == 2 * 2 * 2


class TestBlr:
    TARGET = {'synthetic': {'n': 200, 'd': 10, 'seed': 4}, 'test_fraction': 0.25}

    def test_split_is_fixed(self):
        target = fill_defaults({'experiment': 'blr', 'target': self.TARGET})['target']
        train, test = load_blr_data(target)
        again, _ = load_blr_data(target)
        assert (train.n, test.n) == (150, 50)
        assert (train.features == again.features).all()
        full, same = load_blr_data(target, split=False)
        assert full is same and full.n == 200

    def test_trace(self, tmp_path):
        cfg = config_from_document({
            'experiment': 'blr', 'output_dir': str(tmp_path), 'seeds': [0], 'threads': 1, 'target': self.TARGET,
            'samplers': [{'label': 'sgld', 'kind': 'sgld', 'eta': 0.001, 'batch_size': 5, 'iterations': 200},
                         {'label': 'ls_psgld', 'kind': 'ls_psgld', 'eta': 0.002, 'batch_size': 5,
                          'iterations': 200, 'sigma': 1.0}],
            'options': {'eval_every': 50},
        })
        run_experiment(cfg)
        rows = read_rows(tmp_path / 'blr_trace.csv')
        assert [int(r['step']) for r in rows if r['sampler'] == 'sgld'] == [50, 100, 150, 200]
        assert all(0.0 <= float(r['avg_accuracy']) <= 1.0 for r in rows)


def test_variance_table(tmp_path):
    cfg = config_from_document({
        'experiment': 'variance_table', 'output_dir': str(tmp_path), 'seeds': [0], 'threads': 2,
        'target': {'synthetic': {'n': 100, 'd': 10, 'seed': 0}},
        'options': {'sigmas': [0.0, 1.0], 'batch_sizes': [5, 100], 'repeats': 5, 'path_length': 5,
                    'path_iterations': 50, 'path_batch_size': 10},
    })
    run_experiment(cfg)
    rows = read_rows(tmp_path / 'variance_table.csv')
    assert [float(r['sigma']) for r in rows] == [0.0, 1.0]
    assert all(float(r['B=100']) == 0.0 for r in rows)
    assert all(float(r['B=5']) > 0.0 for r in rows)
    assert len(read_rows(tmp_path / 'variance_path_seed0.csv')) == 5


def test_gamma_table_reproduces_reference_values(tmp_path):
    run_experiment(config_from_document({'experiment': 'gamma_table', 'output_dir': str(tmp_path)}))
    rows = read_rows(tmp_path / 'gamma_table.csv')
    assert len(rows) == 5
    for row, expected in zip(rows, GAMMA_TABLE):
        for d in (1000, 10000, 100000):
            assert float(row[f"d={d}"]) == pytest.approx(expected, abs=1e-3)
    assert len(read_rows(tmp_path / 'gamma_long.csv')) == 15


def test_bounds_sweep(tmp_path):
    run_experiment(config_from_document({'experiment': 'bounds_sweep', 'output_dir': str(tmp_path),
                                         'options': {'sigmas': [0.0, 0.5, 1.0, 1.5, 2.0],
                                                     'constants': {'K': 2000}}}))
    convex = read_rows(tmp_path / 'bounds_convex.csv')
    assert [float(r['sigma']) for r in convex] == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert len(read_rows(tmp_path / 'bounds_nonconvex.csv')) == 5
    assert {r['gamma2_definition'] for r in convex} == {'mean_inverse_square'}
    plain = read_rows(tmp_path / 'bounds_sgld.csv')[0]
    assert plain['gamma2_definition'] == 'identity'
    # sigma = 0 with beta = 1 gives the same total as plain SGLD
    assert float(plain['total']) == pytest.approx(float(convex[0]['total']), rel=1e-12)


class TestHelpers:
    def test_derive_seed_is_stable_and_salted(self):
        assert derive_seed(3, 1) == derive_seed(3, 1)
        assert derive_seed(3, 1) != derive_seed(3, 2)
        assert 0 <= derive_seed(0, 5) < 2 ** 32

    def test_sanitize_filename(self):
        assert sanitize_filename('LS-SGLD (sigma=1)') == 'LS_SGLD_sigma1'
        assert sanitize_filename('ls sgld') == 'ls_sgld'


class TestCli:
    def test_gamma_table(self, tmp_path, capsys):
        out = tmp_path / 'gamma.csv'
        assert main(['gamma-table', '--sigmas', '1', '2', '--dims', '1000', '--output', str(out)]) == 0
        assert 'GAMMA_2 TABLE' in capsys.readouterr().out
        assert len(read_rows(out)) == 2

    def test_bounds(self, tmp_path):
        out = tmp_path / 'bounds.csv'
        assert main(['bounds', '--theorem', 'convex', '--constant', 'K=500', '--output', str(out)]) == 0
        assert {r['theorem'] for r in read_rows(out)} == {'convex'}

    def test_bad_constant(self, capsys):
        assert main(['bounds', '--constant', 'K=lots', '--constant', 'Z=1']) == 1
        out = capsys.readouterr().out
        assert 'ERROR: --constant K: not a number' in out
        assert 'ERROR: --constant Z: unknown constant' in out

    def test_validate(self, tmp_path, capsys):
        bad = tmp_path / 'bad.json'
        bad.write_text(json.dumps({'experiment': 'mixture', 'seeds': []}))
        assert main(['validate', str(bad)]) == 1
        assert 'ERROR: seeds: must be a nonempty list' in capsys.readouterr().out
        assert main(['validate', str(CONFIG_DIR / 'mixture.json')]) == 0

    def test_run(self, tmp_path):
        assert main(['run', str(CONFIG_DIR / 'gamma_table.json'), '-o', str(tmp_path)]) == 0
        assert (tmp_path / 'summary.json').is_file()
        assert (tmp_path / 'gamma_table.csv').is_file()


@pytest.mark.slow
class TestReferenceAgreement:
    def test_mixture_main_mode_against_mh(self, tmp_path):
        cfg = config_from_document({'experiment': 'mixture', 'output_dir': str(tmp_path), 'seeds': [0]})
        model = mixture_target(cfg.target)
        reference = run_chain(SamplerSpec(kind='mh_reference', eta=1.0, iterations=100000, burn_in=1000, seed=11),
                              model)
        axis = model.centers.mean(axis=0)

        def main_mode(samples):
            return samples[samples @ axis > 0]

        for label in ('sgld', 'ls_sgld'):
            entry = next(e for e in cfg.samplers if e['label'] == label)
            chain = run_chain(replace(cfg.sampler_spec(entry, 0), iterations=100000, burn_in=10000), model)
            assert wasserstein2(main_mode(chain.samples), main_mode(reference.samples)) <= 0.6

    def test_mixing_default_ld_and_ls_ld_within_factor_two(self, tmp_path):
        run_experiment(config_from_document({'experiment': 'mixing', 'output_dir': str(tmp_path)}))
        rows = read_rows(tmp_path / 'mixing.csv')
        assert len(rows) == 7
        for row in rows:
            assert 0.5 <= float(row['ls_ld_mse']) / float(row['ld_mse']) <= 2.0

    def test_blr_accuracy_band(self, tmp_path):
        samplers = [e for e in default_samplers('blr') if e['kind'] in ('sgld', 'ls_sgld')]
        run_experiment(config_from_document({'experiment': 'blr', 'output_dir': str(tmp_path), 'seeds': [0],
                                             'target': {'synthetic': {'seed': 0}}, 'samplers': samplers}))
        rows = read_rows(tmp_path / 'blr_trace.csv')
        for label in ('sgld', 'ls_sgld'):
            final = [r for r in rows if r['sampler'] == label][-1]
            assert 0.80 <= float(final['avg_accuracy']) <= 0.90
