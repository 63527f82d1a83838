"""
End-to-end tests of the proptail command line.
Run with: pytest test_app.py
"""
import pandas as pd
import pytest
from proptail.main import main
from proptail.utils.errors import ExitStatus


def write_config(path, **values):
    path.write_text(''.join(f"{key.replace('__', '.')} = {v}\n" for key, v in values.items()))
    return path


def run(tmp_path, command, config, *extra):
    return main([command, '--config', str(config), '--out', str(tmp_path / 'out'), *extra])


@pytest.fixture
def four_point_csv(tmp_path):
    path = tmp_path / 'four.csv'
    path.write_text('x1,y\n0.1,1\n0.4,2\n0.6,4\n0.9,8\n')
    return path


# generate
def test_generate_writes_header_and_rows(tmp_path):
    config = write_config(tmp_path / 'model.conf', gamma=0.5, skedasis__family='affine',
                          skedasis__params='0, 2', y0=1.5, n=1000, seed=7)
    assert run(tmp_path, 'generate', config) == ExitStatus.OK
    lines = (tmp_path / 'out' / 'sample.csv').read_text().splitlines()
    assert len(lines) == 1001
    assert lines[0] == 'x1,y'
    meta = (tmp_path / 'out' / 'sample.meta').read_text()
    assert 'seed = 7' in meta
    assert 'skedasis.family = affine' in meta


def test_generate_is_byte_identical_on_rerun(tmp_path):
    config = write_config(tmp_path / 'model.conf', gamma=0.5, n=500, seed=3)
    assert run(tmp_path, 'generate', config) == ExitStatus.OK
    first = (tmp_path / 'out' / 'sample.csv').read_bytes()
    assert run(tmp_path, 'generate', config) == ExitStatus.OK
    assert (tmp_path / 'out' / 'sample.csv').read_bytes() == first


def test_generate_seed_flag_overrides_config(tmp_path):
    config = write_config(tmp_path / 'model.conf', gamma=0.5, n=200, seed=3)
    run(tmp_path, 'generate', config)
    first = (tmp_path / 'out' / 'sample.csv').read_bytes()
    run(tmp_path, 'generate', config, '--seed', '4')
    assert (tmp_path / 'out' / 'sample.csv').read_bytes() != first


def test_generate_rejects_nonpositive_gamma(tmp_path, capsys):
    config = write_config(tmp_path / 'model.conf', gamma=0, n=100)
    assert run(tmp_path, 'generate', config) == ExitStatus.CONFIG
    assert 'gamma' in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert run(tmp_path, 'generate', tmp_path / 'nowhere.conf') == ExitStatus.CONFIG


# estimate
def test_estimate_four_points(tmp_path, four_point_csv, capsys):
    config = write_config(tmp_path / 'est.conf', input=four_point_csv.name, threshold__k=2)
    assert run(tmp_path, 'estimate', config) == ExitStatus.OK
    assert 'gamma_hat = 1.03972' in capsys.readouterr().out
    report = pd.read_csv(tmp_path / 'out' / 'estimate.csv')
    gamma_hat = report.loc[report.quantity == 'gamma_hat', 'value'].iloc[0]
    assert gamma_hat == pytest.approx(1.0397207708399179, abs=1e-12)


def test_estimate_level_above_data_is_degenerate(tmp_path, four_point_csv, capsys):
    config = write_config(tmp_path / 'est.conf', input=four_point_csv.name, threshold__level=100)
    assert run(tmp_path, 'estimate', config) == ExitStatus.DEGENERATE
    assert 'y_n = 100' in capsys.readouterr().out


def test_estimate_on_generated_data(tmp_path):
    gen = write_config(tmp_path / 'model.conf', gamma=0.5, skedasis__family='affine',
                       skedasis__params='0, 2', y0=1.5, n=100_000, seed=11)
    assert run(tmp_path, 'generate', gen) == ExitStatus.OK
    est = write_config(tmp_path / 'est.conf', input='out/sample.csv', points='0.25; 0.5; 0.75')
    assert run(tmp_path, 'estimate', est) == ExitStatus.OK
    report = pd.read_csv(tmp_path / 'out' / 'estimate.csv')
    assert report['value'].notna().all()
    assert set(report.quantity) >= {'gamma_hat', 'sigma_hat', 'c_hat'}
    assert report.quantity.str.startswith('q_hat').sum() == 3


def test_estimate_missing_input_key(tmp_path):
    config = write_config(tmp_path / 'est.conf', threshold__k=2)
    assert run(tmp_path, 'estimate', config) == ExitStatus.CONFIG



def test_estimate_header_only_sample_is_degenerate(tmp_path, capsys):
    (tmp_path / 'empty.csv').write_text('x1,y\n')
    config = write_config(tmp_path / 'est.conf', input='empty.csv', threshold__k=1)
    assert run(tmp_path, 'estimate', config) == ExitStatus.DEGENERATE
    assert 'no observations' in capsys.readouterr().err


# coupling and validate
def exact_coupling_config(path, **extra):
    return write_config(
        path, gamma=0.5, y0=1.5, skedasis__family='affine', skedasis__params='1, 1',
        covariate__bins=4, coupling__n=2000, coupling__p=0.05, seed=5, **extra,
    )


def test_coupling_demo_on_exact_pareto(tmp_path, capsys):
    config = exact_coupling_config(tmp_path / 'coupling.conf', coupling__dump_draws='true')
    assert run(tmp_path, 'coupling', config) == ExitStatus.OK
    assert 'bounds hold' in capsys.readouterr().out
    report = pd.read_csv(tmp_path / 'out' / 'coupling_report.csv').set_index('metric')['value']
    assert float(report['mismatch_rate']) == 0.0
    assert float(report['max_ratio_deviation']) <= 1e-10
    assert float(report['violation']) == 0
    draws = pd.read_csv(tmp_path / 'out' / 'coupling_draws.csv')
    assert list(draws.columns) == ['E', 'xtilde', 'ytilde', 'xstar', 'ystar', 'z']
    assert len(draws) == 2000


def test_coupling_needs_discrete_covariates(tmp_path):
    config = write_config(tmp_path / 'coupling.conf', gamma=0.5, coupling__n=100, coupling__p=0.1)
    assert run(tmp_path, 'coupling', config) == ExitStatus.PRECONDITION


def test_validate_rejects_too_few_replications(tmp_path, capsys):
    config = write_config(tmp_path / 'mc.conf', gamma=0.5, n=100_000, experiments='gamma', replications=2)
    assert run(tmp_path, 'validate', config) == ExitStatus.PRECONDITION
    assert 'replications' in capsys.readouterr().err
    assert not (tmp_path / 'out' / 'mc_gamma.csv').exists()


def test_validate_nothing_requested(tmp_path):
    config = write_config(tmp_path / 'mc.conf', gamma=0.5, n=1000)
    assert run(tmp_path, 'validate', config) == ExitStatus.CONFIG


def test_validate_exact_thinning_and_coupling(tmp_path):
    config = exact_coupling_config(tmp_path / 'v.conf', thinning__p=1, thinning__reps=100)
    assert run(tmp_path, 'validate', config) == ExitStatus.OK
    thinning = pd.read_csv(tmp_path / 'out' / 'thinning_report.csv').set_index('metric')['value']
    assert float(thinning['statistic']) == 0.0
    assert (tmp_path / 'out' / 'coupling_report.csv').exists()



def test_validate_rejects_alpha_in_body_regime(tmp_path, capsys):
    config = write_config(tmp_path / 'mc.conf', gamma=0.5, skedasis__family='affine', skedasis__params='0, 2',
                          y0=1.5, n=100_000, threshold__p=0.01, bandwidth=0.25, mc__alpha_n=0.5,
                          experiments='quantile')
    assert run(tmp_path, 'validate', config) == ExitStatus.PRECONDITION
    assert 'mc.alpha_n' in capsys.readouterr().err


@pytest.mark.slow
def test_validate_gamma_acceptance(tmp_path):
    config = write_config(tmp_path / 'mc.conf', gamma=0.5, n=100_000, threshold__p=0.01,
                          experiments='gamma', replications=400, seed=1)
    assert run(tmp_path, 'validate', config) == ExitStatus.OK
    summary = pd.read_csv(tmp_path / 'out' / 'mc_gamma_summary.csv').set_index('metric')['value']
    assert 0.85 <= float(summary['variance']) <= 1.15
    assert len(pd.read_csv(tmp_path / 'out' / 'mc_gamma.csv')) == 400
