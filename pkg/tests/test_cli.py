import json
from os.path import exists, join

import pytest

from api import RunManifest, cmd_cover, cmd_eval, cmd_init, cmd_merge, cmd_report, cmd_run, cmd_seeds
from blistr import loader
from blistr.matrix import read_ledger
from conftest import TOY_PARAMS, bits, toy_problem_ids
from run_blistr import main


def init_run(rundir, toy_files, seed=0, seeds=True):
    return cmd_init(str(rundir), toy_files['space'], toy_files['corpus'], toy_files['backend'],
                    toy_files['seeds'] if seeds else (), seed=seed)


def test_init_creates_run_directory(tmp_path, toy_files):
    rundir = tmp_path / 'run'
    manifest = init_run(rundir, toy_files)
    assert len(manifest.seeds) == 2
    assert RunManifest.read(str(rundir)).seeds == manifest.seeds
    config = loader.read_json(str(rundir / loader.CONFIG_FILE))
    assert (config['t_high'], config['c_min'], config['c_max'], config['versatility']) == (10, 500, 30000, 8)
    assert (config['max_eligible'], config['t_low'], config['t_paramils'], config['penalty']) == (20, 1, 400, 10 ** 6)
    assert exists(str(rundir / loader.SPACE_FILE))
    assert len(loader.read_strategies(str(rundir), loader.load_space(toy_files['space']))) == 2


def test_init_refuses_existing_and_missing(tmp_path, toy_files):
    rundir = tmp_path / 'run'
    init_run(rundir, toy_files)
    with pytest.raises(FileExistsError):
        init_run(rundir, toy_files)
    missing = str(tmp_path / 'nope.txt')
    with pytest.raises(FileNotFoundError, match='nope.txt'):
        cmd_init(str(tmp_path / 'other'), toy_files['space'], missing, toy_files['backend'])
    assert not exists(str(tmp_path / 'other'))


def test_run_and_resume(tmp_path, toy_files):
    rundir = str(tmp_path / 'run')
    init_run(rundir, toy_files)
    assert cmd_run(rundir, {'max_iterations': 1}, progress=False) == 0
    assert len(loader.read_events(rundir)) == 1
    assert exists(join(rundir, 'matrix.tsv'))
    cmd_run(rundir, {'max_iterations': 1}, progress=False)
    assert len(loader.read_events(rundir)) == 1
    sessions = loader.read_sessions(rundir)
    assert [(s['iterations_before'], s['iterations_after']) for s in sessions] == [(0, 1), (1, 1)]
    assert sessions[0]['overrides'] == {'max_iterations': 1}


def test_run_rejects_unknown_override(tmp_path, toy_files):
    rundir = str(tmp_path / 'run')
    init_run(rundir, toy_files)
    with pytest.raises(ValueError, match='unknown configuration key'):
        cmd_run(rundir, {'speed': 3}, progress=False)


def test_runs_are_reproducible(tmp_path, toy_files):
    logs = []
    for name in ('one', 'two'):
        rundir = str(tmp_path / name)
        init_run(rundir, toy_files, seed=42)
        cmd_run(rundir, progress=False)
        with open(loader.events_path(rundir), 'rb') as f:
            logs.append(f.read())
    assert logs[0]
    assert logs[0] == logs[1]


def test_eval_target(tmp_path, toy_files):
    rundir = str(tmp_path / 'run')
    init_run(rundir, toy_files)
    df = cmd_eval(rundir, toy_files['target_a'], 10)
    solved = df[df.status == 'solved']
    assert len(df) == 40
    assert len(solved) == 20
    assert all(pid.startswith('a_') for pid in solved.problem_id)
    with pytest.raises(ValueError):
        cmd_eval(rundir, toy_files['target_a'], 0)
    # evaluated strategies stay out of the loop
    space = loader.load_space(toy_files['space'])
    assert len(loader.read_strategies(rundir, space)) == 2
    rows = len(read_ledger(loader.ledger_path(rundir)))
    assert rows == 40
    cmd_eval(rundir, toy_files['target_a'], 10)
    assert len(read_ledger(loader.ledger_path(rundir))) == rows


def test_cover_writes_portfolio(tmp_path, toy_files):
    rundir = str(tmp_path / 'run')
    init_run(rundir, toy_files)
    cmd_run(rundir, progress=False)
    result = cmd_cover(rundir, total_time=20)
    assert result['method'] == 'greedy'
    assert sum(result['gains']) == result['solved_total'] == 40
    assert result['schedule_solved'] <= result['solved_total']
    assert loader.read_json(join(rundir, 'portfolio.json')) == json.loads(json.dumps(result))
    exact = cmd_cover(rundir, method='exact')
    assert len(exact['members']) <= len(result['members'])
    with pytest.raises(ValueError):
        cmd_cover(rundir, method='exact', max_size=1)


def test_report(tmp_path, toy_files):
    rundir = str(tmp_path / 'run')
    init_run(rundir, toy_files)
    row = cmd_report(rundir).iloc[0]
    assert row.iterations == 0
    assert row.solved == 0
    cmd_run(rundir, {'max_iterations': 2}, progress=False)
    row = cmd_report(rundir).iloc[0]
    assert row.iterations == 2
    assert row.solved >= row.best
    assert row.t_low == 1


def test_report_plots(tmp_path, toy_files):
    rundir = str(tmp_path / 'run')
    init_run(rundir, toy_files)
    cmd_run(rundir, {'max_iterations': 2}, progress=False)
    cmd_report(rundir, plot=True)
    assert exists(join(rundir, 'coverage.png'))
    assert exists(join(rundir, 'traces.png'))


def test_merge_and_union_report(tmp_path, toy_files):
    a, b = str(tmp_path / 'a'), str(tmp_path / 'b')
    for rundir, seed in ((a, 1), (b, 2)):
        init_run(rundir, toy_files, seed=seed)
        cmd_run(rundir, {'max_iterations': 1}, progress=False)
    df = cmd_report([a, b])
    assert list(df.run) == [a, b, 'union']
    assert df.solved.iloc[2] >= max(df.solved.iloc[0], df.solved.iloc[1])

    _, rows = cmd_merge(a, [b])
    assert rows == len(read_ledger(loader.ledger_path(b))) > 0
    space = loader.load_space(toy_files['space'])
    assert set(loader.read_strategies(b, space)) <= set(loader.read_strategies(a, space))
    assert RunManifest.read(a).merged


def test_merge_rejects_other_space(tmp_path, toy_files):
    a, c = str(tmp_path / 'a'), str(tmp_path / 'c')
    init_run(a, toy_files)
    other = tmp_path / 'space7.txt'
    other.write_text(''.join('{} {{ 0, 1 }} [0]\n'.format(n) for n in TOY_PARAMS + ['x6']))
    cmd_init(c, str(other), toy_files['corpus'], toy_files['backend'])
    with pytest.raises(ValueError, match='different parameter space'):
        cmd_merge(a, [c])


def test_seeds_command(tmp_path, toy_files):
    rundir = str(tmp_path / 'run')
    init_run(rundir, toy_files, seeds=False)
    candidates = toy_files['seeds'] + [toy_files['target_a']]
    chosen = cmd_seeds(rundir, candidates, sample_size=100, cutoff=1.0)
    space = loader.load_space(toy_files['space'])
    strategies = loader.read_strategies(rundir, space)
    assert set(chosen) == set(strategies)
    assert {strategies[sid].assignment['x0'] for sid in chosen} == {'0'}
    assert len(chosen) == 2
    assert RunManifest.read(rundir).seeds == chosen

    cmd_run(rundir, {'max_iterations': 1}, progress=False)
    with pytest.raises(ValueError, match='before'):
        cmd_seeds(rundir, candidates)


def test_main_exit_codes(tmp_path, toy_files, capsys):
    rundir = str(tmp_path / 'run')
    argv = ['init', rundir, '-sp', toy_files['space'], '-cp', toy_files['corpus'], '-b', toy_files['backend'],
            '-st'] + toy_files['seeds']
    assert main(argv) == 0
    assert main(argv) == 1
    assert 'error' in capsys.readouterr().err
    assert main(['run', rundir, '-mi', '1', '-q']) == 0
    assert main(['eval', rundir, toy_files['target_a'], '-c', '10']) == 0
    assert 'solved 20 of 40' in capsys.readouterr().out
    assert main(['eval', rundir, str(tmp_path / 'missing.strat')]) == 1
    assert main(['report', str(tmp_path / 'not_a_run')]) == 1


def test_strategy_file_with_unknown_parameter(tmp_path, toy_files):
    rundir = str(tmp_path / 'run')
    init_run(rundir, toy_files)
    bad = tmp_path / 'bad.strat'
    bad.write_text(''.join('{}={}\n'.format(n, v) for n, v in bits('000000').items()) + 'x9=1\n')
    assert main(['eval', rundir, str(bad)]) == 1


def test_merge_from_run_over_other_problems(tmp_path, toy_files):
    corpora = {}
    for cluster in ('a', 'b'):
        path = tmp_path / 'corpus_{}.txt'.format(cluster)
        path.write_text(''.join(p + '\n' for p in toy_problem_ids() if p.startswith(cluster + '_')))
        corpora[cluster] = str(path)
    a, b = str(tmp_path / 'a'), str(tmp_path / 'b')
    for rundir, cluster in ((a, 'a'), (b, 'b')):
        cmd_init(rundir, toy_files['space'], corpora[cluster], toy_files['backend'], toy_files['seeds'])
    cmd_run(b, {'max_iterations': 1}, progress=False)
    cmd_merge(a, [b])

    assert main(['run', a, '-q']) == 0
    with open(join(a, 'matrix.tsv')) as f:
        assert all(p.startswith('a_') for p in f.readline().split()[1:])
    row = cmd_report(a).iloc[0]
    assert 0 < row.solved <= 20
    union = cmd_report([a, b]).iloc[2]
    assert union.solved <= 40
    assert cmd_cover(a, total_time=10)['solved_total'] <= 20
