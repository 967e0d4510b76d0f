import json
from os.path import join

import pytest

from blistr import loader
from blistr.backend import Ledger, Runner
from blistr.ils import IlsConfig
from blistr.lib.utils import problems_hash
from blistr.loop import (EligibleTask, LoopConfig, blistr_iteration, complete_rows, eligible_strategies,
                         initial_state, next_task, restore_state, run_loop)
from blistr.matrix import RefinedMatrix, read_ledger, refine, solved_set
from conftest import DATA

CFG = LoopConfig(t_high=10.0, ils=IlsConfig(t_low=1.0, budget=400.0, seed=0))


def refined_with(wins):
    defined = {(sid, pid): 1000 for sid, pids in wins.items() for pid in pids}
    return RefinedMatrix(defined, (500, 30000))


def test_eligible_strategies_ranking():
    refined = refined_with({'b': ['p{}'.format(i) for i in range(10)],
                            'a': ['q{}'.format(i) for i in range(10)],
                            'c': ['r{}'.format(i) for i in range(12)],
                            'd': ['s{}'.format(i) for i in range(8)],
                            'e': ['t{}'.format(i) for i in range(7)]})
    ranked = eligible_strategies(refined, versatility=8, max_eligible=20)
    assert [(t.seed, t.count) for t in ranked] == [('c', 12), ('a', 10), ('b', 10), ('d', 8)]
    assert ranked[1].problems == tuple('q{}'.format(i) for i in range(10))
    strict = eligible_strategies(refined, versatility=8, max_eligible=20, strict=True)
    assert [t.seed for t in strict] == ['c', 'a', 'b']
    assert [t.seed for t in eligible_strategies(refined, 8, 2)] == ['c', 'a']


def test_next_task_skips_attempted():
    t1 = EligibleTask('a', ('p1', 'p2'), 2)
    t2 = EligibleTask('b', ('p3',), 1)
    assert next_task([t1, t2], set()) == t1
    assert next_task([t1, t2], {('a', problems_hash(['p2', 'p1']))}) == t2
    assert next_task([t1, t2], {t1.key, t2.key}) is None
    # same seed, different problem set is a new task
    assert next_task([EligibleTask('a', ('p1',), 1)], {t1.key}) is not None


def test_loop_config_validation():
    with pytest.raises(ValueError):
        LoopConfig(versatility=0)
    with pytest.raises(ValueError):
        LoopConfig(c_min=30000, c_max=500)
    with pytest.raises(ValueError):
        LoopConfig(t_high=0.5, ils=IlsConfig(t_low=1.0))


def test_complete_rows_bootstraps_seeds(toy_space, toy_seeds, toy_corpus, toy_runner):
    state = initial_state(toy_space, toy_seeds, toy_corpus, CFG)
    complete_rows(state, CFG, toy_runner)
    assert toy_runner.fresh_runs == 2 * len(toy_corpus)
    # each seed solves the easy problems of its own cluster
    assert state.coverage() == 32
    complete_rows(state, CFG, toy_runner)
    assert toy_runner.fresh_runs == 2 * len(toy_corpus)


def test_iteration_finds_cluster_target(toy_space, toy_seeds, toy_targets, toy_corpus, toy_runner):
    state = initial_state(toy_space, toy_seeds, toy_corpus, CFG)
    complete_rows(state, CFG, toy_runner)
    before = state.coverage()
    blistr_iteration(state, CFG, toy_runner)
    event = state.events[-1]
    assert state.coverage() > before
    assert event['coverage_before'] == before
    assert event['coverage_after'] == 36
    assert event['new_strategy_id'] in {t.id for t in toy_targets.values()}
    assert event['improved']
    assert event['d_size'] == 16
    assert (event['seed_id'], event['d_hash']) in state.attempted
    assert state.iteration == 1


def test_run_loop_on_two_clusters(toy_space, toy_seeds, toy_targets, toy_corpus, toy_runner):
    state = run_loop(toy_space, toy_seeds, toy_corpus, CFG, toy_runner)
    events = state.events
    assert len(events) == 4
    assert state.coverage() == 40
    assert {t.id for t in toy_targets.values()} <= set(state.strategies)
    keys = [(e['seed_id'], e['d_hash']) for e in events]
    assert len(set(keys)) == len(keys)
    for prev, cur in zip(events, events[1:]):
        assert cur['coverage_before'] == prev['coverage_after']
        assert cur['elapsed'] >= prev['elapsed']
    assert all(e['coverage_after'] >= e['coverage_before'] for e in events)


def test_run_loop_respects_iteration_cap(toy_space, toy_seeds, toy_corpus, toy_runner):
    cfg = LoopConfig(t_high=10.0, ils=CFG.ils, max_iterations=1)
    state = run_loop(toy_space, toy_seeds, toy_corpus, cfg, toy_runner)
    assert state.iteration == 1


def test_run_loop_needs_seeds(toy_space, toy_corpus, toy_runner):
    with pytest.raises(ValueError):
        run_loop(toy_space, [], toy_corpus, CFG, toy_runner)


def test_persisted_run_resumes(tmp_path, toy_space, toy_seeds, toy_backend, toy_corpus):
    rundir = str(tmp_path)
    ledger = Ledger(loader.ledger_path(rundir))
    cfg = LoopConfig(t_high=10.0, ils=CFG.ils, max_iterations=2)
    run_loop(toy_space, toy_seeds, toy_corpus, cfg, Runner(toy_backend, ledger), rundir=rundir)
    assert len(loader.read_events(rundir)) == 2
    assert len(loader.read_strategies(rundir, toy_space)) == 4

    runner = Runner(toy_backend, ledger)
    state = restore_state(rundir, toy_space, toy_corpus, CFG, runner, [s.id for s in toy_seeds])
    assert state.iteration == 2
    assert state.coverage() == 40
    state = run_loop(toy_space, None, toy_corpus, CFG, runner, rundir=rundir, state=state)
    events = loader.read_events(rundir)
    assert len(events) == 4
    assert [e['iteration'] for e in events] == [1, 2, 3, 4]
    keys = [(e['seed_id'], e['d_hash']) for e in events]
    assert len(set(keys)) == 4

    # a third pass has nothing left to do
    runner = Runner(toy_backend, ledger)
    state = restore_state(rundir, toy_space, toy_corpus, CFG, runner)
    run_loop(toy_space, None, toy_corpus, CFG, runner, rundir=rundir, state=state)
    assert len(loader.read_events(rundir)) == 4
    assert runner.fresh_runs == 0


def test_event_ranking_replays(tmp_path, toy_space, toy_seeds, toy_backend, toy_corpus):
    """
    The ranking logged with an event is the eligible list the task was taken from.
    """
    rundir = str(tmp_path)
    runner = Runner(toy_backend, Ledger(loader.ledger_path(rundir)))
    run_loop(toy_space, toy_seeds, toy_corpus, CFG, runner, rundir=rundir)
    with open(join(rundir, loader.EVENTS_FILE)) as f:
        events = [json.loads(line) for line in f]
    attempted = set()
    for e in events:
        ranking = e['ranking']
        assert [c for _, c in ranking] == sorted((c for _, c in ranking), reverse=True)
        chosen = [sid for sid, _ in ranking if sid == e['seed_id']]
        assert chosen
        attempted.add((e['seed_id'], e['d_hash']))
    assert len(attempted) == len(events)


def demo_inputs():
    space = loader.load_space(join(DATA, 'demo_space.txt'))
    corpus = loader.load_corpus(join(DATA, 'demo_corpus.txt'))
    backend = loader.load_backend_config(join(DATA, 'backend_synthetic.json'))
    seeds = [loader.load_strategy(join(DATA, 'demo_seeds', name), space)
             for name in ('seed_c0.strat', 'seed_c1.strat', 'seed_c2.strat', 'seed_c3.strat',
                          'seed_generic_a.strat', 'seed_generic_b.strat')]
    return space, corpus, backend, seeds


@pytest.mark.slow
def test_demo_loop_improves_coverage():
    space, corpus, backend, seeds = demo_inputs()
    cfg = LoopConfig()
    runs = []
    for _ in range(2):
        state = run_loop(space, seeds, corpus, cfg, Runner(backend))
        runs.append(state)
    state = runs[0]
    events = state.events
    assert len(corpus) == 200
    assert events
    bootstrap = events[0]['coverage_before']
    assert bootstrap == 160
    assert len(solved_set(state.matrix)) > bootstrap
    for prev, cur in zip(events, events[1:]):
        assert cur['coverage_before'] == prev['coverage_after']
    keys = [(e['seed_id'], e['d_hash']) for e in events]
    assert len(set(keys)) == len(keys)
    assert runs[1].events == events


def test_refined_matrix_holds_solved_runs_only(tmp_path, toy_space, toy_seeds, toy_backend, toy_corpus):
    rundir = str(tmp_path)
    runner = Runner(toy_backend, Ledger(loader.ledger_path(rundir)))
    state = run_loop(toy_space, toy_seeds, toy_corpus, CFG, runner, rundir=rundir)
    runs = read_ledger(loader.ledger_path(rundir))
    assert any(not r.solved for r in runs if r.cutoff == CFG.t_high)
    solved = {(r.strategy_id, r.problem_id) for r in runs if r.cutoff == CFG.t_high and r.solved}
    refined = refine(state.matrix, CFG.c_min, CFG.c_max)
    assert refined.defined
    assert set(refined.defined) <= solved
