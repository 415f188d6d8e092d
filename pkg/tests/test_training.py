import numpy as np
import pytest

from lifelong_vrp.core import ProblemKind, optimality_gap
from lifelong_vrp.policy import PolicyParams
from lifelong_vrp.taskgen import Distribution, PrincipalTask, make_schedule, schedule_task
from lifelong_vrp.training import (
    Strategy,
    StrategyConfig,
    TrainConfig,
    build_test_sets,
    init_state,
    mean_gap,
    parity_extra_batches,
    run_lifelong,
    solve_greedy,
    train_epoch,
)

SMALL = TrainConfig(batch_size=4, batches_per_epoch=6)


def schedule(kind=ProblemKind.TSP, T=4):
    return make_schedule([PrincipalTask(Distribution.UNIFORM, 6), PrincipalTask(Distribution.CLUSTER, 7)], T, kind)


def eval_sets(s, size=6):
    return build_test_sets(s, size, seed=7)


def test_fine_tuning_epoch_never_buffers():
    strat = StrategyConfig.for_kind(Strategy.FINE_TUNING)
    state = init_state(strat, SMALL, 0)
    train_epoch(state, schedule_task(schedule(), 1), strat, SMALL)
    assert len(state.buffer) == 0 and state.optimizer.step == SMALL.batches_per_epoch
    assert state.pir_counts == [0]


def test_dree_replay_count_bounds():
    strat = StrategyConfig.for_kind(Strategy.DREE, buffer_capacity=8)
    train = TrainConfig(batch_size=4, batches_per_epoch=12)
    state = init_state(strat, train, 1)
    s = schedule()
    for t in (1, 2):
        train_epoch(state, schedule_task(s, t), strat, train)
    assert train.batches_per_epoch // strat.UB <= state.pir_counts[1] <= train.batches_per_epoch
    assert all(replaced == m for _, m, replaced in state.audit)


@pytest.mark.parametrize("kind", list(Strategy))
def test_every_strategy_runs(kind):
    s = schedule(ProblemKind.CVRP if kind is Strategy.DREE else ProblemKind.TSP)
    res = run_lifelong(s, StrategyConfig.for_kind(kind, buffer_capacity=4), SMALL, 3, eval_sets(s))
    assert res.ledger.complete and res.ledger.gaps.shape == (5, 2)
    assert res.state.optimizer.step == 4 * SMALL.batches_per_epoch


def test_same_seed_same_ledger():
    s = schedule()
    strat = StrategyConfig.for_kind(Strategy.DREE, buffer_capacity=4)
    a = run_lifelong(s, strat, SMALL, 11, eval_sets(s))
    b = run_lifelong(s, strat, SMALL, 11, eval_sets(s))
    assert a.ledger.gaps.tobytes() == b.ledger.gaps.tobytes()
    c = run_lifelong(s, strat, SMALL, 12, eval_sets(s))
    assert a.ledger.gaps.tobytes() != c.ledger.gaps.tobytes()


@pytest.mark.parametrize("use_buffer", [False, True])
def test_zero_weight_dree_degenerates_to_fine_tuning(use_buffer):
    s = schedule()
    ft = run_lifelong(s, StrategyConfig.for_kind(Strategy.FINE_TUNING), SMALL, 5, eval_sets(s), keep_trace=True)
    dree = StrategyConfig.for_kind(Strategy.DREE, alpha=0.0, beta=0.0, use_buffer=use_buffer, buffer_capacity=4)
    other = run_lifelong(s, dree, SMALL, 5, eval_sets(s), keep_trace=True)
    assert len(ft.state.param_trace) == len(other.state.param_trace)
    for a, b in zip(ft.state.param_trace, other.state.param_trace):
        assert np.array_equal(a, b)


def test_extra_batches_add_optimizer_steps():
    s = schedule()
    train = TrainConfig(batch_size=4, batches_per_epoch=6, extra_batches=3)
    res = run_lifelong(s, StrategyConfig.for_kind(Strategy.FINE_TUNING), train, 0, eval_sets(s))
    assert res.state.optimizer.step == 4 * 9


def test_parity_rounding():
    assert parity_extra_batches([]) == 0
    assert parity_extra_batches([6, 7]) == 7
    assert parity_extra_batches([6, 6, 7]) == 6


def test_test_sets_are_shared_and_exact_when_small():
    s = schedule()
    a, b = eval_sets(s), eval_sets(s)
    assert a is b
    assert all(ts.exact for ts in a)
    fresh = build_test_sets(s, 6, seed=7, restarts=19)
    for x, y in zip(a, fresh):
        assert [i.nodes.tobytes() for i in x.instances] == [i.nodes.tobytes() for i in y.instances]


def test_mean_gap_is_average_of_instance_gaps():
    s = schedule()
    ts = eval_sets(s)[1]
    params = PolicyParams(np.array([0, 3.0, 0, 0, 0, 0, 0]))
    costs = solve_greedy(params, ts.instances)
    manual = sum(optimality_gap(c, r) for c, r in zip(costs, ts.references)) / len(costs)
    assert mean_gap(params, ts) == pytest.approx(manual, abs=1e-9)
    assert np.all(costs >= ts.references - 1e-9)  # exact references cannot be beaten


def test_strategy_config_validation():
    with pytest.raises(ValueError):
        StrategyConfig(alpha=-1)
    cfg = StrategyConfig.for_kind("AblationNoEE")
    assert not cfg.use_ee and cfg.fixed_N == 3.56
