"""The lifelong training loop and its strategy variants."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import (
    CVRP_EXACT_LIMIT,
    TSP_EXACT_LIMIT,
    Instance,
    brute_force_optimal,
    optimality_gap,
    reference_solve,
)
from .learner import (
    LossReport,
    OptimizerState,
    br_loss_and_grad,
    combine_losses,
    default_starts,
    drl_loss_and_grad,
    optimizer_step,
)
from .metrics import MetricsLedger
from .policy import Mode, PolicyParams, run_batch
from .replay import (
    Experience,
    ExperienceBuffer,
    ReplaySchedule,
    buffer_offer,
    buffer_sample,
    ee_update,
    pir_step,
)
from .taskgen import TaskSchedule, TaskSpec, child_rng, principal_spec, sample_instance, schedule_task

ABLATION_INTERVAL = 3.56


class Strategy(str, enum.Enum):
    DREE = "DREE"
    FINE_TUNING = "FineTuning"
    BEHAVIOR_ONLY = "BehaviorOnly"
    INSTANCE_ONLY = "InstanceOnly"
    MULTI_TASK_REF = "MultiTaskRef"
    NO_PIR = "AblationNoPIR"
    NO_BR = "AblationNoBR"
    NO_EE = "AblationNoEE"


@dataclass
class StrategyConfig:
    """Loss weights and the switches that distinguish the strategies.

    Build through ``for_kind`` so the switches match the strategy; the
    fields stay overridable for experiments.
    """

    kind: Strategy = Strategy.DREE
    alpha: float = 100.0
    beta: float = 1.0
    buffer_capacity: int = 256
    UB: int = 4
    LB: int = 1
    fixed_N: Optional[float] = None
    use_buffer: bool = True
    use_br: bool = True
    run_pir: bool = True
    pir_loss: bool = True
    use_ee: bool = True
    multi_task: bool = False

    def __post_init__(self):
        self.kind = Strategy(self.kind)
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")

    @classmethod
    def for_kind(cls, kind, **overrides) -> "StrategyConfig":
        kind = Strategy(kind)
        switches = {
            Strategy.DREE: {},
            Strategy.FINE_TUNING: dict(use_buffer=False, use_br=False, run_pir=False,
                                       pir_loss=False, use_ee=False),
            Strategy.MULTI_TASK_REF: dict(use_buffer=False, use_br=False, run_pir=False,
                                          pir_loss=False, use_ee=False, multi_task=True),
            Strategy.BEHAVIOR_ONLY: dict(run_pir=False, pir_loss=False, use_ee=False),
            Strategy.INSTANCE_ONLY: dict(use_br=False, use_ee=False),
            Strategy.NO_PIR: dict(pir_loss=False, fixed_N=ABLATION_INTERVAL),
            Strategy.NO_BR: dict(use_br=False, fixed_N=ABLATION_INTERVAL),
            Strategy.NO_EE: dict(use_ee=False, fixed_N=ABLATION_INTERVAL),
        }[kind]
        return cls(kind=kind, **{**switches, **overrides})


@dataclass
class TrainConfig:
    batch_size: int = 16           # M
    batches_per_epoch: int = 16    # I
    extra_batches: int = 0         # episode-parity top-up
    n_starts: Optional[int] = None  # None -> min(8, node count)
    eval_starts: Optional[int] = None


@dataclass
class RunState:
    params: PolicyParams
    optimizer: OptimizerState
    buffer: ExperienceBuffer
    schedule: ReplaySchedule
    rng_data: np.random.Generator
    rng_solve: np.random.Generator
    rng_replay: np.random.Generator
    rng_buffer: np.random.Generator
    batches: int = 0
    pir_counts: list = field(default_factory=list)
    # (epoch, M_plus, replaced) for every replay with enhancement
    audit: list = field(default_factory=list)
    param_trace: list = field(default_factory=list)


def init_state(strategy: StrategyConfig, train: TrainConfig, seed: int,
               params: Optional[PolicyParams] = None) -> RunState:
    return RunState(
        params=params.copy() if params is not None else PolicyParams(),
        optimizer=OptimizerState(),
        buffer=ExperienceBuffer(strategy.buffer_capacity, train.batch_size),
        schedule=ReplaySchedule(UB=strategy.UB, LB=strategy.LB, fixed=strategy.fixed_N),
        rng_data=child_rng(seed, 1),
        rng_solve=child_rng(seed, 2),
        rng_replay=child_rng(seed, 3),
        rng_buffer=child_rng(seed, 4),
    )


def _starts(train: TrainConfig, n: int) -> int:
    k = train.n_starts if train.n_starts is not None else default_starts(n)
    return min(k, n)


def train_epoch(state: RunState, task: TaskSpec, strategy: StrategyConfig, train: TrainConfig,
                schedule: Optional[TaskSchedule] = None, keep_trace: bool = False) -> RunState:
    epoch = task.epoch
    pir_runs = 0
    for _ in range(train.batches_per_epoch + train.extra_batches):
        spec = task
        if strategy.multi_task:
            spec = schedule_task(schedule, int(state.rng_data.integers(0, schedule.total_epochs + 1)))
        instances = [sample_instance(spec, state.rng_data) for _ in range(train.batch_size)]
        k = _starts(train, spec.scale)
        drl = drl_loss_and_grad(state.params, instances, k, state.rng_solve)
        br = pir = LossReport.zero()

        if strategy.use_buffer and len(state.buffer):
            entry = buffer_sample(state.buffer, state.rng_replay)
            if strategy.use_br:
                br = br_loss_and_grad(state.params, entry)
            if strategy.run_pir and state.schedule.tick():
                pir_report, M_plus, trajs = pir_step(
                    state.params, entry, _starts(train, entry[0].instance.n), state.rng_replay)
                state.schedule.fired(M_plus, len(entry))
                pir_runs += 1
                if strategy.pir_loss:
                    pir = pir_report
                if strategy.use_ee:
                    replaced = ee_update(entry, trajs)
                    assert replaced == M_plus, (replaced, M_plus)
                    state.audit.append((epoch, M_plus, replaced))

        alpha = strategy.alpha if strategy.use_br else 0.0
        beta = strategy.beta if strategy.pir_loss else 0.0
        total = combine_losses(drl, br, pir, alpha, beta)
        state.optimizer, state.params = optimizer_step(state.optimizer, state.params, total.gradient)
        state.batches += 1
        if keep_trace:
            state.param_trace.append(state.params.weights.copy())

        if strategy.use_buffer:
            new_entry = [
                Experience(inst, float(c), tr, origin_epoch=epoch)
                for inst, c, tr in zip(instances, drl.costs, drl.trajectories)
            ]
            buffer_offer(state.buffer, new_entry, state.rng_buffer)
    state.pir_counts.append(pir_runs)
    return state


# -- evaluation -----------------------------------------------------------------

@dataclass
class TestSet:
    name: str
    instances: list
    references: np.ndarray
    exact: bool


_TEST_CACHE: dict = {}


def _exact_ok(inst: Instance) -> bool:
    return inst.n <= (CVRP_EXACT_LIMIT if inst.is_cvrp else TSP_EXACT_LIMIT)


def reference_costs(instances: Sequence[Instance], rng: np.random.Generator,
                    restarts: int = 20) -> tuple[np.ndarray, bool]:
    """Exact optimum when enumeration is cheap, best 2-opt otherwise."""
    if all(_exact_ok(inst) for inst in instances):
        return np.array([brute_force_optimal(inst)[1] for inst in instances]), True
    return np.array([reference_solve(inst, restarts, rng) for inst in instances]), False


def build_test_sets(schedule: TaskSchedule, size: int, seed: int, restarts: int = 20) -> list[TestSet]:
    """Fixed per-principal test sets; cached so every strategy sees identical data."""
    key = (repr([(p.kind, p.scale, p.demand_low, p.demand_high, p.capacity, sorted(p.params.items()))
                 for p in schedule.principals]), schedule.total_epochs, schedule.problem_kind,
           size, seed, restarts)
    if key in _TEST_CACHE:
        return _TEST_CACHE[key]
    sets = []
    for i, task in enumerate(schedule.principals):
        spec = principal_spec(schedule, i)
        rng = child_rng(seed, 100, i)
        instances = [sample_instance(spec, rng, id=f"test-{i}-{j}") for j in range(size)]
        refs, exact = reference_costs(instances, child_rng(seed, 200, i), restarts)
        sets.append(TestSet(task.name, instances, refs, exact))
    _TEST_CACHE[key] = sets
    return sets


def solve_greedy(params: PolicyParams, instances: Sequence[Instance], n_starts: Optional[int] = None) -> np.ndarray:
    """Best-of greedy rollouts from the first ``n_starts`` nodes of each instance."""
    out = np.zeros(len(instances))
    groups: dict = {}
    for idx, inst in enumerate(instances):
        groups.setdefault((inst.n, inst.problem_kind), []).append(idx)
    for idxs in groups.values():
        insts = [instances[i] for i in idxs]
        n = insts[0].n
        k = min(n_starts or default_starts(n), n)
        owner = np.repeat(np.arange(len(insts)), k)
        starts = np.tile(np.arange(k), len(insts))
        res = run_batch(params, insts, owner, starts, Mode.GREEDY)
        out[idxs] = res.costs.reshape(len(insts), k).min(axis=1)
    return out


def mean_gap(params: PolicyParams, test: TestSet, n_starts: Optional[int] = None) -> float:
    costs = solve_greedy(params, test.instances, n_starts)
    return float(np.mean([optimality_gap(c, r) for c, r in zip(costs, test.references)]))


# -- outer loop -------------------------------------------------------------------

@dataclass
class RunResult:
    params: PolicyParams
    ledger: MetricsLedger
    state: RunState

    @property
    def pir_counts(self) -> list:
        return self.state.pir_counts

    @property
    def buffer(self) -> ExperienceBuffer:
        return self.state.buffer


def run_lifelong(schedule: TaskSchedule, strategy: StrategyConfig, train: TrainConfig,
                 seed: int, test_sets: Sequence[TestSet],
                 params: Optional[PolicyParams] = None, keep_trace: bool = False) -> RunResult:
    state = init_state(strategy, train, seed, params)
    ledger = MetricsLedger(len(test_sets), schedule.total_epochs, [ts.name for ts in test_sets])

    def evaluate_epoch(t):
        for i, ts in enumerate(test_sets, start=1):
            ledger.record(t, i, mean_gap(state.params, ts, train.eval_starts))

    evaluate_epoch(0)
    for t in range(1, schedule.total_epochs + 1):
        train_epoch(state, schedule_task(schedule, t), strategy, train, schedule, keep_trace)
        evaluate_epoch(t)
    return RunResult(state.params, ledger, state)


def parity_extra_batches(pir_counts: Sequence[int]) -> int:
    """Extra batches per epoch that give a baseline as many solving episodes as a paired run."""
    if not len(pir_counts):
        return 0
    return int(np.floor(np.mean(pir_counts) + 0.5))
