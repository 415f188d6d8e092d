"""Experience buffer, problem-instance replay scheduling and experience enhancement."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .core import Instance
from .learner import LossReport, drl_loss_and_grad
from .policy import PolicyParams, Trajectory
from .taskgen import round_half_up


@dataclass(eq=False)
class Experience:
    instance: Instance
    best_cost: float
    trajectory: Trajectory
    origin_epoch: int = 0
    enhancement_count: int = 0
    cost_history: list = field(default_factory=list)

    def __post_init__(self):
        if abs(self.best_cost - self.trajectory.cost) > 1e-9:
            raise ValueError("best_cost must equal the trajectory cost")
        if not self.cost_history:
            self.cost_history = [self.best_cost]


class ExperienceBuffer:
    """Reservoir of batch entries; each entry is a list of ``batch_size`` experiences."""

    def __init__(self, capacity: int, batch_size: int):
        if capacity < 1 or batch_size < 1:
            raise ValueError("capacity and batch size must be positive")
        self.capacity = capacity
        self.batch_size = batch_size
        self.entries: list[list[Experience]] = []
        self.seen_count = 0

    def __len__(self):
        return len(self.entries)

    def experiences(self):
        for entry in self.entries:
            yield from entry


def buffer_offer(buffer: ExperienceBuffer, new_entry: Sequence[Experience],
                 rng: np.random.Generator) -> ExperienceBuffer:
    """Reservoir insertion: every offered entry ends up retained with equal probability."""
    if len(new_entry) != buffer.batch_size:
        raise ValueError(f"entry must hold {buffer.batch_size} experiences, got {len(new_entry)}")
    buffer.seen_count += 1
    if len(buffer.entries) < buffer.capacity:
        buffer.entries.append(list(new_entry))
    elif rng.random() < buffer.capacity / buffer.seen_count:
        buffer.entries[int(rng.integers(len(buffer.entries)))] = list(new_entry)
    return buffer


def buffer_sample(buffer: ExperienceBuffer, rng: np.random.Generator) -> list[Experience]:
    """A uniformly chosen entry, returned by reference so updates land in the buffer."""
    if not buffer.entries:
        raise ValueError("buffer empty")
    return buffer.entries[int(rng.integers(len(buffer.entries)))]


def next_interval(M_plus: int, M: int, UB: int, LB: int) -> int:
    if not (0 <= M_plus <= M and M > 0 and 1 <= LB <= UB):
        raise ValueError(f"invalid interval arguments M+={M_plus}, M={M}, LB={LB}, UB={UB}")
    return round_half_up(UB - Fraction(M_plus, M) * (UB - LB))


@dataclass
class ReplaySchedule:
    """Decides on which batches problem-instance replay runs.

    Counts only batches where the buffer is nonempty. With ``fixed`` set,
    the interval is a constant (possibly fractional) and replay fires each
    time the batch count reaches the next multiple of it.
    """

    UB: int = 4
    LB: int = 1
    N: int = 1
    since_last: int = 0
    fixed: Optional[float] = None
    counted: int = 0
    next_fire: float = 0.0
    history: list = field(default_factory=list)

    def __post_init__(self):
        if not 1 <= self.LB <= self.UB:
            raise ValueError("need 1 <= LB <= UB")
        self.N = self.LB
        if self.fixed is not None:
            if self.fixed <= 0:
                raise ValueError("fixed interval must be positive")
            self.next_fire = self.fixed

    def tick(self) -> bool:
        """Advance one batch; True if replay should run on this batch."""
        self.since_last += 1
        self.counted += 1
        if self.fixed is not None:
            if self.counted + 1e-9 >= self.next_fire:
                self.next_fire += self.fixed
                return True
            return False
        return self.since_last >= self.N

    def fired(self, M_plus: int, M: int) -> None:
        self.since_last = 0
        if self.fixed is None:
            self.N = next_interval(M_plus, M, self.UB, self.LB)
            assert self.LB <= self.N <= self.UB
        self.history.append(self.N if self.fixed is None else self.fixed)


def pir_step(params: PolicyParams, entry: Sequence[Experience], n_starts: int,
             rng: np.random.Generator) -> tuple[LossReport, int, list[Trajectory]]:
    """Re-solve buffered instances with the current policy."""
    if not entry:
        raise ValueError("empty entry")
    instances = [e.instance for e in entry]
    n_starts = min(n_starts, min(inst.n for inst in instances))
    report = drl_loss_and_grad(params, instances, n_starts, rng)
    M_plus = sum(1 for e, c in zip(entry, report.costs) if c < e.best_cost)
    return report, M_plus, report.trajectories


def ee_update(entry: Sequence[Experience], trajectories: Sequence[Trajectory]) -> int:
    """Replace buffered solutions that a new trajectory strictly beats."""
    if len(entry) != len(trajectories):
        raise ValueError("trajectories are not aligned with the entry")
    replaced = 0
    for e, tr in zip(entry, trajectories):
        if tr.instance_id != e.instance.id:
            raise ValueError("trajectories are not aligned with the entry")
        if tr.cost < e.best_cost:
            e.best_cost = tr.cost
            e.trajectory = tr
            e.enhancement_count += 1
            e.cost_history.append(tr.cost)
            assert e.cost_history[-1] <= e.cost_history[-2]
            replaced += 1
    return replaced
