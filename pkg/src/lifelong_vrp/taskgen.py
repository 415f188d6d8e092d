"""Principal task distributions and the drifting schedule between them."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .core import Instance, ProblemKind

DEPOT = (0.5, 0.5)


class Distribution(str, enum.Enum):
    UNIFORM = "Uniform"
    ROTATION = "Rotation"
    GAUSSIAN_MIXTURE = "GaussianMixture"
    EXPLOSION = "Explosion"
    CLUSTER = "Cluster"
    GRID = "Grid"


# short names used in scenario files and task orders
SHORT_NAMES = {
    "U": Distribution.UNIFORM,
    "R": Distribution.ROTATION,
    "GM": Distribution.GAUSSIAN_MIXTURE,
    "E": Distribution.EXPLOSION,
    "C": Distribution.CLUSTER,
    "G": Distribution.GRID,
}

DEFAULT_PARAMS = {
    Distribution.UNIFORM: {},
    Distribution.ROTATION: {},
    Distribution.GAUSSIAN_MIXTURE: {"components": 3, "sigma": 0.08, "mean_low": 0.2, "mean_high": 0.8},
    Distribution.EXPLOSION: {"radius": 0.3, "rate": 10.0},
    Distribution.CLUSTER: {"centers": 3, "sigma": 0.05, "center_low": 0.1, "center_high": 0.9},
    Distribution.GRID: {"jitter": 0.25},
}


def round_half_up(x) -> int:
    """Nearest integer with ties going up. Pass a Fraction for exact ties."""
    return math.floor(Fraction(x) + Fraction(1, 2))


def default_capacity(scale: int) -> int:
    return 30 + scale // 5


@dataclass
class PrincipalTask:
    kind: Distribution
    scale: int
    demand_low: int = 1
    demand_high: int = 9
    capacity: Optional[int] = None
    params: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        self.kind = Distribution(self.kind)
        if self.scale < 2:
            raise ValueError("principal scale must be at least 2")
        if self.capacity is None:
            self.capacity = default_capacity(self.scale)
        if not (1 <= self.demand_low <= self.demand_high <= self.capacity):
            raise ValueError("demand range must satisfy 1 <= low <= high <= capacity")
        merged = dict(DEFAULT_PARAMS[self.kind])
        unknown = set(self.params) - set(merged) - {"grid"}
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind.value}: {sorted(unknown)}")
        merged.update(self.params)
        if self.kind is Distribution.GRID and "grid" not in merged:
            merged["grid"] = math.ceil(math.sqrt(self.scale)) + 2
        validate_params(self.kind, merged)
        self.params = merged
        if not self.name:
            self.name = f"{self.kind.value}{self.scale}"


def validate_params(kind: Distribution, params: dict) -> None:
    kind = Distribution(kind)
    bad = None
    if kind is Distribution.CLUSTER:
        if int(params.get("centers", 0)) < 1 or params.get("sigma", -1) < 0:
            bad = "centers >= 1 and sigma >= 0 required"
        elif not 0 <= params["center_low"] <= params["center_high"] <= 1:
            bad = "center range must lie in [0, 1]"
    elif kind is Distribution.GAUSSIAN_MIXTURE:
        if int(params.get("components", 0)) < 1 or params.get("sigma", -1) < 0:
            bad = "components >= 1 and sigma >= 0 required"
        elif not 0 <= params["mean_low"] <= params["mean_high"] <= 1:
            bad = "mean range must lie in [0, 1]"
    elif kind is Distribution.EXPLOSION:
        if not 0 < params.get("radius", 0) < 1 or params.get("rate", 0) <= 0:
            bad = "radius in (0, 1) and rate > 0 required"
    elif kind is Distribution.GRID:
        if int(params.get("grid", 0)) < 1 or not 0 <= params.get("jitter", -1) <= 0.5:
            bad = "grid >= 1 and jitter in [0, 0.5] required"
    if bad:
        raise ValueError(f"invalid {kind.value} parameters: {bad}")


def draw_layout(kind: Distribution, params: dict, rng: np.random.Generator) -> dict:
    """Per-instance latent variables (cluster centers, rotation angle, ...)."""
    kind = Distribution(kind)
    layout = dict(params)
    if kind is Distribution.CLUSTER:
        k = int(params["centers"])
        layout["center_points"] = rng.uniform(params["center_low"], params["center_high"], size=(k, 2))
    elif kind is Distribution.GAUSSIAN_MIXTURE:
        k = int(params["components"])
        layout["means"] = rng.uniform(params["mean_low"], params["mean_high"], size=(k, 2))
    elif kind is Distribution.EXPLOSION:
        layout["center"] = rng.uniform(0.0, 1.0, size=2)
    elif kind is Distribution.ROTATION:
        layout["angle"] = rng.uniform(0.0, 2 * math.pi)
    return layout


def sample_principal_nodes(kind, layout: dict, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` coordinates; anything outside the unit square is clamped."""
    kind = Distribution(kind)
    validate_params(kind, layout)
    if count == 0:
        return np.zeros((0, 2))
    if kind is Distribution.UNIFORM:
        pts = rng.uniform(0.0, 1.0, size=(count, 2))
    elif kind is Distribution.CLUSTER:
        centers = layout["center_points"]
        which = rng.integers(0, len(centers), size=count)
        pts = centers[which] + rng.normal(0.0, layout["sigma"], size=(count, 2))
    elif kind is Distribution.GAUSSIAN_MIXTURE:
        means = layout["means"]
        which = rng.integers(0, len(means), size=count)
        pts = means[which] + rng.normal(0.0, layout["sigma"], size=(count, 2))
    elif kind is Distribution.EXPLOSION:
        pts = rng.uniform(0.0, 1.0, size=(count, 2))
        c = layout["center"]
        off = pts - c
        r = np.linalg.norm(off, axis=1)
        inside = r < layout["radius"]
        if inside.any():
            theta = np.arctan2(off[inside, 1], off[inside, 0])
            new_r = layout["radius"] + rng.exponential(1.0 / layout["rate"], size=int(inside.sum()))
            pts[inside] = c + np.column_stack([np.cos(theta), np.sin(theta)]) * new_r[:, None]
    elif kind is Distribution.ROTATION:
        pts = rng.uniform(0.0, 1.0, size=(count, 2)) - 0.5
        a = layout["angle"]
        rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
        pts = pts @ rot.T + 0.5
    elif kind is Distribution.GRID:
        g = int(layout["grid"])
        cells = rng.integers(0, g + 1, size=(count, 2))
        pts = cells / g
        j = layout["jitter"] / g
        if j > 0:
            pts = pts + rng.uniform(-j, j, size=(count, 2))
    else:  # pragma: no cover
        raise ValueError(kind)
    return np.clip(pts, 0.0, 1.0)


def sample_principal_node(kind, params: dict, rng: np.random.Generator) -> np.ndarray:
    """One coordinate. ``params`` must include the per-instance layout (see draw_layout)."""
    return sample_principal_nodes(kind, params, 1, rng)[0]


@dataclass
class TaskSchedule:
    problem_kind: ProblemKind
    principals: list
    total_epochs: int

    @property
    def K(self) -> int:
        return len(self.principals)

    @property
    def interval(self) -> int:
        return self.total_epochs // (self.K - 1)

    def principal_epochs(self) -> list[int]:
        return [i * self.interval for i in range(self.K)]

    def participation(self, i: int) -> tuple[int, int]:
        """Epoch range in which principal ``i`` contributes nodes."""
        m = self.interval
        return max(0, (i - 1) * m), min(self.total_epochs, (i + 1) * m)


def make_schedule(principals: Sequence[PrincipalTask], total_epochs: int,
                  problem_kind: ProblemKind = ProblemKind.TSP) -> TaskSchedule:
    K = len(principals)
    if K < 2:
        raise ValueError("need at least two principal tasks")
    if total_epochs < K - 1 or total_epochs % (K - 1):
        raise ValueError("epoch count not divisible")
    return TaskSchedule(ProblemKind(problem_kind), list(principals), int(total_epochs))


@dataclass(frozen=True)
class TaskSpec:
    epoch: int
    scale: int
    lower: int
    mixture: Fraction
    count_next: int
    count_prev: int
    prev: PrincipalTask
    next: PrincipalTask
    problem_kind: ProblemKind

    @property
    def capacity(self) -> int:
        lam = self.mixture
        return round_half_up((1 - lam) * self.prev.capacity + lam * self.next.capacity)


def schedule_task(schedule: TaskSchedule, t: int) -> TaskSpec:
    T = schedule.total_epochs
    if not 0 <= t <= T:
        raise ValueError(f"epoch {t} outside [0, {T}]")
    m = schedule.interval
    i = min(t // m, schedule.K - 2)
    lo, hi = schedule.principals[i], schedule.principals[i + 1]
    lam = Fraction(t - i * m, m)
    scale = round_half_up(Fraction((i + 1) * m - t, m) * lo.scale + lam * hi.scale)
    count_next = round_half_up(lam * scale)
    return TaskSpec(t, scale, i, lam, count_next, scale - count_next, lo, hi, schedule.problem_kind)


def sample_instance(spec: TaskSpec, rng: np.random.Generator, id: str = "") -> Instance:
    parts = []
    demands = []
    for task, count in ((spec.prev, spec.count_prev), (spec.next, spec.count_next)):
        layout = draw_layout(task.kind, task.params, rng)
        parts.append(sample_principal_nodes(task.kind, layout, count, rng))
        demands.append(rng.integers(task.demand_low, task.demand_high + 1, size=count))
    nodes = np.vstack(parts)
    order = rng.permutation(len(nodes))
    if not id:
        id = f"t{spec.epoch}-{rng.integers(1 << 48):012x}"
    if spec.problem_kind is ProblemKind.TSP:
        return Instance(ProblemKind.TSP, nodes[order], id=id)
    cap = spec.capacity
    dem = np.minimum(np.concatenate(demands)[order], cap)
    return Instance(ProblemKind.CVRP, nodes[order], demands=dem, capacity=cap, depot=np.array(DEPOT), id=id)


def principal_spec(schedule: TaskSchedule, i: int) -> TaskSpec:
    """The spec of principal task ``i`` (0-based) in isolation."""
    return schedule_task(schedule, schedule.principal_epochs()[i])


def child_seed(seed: int, *path: int) -> np.random.SeedSequence:
    """Deterministic seed splitting: (seed, index, ...) -> independent child stream."""
    return np.random.SeedSequence([int(seed), *(int(p) for p in path)])


def child_rng(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(child_seed(seed, *path))
