"""Problem instances, the construction MDP, and small exact/heuristic solvers.

Customers are indexed ``0..n-1``. For CVRP the depot is not a node index; a
return to the depot is implied whenever the next customer's demand does not
fit in the remaining capacity.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

TSP_EXACT_LIMIT = 9
CVRP_EXACT_LIMIT = 7


class ProblemKind(str, enum.Enum):
    TSP = "TSP"
    CVRP = "CVRP"


class InvalidTour(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Instance:
    """One routing problem with coordinates in the unit square.

    ``metric`` is ``"euclidean"`` for generated instances. Instances read
    from TSPLIB files use ``"euc_2d"``: edge costs are recomputed in the
    file's original units (``nodes * coord_scale + coord_offset``) and
    rounded to the nearest integer, so gaps are comparable with published
    optima.
    """

    problem_kind: ProblemKind
    nodes: np.ndarray
    demands: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    capacity: int = 0
    depot: Optional[np.ndarray] = None
    id: str = ""
    metric: str = "euclidean"
    coord_scale: float = 1.0
    coord_offset: tuple = (0.0, 0.0)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        object.__setattr__(self, "problem_kind", ProblemKind(self.problem_kind))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "demands", np.asarray(self.demands, dtype=np.int64))
        if self.depot is not None:
            object.__setattr__(self, "depot", np.asarray(self.depot, dtype=np.float64))
        nodes.setflags(write=False)
        self.demands.setflags(write=False)

        if nodes.ndim != 2 or nodes.shape[1] != 2 or len(nodes) == 0:
            raise ValueError("nodes must be a nonempty (n, 2) array")
        if np.any(nodes < 0.0) or np.any(nodes > 1.0):
            raise ValueError("coordinates must lie in [0, 1]^2")
        if self.metric not in ("euclidean", "euc_2d"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.problem_kind is ProblemKind.TSP:
            if len(self.demands) or self.depot is not None:
                raise ValueError("TSP instances carry no demands and no depot")
        else:
            if len(self.demands) != len(nodes):
                raise ValueError("CVRP demands must match node count")
            if self.capacity <= 0:
                raise ValueError("CVRP capacity must be positive")
            if np.any(self.demands <= 0) or np.any(self.demands > self.capacity):
                raise ValueError("CVRP demands must be positive and at most capacity")
            if self.depot is None or self.depot.shape != (2,):
                raise ValueError("CVRP instances need a 2D depot")
            if np.any(self.depot < 0.0) or np.any(self.depot > 1.0):
                raise ValueError("depot must lie in [0, 1]^2")

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def is_cvrp(self) -> bool:
        return self.problem_kind is ProblemKind.CVRP

    @cached_property
    def unit_dist(self) -> np.ndarray:
        """Pairwise Euclidean distances in unit-square coordinates."""
        return _pairwise(self.nodes, self.nodes)

    @cached_property
    def unit_depot_dist(self) -> np.ndarray:
        anchor = self.depot if self.is_cvrp else self.nodes.mean(axis=0)
        return np.linalg.norm(self.nodes - anchor, axis=1)

    @cached_property
    def unit_centroid_dist(self) -> np.ndarray:
        return np.linalg.norm(self.nodes - self.nodes.mean(axis=0), axis=1)

    def _cost_coords(self, pts):
        if self.metric == "euc_2d":
            return pts * self.coord_scale + np.asarray(self.coord_offset)
        return pts

    def _round(self, d):
        if self.metric == "euc_2d":
            return np.floor(d + 0.5)
        return d

    @cached_property
    def cost_dist(self) -> np.ndarray:
        """Edge costs between customers in objective units."""
        pts = self._cost_coords(self.nodes)
        d = self._round(_pairwise(pts, pts))
        d.setflags(write=False)
        return d

    @cached_property
    def cost_depot_dist(self) -> np.ndarray:
        if not self.is_cvrp:
            return np.zeros(self.n)
        pts = self._cost_coords(self.nodes)
        d = self._round(np.linalg.norm(pts - self._cost_coords(self.depot), axis=1))
        d.setflags(write=False)
        return d


def _pairwise(a, b):
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff**2).sum(-1))


@dataclass
class ConstructionState:
    """Partial solution. ``current`` is ``None`` before the first move."""

    instance: Instance
    visited: np.ndarray
    current: Optional[int]
    remaining_capacity: int
    step_count: int

    @property
    def terminal(self) -> bool:
        return bool(self.visited.all())

    def copy(self) -> "ConstructionState":
        return ConstructionState(
            self.instance, self.visited.copy(), self.current, self.remaining_capacity, self.step_count
        )


def initial_state(instance: Instance) -> ConstructionState:
    return ConstructionState(
        instance=instance,
        visited=np.zeros(instance.n, dtype=bool),
        current=None,
        remaining_capacity=instance.capacity if instance.is_cvrp else 0,
        step_count=0,
    )


@dataclass
class Tour:
    """A complete solution; ``actions`` lists every customer, starting with ``start``."""

    start: int
    actions: tuple
    cost: float


def feasible_mask(state: ConstructionState) -> tuple[np.ndarray, bool]:
    """Return the feasible mask and whether choosing from it implies a depot return."""
    if state.terminal:
        raise ValueError("no actions at terminal state")
    unvisited = ~state.visited
    inst = state.instance
    if not inst.is_cvrp:
        return unvisited, False
    fits = unvisited & (inst.demands <= state.remaining_capacity)
    if fits.any():
        return fits, False
    return unvisited.copy(), True


def feasible_actions(state: ConstructionState) -> np.ndarray:
    return feasible_mask(state)[0]


def apply_action(state: ConstructionState, action: int) -> ConstructionState:
    mask, reset = feasible_mask(state)
    action = int(action)
    if not (0 <= action < len(mask)) or not mask[action]:
        raise ValueError("infeasible action")
    nxt = state.copy()
    nxt.visited[action] = True
    nxt.current = action
    nxt.step_count += 1
    inst = state.instance
    if inst.is_cvrp:
        remaining = inst.capacity if reset else state.remaining_capacity
        nxt.remaining_capacity = int(remaining - inst.demands[action])
    return nxt


def _check_permutation(instance: Instance, actions) -> np.ndarray:
    seq = np.asarray(actions, dtype=np.int64)
    if seq.ndim != 1 or len(seq) != instance.n:
        raise InvalidTour("invalid tour")
    if np.any(seq < 0) or np.any(seq >= instance.n) or len(np.unique(seq)) != instance.n:
        raise InvalidTour("invalid tour")
    return seq


def route_breaks(instance: Instance, order: Sequence[int]) -> np.ndarray:
    """Boolean array: True at position k if a depot return precedes ``order[k]``."""
    breaks = np.zeros(len(order), dtype=bool)
    if not instance.is_cvrp:
        return breaks
    remaining = instance.capacity
    for k, node in enumerate(order):
        q = int(instance.demands[node])
        if q > remaining:
            breaks[k] = True
            remaining = instance.capacity
        remaining -= q
    return breaks


def sequence_cost(instance: Instance, order: Sequence[int]) -> float:
    d = instance.cost_dist
    seq = np.asarray(order, dtype=np.int64)
    if not instance.is_cvrp:
        return float(d[seq, np.roll(seq, -1)].sum())
    dep = instance.cost_depot_dist
    breaks = route_breaks(instance, seq)
    total = dep[seq[0]] + dep[seq[-1]]
    for k in range(1, len(seq)):
        a, b = seq[k - 1], seq[k]
        total += dep[a] + dep[b] if breaks[k] else d[a, b]
    return float(total)


def evaluate(instance: Instance, tour) -> float:
    """Objective value of a tour (or of a plain visiting order)."""
    actions = tour.actions if isinstance(tour, Tour) else tour
    seq = _check_permutation(instance, actions)
    return sequence_cost(instance, seq)


def brute_force_optimal(instance: Instance) -> tuple[Tour, float]:
    """Enumerate every visiting order; only for tiny instances."""
    n = instance.n
    limit = CVRP_EXACT_LIMIT if instance.is_cvrp else TSP_EXACT_LIMIT
    if n > limit:
        raise ValueError("instance too large for exact oracle")
    if n == 1:
        return Tour(0, (0,), sequence_cost(instance, [0])), sequence_cost(instance, [0])

    d = instance.cost_dist
    if not instance.is_cvrp:
        # a cycle is rotation invariant, so node 0 can be fixed first
        rest = np.array(list(itertools.permutations(range(1, n))), dtype=np.int64)
        perms = np.hstack([np.zeros((len(rest), 1), dtype=np.int64), rest])
        costs = d[perms, np.roll(perms, -1, axis=1)].sum(axis=1)
    else:
        perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
        dep = instance.cost_depot_dist
        q = instance.demands[perms]
        remaining = np.full(len(perms), instance.capacity, dtype=np.int64)
        remaining -= q[:, 0]
        costs = dep[perms[:, 0]].copy()
        for k in range(1, n):
            a, b = perms[:, k - 1], perms[:, k]
            brk = q[:, k] > remaining
            costs += np.where(brk, dep[a] + dep[b], d[a, b])
            remaining = np.where(brk, instance.capacity, remaining) - q[:, k]
        costs += dep[perms[:, -1]]
    best = int(np.argmin(costs))
    order = tuple(int(v) for v in perms[best])
    cost = sequence_cost(instance, order)
    return Tour(order[0], order, cost), cost


def _nearest_neighbor(instance: Instance, start: int) -> list[list[int]]:
    """Routes built greedily; for TSP a single route."""
    d = instance.cost_dist
    n = instance.n
    visited = np.zeros(n, dtype=bool)
    routes = [[start]]
    visited[start] = True
    remaining = instance.capacity - (instance.demands[start] if instance.is_cvrp else 0)
    cur = start
    for _ in range(n - 1):
        cand = ~visited
        if instance.is_cvrp:
            fits = cand & (instance.demands <= remaining)
            if fits.any():
                cand = fits
                dist = d[cur]
            else:
                routes.append([])
                remaining = instance.capacity
                dist = instance.cost_depot_dist
        else:
            dist = d[cur]
        masked = np.where(cand, dist, np.inf)
        nxt = int(np.argmin(masked))
        routes[-1].append(nxt)
        visited[nxt] = True
        if instance.is_cvrp:
            remaining -= instance.demands[nxt]
        cur = nxt
    return routes


def two_opt(dist: np.ndarray, route: list[int]) -> list[int]:
    """First-improvement 2-opt on a closed route; ``route[0]`` never moves."""
    r = np.asarray(route, dtype=np.int64)
    m = len(r)
    if m < 4:
        return list(r)
    improved = True
    while improved:
        improved = False
        for i in range(m - 2):
            a, b = r[i], r[i + 1]
            # reversing r[i+1..j] swaps edges (a,b),(c,dn) for (a,c),(b,dn)
            js = np.arange(i + 2, m - 1 if i == 0 else m)
            if len(js) == 0:
                continue
            c = r[js]
            dn = r[(js + 1) % m]
            delta = dist[a, c] + dist[b, dn] - dist[a, b] - dist[c, dn]
            hit = np.flatnonzero(delta < -1e-10)
            if len(hit):
                j = int(js[hit[0]])
                r[i + 1 : j + 1] = r[i + 1 : j + 1][::-1].copy()
                improved = True
                break
    return [int(v) for v in r]


def local_search(instance: Instance, start: int) -> list[int]:
    """Nearest-neighbor construction followed by intra-route 2-opt."""
    routes = _nearest_neighbor(instance, start)
    if not instance.is_cvrp:
        return [int(v) for v in two_opt(instance.cost_dist, routes[0])]
    order = []
    for route in routes:
        # prepend the depot as a pseudo node (index 0) and fix it in place
        idx = np.array(route, dtype=np.int64)
        sub = np.empty((len(idx) + 1, len(idx) + 1))
        sub[1:, 1:] = instance.cost_dist[np.ix_(idx, idx)]
        sub[0, 1:] = sub[1:, 0] = instance.cost_depot_dist[idx]
        sub[0, 0] = 0.0
        improved = two_opt(sub, list(range(len(idx) + 1)))
        order.extend(int(idx[k - 1]) for k in improved[1:])
    return order


def reference_solve(instance: Instance, restarts: int, rng: np.random.Generator) -> float:
    return reference_tour(instance, restarts, rng).cost


def reference_tour(instance: Instance, restarts: int, rng: np.random.Generator) -> Tour:
    """Best of ``restarts`` nearest-neighbor + 2-opt runs from random starts."""
    if restarts < 1:
        raise ValueError("restarts must be positive")
    n = instance.n
    starts = rng.permutation(n)
    if restarts > n:
        starts = np.concatenate([starts, rng.integers(0, n, size=restarts - n)])
    best = None
    for s in starts[:restarts]:
        order = local_search(instance, int(s))
        cost = sequence_cost(instance, order)
        if best is None or cost < best.cost:
            best = Tour(order[0], tuple(order), cost)
    return best


def optimality_gap(cost: float, reference: float) -> float:
    """Percent excess over ``reference``. Negative values are kept as-is."""
    if not reference > 0:
        raise ValueError("reference must be positive")
    return 100.0 * (cost - reference) / reference
