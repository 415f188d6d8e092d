"""Linear-in-features softmax construction policy.

Two code paths compute the same quantities: per-state helpers working on a
``ConstructionState`` (``features``, ``action_distribution``, ``rollout``,
``replay_distributions``) and a batched numpy engine (``run_batch``) used by
training. Tests check them against each other.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    ConstructionState,
    Instance,
    apply_action,
    feasible_mask,
    initial_state,
    sequence_cost,
)

FEATURE_NAMES = (
    "bias",
    "neg_dist_current",
    "neg_dist_anchor",
    "neg_dist_centroid",
    "visited_fraction",
    "demand_ratio",
    "depot_return",
)
N_FEATURES = len(FEATURE_NAMES)

CHECKPOINT_HEADER = "lifelong-vrp policy checkpoint v1"


class Mode(str, enum.Enum):
    SAMPLE = "sample"
    GREEDY = "greedy"


class IncompatibleTrajectory(ValueError):
    pass


@dataclass
class PolicyParams:
    weights: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))
    feature_config: tuple = FEATURE_NAMES

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).copy()
        self.feature_config = tuple(self.feature_config)
        unknown = set(self.feature_config) - set(FEATURE_NAMES)
        if unknown:
            raise ValueError(f"unknown features {sorted(unknown)}")
        if self.weights.shape != (N_FEATURES,):
            raise ValueError(f"weights must have length {N_FEATURES}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")

    @property
    def active(self) -> np.ndarray:
        return np.array([name in self.feature_config for name in FEATURE_NAMES], dtype=np.float64)

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.weights.copy(), self.feature_config)


def save_checkpoint(params: PolicyParams, path) -> None:
    lines = [
        CHECKPOINT_HEADER,
        "features = " + ",".join(params.feature_config),
        "weights = " + " ".join(repr(float(w)) for w in params.weights),
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> PolicyParams:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise ValueError(f"{path}: not a policy checkpoint (bad header)")
    fields = {}
    for ln in lines[1:]:
        key, sep, value = ln.partition("=")
        if not sep:
            raise ValueError(f"{path}: malformed line {ln!r}")
        fields[key.strip()] = value.strip()
    features = tuple(f for f in fields.get("features", "").split(",") if f)
    weights = [float(w) for w in fields.get("weights", "").split()]
    return PolicyParams(np.array(weights), features)


@dataclass
class StepRecord:
    feasible_set: np.ndarray
    distribution: np.ndarray
    chosen: int


@dataclass
class Trajectory:
    """A rollout. Per-step data is kept densely: row t of ``masks``/``probs``
    covers all nodes, with zeros outside the feasible set. Buffered
    probabilities are stored as float32."""

    instance_id: str
    actions: np.ndarray
    masks: np.ndarray
    probs: np.ndarray
    cost: float

    @property
    def start(self) -> int:
        return int(self.actions[0])

    @property
    def steps(self) -> list[StepRecord]:
        out = []
        for t, a in enumerate(self.actions):
            fs = np.flatnonzero(self.masks[t])
            out.append(StepRecord(fs, self.probs[t, fs], int(np.searchsorted(fs, a))))
        return out

    def __len__(self):
        return len(self.actions)


# -- per-state path ---------------------------------------------------------

def _position_dist(state: ConstructionState, reset: bool) -> np.ndarray:
    inst = state.instance
    if state.current is None:
        if inst.is_cvrp:
            return inst.unit_depot_dist
        return np.zeros(inst.n)
    if reset:
        return inst.unit_depot_dist
    return inst.unit_dist[state.current]


def features(state: ConstructionState, candidate: int) -> np.ndarray:
    mask, reset = feasible_mask(state)
    if not mask[candidate]:
        raise ValueError("infeasible candidate")
    return _feature_matrix(state, mask, reset)[candidate]


def _feature_matrix(state: ConstructionState, mask, reset) -> np.ndarray:
    inst = state.instance
    phi = np.zeros((inst.n, N_FEATURES))
    phi[:, 0] = 1.0
    phi[:, 1] = -_position_dist(state, reset)
    phi[:, 2] = -inst.unit_depot_dist
    phi[:, 3] = -inst.unit_centroid_dist
    phi[:, 4] = state.step_count / inst.n
    if inst.is_cvrp:
        phi[:, 5] = inst.demands / inst.capacity
        phi[:, 6] = 1.0 if reset else 0.0
    return phi


def _masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    z = np.where(mask, logits, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def action_distribution(params: PolicyParams, state: ConstructionState) -> np.ndarray:
    """Dense probability vector over nodes; infeasible nodes get exactly 0."""
    mask, reset = feasible_mask(state)
    phi = _feature_matrix(state, mask, reset) * params.active
    return _masked_softmax(phi @ params.weights, mask)


def rollout(params: PolicyParams, instance: Instance, start: int,
            mode: Mode = Mode.GREEDY, rng: Optional[np.random.Generator] = None) -> Trajectory:
    """Build one solution; the first move is forced to ``start``."""
    mode = Mode(mode)
    if not 0 <= start < instance.n:
        raise ValueError("invalid start node")
    n = instance.n
    state = initial_state(instance)
    masks = np.zeros((n, n), dtype=bool)
    probs = np.zeros((n, n), dtype=np.float32)
    actions = np.zeros(n, dtype=np.int64)
    for t in range(n):
        if t == 0:
            mask = np.zeros(n, dtype=bool)
            mask[start] = True
            p = mask.astype(np.float64)
            a = start
        else:
            mask = feasible_mask(state)[0]
            p = action_distribution(params, state)
            if mode is Mode.GREEDY:
                a = int(np.argmax(p))
            else:
                a = _inverse_cdf(p, rng.random())
        masks[t], probs[t], actions[t] = mask, p, a
        state = apply_action(state, a)
    return Trajectory(instance.id, actions, masks, probs, sequence_cost(instance, actions))


def _inverse_cdf(p: np.ndarray, u: float) -> int:
    c = np.cumsum(p)
    k = int(np.searchsorted(c, u * c[-1], side="right"))
    k = min(k, len(p) - 1)
    # never land on a zero-probability entry because of round-off
    while p[k] == 0.0:
        k -= 1
    return k


def replay_distributions(params: PolicyParams, instance: Instance, start: int,
                         actions: Sequence[int]) -> list[np.ndarray]:
    """Current-policy distributions along a recorded action sequence.

    Each returned vector is aligned with the feasible set (ascending node
    index) of the corresponding step. Step 0 is the forced start.
    """
    actions = [int(a) for a in actions]
    if not actions or actions[0] != start or len(actions) != instance.n:
        raise IncompatibleTrajectory("buffered trajectory incompatible with instance")
    state = initial_state(instance)
    out = [np.ones(1)]
    try:
        state = apply_action(state, start)
        for a in actions[1:]:
            mask = feasible_mask(state)[0]
            if not mask[a]:
                raise IncompatibleTrajectory("buffered trajectory incompatible with instance")
            out.append(action_distribution(params, state)[mask])
            state = apply_action(state, a)
    except (ValueError, IndexError) as exc:
        if isinstance(exc, IncompatibleTrajectory):
            raise
        raise IncompatibleTrajectory("buffered trajectory incompatible with instance") from exc
    return out


# -- batched path -------------------------------------------------------------

@dataclass
class BatchResult:
    actions: np.ndarray        # (B, n)
    costs: np.ndarray          # (B,)
    log_prob: np.ndarray       # (B,) sum of log-probabilities of chosen actions
    score: np.ndarray          # (B, F) gradient of log_prob w.r.t. weights
    masks: Optional[np.ndarray] = None     # (B, n, n)
    probs: Optional[np.ndarray] = None     # (B, n, n)
    feats: Optional[np.ndarray] = None     # (B, n, n, F)

    def trajectory(self, b: int, instance: Instance) -> Trajectory:
        return Trajectory(
            instance.id,
            self.actions[b].copy(),
            self.masks[b].copy(),
            self.probs[b].astype(np.float32),
            float(self.costs[b]),
        )


def run_batch(params: PolicyParams, instances: Sequence[Instance], owner: np.ndarray,
              starts: np.ndarray, mode: Mode = Mode.SAMPLE,
              rng: Optional[np.random.Generator] = None,
              forced: Optional[np.ndarray] = None,
              record: bool = False, keep_features: bool = False) -> BatchResult:
    """Roll out B constructions at once.

    ``owner[b]`` indexes the instance of rollout b; all instances must share
    the node count and problem kind. With ``forced`` (B, n) the recorded
    actions are replayed instead of chosen, and an infeasible recorded
    action raises ``IncompatibleTrajectory``.
    """
    mode = Mode(mode)
    owner = np.asarray(owner, dtype=np.int64)
    starts = np.asarray(starts, dtype=np.int64)
    n = instances[0].n
    if any(inst.n != n or inst.problem_kind != instances[0].problem_kind for inst in instances):
        raise ValueError("batched instances must share size and kind")
    cvrp = instances[0].is_cvrp
    B = len(owner)
    rows = np.arange(B)

    unit = np.stack([inst.unit_dist for inst in instances])[owner]
    anchor = np.stack([inst.unit_depot_dist for inst in instances])[owner]
    centroid = np.stack([inst.unit_centroid_dist for inst in instances])[owner]
    cost_d = np.stack([inst.cost_dist for inst in instances])[owner]
    cost_dep = np.stack([inst.cost_depot_dist for inst in instances])[owner]
    if cvrp:
        dem = np.stack([inst.demands for inst in instances])[owner]
        cap = np.array([inst.capacity for inst in instances])[owner]
        dem_ratio = dem / cap[:, None]
    w = params.weights * params.active
    act = params.active

    if forced is not None:
        forced = np.asarray(forced, dtype=np.int64)
        if forced.shape != (B, n) or np.any(forced[:, 0] != starts):
            raise IncompatibleTrajectory("buffered trajectory incompatible with instance")

    visited = np.zeros((B, n), dtype=bool)
    actions = np.zeros((B, n), dtype=np.int64)
    resets = np.zeros((B, n), dtype=bool)
    log_prob = np.zeros(B)
    score = np.zeros((B, N_FEATURES))
    masks = np.zeros((B, n, n), dtype=bool) if record else None
    probs = np.zeros((B, n, n)) if record else None
    feats = np.zeros((B, n, n, N_FEATURES)) if keep_features else None

    actions[:, 0] = starts
    visited[rows, starts] = True
    if record:
        masks[rows, 0, starts] = True
        probs[rows, 0, starts] = 1.0
    if cvrp:
        remaining = cap - dem[rows, starts]
    cur = starts.copy()

    for t in range(1, n):
        unvisited = ~visited
        if cvrp:
            fits = unvisited & (dem <= remaining[:, None])
            reset = ~fits.any(axis=1)
            mask = np.where(reset[:, None], unvisited, fits)
            pos = np.where(reset[:, None], anchor, unit[rows, cur])
        else:
            reset = np.zeros(B, dtype=bool)
            mask = unvisited
            pos = unit[rows, cur]
        phi = np.empty((B, n, N_FEATURES))
        phi[..., 0] = 1.0
        phi[..., 1] = -pos
        phi[..., 2] = -anchor
        phi[..., 3] = -centroid
        phi[..., 4] = t / n
        if cvrp:
            phi[..., 5] = dem_ratio
            phi[..., 6] = reset[:, None]
        else:
            phi[..., 5] = 0.0
            phi[..., 6] = 0.0
        phi *= act
        p = _masked_softmax(phi @ w, mask)

        if forced is not None:
            a = forced[:, t]
            if not np.all(mask[rows, a]):
                raise IncompatibleTrajectory("buffered trajectory incompatible with instance")
        elif mode is Mode.GREEDY:
            a = np.argmax(p, axis=1)
        else:
            c = np.cumsum(p, axis=1)
            u = rng.random(B) * c[:, -1]
            a = (c <= u[:, None]).sum(axis=1)
            a = np.minimum(a, n - 1)
            # round-off guard: fall back to the last feasible node at or below a
            bad = ~mask[rows, a]
            if bad.any():
                for b in np.flatnonzero(bad):
                    a[b] = np.flatnonzero(mask[b, : a[b] + 1])[-1] if mask[b, : a[b] + 1].any() \
                        else np.flatnonzero(mask[b])[0]

        log_prob += np.log(p[rows, a])
        score += phi[rows, a] - np.einsum("bn,bnf->bf", p, phi)
        if record:
            masks[:, t] = mask
            probs[:, t] = p
        if keep_features:
            feats[:, t] = phi
        actions[:, t] = a
        resets[:, t] = reset
        visited[rows, a] = True
        if cvrp:
            remaining = np.where(reset, cap, remaining) - dem[rows, a]
        cur = a

    if cvrp:
        costs = cost_dep[rows, actions[:, 0]] + cost_dep[rows, actions[:, -1]]
        for k in range(1, n):
            pa, pb = actions[:, k - 1], actions[:, k]
            costs = costs + np.where(resets[:, k], cost_dep[rows, pa] + cost_dep[rows, pb],
                                     cost_d[rows, pa, pb])
    else:
        nxt = np.roll(actions, -1, axis=1)
        costs = cost_d[rows[:, None], actions, nxt].sum(axis=1)
    return BatchResult(actions, costs, log_prob, score, masks, probs, feats)
