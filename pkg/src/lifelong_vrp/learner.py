"""Losses, analytic gradients and the parameter update."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Instance
from .policy import (
    N_FEATURES,
    IncompatibleTrajectory,
    Mode,
    PolicyParams,
    Trajectory,
    replay_distributions,
    run_batch,
)

PROB_FLOOR = 1e-8


@dataclass
class LossReport:
    value: float
    gradient: np.ndarray
    costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # best rollout per instance (policy-gradient losses only)
    trajectories: list = field(default_factory=list)

    def __post_init__(self):
        self.gradient = np.asarray(self.gradient, dtype=np.float64)
        if not np.all(np.isfinite(self.gradient)):
            raise FloatingPointError("diverged gradient")

    @classmethod
    def zero(cls, dim: int = N_FEATURES) -> "LossReport":
        return cls(0.0, np.zeros(dim))


@dataclass
class FrozenRollouts:
    """Rollouts of a batch kept so the loss can be re-evaluated at other weights."""

    instances: list
    owner: np.ndarray
    actions: np.ndarray
    costs: np.ndarray
    n_starts: int


def default_starts(n: int) -> int:
    return min(8, n)


def _start_nodes(instances, n_starts, rng):
    n = instances[0].n
    if n_starts < 2 or n_starts > min(inst.n for inst in instances):
        raise ValueError(f"n_starts={n_starts} must be in [2, node count]")
    owner = np.repeat(np.arange(len(instances)), n_starts)
    starts = np.concatenate([rng.choice(n, size=n_starts, replace=False) for _ in instances])
    return owner, starts


def drl_loss_and_grad(params: PolicyParams, instances: Sequence[Instance], n_starts: int,
                      rng: np.random.Generator, return_frozen: bool = False):
    """Multi-start REINFORCE with the mean cost of each instance's rollouts as baseline.

    Returns a LossReport whose ``costs`` hold the best cost per instance and
    ``trajectories`` the matching rollouts. With ``return_frozen`` the raw
    rollouts come back too, for finite-difference checks.
    """
    instances = list(instances)
    owner, starts = _start_nodes(instances, n_starts, rng)
    res = run_batch(params, instances, owner, starts, Mode.SAMPLE, rng=rng, record=True)
    M = len(instances)
    costs = res.costs.reshape(M, n_starts)
    advantage = -(costs - costs.mean(axis=1, keepdims=True))
    adv = advantage.reshape(-1)
    scale = 1.0 / (M * n_starts)
    value = -scale * float(np.dot(adv, res.log_prob))
    grad = -scale * (adv[:, None] * res.score).sum(axis=0)

    best = costs.argmin(axis=1)
    trajs = [res.trajectory(i * n_starts + int(best[i]), instances[i]) for i in range(M)]
    report = LossReport(value, grad, costs.min(axis=1), trajs)
    if return_frozen:
        return report, FrozenRollouts(instances, owner, res.actions, res.costs, n_starts)
    return report


def drl_loss_frozen(params: PolicyParams, frozen: FrozenRollouts) -> float:
    """The policy-gradient loss with actions and costs held fixed."""
    res = run_batch(params, frozen.instances, frozen.owner, frozen.actions[:, 0],
                    forced=frozen.actions)
    M = len(frozen.instances)
    costs = frozen.costs.reshape(M, frozen.n_starts)
    adv = -(costs - costs.mean(axis=1, keepdims=True)).reshape(-1)
    return -float(np.dot(adv, res.log_prob)) / (M * frozen.n_starts)


def confidence_weights(experience) -> np.ndarray:
    """Per-step weights: the buffered max action probability, normalised to sum 1.

    Accepts an experience or a bare trajectory.
    """
    trajectory = _as_trajectory(experience)
    if len(trajectory) == 0:
        raise ValueError("experience has no steps")
    raw = trajectory.probs.max(axis=1).astype(np.float64)
    return raw / raw.sum()


def _as_trajectory(e) -> Trajectory:
    return e.trajectory if hasattr(e, "trajectory") else e


def _floored(q: np.ndarray, mask: np.ndarray) -> np.ndarray:
    q = np.where(mask, np.maximum(q.astype(np.float64), PROB_FLOOR), 0.0)
    return q / q.sum(axis=-1, keepdims=True)


def br_loss_and_grad(params: PolicyParams, experiences: Sequence,
                     weighting: Callable[[Trajectory], np.ndarray] = confidence_weights) -> LossReport:
    """Weighted KL(current || buffered) over the buffered states, averaged over experiences.

    ``experiences`` holds objects with ``instance`` and ``trajectory``
    attributes; they are grouped by node count so each group replays in one
    batch.
    """
    experiences = list(experiences)
    if not experiences:
        return LossReport.zero()
    total = 0.0
    grad = np.zeros(N_FEATURES)
    groups: dict = {}
    for e in experiences:
        groups.setdefault((e.instance.n, e.instance.problem_kind), []).append(e)
    for group in groups.values():
        instances = [e.instance for e in group]
        trajs = [e.trajectory for e in group]
        actions = np.stack([tr.actions for tr in trajs])
        res = run_batch(params, instances, np.arange(len(group)), actions[:, 0],
                        forced=actions, record=True, keep_features=True)
        stored_masks = np.stack([tr.masks for tr in trajs])
        if not np.array_equal(stored_masks, res.masks):
            raise IncompatibleTrajectory("buffered trajectory incompatible with instance")
        q = _floored(np.stack([tr.probs for tr in trajs]), res.masks)
        p = res.probs
        w = np.stack([weighting(tr) for tr in trajs])           # (B, n)
        safe_p = np.where(res.masks, p, 1.0)
        safe_q = np.where(res.masks, q, 1.0)
        log_ratio = np.where(res.masks, np.log(safe_p) - np.log(safe_q), 0.0)
        kl = (p * log_ratio).sum(axis=-1)                       # (B, n)
        total += float((w * kl).sum())
        # d KL / d logit_j = p_j (log p_j/q_j - KL)
        dz = p * (log_ratio - kl[..., None])
        grad += np.einsum("bt,btj,btjf->f", w, dz, res.feats)
    M = len(experiences)
    return LossReport(total / M, grad / M)


def br_loss_value(params: PolicyParams, experiences: Sequence,
                  weighting: Callable[[Trajectory], np.ndarray] = confidence_weights) -> float:
    """Loss value only, through the per-state replay path (independent of the batched engine)."""
    total = 0.0
    for e in experiences:
        tr = e.trajectory
        w = weighting(tr)
        current = replay_distributions(params, e.instance, tr.start, tr.actions)
        for t, (p, step) in enumerate(zip(current, tr.steps)):
            q = np.maximum(step.distribution.astype(np.float64), PROB_FLOOR)
            q = q / q.sum()
            nz = p > 0
            total += w[t] * float(np.sum(p[nz] * (np.log(p[nz]) - np.log(q[nz]))))
    return total / len(experiences)


def combine_losses(drl: LossReport, br: LossReport, pir: LossReport,
                   alpha: float, beta: float) -> LossReport:
    if not (len(drl.gradient) == len(br.gradient) == len(pir.gradient)):
        raise ValueError("gradient length mismatch")
    return LossReport(
        drl.value + alpha * br.value + beta * pir.value,
        drl.gradient + alpha * br.gradient + beta * pir.gradient,
        drl.costs,
        drl.trajectories,
    )


@dataclass
class OptimizerState:
    m: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))
    v: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))
    step: int = 0
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def optimizer_step(state: OptimizerState, params: PolicyParams,
                   gradient: np.ndarray) -> tuple[OptimizerState, PolicyParams]:
    """One Adam update. Returns new objects; inputs are left untouched."""
    g = np.asarray(gradient, dtype=np.float64)
    if g.shape != params.weights.shape:
        raise ValueError("gradient length mismatch")
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("diverged gradient")
    t = state.step + 1
    m = state.beta1 * state.m + (1 - state.beta1) * g
    v = state.beta2 * state.v + (1 - state.beta2) * g * g
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    w = params.weights - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = OptimizerState(m, v, t, state.lr, state.beta1, state.beta2, state.eps)
    return new_state, PolicyParams(w, params.feature_config)
