"""Run orchestration: config in, artifact files out."""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from ..metrics import MetricsLedger, compute_metrics
from ..policy import PolicyParams, save_checkpoint
from ..training import (
    Strategy,
    StrategyConfig,
    TrainConfig,
    build_test_sets,
    parity_extra_batches,
    run_lifelong,
)
from .outputs import curves_csv, curves_svg, metrics_json, write_atomic
from .scenario import parse_scenario, profile_scenario

PROFILES = {
    "desk": dict(buffer_capacity=32, batch_size=16, batches_per_epoch=16, epochs=48, test_size=64),
    "full": dict(buffer_capacity=256, batch_size=32, batches_per_epoch=128, epochs=1000, test_size=1000),
}
# baselines that receive extra batches to match a paired DREE run's solving episodes
PARITY_STRATEGIES = {Strategy.FINE_TUNING, Strategy.BEHAVIOR_ONLY, Strategy.INSTANCE_ONLY}


@dataclass
class RunConfig:
    """Everything a run depends on. ``None`` fields take the profile default."""

    scenario: Optional[str] = None
    strategy: str = "DREE"
    seed: int = 0
    profile: str = "desk"
    alpha: float = 100.0
    beta: float = 1.0
    buffer_capacity: Optional[int] = None
    LB: int = 1
    UB: int = 4
    batch_size: Optional[int] = None
    batches_per_epoch: Optional[int] = None
    epochs: Optional[int] = None
    n_starts: Optional[int] = None
    output_dir: Optional[str] = None
    episode_parity: bool = False
    test_size: Optional[int] = None
    test_seed: int = 12345
    reference_restarts: int = 20

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")
        self.strategy = Strategy(self.strategy).value
        for key, value in PROFILES[self.profile].items():
            if key == "epochs":
                continue  # the scenario file decides unless overridden
            if getattr(self, key) is None:
                setattr(self, key, value)
        positive = ("buffer_capacity", "batch_size", "batches_per_epoch", "test_size", "reference_restarts")
        for key in positive:
            if getattr(self, key) < 1:
                raise ValueError(f"{key} must be positive")
        if self.epochs is not None and self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.n_starts is not None and self.n_starts < 2:
            raise ValueError("n_starts must be at least 2")
        if not 1 <= self.LB <= self.UB:
            raise ValueError("need 1 <= LB <= UB")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")

    def echo(self) -> dict:
        # the output location does not influence results; leaving it out keeps reruns byte-identical
        out = asdict(self)
        out.pop("output_dir")
        return out


@dataclass
class RunArtifacts:
    config: dict
    seed: int
    ledger: MetricsLedger
    metrics: dict
    pir_counts: list
    extra_batches: int
    wall_clock: float
    bands: list
    params: PolicyParams
    paired_pir_counts: list = field(default_factory=list)


def load_scenario(config: RunConfig):
    if config.scenario:
        return parse_scenario(config.scenario)
    return profile_scenario(config.profile)


def run(config: RunConfig) -> RunArtifacts:
    start = time.perf_counter()
    scenario = load_scenario(config)
    schedule = scenario.schedule(config.epochs)
    tests = build_test_sets(schedule, config.test_size, config.test_seed, config.reference_restarts)
    train = TrainConfig(config.batch_size, config.batches_per_epoch, 0, config.n_starts)

    def strategy_config(kind):
        return StrategyConfig.for_kind(kind, alpha=config.alpha, beta=config.beta,
                                       buffer_capacity=config.buffer_capacity, UB=config.UB, LB=config.LB)

    kind = Strategy(config.strategy)
    paired = []
    if config.episode_parity and kind in PARITY_STRATEGIES:
        paired = run_lifelong(schedule, strategy_config(Strategy.DREE), train, config.seed, tests).pir_counts
        train.extra_batches = parity_extra_batches(paired)

    result = run_lifelong(schedule, strategy_config(kind), train, config.seed, tests)
    artifacts = RunArtifacts(
        config=config.echo(),
        seed=config.seed,
        ledger=result.ledger,
        metrics=compute_metrics(result.ledger),
        pir_counts=list(result.pir_counts),
        extra_batches=train.extra_batches,
        wall_clock=time.perf_counter() - start,
        bands=[schedule.participation(i) for i in range(schedule.K)],
        params=result.params,
        paired_pir_counts=list(paired),
    )
    if config.output_dir:
        emit_outputs(artifacts, config.output_dir)
    return artifacts


def emit_outputs(artifacts: RunArtifacts, directory) -> list[Path]:
    """Write every artifact file; wall-clock goes to timing.json so the rest stays byte-stable."""
    extra = {
        "config": artifacts.config,
        "seed": artifacts.seed,
        "pir_counts": artifacts.pir_counts,
        "extra_batches_per_epoch": artifacts.extra_batches,
        "paired_pir_counts": artifacts.paired_pir_counts,
    }
    directory = Path(directory)
    files = {
        "curves.csv": curves_csv(artifacts.ledger),
        "metrics.json": metrics_json(artifacts.ledger, extra),
        "curves.svg": curves_svg(artifacts.ledger, artifacts.bands),
        "timing.json": json.dumps({"wall_clock_seconds": artifacts.wall_clock}) + "\n",
    }
    written = write_atomic(files, directory)
    ckpt = directory / "params.ckpt"
    tmp = directory / ".params.ckpt.tmp"
    try:
        save_checkpoint(artifacts.params, tmp)
        tmp.replace(ckpt)
    except BaseException:
        tmp.unlink(missing_ok=True)
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return written + [ckpt]
