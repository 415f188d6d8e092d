"""Scenario files: which principal tasks, in which order, over how many epochs.

Format (line oriented, ``#`` starts a comment)::

    [scenario]
    problem = TSP
    epochs = 48
    order = U, C, G

    [task U]
    distribution = Uniform
    scale = 8
    demand = 1-9
    capacity = 31

Distribution parameters (``sigma``, ``centers``, ``grid``, ...) go in the
task section. Unknown keys are rejected.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..core import ProblemKind
from ..taskgen import DEFAULT_PARAMS, SHORT_NAMES, Distribution, PrincipalTask, TaskSchedule, make_schedule

HEADER_KEYS = {"problem", "epochs", "order"}
TASK_KEYS = {"distribution", "scale", "demand", "capacity"}
INT_PARAMS = {"centers", "components", "grid"}

DESK_SCALES = {"U": 8, "C": 12, "G": 16}
FULL_ORDER = ("U", "R", "GM", "E", "C", "G")
FULL_SCALES = {"U": 20, "R": 50, "GM": 100, "E": 20, "C": 50, "G": 100}


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    problem_kind: ProblemKind
    epochs: int
    order: list
    tasks: dict = field(default_factory=dict)

    def schedule(self, epochs: Optional[int] = None) -> TaskSchedule:
        principals = []
        for label in self.order:
            task = self.tasks[label]
            principals.append(PrincipalTask(task.kind, task.scale, task.demand_low, task.demand_high,
                                            task.capacity, dict(task.params), name=label))
        return make_schedule(principals, epochs if epochs is not None else self.epochs, self.problem_kind)


def _parse_value(key, raw, lineno):
    try:
        if key in INT_PARAMS:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ScenarioError(f"line {lineno}: {key} expects a number, got {raw!r}") from None


def parse_scenario_text(text: str) -> Scenario:
    sections: list = []   # (name, label, {key: (value, lineno)}, lineno)
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioError(f"line {lineno}: unterminated section header")
            words = line[1:-1].split()
            if words == ["scenario"]:
                sections.append(("scenario", None, {}, lineno))
            elif len(words) == 2 and words[0] == "task":
                sections.append(("task", words[1], {}, lineno))
            else:
                raise ScenarioError(f"line {lineno}: unknown section {line!r}")
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ScenarioError(f"line {lineno}: expected 'key = value'")
        if not sections:
            raise ScenarioError(f"line {lineno}: key outside of any section")
        key, value = key.strip(), value.strip()
        entries = sections[-1][2]
        if key in entries:
            raise ScenarioError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = (value, lineno)

    headers = [s for s in sections if s[0] == "scenario"]
    if len(headers) != 1:
        raise ScenarioError("exactly one [scenario] section is required")
    _, _, head, head_line = headers[0]
    for key, (_, lineno) in head.items():
        if key not in HEADER_KEYS:
            raise ScenarioError(f"line {lineno}: unknown key {key!r} in [scenario]")
    for key in sorted(HEADER_KEYS - set(head)):
        raise ScenarioError(f"[scenario]: missing required key {key!r}")
    try:
        kind = ProblemKind(head["problem"][0].upper())
    except ValueError:
        raise ScenarioError(f"line {head['problem'][1]}: problem must be TSP or CVRP") from None
    try:
        epochs = int(head["epochs"][0])
    except ValueError:
        raise ScenarioError(f"line {head['epochs'][1]}: epochs must be an integer") from None
    order = [w.strip() for w in head["order"][0].split(",") if w.strip()]

    tasks = {}
    for name, label, entries, lineno in sections:
        if name != "task":
            continue
        if label in tasks:
            raise ScenarioError(f"line {lineno}: task {label!r} defined twice")
        tasks[label] = _parse_task(label, entries)
    missing = [lab for lab in order if lab not in tasks]
    if missing:
        raise ScenarioError(f"order references undefined tasks {missing}")
    scenario = Scenario(kind, epochs, order, tasks)
    try:
        scenario.schedule()
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    return scenario


def _parse_task(label, entries) -> PrincipalTask:
    for key in ("distribution", "scale"):
        if key not in entries:
            raise ScenarioError(f"task {label!r}: missing required key {key!r}")
    raw_kind, lineno = entries["distribution"]
    try:
        kind = SHORT_NAMES.get(raw_kind) or Distribution(raw_kind)
    except ValueError:
        raise ScenarioError(f"line {lineno}: unknown distribution {raw_kind!r}") from None
    allowed = set(DEFAULT_PARAMS[kind]) | ({"grid"} if kind is Distribution.GRID else set())
    params = {}
    for key, (value, lineno) in entries.items():
        if key in TASK_KEYS:
            continue
        if key not in allowed:
            raise ScenarioError(f"line {lineno}: unknown key {key!r} in task {label!r}")
        params[key] = _parse_value(key, value, lineno)
    try:
        scale = int(entries["scale"][0])
    except ValueError:
        raise ScenarioError(f"line {entries['scale'][1]}: scale must be an integer") from None
    low, high = 1, 9
    if "demand" in entries:
        raw, lineno = entries["demand"]
        parts = raw.split("-")
        try:
            low, high = int(parts[0]), int(parts[1])
        except (ValueError, IndexError):
            raise ScenarioError(f"line {lineno}: demand must look like 'low-high'") from None
    capacity = None
    if "capacity" in entries:
        raw, lineno = entries["capacity"]
        try:
            capacity = int(raw)
        except ValueError:
            raise ScenarioError(f"line {lineno}: capacity must be an integer") from None
    try:
        return PrincipalTask(kind, scale, low, high, capacity, params, name=label)
    except ValueError as exc:
        raise ScenarioError(f"task {label!r}: {exc}") from None


def parse_scenario(path) -> Scenario:
    with open(path) as fh:
        return parse_scenario_text(fh.read())


def _fmt(v):
    return str(v) if isinstance(v, int) else repr(float(v))


def format_scenario(scenario: Scenario) -> str:
    lines = [
        "[scenario]",
        f"problem = {scenario.problem_kind.value}",
        f"epochs = {scenario.epochs}",
        "order = " + ", ".join(scenario.order),
    ]
    for label, task in scenario.tasks.items():
        lines += [
            "",
            f"[task {label}]",
            f"distribution = {task.kind.value}",
            f"scale = {task.scale}",
            f"demand = {task.demand_low}-{task.demand_high}",
            f"capacity = {task.capacity}",
        ]
        for key in sorted(task.params):
            lines.append(f"{key} = {_fmt(task.params[key])}")
    return "\n".join(lines) + "\n"


def profile_scenario(profile: str = "desk", problem: str = "TSP", order=None,
                     epochs: Optional[int] = None) -> Scenario:
    if profile == "desk":
        scales, default_order, default_epochs = DESK_SCALES, ("U", "C", "G"), 48
    elif profile == "full":
        scales, default_order, default_epochs = FULL_SCALES, FULL_ORDER, 1000
    else:
        raise ValueError(f"unknown profile {profile!r}")
    order = list(order or default_order)
    tasks = {}
    for label in order:
        if label not in SHORT_NAMES:
            raise ValueError(f"unknown task label {label!r}")
        tasks[label] = PrincipalTask(SHORT_NAMES[label], scales.get(label, 20), name=label)
    scenario = Scenario(ProblemKind(problem.upper()), epochs or default_epochs, order, tasks)
    scenario.schedule()
    return scenario
