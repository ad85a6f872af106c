"""Flat ``key = value`` experiment files.

Example::

    # duel against a random opponent
    env.kind = gridworld
    env.mode = duel
    agent.0.algorithm = matlql
    agent.1.algorithm = fixed-opponent
    agent.1.policy = uniform-random
    advisor.0.0.kind = uniform-random
    advisor.0.1.kind = noisy-optimal
    advisor.0.1.p = 0.9
    training_episodes = 500
    seeds = 1-30
    compare = matlql, independent-q, tlql

``compare`` reruns the whole experiment once per listed algorithm, swapping
it in for every agent that is not a fixed opponent.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..schedules import ConfigurationError

ALGORITHMS = ("matlql", "matlac", "tlql", "independent-q", "weighted-advisor",
              "single-advisor", "fixed-opponent")
ABLATION = re.compile(r"^tlql(\+(JA|EM|AE))+$", re.IGNORECASE)


class ConfigError(ConfigurationError):
    """Carries every problem found, not just the first."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class AgentSpec:
    algorithm: str = "matlql"
    options: dict[str, str] = field(default_factory=dict)
    advisors: list[dict[str, str]] = field(default_factory=list)


@dataclass
class ExperimentConfig:
    env: dict[str, str] = field(default_factory=lambda: {"kind": "toy-grid"})
    agents: list[AgentSpec] = field(default_factory=list)
    gamma: float = 0.9
    rate: str = "constant"
    alpha: float = 0.1
    omega: float = 0.77
    epsilon: float = 0.95
    eta: float = 0.9
    ppr_initial: float = 1.0
    ppr_horizon: int | None = None      # None: the number of training episodes
    actor_rate: float = 0.01
    high_update: str = "followed"
    joint_mode: str = "observed"
    training_episodes: int = 100
    execution_episodes: int = 100
    seeds: list[int] = field(default_factory=lambda: list(range(1, 31)))
    execution_seed_offset: int = 30
    compare: list[str] = field(default_factory=list)
    report_agent: int = 0
    smoothing: int = 100
    workers: int = 1

    @property
    def horizon(self) -> int:
        return self.training_episodes if self.ppr_horizon is None else self.ppr_horizon

    def algorithms(self) -> list[str]:
        if self.compare:
            return list(self.compare)
        return [self.agents[self.report_agent].algorithm] if self.agents else []

    def with_algorithm(self, algorithm: str) -> "ExperimentConfig":
        """Copy with ``algorithm`` on every non-fixed agent."""
        import copy
        out = copy.deepcopy(self)
        for a in out.agents:
            if a.algorithm != "fixed-opponent":
                a.algorithm = algorithm
        out.compare = []
        return out


def parse_seeds(text: str) -> list[int]:
    """``"1-30"``, ``"1,2,5"`` or a mix of both."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            lo_i, hi_i = int(lo), int(hi)
            if hi_i < lo_i:
                raise ValueError(f"empty seed range {part!r}")
            out.extend(range(lo_i, hi_i + 1))
        else:
            out.append(int(part))
    return out


def valid_algorithm(name: str) -> bool:
    return name in ALGORITHMS or bool(ABLATION.match(name))


_SCALARS = {
    "gamma": float, "alpha": float, "omega": float, "epsilon": float, "eta": float,
    "ppr.initial": float, "ppr.horizon": int, "actor_rate": float,
    "training_episodes": int, "execution_episodes": int, "execution_seed_offset": int,
    "report_agent": int, "smoothing": int, "workers": int,
}
_STRINGS = ("rate", "high_update", "joint_mode")


def parse_config(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig(env={})
    errors: list[str] = []
    agents: dict[int, AgentSpec] = {}
    advisors: dict[tuple[int, int], dict[str, str]] = {}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key = value")
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        if key in seen:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        seen.add(key)
        parts = key.split(".")
        try:
            if parts[0] == "env" and len(parts) == 2:
                cfg.env[parts[1]] = value
            elif parts[0] == "agent" and len(parts) == 3:
                spec = agents.setdefault(int(parts[1]), AgentSpec())
                if parts[2] == "algorithm":
                    spec.algorithm = value
                else:
                    spec.options[parts[2]] = value
            elif parts[0] == "advisor" and len(parts) == 4:
                advisors.setdefault((int(parts[1]), int(parts[2])), {})[parts[3]] = value
            elif key in _SCALARS:
                attr = key.replace("ppr.", "ppr_")
                setattr(cfg, attr, _SCALARS[key](value))
            elif key in _STRINGS:
                setattr(cfg, key, value)
            elif key == "seeds":
                cfg.seeds = parse_seeds(value)
            elif key == "compare":
                cfg.compare = [v.strip() for v in value.split(",") if v.strip()]
            else:
                errors.append(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            errors.append(f"line {lineno}: bad value for {key!r}: {exc}")
    if not cfg.env:
        cfg.env = {"kind": "toy-grid"}
    if agents:
        n = max(agents) + 1
        missing = [i for i in range(n) if i not in agents]
        if missing:
            errors.append(f"agents {missing} are not described")
        cfg.agents = [agents.get(i, AgentSpec()) for i in range(n)]
        for (j, i), desc in sorted(advisors.items()):
            if j >= n:
                errors.append(f"advisor.{j}.{i}: no agent {j}")
                continue
            lst = cfg.agents[j].advisors
            while len(lst) <= i:
                lst.append({})
            lst[i] = desc
    elif advisors:
        errors.append("advisors given without any agent.<j> entries")
    errors.extend(validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def validate(cfg: ExperimentConfig) -> list[str]:
    errors = []
    if not 0 <= cfg.gamma < 1:
        errors.append("gamma must lie in [0, 1)")
    if cfg.rate not in ("constant", "polynomial", "linear"):
        errors.append(f"rate must be constant, polynomial or linear, not {cfg.rate!r}")
    if cfg.rate == "polynomial" and not 0.5 < cfg.omega < 1:
        errors.append("omega must lie in (1/2, 1)")
    if cfg.rate == "constant" and not 0 <= cfg.alpha < 1:
        errors.append("alpha must lie in [0, 1)")
    for name in ("epsilon", "eta", "ppr_initial"):
        if not 0 <= getattr(cfg, name) <= 1:
            errors.append(f"{name.replace('_', '.')} must lie in [0, 1]")
    if cfg.high_update not in ("followed", "agreeing"):
        errors.append("high_update must be followed or agreeing")
    if cfg.joint_mode not in ("observed", "copies"):
        errors.append("joint_mode must be observed or copies")
    if cfg.training_episodes < 0 or cfg.execution_episodes < 0:
        errors.append("episode counts must be non-negative")
    if cfg.ppr_horizon is not None and cfg.ppr_horizon < 0:
        errors.append("ppr.horizon must be non-negative")
    if not cfg.seeds:
        errors.append("seeds must not be empty")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        errors.append("seeds must be distinct")
    if cfg.workers < 1:
        errors.append("workers must be at least 1")
    if cfg.actor_rate <= 0:
        errors.append("actor_rate must be positive")
    if cfg.agents and not 0 <= cfg.report_agent < len(cfg.agents):
        errors.append(f"report_agent {cfg.report_agent} out of range")
    for j, a in enumerate(cfg.agents):
        if not valid_algorithm(a.algorithm):
            errors.append(f"agent.{j}.algorithm: unknown algorithm {a.algorithm!r}")
        if a.algorithm == "fixed-opponent" and "policy" not in a.options:
            errors.append(f"agent.{j}: fixed-opponent needs a policy")
        for i, d in enumerate(a.advisors):
            if "kind" not in d:
                errors.append(f"advisor.{j}.{i}: missing kind")
    for name in cfg.compare:
        if not valid_algorithm(name) or name == "fixed-opponent":
            errors.append(f"compare: unknown learner {name!r}")
    return errors


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
