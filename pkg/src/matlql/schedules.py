"""Exploration, policy-reuse and learning-rate schedules."""
from __future__ import annotations

from dataclasses import dataclass


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class PPRSchedule:
    """Probability of deferring to advisors, decayed linearly per episode."""

    initial: float = 1.0
    decay_horizon: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.initial <= 1.0:
            raise ConfigurationError("initial eps' must lie in [0, 1]")
        if self.decay_horizon < 0:
            raise ConfigurationError("decay horizon must be non-negative")

    def __call__(self, episode: int) -> float:
        return ppr_epsilon(self, episode)


def ppr_epsilon(schedule: PPRSchedule, episode: int) -> float:
    if episode < 0:
        raise ValueError("episode index must be non-negative")
    if schedule.decay_horizon == 0:
        return 0.0
    frac = max(0.0, 1.0 - episode / schedule.decay_horizon)
    return min(1.0, max(0.0, schedule.initial * frac))


@dataclass(frozen=True)
class ExplorationPolicy:
    # random action iff eps' <= u < epsilon, greedy otherwise
    epsilon: float = 0.95
    eta: float = 0.9

    def __post_init__(self):
        for name in ("epsilon", "eta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class LearningRateSchedule:
    """``constant`` returns ``alpha``; ``polynomial`` returns count**-omega;
    ``linear`` returns 1/count. Counts include the current visit."""

    family: str = "constant"
    alpha: float = 0.1
    omega: float = 0.77

    def __post_init__(self):
        if self.family not in ("constant", "polynomial", "linear"):
            raise ConfigurationError(f"unknown learning-rate family {self.family!r}")
        if self.family == "polynomial" and not 0.5 < self.omega < 1.0:
            raise ConfigurationError(f"polynomial rate needs omega in (1/2, 1), got {self.omega}")
        if self.family == "constant" and not 0.0 <= self.alpha < 1.0:
            raise ConfigurationError(f"constant rate must lie in [0, 1), got {self.alpha}")

    def __call__(self, count: int) -> float:
        return learning_rate(self, count)


def learning_rate(schedule: LearningRateSchedule, count: int) -> float:
    if schedule.family == "constant":
        return schedule.alpha
    if count < 1:
        raise ValueError("pair count must include the current visit")
    if schedule.family == "linear":
        return 1.0 / count
    return count ** -schedule.omega
