"""Two-phase experiment protocol.

Per seed: fresh learners train for ``training_episodes`` while the policy
reuse probability decays linearly to zero, then play ``execution_episodes``
frozen: no advisors, no exploration, no learning, and a separate RNG stream
seeded with ``seed + execution_seed_offset``.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..advisors import build_advisor
from ..baselines import (
    AblationFlags,
    FixedPolicyAgent,
    IndependentQAgent,
    SingleAdvisorAgent,
    TLQLAgent,
    WeightedAdvisorAgent,
    build_ablation_learner,
)
from ..game_core import Environment, build_environment
from ..learner_matlac import ActorCriticConfig, MATLACAgent
from ..learner_matlql import AgentConfig, MATLQLAgent
from ..schedules import ConfigurationError, ExplorationPolicy, LearningRateSchedule, PPRSchedule
from ..tables import fingerprint
from ..trainer import Trainer
from .config import AgentSpec, ExperimentConfig
from .outputs import AlgorithmSummary, MetricsRecord, emit_csv, emit_outputs, summarize, write_text
from .stats import WelchResult, welch_t_test


def agent_config(cfg: ExperimentConfig, spec: AgentSpec) -> AgentConfig:
    o = spec.options
    rate = LearningRateSchedule(o.get("rate", cfg.rate), float(o.get("alpha", cfg.alpha)),
                                float(o.get("omega", cfg.omega)))
    ex = ExplorationPolicy(float(o.get("epsilon", cfg.epsilon)), float(o.get("eta", cfg.eta)))
    gamma = float(o.get("gamma", cfg.gamma))
    high_update = o.get("high_update", cfg.high_update)
    if spec.algorithm == "matlac":
        return ActorCriticConfig(gamma=gamma, rate=rate, exploration=ex, high_update=high_update,
                                 actor_rate=float(o.get("actor_rate", cfg.actor_rate)))
    return AgentConfig(gamma=gamma, rate=rate, exploration=ex, high_update=high_update)


def build_agent(cfg: ExperimentConfig, spec: AgentSpec, j: int, env: Environment):
    alg = spec.algorithm
    if alg == "fixed-opponent":
        desc = {k: v for k, v in spec.options.items() if k != "policy"}
        desc["kind"] = spec.options["policy"]
        return FixedPolicyAgent(j, env, build_advisor(desc, env, j))
    advisors = [build_advisor(d, env, j) for d in spec.advisors]
    ac = agent_config(cfg, spec)
    if alg == "matlql":
        return MATLQLAgent(j, env, advisors, ac)
    if alg == "matlac":
        return MATLACAgent(j, env, advisors, ac)
    if alg == "tlql":
        return TLQLAgent(j, env, advisors, ac)
    if alg == "independent-q":
        return IndependentQAgent(j, env, (), ac)
    if alg == "weighted-advisor":
        return WeightedAdvisorAgent(j, env, advisors, ac)
    if alg == "single-advisor":
        return SingleAdvisorAgent(j, env, advisors, ac)
    if alg.lower().startswith("tlql+"):
        return build_ablation_learner(AblationFlags.parse(alg), j, env, advisors, ac)
    raise ConfigurationError(f"unknown algorithm {alg!r}")


def make_environment(cfg: ExperimentConfig) -> Environment:
    """The configured environment; ``env.gamma`` falls back to the top-level ``gamma``."""
    desc = dict(cfg.env)
    desc.setdefault("gamma", str(cfg.gamma))
    return build_environment(desc)


def build_agents(cfg: ExperimentConfig, env: Environment) -> list:
    specs = cfg.agents or [AgentSpec() for _ in range(env.num_agents)]
    if len(specs) != env.num_agents:
        raise ConfigurationError(f"environment has {env.num_agents} agents, config describes {len(specs)}")
    return [build_agent(cfg, spec, j, env) for j, spec in enumerate(specs)]


def num_advisor_columns(cfg: ExperimentConfig) -> int:
    return max([len(a.advisors) for a in cfg.agents] + [1])


def _tables_hash(agents) -> str:
    arrays = {}
    for j, a in enumerate(agents):
        for name, v in a.arrays().items():
            arrays[f"{j}.{name}"] = v
        for i, adv in enumerate(getattr(a, "advisors", ())):
            inner = getattr(adv, "inner", None)
            if inner is not None:
                arrays[f"{j}.advisor{i}"] = inner.q
    return fingerprint(arrays)


def _records(seed, phase, episode, stats, eps_prime, k) -> list[MetricsRecord]:
    out = []
    for j in range(len(stats.returns)):
        sel = tuple(stats.selections[j]) + (0,) * (k - len(stats.selections[j]))
        out.append(MetricsRecord(seed, phase, episode, j, float(stats.returns[j]), bool(stats.wins[j]),
                                 eps_prime, stats.opportunities[j], sel[:k]))
    return out


def run_seed(cfg: ExperimentConfig, seed: int) -> list[MetricsRecord]:
    """One isolated seed: training then execution."""
    env = make_environment(cfg)
    agents = build_agents(cfg, env)
    k = num_advisor_columns(cfg)
    trainer = Trainer(env, agents, np.random.default_rng(seed), joint_mode=cfg.joint_mode)
    ppr = PPRSchedule(cfg.ppr_initial, cfg.horizon)
    records: list[MetricsRecord] = []
    for ep in range(cfg.training_episodes):
        eps_prime = ppr(ep)
        stats = trainer.run_episode(eps_prime, learn=True)
        records.extend(_records(seed, "training", ep, stats, eps_prime, k))
    if cfg.execution_episodes:
        before = _tables_hash(agents)
        trainer.rng = np.random.default_rng(seed + cfg.execution_seed_offset)
        for ep in range(cfg.execution_episodes):
            stats = trainer.run_episode(0.0, learn=False)
            if any(stats.opportunities):
                raise RuntimeError("advisor consulted during execution")
            records.extend(_records(seed, "execution", ep, stats, 0.0, k))
        if _tables_hash(agents) != before:
            raise RuntimeError("tables changed during execution")
    return records


def _run_seed_star(args):
    return run_seed(*args)


@dataclass
class ExperimentResult:
    records: dict[str, list[MetricsRecord]] = field(default_factory=dict)
    summaries: dict[str, AlgorithmSummary] = field(default_factory=dict)
    tests: dict[tuple[str, str, str], WelchResult] = field(default_factory=dict)
    paths: list[str] = field(default_factory=list)

    def report_lines(self) -> list[str]:
        out = []
        for (a, b, metric), r in self.tests.items():
            flag = " (degenerate)" if r.degenerate else ""
            out.append(f"{a} vs {b} [{metric}]: t={r.t:.6g} df={r.df:.6g} p={r.p:.6g}{flag}")
        return out


def compare_summaries(summaries: dict[str, AlgorithmSummary]) -> dict[tuple[str, str, str], WelchResult]:
    """Welch tests of the first algorithm against each of the others."""
    names = list(summaries)
    tests = {}
    if len(names) < 2:
        return tests
    base = summaries[names[0]]
    for other in names[1:]:
        o = summaries[other]
        for metric, x, y in (("train_return", base.seed_train_return, o.seed_train_return),
                             ("exec_win", base.seed_exec_win, o.seed_exec_win)):
            if len(x) >= 2 and len(y) >= 2:
                tests[(names[0], other, metric)] = welch_t_test(list(x.values()), list(y.values()))
    return tests


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None, workers: int | None = None) -> ExperimentResult:
    workers = workers or cfg.workers
    result = ExperimentResult()
    k = num_advisor_columns(cfg)
    for alg in cfg.algorithms() or ["matlql"]:
        sub = cfg.with_algorithm(alg) if cfg.compare else cfg
        jobs = [(sub, seed) for seed in cfg.seeds]
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                per_seed = list(pool.map(_run_seed_star, jobs))
        else:
            per_seed = [run_seed(*job) for job in jobs]
        recs = [r for chunk in per_seed for r in chunk]
        result.records[alg] = recs
        result.summaries[alg] = summarize(alg, recs, cfg.report_agent, cfg.smoothing)
        if out_dir is not None:
            base = os.path.join(out_dir, alg)
            for seed, chunk in zip(cfg.seeds, per_seed):
                for phase in ("training", "execution"):
                    rows = [r for r in chunk if r.phase == phase]
                    if rows:
                        p = os.path.join(base, f"seed{seed}_{phase}.csv")
                        write_text(p, emit_csv(rows, k))
                        result.paths.append(p)
            for phase in ("training", "execution"):
                rows = [r for r in recs if r.phase == phase]
                if rows:
                    p = os.path.join(base, f"{phase}.csv")
                    write_text(p, emit_csv(rows, k))
                    result.paths.append(p)
    result.tests = compare_summaries(result.summaries)
    if out_dir is not None:
        result.paths.extend(emit_outputs(out_dir, list(result.summaries.values()), result.report_lines()))
    return result
