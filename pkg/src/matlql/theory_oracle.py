"""Ground truth and rate-bound calculators.

The Nash-Q oracle solves games whose stage games always have a global
optimum (identical interest) or a pure saddle point (two-player zero sum) by
value iteration on the joint-action Bellman operator. Games outside that
class are refused, not approximated.

The bound calculators evaluate the asymptotic expressions with every hidden
constant set to one. They are only meaningful for comparing inputs, never as
step counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .game_core import Environment, JointAction
from .schedules import ConfigurationError


class NoPureSaddle(ValueError):
    pass


class StructureMismatch(ValueError):
    pass


class UnreachablePairs(RuntimeError):
    def __init__(self, unvisited):
        self.unvisited = sorted(unvisited)
        preview = ", ".join(map(str, self.unvisited[:8]))
        more = "" if len(self.unvisited) <= 8 else f" (+{len(self.unvisited) - 8} more)"
        super().__init__(f"{len(self.unvisited)} state-joint-action pairs never visited: {preview}{more}")


@dataclass
class NashQSolution:
    q: list[np.ndarray]             # per agent, shape (states,) + action_sizes
    v: list[np.ndarray]             # per agent, shape (states,)
    stage_policy: dict[int, JointAction]
    sweeps: int = 0

    def low_q_view(self, agent: int, action_sizes: Sequence[int]) -> np.ndarray:
        """Rearrange agent j's Q* into the learners' (state, others, own) layout."""
        q = np.moveaxis(self.q[agent], agent + 1, -1)
        return q.reshape(q.shape[0], -1, action_sizes[agent])


# ---------------------------------------------------------------------------
# Nash-Q oracle
# ---------------------------------------------------------------------------

def _model(env: Environment):
    """Dense reward and transition arrays over active states."""
    S = env.num_states
    jas = env.joint_actions()
    shape = tuple(env.action_sizes)
    R = np.zeros((env.num_agents, S) + shape)
    # successor lists per (s, ja): (prob, next, terminal)
    succ: dict[tuple[int, JointAction], list[tuple[float, int, bool]]] = {}
    for s in env.active_states():
        for ja in jas:
            branches = env.transitions(s, ja)
            for j in range(env.num_agents):
                R[(j, s) + ja] = sum(b.prob * b.rewards[j] for b in branches)
            succ[(s, ja)] = [(b.prob, b.next_state, b.terminal) for b in branches]
    return R, succ


def _stage_value(qs: Sequence[np.ndarray], kind: str):
    if kind == "identical-interest":
        flat = int(np.argmax(qs[0]))
        ja = np.unravel_index(flat, qs[0].shape)
        ja = tuple(int(a) for a in ja)
        return [float(q[ja]) for q in qs], ja
    m = qs[0]
    maxmin = m.min(axis=1).max()
    minmax = m.max(axis=0).min()
    if not math.isclose(maxmin, minmax, rel_tol=0.0, abs_tol=1e-12):
        raise NoPureSaddle(f"stage game has no pure saddle point (maxmin {maxmin:g} < minmax {minmax:g})")
    for a1 in range(m.shape[0]):
        for a2 in range(m.shape[1]):
            if m[a1, a2] == m[a1].min() and m[a1, a2] == m[:, a2].max():
                return [float(m[a1, a2]), float(-m[a1, a2])], (a1, a2)
    raise NoPureSaddle("stage game has no pure saddle point")


def _check_kind(env: Environment, R: np.ndarray, kind: str):
    if kind == "identical-interest":
        for j in range(1, env.num_agents):
            if not np.array_equal(R[j], R[0]):
                raise StructureMismatch("identical-interest oracle needs equal rewards for all agents")
    elif kind == "zero-sum-pure-saddle":
        if env.num_agents != 2:
            raise StructureMismatch("zero-sum oracle needs exactly two agents")
        if not np.allclose(R[0], -R[1], atol=0.0):
            raise StructureMismatch("zero-sum oracle needs r1 = -r2")
    else:
        raise StructureMismatch(f"unknown game kind {kind!r}")


def nash_q_oracle(env: Environment, kind: str = "identical-interest", tol: float = 1e-12,
                  max_sweeps: int = 100_000) -> NashQSolution:
    R, succ = _model(env)
    _check_kind(env, R, kind)
    N, S = env.num_agents, env.num_states
    gamma = env.discount
    shape = tuple(env.action_sizes)
    active = env.active_states()
    v = np.zeros((N, S))
    policy: dict[int, JointAction] = {}
    Q = np.zeros((N, S) + shape)
    for sweep in range(1, max_sweeps + 1):
        newQ = R.copy()
        for (s, ja), branches in succ.items():
            for p, s2, term in branches:
                if not term:
                    newQ[(slice(None), s) + ja] += p * gamma * v[:, s2]
        newv = np.zeros_like(v)
        for s in active:
            vals, ja = _stage_value([newQ[j, s] for j in range(N)], kind)
            newv[:, s] = vals
            policy[s] = ja
        delta = max(np.abs(newQ - Q).max(), np.abs(newv - v).max())
        Q, v = newQ, newv
        if delta < tol:
            break
    return NashQSolution([Q[j] for j in range(N)], [v[j] for j in range(N)], policy, sweep)


def bellman_residual(env: Environment, sol: NashQSolution, kind: str = "identical-interest") -> float:
    """Largest change one more oracle sweep would make."""
    R, succ = _model(env)
    N = env.num_agents
    gamma = env.discount
    worst = 0.0
    Q = np.stack(sol.q)
    v = np.stack(sol.v)
    newQ = R.copy()
    for (s, ja), branches in succ.items():
        for p, s2, term in branches:
            if not term:
                newQ[(slice(None), s) + ja] += p * gamma * v[:, s2]
    for s in env.active_states():
        worst = max(worst, float(np.abs(newQ[:, s] - Q[:, s]).max()))
        vals, _ = _stage_value([newQ[j, s] for j in range(N)], kind)
        worst = max(worst, float(np.abs(np.array(vals) - v[:, s]).max()))
    return worst


def joint_mdp_value_iteration(env: Environment, tol: float = 1e-12, max_sweeps: int = 100_000) -> np.ndarray:
    """Single-controller value iteration treating the joint action as one action.

    Written independently of :func:`nash_q_oracle` and used to cross-check it
    on identical-interest games; returns Q of shape (states, |joint actions|).
    """
    jas = env.joint_actions()
    S = env.num_states
    Q = np.zeros((S, len(jas)))
    active = set(env.active_states())
    cache = {(s, i): env.transitions(s, ja) for s in active for i, ja in enumerate(jas)}
    for _ in range(max_sweeps):
        V = np.where([s in active for s in range(S)], Q.max(axis=1), 0.0)
        new = np.zeros_like(Q)
        for (s, i), branches in cache.items():
            new[s, i] = sum(b.prob * (b.rewards[0] + (0.0 if b.terminal else env.discount * V[b.next_state]))
                            for b in branches)
        done = np.abs(new - Q).max() < tol
        Q = new
        if done:
            break
    return Q


# ---------------------------------------------------------------------------
# covering time
# ---------------------------------------------------------------------------

@dataclass
class CoveringTimeEstimate:
    L: int
    trials: list[int] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.trials))


def estimate_covering_time(env: Environment,
                           policy: Callable[[int, np.random.Generator], Sequence[int]],
                           trials: int, seed: int = 0, step_cap: int = 1_000_000,
                           start: str = "random") -> CoveringTimeEstimate:
    """Steps until every (active state, joint action) pair has been visited.

    Trial i draws from its own stream spawned from ``seed``, so adding trials
    never changes earlier ones. Episodes that end are restarted from the
    environment's reset distribution. ``start="random"`` begins each trial in
    a uniformly random active state, ``"reset"`` uses ``env.reset``.
    """
    active = env.active_states()
    jas = env.joint_actions()
    pairs = {(s, ja) for s in active for ja in jas}
    lengths = []
    for child in np.random.SeedSequence(seed).spawn(trials):
        rng = np.random.default_rng(child)
        s = active[int(rng.integers(len(active)))] if start == "random" else env.reset(rng)
        seen: set = set()
        steps = 0
        while len(seen) < len(pairs):
            if steps >= step_cap:
                raise UnreachablePairs(pairs - seen)
            ja = tuple(int(a) for a in policy(s, rng))
            seen.add((s, ja))
            out = env.step(s, ja, rng)
            steps += 1
            s = env.reset(rng) if out.terminal else out.next_state
        lengths.append(steps)
    return CoveringTimeEstimate(max(lengths) if lengths else 0, lengths)


# ---------------------------------------------------------------------------
# iteration counts and rate bounds
# ---------------------------------------------------------------------------

def iterations_for_accuracy(q_max: float, beta: float, eps: float) -> int:
    """Smallest integer m with m >= ln(q_max / eps) / beta (0 once eps >= q_max)."""
    if q_max <= 0 or beta <= 0 or eps <= 0:
        raise ValueError("inputs must be positive")
    if eps >= q_max:
        return 0
    return math.ceil(math.log(q_max / eps) / beta)


def contraction_sequence(q_max: float, beta: float, length: int) -> list[float]:
    """D_1 = q_max, D_{k+1} = (1 - beta) D_k."""
    out = [q_max]
    while len(out) < length:
        out.append(out[-1] * (1.0 - beta))
    return out


@dataclass(frozen=True)
class BoundInputs:
    L: float
    q_max: float
    num_states: int
    action_product: int
    delta: float
    eps: float
    gamma: float
    omega: float = 0.77
    psi: float = 0.5

    @property
    def beta(self) -> float:
        return (1.0 - self.gamma) / 2.0

    def validate(self, need_omega: bool = False, need_psi: bool = False) -> None:
        if not (0 < self.delta < 1 and 0 < self.eps < 1):
            raise ConfigurationError("delta and eps must lie in (0, 1)")
        if not 0 <= self.gamma < 1:
            raise ConfigurationError("gamma must lie in [0, 1)")
        if self.L <= 0 or self.q_max <= 0:
            raise ConfigurationError("L and q_max must be positive")
        if need_omega and not 0.5 < self.omega < 1.0:
            raise ConfigurationError("omega must lie in (1/2, 1)")
        if need_psi and not 0 < self.psi <= 0.712:
            raise ConfigurationError("psi must lie in (0, 0.712]")

    def replace(self, **kw) -> "BoundInputs":
        return replace(self, **kw)


def _log_term(x: BoundInputs, extra: float = 1.0) -> float:
    arg = x.num_states * x.action_product * x.q_max / (x.delta * x.beta * x.eps * extra)
    if arg <= 1.0:
        raise ValueError(f"log argument {arg:g} is not above 1")
    return math.log(arg)


def _logaddexp(a: float, b: float) -> float:
    hi, lo = max(a, b), min(a, b)
    return hi + math.log1p(math.exp(lo - hi))


def log_polynomial_rate_bound(x: BoundInputs) -> float:
    x.validate(need_omega=True)
    w, b, e = x.omega, x.beta, x.eps
    inner = ((1 + 3 * w) * math.log(x.L) + 2 * math.log(x.q_max) + math.log(_log_term(x))
             - 2 * math.log(b) - 2 * math.log(e))
    first = (1 - w) * inner - math.log(x.L)
    m = math.log(x.q_max / e)
    if m <= 0:
        raise ValueError("eps must be below q_max")
    second = math.log((x.L / b * m + 1) / 2) / (1 - w)
    return _logaddexp(first, second)


def polynomial_rate_bound(x: BoundInputs) -> float:
    lv = log_polynomial_rate_bound(x)
    return math.exp(lv) if lv < 709 else math.inf


def log_linear_rate_bound(x: BoundInputs) -> float:
    x.validate(need_psi=True)
    b, e, p = x.beta, x.eps, x.psi
    m = math.log(x.q_max / e)
    if m <= 0:
        raise ValueError("eps must be below q_max")
    expo = m / b
    return (expo * math.log(x.L + p * x.L + 1) + 2 * math.log(x.q_max) + math.log(_log_term(x, p))
            - 2 * math.log(b) - 2 * math.log(e) - 2 * math.log(p))


def linear_rate_bound(x: BoundInputs) -> float:
    lv = log_linear_rate_bound(x)
    return math.exp(lv) if lv < 709 else math.inf


# ---------------------------------------------------------------------------
# empirical convergence time
# ---------------------------------------------------------------------------

def sup_error(tables: Sequence[np.ndarray], targets: Sequence[np.ndarray], states: Sequence[int]) -> list[float]:
    return [float(np.abs(t[states] - q[states]).max()) for t, q in zip(tables, targets)]


def measure_convergence_time(errors: Sequence[float], eps: float, window: int) -> int | None:
    """First index t with errors[t .. t+window] all <= eps, or None.

    ``errors[0]`` is the error before any update and ``errors[t]`` the error
    after t steps. A band entered less than ``window`` steps before the end
    of the record is not confirmed.
    """
    run_start = None
    for t, e in enumerate(errors):
        if e <= eps:
            if run_start is None:
                run_start = t
            if t - run_start >= window:
                return run_start
        else:
            run_start = None
    return None


class ConvergenceMonitor:
    """Tracks each agent's sup-norm distance to an oracle while a trainer runs.

    Attach with ``trainer.on_step = monitor``; stepping stops being useful
    once :attr:`confirmed` is true.
    """

    def __init__(self, agents, oracle: NashQSolution, env: Environment, eps: float,
                 window: int | None = None, record: bool = False):
        self.agents = agents
        self.env = env
        self.eps = eps
        self.window = window if window is not None else 10 * len(env.active_states()) * len(env.joint_actions())
        self.states = env.active_states()
        self.targets = [oracle.low_q_view(a.index, env.action_sizes) for a in agents]
        # flat (s, k, a, q*) lists so the per-step check stays in plain Python
        self._flat = [[(s, k, a, float(t[s, k, a])) for s in self.states
                       for k in range(t.shape[1]) for a in range(t.shape[2])] for t in self.targets]
        self.t = 0
        self.entered = [None] * len(agents)
        self.converged_at: list[int | None] = [None] * len(agents)
        self.history: list[list[float]] | None = [] if record else None
        self._check()

    def errors(self) -> list[float]:
        out = []
        for agent, flat in zip(self.agents, self._flat):
            data = agent.low.data
            out.append(max((abs(data[s][k][a] - q) for s, k, a, q in flat), default=0.0))
        return out

    def _check(self):
        errs = self.errors()
        if self.history is not None:
            self.history.append(errs)
        for i, e in enumerate(errs):
            if self.converged_at[i] is not None:
                continue
            if e <= self.eps:
                if self.entered[i] is None:
                    self.entered[i] = self.t
                if self.t - self.entered[i] >= self.window:
                    self.converged_at[i] = self.entered[i]
            else:
                self.entered[i] = None

    def __call__(self, trainer, s, ja, out):
        self.t += 1
        self._check()

    @property
    def confirmed(self) -> bool:
        return all(c is not None for c in self.converged_at)

    @property
    def step(self) -> int | None:
        """Convergence step of the slowest agent."""
        if not self.confirmed:
            return None
        return max(self.converged_at)
