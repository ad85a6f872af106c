"""Enumerable N-agent stochastic games.

Every environment exposes integer states, per-agent discrete action spaces,
per-agent rewards and an explicit transition model, so that tabular learners,
the Nash-Q oracle and the covering-time estimator can all share one contract.

``step`` is a pure function of ``(state, joint_action, rng)``: environments hold
no mutable episode state. Episode horizons are enforced by :class:`Episode`,
which reports the cap as a truncation (the learners keep bootstrapping
through it) rather than as a true terminal.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

JointAction = tuple[int, ...]


class ContractViolation(ValueError):
    """Raised when a caller breaks an environment's preconditions."""


@dataclass(frozen=True)
class StepOutcome:
    next_state: int
    rewards: tuple[float, ...]
    terminal: bool
    truncated: bool = False
    winners: frozenset[int] = field(default_factory=frozenset)

    @property
    def done(self) -> bool:
        return self.terminal or self.truncated


@dataclass(frozen=True)
class Transition:
    """One outcome branch of ``Environment.transitions``."""

    prob: float
    next_state: int
    rewards: tuple[float, ...]
    terminal: bool
    winners: frozenset[int] = frozenset()


class Environment:
    """Base class for the enumerable stochastic-game contract.

    Subclasses set ``num_agents``, ``num_states``, ``action_sizes``,
    ``discount``, ``reward_bound`` and ``horizon`` and implement
    :meth:`transitions`, :meth:`reset` and :meth:`is_terminal`.
    """

    num_agents: int
    num_states: int
    action_sizes: tuple[int, ...]
    discount: float
    reward_bound: tuple[float, ...]
    horizon: int | None = None
    dead_states: frozenset[int] = frozenset()

    def reset(self, rng: np.random.Generator) -> int:
        raise NotImplementedError

    def is_terminal(self, state: int) -> bool:
        raise NotImplementedError

    def transitions(self, state: int, joint_action: Sequence[int]) -> list[Transition]:
        raise NotImplementedError

    def check_joint_action(self, joint_action: Sequence[int]) -> JointAction:
        ja = tuple(int(a) for a in joint_action)
        if len(ja) != self.num_agents:
            raise ContractViolation(
                f"joint action has {len(ja)} entries, environment has {self.num_agents} agents"
            )
        for j, (a, n) in enumerate(zip(ja, self.action_sizes)):
            if not 0 <= a < n:
                raise ContractViolation(f"agent {j} action {a} outside [0, {n})")
        return ja

    def check_state(self, state: int) -> int:
        if not 0 <= state < self.num_states:
            raise ContractViolation(f"state {state} outside [0, {self.num_states})")
        if self.is_terminal(state):
            raise ContractViolation(f"cannot step from terminal state {state}")
        if state in self.dead_states:
            raise ContractViolation(f"state {state} is unreachable and has no transitions")
        return state

    def step(self, state: int, joint_action: Sequence[int], rng: np.random.Generator) -> StepOutcome:
        branches = self.transitions(state, joint_action)
        if len(branches) == 1:
            b = branches[0]
        else:
            # one uniform draw per stochastic step keeps the RNG stream aligned
            u = rng.random()
            acc = 0.0
            b = branches[-1]
            for cand in branches:
                acc += cand.prob
                if u < acc:
                    b = cand
                    break
        return StepOutcome(b.next_state, b.rewards, b.terminal, False, b.winners)

    def active_states(self) -> list[int]:
        """States from which a transition can be taken."""
        return [
            s for s in range(self.num_states)
            if not self.is_terminal(s) and s not in self.dead_states
        ]

    def joint_actions(self) -> list[JointAction]:
        return list(itertools.product(*(range(n) for n in self.action_sizes)))

    def q_max(self, agent: int) -> float:
        return self.reward_bound[agent] / (1.0 - self.discount)


def enumerate_state_joint_actions(env: Environment) -> list[tuple[int, JointAction]]:
    """All (state, joint action) pairs in canonical order: state-major, then
    joint actions lexicographically with agent 0 most significant."""
    jas = env.joint_actions()
    return [(s, ja) for s in range(env.num_states) for ja in jas]


class Episode:
    """Steps an environment from ``reset`` while counting towards its horizon.

    The step that reaches the horizon is flagged ``truncated``; a step that
    lands in a true terminal keeps ``terminal`` and is never truncated.
    """

    def __init__(self, env: Environment, rng: np.random.Generator, horizon: int | None = None):
        self.env = env
        self.rng = rng
        self.horizon = env.horizon if horizon is None else horizon
        self.t = 0
        self.state = env.reset(rng)
        self.finished = False

    def step(self, joint_action: Sequence[int]) -> StepOutcome:
        if self.finished:
            raise ContractViolation("episode already finished")
        out = self.env.step(self.state, joint_action, self.rng)
        self.t += 1
        if not out.terminal and self.horizon is not None and self.t >= self.horizon:
            out = StepOutcome(out.next_state, out.rewards, False, True, out.winners)
        self.state = out.next_state
        self.finished = out.done
        return out


# ---------------------------------------------------------------------------
# Toy advisor grid
# ---------------------------------------------------------------------------

class ToyAdvisorGrid(Environment):
    """Six-state single-agent grid used to contrast TLQL and MA-TLQL updates.

    From S1 action R leads to S2 and D to S3; from S2, R reaches the goal G
    and D falls into S4. S3 and S4 pay -1, G pays +1, all three terminal.
    S5 only mirrors the layout and can never be entered.
    """

    STATES = ("S1", "S2", "S3", "S4", "S5", "G")
    ACTIONS = ("R", "D")
    S1, S2, S3, S4, S5, G = range(6)
    R, D = 0, 1

    _table = {
        (0, 0): (1, 0.0, False),
        (0, 1): (2, -1.0, True),
        (1, 0): (5, 1.0, True),
        (1, 1): (3, -1.0, True),
    }

    def __init__(self, discount: float = 0.9, horizon: int | None = 10):
        self.num_agents = 1
        self.num_states = 6
        self.action_sizes = (2,)
        self.discount = discount
        self.reward_bound = (1.0,)
        self.horizon = horizon
        self.dead_states = frozenset({self.S5})

    def reset(self, rng: np.random.Generator) -> int:
        return self.S1

    def is_terminal(self, state: int) -> bool:
        return state in (self.S3, self.S4, self.G)

    def transitions(self, state, joint_action):
        self.check_state(state)
        (a,) = self.check_joint_action(joint_action)
        nxt, r, term = self._table[(state, a)]
        winners = frozenset({0}) if nxt == self.G else frozenset()
        return [Transition(1.0, nxt, (r,), term, winners)]


def toy_grid_step(state: int, action: int) -> StepOutcome:
    env = ToyAdvisorGrid()
    tr = env.transitions(state, (action,))[0]
    return StepOutcome(tr.next_state, tr.rewards, tr.terminal, False, tr.winners)


# ---------------------------------------------------------------------------
# Matrix games and small multi-state chains
# ---------------------------------------------------------------------------

class MatrixGame(Environment):
    """Stage games on one or more states.

    ``payoffs[s]`` has shape ``(N,) + action_sizes``; ``payoffs[s][j]`` is
    agent j's reward tensor at state s. ``successors[s]`` maps a joint action to either a next
    state or a list of ``(prob, next_state)`` pairs; when omitted every state
    loops on itself. Episodes end only at the horizon.
    """

    def __init__(
        self,
        payoffs: Sequence[np.ndarray],
        successors: Sequence[dict] | None = None,
        discount: float = 0.9,
        horizon: int | None = 100,
        start_state: int | None = 0,
    ):
        self.payoffs = [np.asarray(p, dtype=float) for p in payoffs]
        self.num_states = len(self.payoffs)
        self.num_agents = self.payoffs[0].shape[0]
        self.action_sizes = tuple(int(n) for n in self.payoffs[0].shape[1:])
        if len(self.action_sizes) != self.num_agents:
            raise ContractViolation("payoff tensor rank must equal the number of agents")
        for p in self.payoffs:
            if p.shape != self.payoffs[0].shape:
                raise ContractViolation("all states need payoff tensors of identical shape")
        if not 0.0 <= discount < 1.0:
            raise ContractViolation("discount must lie in [0, 1)")
        self.discount = discount
        self.horizon = horizon
        self.start_state = start_state
        self.successors = successors
        bound = np.max(np.abs(np.stack(self.payoffs)), axis=tuple(i for i in range(self.num_agents + 2) if i != 1))
        self.reward_bound = tuple(float(b) for b in bound)

    def reset(self, rng):
        if self.start_state is None:
            return int(rng.integers(self.num_states))
        return self.start_state

    def is_terminal(self, state):
        return False

    def _successors(self, state, ja):
        if self.successors is None:
            return [(1.0, state)]
        nxt = self.successors[state][ja]
        if isinstance(nxt, (int, np.integer)):
            return [(1.0, int(nxt))]
        return [(float(p), int(s)) for p, s in nxt]

    def transitions(self, state, joint_action):
        self.check_state(state)
        ja = self.check_joint_action(joint_action)
        rewards = tuple(float(self.payoffs[state][(j,) + ja]) for j in range(self.num_agents))
        return [Transition(p, s2, rewards, False) for p, s2 in self._successors(state, ja)]

    @classmethod
    def from_text(cls, text: str, **kwargs) -> "MatrixGame":
        """Parse single-state payoffs, one line per joint action ``a1 .. aN : r1 .. rN``."""
        entries = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if ":" not in line:
                raise ContractViolation(f"line {lineno}: expected 'a1 .. aN : r1 .. rN'")
            lhs, rhs = line.split(":", 1)
            ja = tuple(int(x) for x in lhs.split())
            rs = tuple(float(x) for x in rhs.split())
            if len(ja) != len(rs):
                raise ContractViolation(f"line {lineno}: {len(ja)} actions but {len(rs)} rewards")
            entries[ja] = rs
        if not entries:
            raise ContractViolation("empty payoff file")
        n = len(next(iter(entries)))
        sizes = tuple(max(ja[j] for ja in entries) + 1 for j in range(n))
        tensor = np.zeros((n,) + sizes)
        for ja in itertools.product(*(range(k) for k in sizes)):
            if ja not in entries:
                raise ContractViolation(f"payoff file misses joint action {ja}")
            for j in range(n):
                tensor[(j,) + ja] = entries[ja][j]
        return cls([tensor], **kwargs)

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> "MatrixGame":
        return cls.from_text(Path(path).read_text(), **kwargs)

    def to_text(self, state: int = 0) -> str:
        lines = []
        for ja in self.joint_actions():
            rs = " ".join(repr(float(self.payoffs[state][(j,) + ja])) for j in range(self.num_agents))
            lines.append(" ".join(map(str, ja)) + " : " + rs)
        return "\n".join(lines) + "\n"


def matrix_game_step(game: MatrixGame, state: int, ja: Sequence[int], rng: np.random.Generator) -> StepOutcome:
    return game.step(state, ja, rng)


def identical_interest_game(reward: np.ndarray, **kwargs) -> MatrixGame:
    r = np.asarray(reward, dtype=float)
    return MatrixGame([np.stack([r] * r.ndim)], **kwargs)


def zero_sum_game(reward: np.ndarray, **kwargs) -> MatrixGame:
    r = np.asarray(reward, dtype=float)
    if r.ndim != 2:
        raise ContractViolation("zero-sum games are two-player")
    return MatrixGame([np.stack([r, -r])], **kwargs)


def coordination_chain(discount: float = 0.5, horizon: int | None = 100) -> MatrixGame:
    """Three-state, two-agent, two-action identical-interest game.

    Each state has a unique global optimum; where play goes next depends on
    whether the agents coordinated, so values differ across states.
    """
    rewards = np.array([
        [[1.0, 0.0], [0.0, 0.5]],
        [[0.2, 0.0], [0.0, 0.8]],
        [[0.0, 0.3], [0.6, 0.0]],
    ])
    succ = [
        {(0, 0): 1, (0, 1): 0, (1, 0): 0, (1, 1): 2},
        {(0, 0): 2, (0, 1): 0, (1, 0): 1, (1, 1): 0},
        {(0, 0): 2, (0, 1): 1, (1, 0): 0, (1, 1): 2},
    ]
    return MatrixGame([np.stack([r, r]) for r in rewards], succ, discount=discount, horizon=horizon)


# ---------------------------------------------------------------------------
# Gridworlds
# ---------------------------------------------------------------------------

MOVES = ((0, 0), (0, -1), (0, 1), (-1, 0), (1, 0))  # stay, up, down, left, right
MOVE_NAMES = ("stay", "up", "down", "left", "right")


@dataclass
class GridworldSpec:
    width: int = 4
    height: int = 4
    mode: str = "duel"
    starts: tuple[tuple[int, int], ...] | None = None
    evader_start: tuple[int, int] | None = None
    num_pursuers: int = 2
    capture_need: int = 2
    tag_reward: float = 1.0
    capture_reward: float = 1.0
    step_reward: float = 0.0
    max_steps: int = 50
    discount: float = 0.9


class Gridworld(Environment):
    """Small grid games with simultaneous moves.

    ``duel``: two agents; an agent that moves onto the cell its opponent
    occupied before the move tags it (+tag_reward / -tag_reward, terminal);
    mutual tags are a terminal draw.

    ``pursuit``: ``num_pursuers`` learning agents chase a scripted evader that
    takes a uniformly random legal move. Once at least ``capture_need``
    pursuers are within Manhattan distance 1 of the evader, every pursuer
    receives ``capture_reward`` and the episode ends.

    Moves are clamped at walls; agents that would end in the same cell stay
    put. The state is a single index over the product of cells (agents first,
    then the evader) plus one absorbing terminal index.
    """

    def __init__(self, spec: GridworldSpec | None = None, **kwargs):
        spec = spec or GridworldSpec(**kwargs)
        if spec.mode not in ("duel", "pursuit"):
            raise ContractViolation(f"unknown gridworld mode {spec.mode!r}")
        self.spec = spec
        self.width, self.height = spec.width, spec.height
        self.cells = spec.width * spec.height
        if spec.mode == "duel":
            self.num_agents = 2
            self.num_bodies = 2
        else:
            self.num_agents = spec.num_pursuers
            self.num_bodies = spec.num_pursuers + 1
        self.action_sizes = (len(MOVES),) * self.num_agents
        self.terminal_state = self.cells ** self.num_bodies
        self.num_states = self.terminal_state + 1
        self.discount = spec.discount
        self.horizon = spec.max_steps
        if spec.mode == "duel":
            self.reward_bound = (abs(spec.tag_reward) + abs(spec.step_reward),) * 2
        else:
            self.reward_bound = (abs(spec.capture_reward) + abs(spec.step_reward),) * self.num_agents
        starts = spec.starts
        if starts is None:
            corners = [(0, 0), (self.width - 1, self.height - 1), (self.width - 1, 0), (0, self.height - 1)]
            starts = tuple(corners[i % 4] for i in range(self.num_agents))
        if spec.mode == "pursuit":
            ev = spec.evader_start or (self.width // 2, self.height // 2)
            starts = tuple(starts) + (ev,)
        for c in starts:
            self._check_cell(c)
        self.start_positions = tuple(tuple(c) for c in starts)

    def _check_cell(self, c):
        x, y = c
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise ContractViolation(f"cell {c} outside {self.width}x{self.height} grid")

    def encode(self, positions: Sequence[tuple[int, int]]) -> int:
        idx = 0
        for x, y in positions:
            self._check_cell((x, y))
            idx = idx * self.cells + (y * self.width + x)
        return idx

    def decode(self, state: int) -> tuple[tuple[int, int], ...]:
        if state == self.terminal_state:
            raise ContractViolation("terminal state has no positions")
        cells = []
        for _ in range(self.num_bodies):
            state, c = divmod(state, self.cells)
            cells.append((c % self.width, c // self.width))
        return tuple(reversed(cells))

    def reset(self, rng):
        return self.encode(self.start_positions)

    def is_terminal(self, state):
        return state == self.terminal_state

    def move(self, cell, action):
        dx, dy = MOVES[action]
        x = min(max(cell[0] + dx, 0), self.width - 1)
        y = min(max(cell[1] + dy, 0), self.height - 1)
        return (x, y)

    def legal_moves(self, cell) -> list[int]:
        """Actions that actually change the cell, plus stay."""
        return [a for a in range(len(MOVES)) if a == 0 or self.move(cell, a) != cell]

    def _resolve(self, positions, joint_action):
        dest = [self.move(p, a) for p, a in zip(positions, joint_action)]
        # agents heading for a shared cell stay where they are; repeat until stable
        changed = True
        while changed:
            changed = False
            for i in range(len(dest)):
                for k in range(len(dest)):
                    if i != k and dest[i] == dest[k] and (dest[i] != positions[i] or dest[k] != positions[k]):
                        if dest[i] != positions[i]:
                            dest[i] = positions[i]
                            changed = True
                        if dest[k] != positions[k]:
                            dest[k] = positions[k]
                            changed = True
        return dest

    def transitions(self, state, joint_action):
        self.check_state(state)
        ja = self.check_joint_action(joint_action)
        pos = self.decode(state)
        if self.spec.mode == "duel":
            return [self._duel(pos, ja)]
        return self._pursuit(pos, ja)

    def _duel(self, pos, ja):
        sp = self.spec
        intended = [self.move(p, a) for p, a in zip(pos, ja)]
        tags = [ja[i] != 0 and intended[i] == pos[1 - i] for i in range(2)]
        step = (sp.step_reward, sp.step_reward)
        if tags[0] and tags[1]:
            return Transition(1.0, self.terminal_state, step, True)
        for i in range(2):
            if tags[i]:
                r = [sp.step_reward] * 2
                r[i] += sp.tag_reward
                r[1 - i] -= sp.tag_reward
                return Transition(1.0, self.terminal_state, tuple(r), True, frozenset({i}))
        dest = self._resolve(pos, ja)
        return Transition(1.0, self.encode(dest), step, False)

    def _pursuit(self, pos, ja):
        sp = self.spec
        pursuers, evader = list(pos[:-1]), pos[-1]
        dest = self._resolve(pursuers, ja)
        moves = self.legal_moves(evader)
        out = []
        for m in moves:
            ev = self.move(evader, m)
            near = sum(abs(d[0] - ev[0]) + abs(d[1] - ev[1]) <= 1 for d in dest)
            if near >= sp.capture_need:
                r = (sp.step_reward + sp.capture_reward,) * self.num_agents
                out.append(Transition(1.0 / len(moves), self.terminal_state, r, True,
                                      frozenset(range(self.num_agents))))
            else:
                r = (sp.step_reward,) * self.num_agents
                out.append(Transition(1.0 / len(moves), self.encode(dest + [ev]), r, False))
        return out

    def step(self, state, joint_action, rng):
        if self.spec.mode == "pursuit":
            branches = self.transitions(state, joint_action)
            b = branches[int(rng.integers(len(branches)))]
            return StepOutcome(b.next_state, b.rewards, b.terminal, False, b.winners)
        return super().step(state, joint_action, rng)


def gridworld_step(env: Gridworld, state: int, ja: Sequence[int], rng: np.random.Generator) -> StepOutcome:
    return env.step(state, ja, rng)


def iter_others(action_sizes: Sequence[int], agent: int) -> Iterator[JointAction]:
    sizes = [n for k, n in enumerate(action_sizes) if k != agent]
    return itertools.product(*(range(n) for n in sizes))


def others_count(action_sizes: Sequence[int], agent: int) -> int:
    return math.prod(n for k, n in enumerate(action_sizes) if k != agent)


def others_index(joint_action: Sequence[int], action_sizes: Sequence[int], agent: int) -> int:
    """Mixed-radix index of the other agents' actions, agent 0 most significant."""
    idx = 0
    for k, (a, n) in enumerate(zip(joint_action, action_sizes)):
        if k != agent:
            idx = idx * n + a
    return idx


def build_environment(desc: dict) -> Environment:
    """Construct an environment from a flat descriptor (as parsed from a config)."""
    kind = desc.get("kind", "toy-grid")
    gamma = float(desc.get("gamma", 0.9))
    if kind == "toy-grid":
        return ToyAdvisorGrid(discount=gamma, horizon=int(desc.get("horizon", 10)))
    if kind == "matrix":
        horizon = int(desc.get("horizon", 100))
        if "file" in desc:
            return MatrixGame.from_file(desc["file"], discount=gamma, horizon=horizon)
        preset = desc.get("preset", "coordination-chain")
        if preset == "coordination-chain":
            return coordination_chain(discount=gamma, horizon=horizon)
        if preset == "identical-2x2":
            return identical_interest_game([[1.0, 0.0], [0.0, 0.0]], discount=gamma, horizon=horizon)
        if preset == "matching-pennies":
            return zero_sum_game([[1.0, -1.0], [-1.0, 1.0]], discount=gamma, horizon=horizon)
        raise ContractViolation(f"unknown matrix preset {preset!r}")
    if kind == "gridworld":
        spec = GridworldSpec(
            width=int(desc.get("width", 4)),
            height=int(desc.get("height", 4)),
            mode=desc.get("mode", "duel"),
            num_pursuers=int(desc.get("pursuers", 2)),
            capture_need=int(desc.get("capture_need", 2)),
            tag_reward=float(desc.get("tag_reward", 1.0)),
            capture_reward=float(desc.get("capture_reward", 1.0)),
            step_reward=float(desc.get("step_reward", 0.0)),
            max_steps=int(desc.get("horizon", 50)),
            discount=gamma,
        )
        return Gridworld(spec)
    raise ContractViolation(f"unknown environment kind {kind!r}")
