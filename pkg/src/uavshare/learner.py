"""Per-UAV tabular Q-learning over the cells of one region.

States are row-major cell indices inside the region.  The compiled primitives
(``_select_action``, ``_reward``, ``_q_update``) are shared with the engine's
episode kernel, so the Python entry points and the kernel consume random
numbers identically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numba
import numpy as np

from .errors import ValidationError

UP, DOWN, LEFT, RIGHT, STAY = 0, 1, 2, 3, 4
N_ACTIONS = 5
ACTION_NAMES = ("up", "down", "left", "right", "stay")
# (d_row, d_col); "up" decreases the row index
OFFSETS = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))


@dataclass(frozen=True)
class LearningParams:
    alpha: float = 0.1
    gamma: float = 0.3
    epsilon: float = 0.1
    beta1: float = 1.0
    beta2: float = 0.5
    beta3: float = -1.0
    rate_rtol: float = 1e-9

    def problems(self) -> list[str]:
        out = []
        if not 0 < self.alpha <= 1:
            out.append("alpha must lie in (0, 1]")
        if not 0 <= self.gamma < 1:
            out.append("gamma must lie in [0, 1)")
        if not 0 <= self.epsilon <= 1:
            out.append("epsilon must lie in [0, 1]")
        if not all(math.isfinite(b) for b in (self.beta1, self.beta2, self.beta3)):
            out.append("rewards must be finite")
        elif not self.beta1 > self.beta2 > 0 > self.beta3:
            out.append("rewards must satisfy beta1 > beta2 > 0 > beta3")
        if not self.rate_rtol >= 0:
            out.append("rate_rtol must be >= 0")
        return out

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ValidationError("learning", "; ".join(problems))

    @property
    def q_bound(self) -> float:
        """Largest |Q| reachable from a zero table: max|beta| / (1 - gamma)."""
        return max(abs(self.beta1), abs(self.beta2), abs(self.beta3)) / (1.0 - self.gamma)


@lru_cache(maxsize=None)
def region_tables(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Legal-action mask and successor table for a ``width x height`` region.

    Illegal entries of the successor table hold -1.
    """
    n = width * height
    legal = np.zeros((n, N_ACTIONS), dtype=np.bool_)
    trans = np.full((n, N_ACTIONS), -1, dtype=np.int64)
    for s in range(n):
        row, col = divmod(s, width)
        for a, (dr, dc) in enumerate(OFFSETS):
            r2, c2 = row + dr, col + dc
            if 0 <= r2 < height and 0 <= c2 < width:
                legal[s, a] = True
                trans[s, a] = r2 * width + c2
    legal.flags.writeable = False
    trans.flags.writeable = False
    return legal, trans


def legal_actions(state: int, width: int, height: int) -> tuple[int, ...]:
    legal, _ = region_tables(width, height)
    return tuple(int(a) for a in np.flatnonzero(legal[state]))


def step_transition(state: int, action: int, width: int, height: int) -> int:
    _, trans = region_tables(width, height)
    nxt = int(trans[state, action])
    if nxt < 0:
        raise ValueError(f"action {ACTION_NAMES[action]} leaves the region from state {state}")
    return nxt


class QTable:
    """Dense ``states x 5`` action-value table for one region shape."""

    def __init__(self, width: int, height: int, values: np.ndarray | None = None):
        self.width, self.height = int(width), int(height)
        shape = (self.width * self.height, N_ACTIONS)
        if values is None:
            values = np.zeros(shape)
        values = np.asarray(values, dtype=np.float64)
        if values.shape != shape:
            raise ValueError(f"expected table of shape {shape}, got {values.shape}")
        self.values = values

    @property
    def n_states(self) -> int:
        return self.width * self.height

    @property
    def legal(self) -> np.ndarray:
        return region_tables(self.width, self.height)[0]

    @property
    def trans(self) -> np.ndarray:
        return region_tables(self.width, self.height)[1]

    def copy(self) -> "QTable":
        return QTable(self.width, self.height, self.values.copy())

    def greedy_action(self, state: int) -> int:
        """Best legal action, lowest index on ties (deterministic, used for inspection)."""
        row = np.where(self.legal[state], self.values[state], -np.inf)
        return int(np.argmax(row))

    def greedy_path(self, start: int, max_len: int | None = None) -> list[int]:
        """States visited by the deterministic greedy policy until it stays or loops."""
        max_len = self.n_states + 1 if max_len is None else max_len
        path, seen = [start], {start}
        s = start
        for _ in range(max_len):
            a = self.greedy_action(s)
            if a == STAY:
                break
            s = int(self.trans[s, a])
            if s in seen:
                path.append(s)
                break
            path.append(s)
            seen.add(s)
        return path

    def absorbing_state(self, start: int) -> int | None:
        """Cell where the greedy policy from ``start`` settles, or None if it cycles."""
        path = self.greedy_path(start)
        end = path[-1]
        return end if self.greedy_action(end) == STAY else None

    def save(self, path, **meta) -> None:
        header = " ".join(f"{k}={v}" for k, v in meta.items())
        lines = ["# uavshare q-table (state-major, action-minor)",
                 f"# width={self.width} height={self.height} states={self.n_states} actions={N_ACTIONS} {header}".rstrip()]
        lines += [repr(float(v)) for v in self.values.ravel()]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> tuple["QTable", dict]:
        meta, values = {}, []
        for line in Path(path).read_text().splitlines():
            if line.startswith("#"):
                for token in line[1:].split():
                    if "=" in token:
                        key, value = token.split("=", 1)
                        meta[key] = value
            elif line.strip():
                values.append(float(line))
        width, height = int(meta["width"]), int(meta["height"])
        if len(values) != width * height * N_ACTIONS:
            raise ValueError(f"{path}: expected {width * height * N_ACTIONS} values, found {len(values)}")
        return cls(width, height, np.array(values).reshape(width * height, N_ACTIONS)), meta


@dataclass
class AgentState:
    cell: int
    energy: float
    last_rate: float
    alive: bool = True


@numba.njit(cache=True)
def _random_legal(legal_row, rng):
    n = 0
    for a in range(5):
        if legal_row[a]:
            n += 1
    k = min(int(rng.random() * n), n - 1)
    for a in range(5):
        if legal_row[a]:
            if k == 0:
                return a
            k -= 1
    return 4


@numba.njit(cache=True)
def _select_action(q_row, legal_row, epsilon, rng):
    # one coin when epsilon > 0, then one more draw only for exploration or a tie
    if epsilon > 0.0 and rng.random() < epsilon:
        return _random_legal(legal_row, rng)
    best = -np.inf
    count = 0
    for a in range(5):
        if legal_row[a]:
            v = q_row[a]
            if v > best:
                best = v
                count = 1
            elif v == best:
                count += 1
    if count == 1:
        for a in range(5):
            if legal_row[a] and q_row[a] == best:
                return a
    k = min(int(rng.random() * count), count - 1)
    for a in range(5):
        if legal_row[a] and q_row[a] == best:
            if k == 0:
                return a
            k -= 1
    return 4


@numba.njit(cache=True)
def _reward(moved, rate_now, rate_prev, beta1, beta2, beta3, rtol):
    if not moved:
        return beta2
    if abs(rate_now - rate_prev) <= rtol * max(abs(rate_now), abs(rate_prev)):
        return beta3
    return beta1 if rate_now > rate_prev else beta3


@numba.njit(cache=True)
def _q_update(q, s, a, r, s_next, legal, alpha, gamma):
    best = -np.inf
    for a2 in range(5):
        if legal[s_next, a2] and q[s_next, a2] > best:
            best = q[s_next, a2]
    q[s, a] = (1.0 - alpha) * q[s, a] + alpha * (r + gamma * best)


def choose_action(q: QTable, s: int, params: LearningParams, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice over the legal actions of state ``s``.

    With probability epsilon the action is uniform over the legal set;
    otherwise it is a maximizer of ``Q(s, .)``, ties broken uniformly.
    """
    return int(_select_action(q.values[s], q.legal[s], float(params.epsilon), rng))


def random_action(q: QTable, s: int, rng: np.random.Generator) -> int:
    return int(_random_legal(q.legal[s], rng))


def reward(moved: bool, rate_now: float, rate_prev: float, params: LearningParams) -> float:
    """Moving and improving earns beta1, staying beta2, any other move beta3."""
    return float(_reward(bool(moved), float(rate_now), float(rate_prev),
                         params.beta1, params.beta2, params.beta3, params.rate_rtol))


def q_update(q: QTable, s: int, a: int, r: float, s_next: int, params: LearningParams) -> QTable:
    if not q.legal[s, a]:
        raise ValueError(f"action {ACTION_NAMES[a]} is not legal in state {s}")
    _q_update(q.values, int(s), int(a), float(r), int(s_next), q.legal, float(params.alpha), float(params.gamma))
    return q
