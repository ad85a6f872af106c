"""Dense tabular value stores and the plain-text checkpoint format.

Tables are nested Python lists indexed ``[state][others_index][slot]`` where
``slot`` is an own action (low level) or an advisor id (high level). Scalar
reads and writes dominate the learners' inner loops, and lists beat numpy
scalar indexing there by a wide margin.
"""
from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Iterable

import numpy as np


class QTable:
    """Values keyed by (state, others' joint-action index, slot), default 0."""

    def __init__(self, num_states: int, num_others: int, num_slots: int, fill: float = 0.0):
        self.shape = (num_states, num_others, num_slots)
        self.data = [[[fill] * num_slots for _ in range(num_others)] for _ in range(num_states)]

    def row(self, s: int, k: int) -> list[float]:
        return self.data[s][k]

    def get(self, s: int, k: int, a: int) -> float:
        return self.data[s][k][a]

    def set(self, s: int, k: int, a: int, value: float) -> None:
        self.data[s][k][a] = value

    def max(self, s: int, k: int) -> float:
        return max(self.data[s][k])

    def argmax(self, s: int, k: int) -> int:
        row = self.data[s][k]
        best = 0
        for i in range(1, len(row)):
            if row[i] > row[best]:
                best = i
        return best

    def to_array(self) -> np.ndarray:
        return np.array(self.data, dtype=float).reshape(self.shape)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "QTable":
        arr = np.asarray(arr, dtype=float)
        t = cls(*arr.shape)
        t.data = arr.tolist()
        return t

    def copy(self) -> "QTable":
        return QTable.from_array(self.to_array())

    def entries(self) -> Iterable[tuple[int, int, int, float]]:
        for s, block in enumerate(self.data):
            for k, row in enumerate(block):
                for a, v in enumerate(row):
                    yield s, k, a, v

    def __eq__(self, other):
        return isinstance(other, QTable) and self.shape == other.shape and self.data == other.data


class Counter3:
    """Visit counts with the same key layout as :class:`QTable`."""

    def __init__(self, num_states: int, num_others: int, num_slots: int):
        self.data = [[[0] * num_slots for _ in range(num_others)] for _ in range(num_states)]

    def bump(self, s: int, k: int, a: int) -> int:
        row = self.data[s][k]
        row[a] += 1
        return row[a]

    def get(self, s: int, k: int, a: int) -> int:
        return self.data[s][k][a]


def fingerprint(arrays: dict[str, np.ndarray]) -> str:
    """Stable hash of a set of named arrays (used to prove tables did not move)."""
    h = hashlib.sha256()
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype=float)
        h.update(name.encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# checkpoint text format: "TAG s a_minus_j_index a_or_ad value"
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def dump_checkpoint(sections: dict[str, QTable | np.ndarray]) -> str:
    """Serialize tables, one entry per line.

    3-D tables write ``TAG s k slot value``; 2-D tables (actor logits, which
    never see other agents' actions) write ``-`` in the joint-action column.
    Lines are sorted by (tag, s, k, slot).
    """
    rows = []
    for tag, tbl in sections.items():
        if " " in tag or not tag:
            raise ValueError(f"bad section tag {tag!r}")
        arr = tbl.to_array() if isinstance(tbl, QTable) else np.asarray(tbl, dtype=float)
        if arr.ndim == 3:
            for (s, k, a), v in np.ndenumerate(arr):
                rows.append(((tag, s, k, a), f"{tag} {s} {k} {a} {_fmt(v)}"))
        elif arr.ndim == 2:
            for (s, a), v in np.ndenumerate(arr):
                rows.append(((tag, s, -1, a), f"{tag} {s} - {a} {_fmt(v)}"))
        else:
            raise ValueError(f"section {tag} has unsupported rank {arr.ndim}")
    rows.sort(key=lambda r: r[0])
    return "".join(line + "\n" for _, line in rows)


def load_checkpoint(text: str) -> dict[str, np.ndarray]:
    cells: dict[str, dict[tuple[int, ...], float]] = {}
    flat: dict[str, bool] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"checkpoint line {lineno}: expected 5 fields, got {len(parts)}")
        tag, s, k, a, v = parts
        key = (int(s), int(a)) if k == "-" else (int(s), int(k), int(a))
        if flat.setdefault(tag, k == "-") != (k == "-"):
            raise ValueError(f"checkpoint line {lineno}: section {tag} mixes table ranks")
        cells.setdefault(tag, {})[key] = float(v)
    out = {}
    for tag, entries in cells.items():
        shape = tuple(max(key[i] for key in entries) + 1 for i in range(len(next(iter(entries)))))
        arr = np.zeros(shape)
        for key, v in entries.items():
            arr[key] = v
        out[tag] = arr
    return out


def save_checkpoint(path: str | Path, sections: dict[str, QTable | np.ndarray]) -> None:
    Path(path).write_text(dump_checkpoint(sections))


def read_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    return load_checkpoint(Path(path).read_text())
