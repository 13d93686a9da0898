"""Key-and-door mazes parsed from text layouts.

Layout alphabet: ``#`` wall, ``.`` floor, ``S`` start, ``T`` target,
``a``-``e`` keys and ``A``-``E`` the matching doors.  Walking onto a key
collects it; a door can be entered once its key is held.  The state is the
cell plus one flag bit per key, so the key flags are invisible to the
decision classes used for constraints.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple

import numpy as np

from ..mdp import Environment, as_reward

ACTIONS = ("up", "down", "left", "right")
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))
KEYS = "abcde"
DOORS = "ABCDE"
ALPHABET = set("#.ST") | set(KEYS) | set(DOORS)


class LayoutError(ValueError):
    """Malformed, inconsistent or unsolvable layout."""


@dataclass(frozen=True)
class GridLayout:
    rows: tuple[str, ...]
    cells: tuple[tuple[int, int], ...]
    keys: str

    @property
    def height(self) -> int:
        return len(self.rows)

    @property
    def width(self) -> int:
        return len(self.rows[0])

    @property
    def n_flags(self) -> int:
        return 1 << len(self.keys)

    @property
    def horizon_cap(self) -> int:
        return 4 * self.width * self.height

    def char(self, pos: tuple[int, int]) -> str:
        return self.rows[pos[0]][pos[1]]

    def state(self, pos: tuple[int, int], flags: int = 0) -> int:
        return self.cells.index(pos) * self.n_flags + flags

    def position(self, state: int) -> tuple[tuple[int, int], int]:
        """(cell, flag bits) of a state index."""
        cell, flags = divmod(state, self.n_flags)
        return self.cells[cell], flags

    def find(self, ch: str) -> tuple[int, int]:
        for r, row in enumerate(self.rows):
            c = row.find(ch)
            if c >= 0:
                return r, c
        raise KeyError(ch)


class GridWorld(NamedTuple):
    env: Environment
    reward: np.ndarray
    classes: np.ndarray
    layout: GridLayout


def _read_rows(text: str) -> tuple[str, ...]:
    rows = tuple(line.rstrip("\r") for line in text.strip("\n").splitlines() if line.strip())
    if not rows:
        raise LayoutError("empty layout")
    if len({len(r) for r in rows}) != 1:
        raise LayoutError("layout is not rectangular")
    bad = set("".join(rows)) - ALPHABET
    if bad:
        raise LayoutError(f"unknown layout characters: {''.join(sorted(bad))}")
    return rows


def parse_gridworld(text: str) -> GridWorld:
    """Build (env, reward, decision-class map, layout) from layout text.

    Every non-target decision costs -1; the target is absorbing with reward 0.
    """
    rows = _read_rows(text)
    flat = "".join(rows)
    for ch in "ST":
        if flat.count(ch) != 1:
            raise LayoutError(f"layout needs exactly one '{ch}', found {flat.count(ch)}")
    keys = "".join(k for k in KEYS if k in flat)
    for door in DOORS:
        if door in flat and door.lower() not in flat:
            raise LayoutError(f"door {door} has no matching key")
    for k in keys:
        if flat.count(k) != 1:
            raise LayoutError(f"key {k} appears {flat.count(k)} times")
    cells = tuple((r, c) for r, row in enumerate(rows) for c, ch in enumerate(row) if ch != "#")
    layout = GridLayout(rows, cells, keys)
    n_flags = layout.n_flags
    cell_id = {pos: i for i, pos in enumerate(cells)}
    target = layout.find("T")

    n_states = len(cells) * n_flags
    nxt = np.empty((n_states, len(ACTIONS)), dtype=np.int64)
    reward = np.full((n_states, len(ACTIONS)), -1.0)
    labels = []
    for pos in cells:
        for flags in range(n_flags):
            s = cell_id[pos] * n_flags + flags
            labels.append(f"({pos[0]},{pos[1]})|{flags:0{max(len(keys), 1)}b}")
            if pos == target:
                nxt[s] = s
                reward[s] = 0.0
                continue
            for a, (dr, dc) in enumerate(MOVES):
                dest = (pos[0] + dr, pos[1] + dc)
                nxt[s, a] = s
                if dest not in cell_id:
                    continue
                ch = layout.char(dest)
                if ch in DOORS and not flags >> keys.index(ch.lower()) & 1:
                    continue
                new_flags = flags | (1 << keys.index(ch)) if ch in keys else flags
                nxt[s, a] = cell_id[dest] * n_flags + new_flags

    sigma = np.zeros(n_states)
    sigma[layout.state(layout.find("S"))] = 1.0
    terminal = frozenset(cell_id[target] * n_flags + f for f in range(n_flags))
    env = Environment.from_successors(
        sigma, nxt, state_labels=tuple(labels), action_labels=ACTIONS, terminal=terminal
    )
    if not any(env.reachable()[s] for s in terminal):
        raise LayoutError("target is unreachable from the start")
    classes = np.repeat(np.arange(len(cells)), n_flags)
    classes.flags.writeable = False
    return GridWorld(env, as_reward(reward, env), classes, layout)


BUILTIN_LAYOUTS = ("simple", "independent", "correlated", "corridor")


def load_layout(name: str) -> str:
    """Text of a bundled layout (see ``BUILTIN_LAYOUTS``)."""
    if name not in BUILTIN_LAYOUTS:
        raise KeyError(f"unknown layout {name!r}")
    return resources.files(__package__).joinpath("layouts", f"{name}.txt").read_text(encoding="utf-8")


def landmark_steps(world: GridWorld, trajectory) -> dict[str, list[int]]:
    """Trajectory steps that fetch each key ("K"+key) or enter each door ("D"+door).

    A key's steps are the pickup move plus the earlier moves made from
    cells that the agent walks back over after the pickup (the detour into
    a dead end).  A door's step is the move that enters the door cell.
    """
    layout = world.layout
    cells = [layout.position(s)[0] for s in trajectory.states]
    after = cells[1:] + ([layout.position(trajectory.final_state)[0]] if trajectory.final_state is not None else [])
    marks: dict[str, list[int]] = {}
    for t, dest in enumerate(after):
        ch = layout.char(dest)
        if ch in DOORS:
            marks.setdefault("D" + ch, []).append(t)
        elif ch in KEYS and f"K{ch}" not in marks:
            revisited = set(cells[t + 1:])
            back = t
            while back > 0 and cells[back - 1] in revisited and cells[back] in revisited:
                back -= 1
            marks["K" + ch] = list(range(back, t + 1))
    return marks
