"""Synthetic terminal-world environment ("GridHack") for end-to-end tests.

GridHack emits observations shaped exactly like real episode records: a
24x80 char/color screen plus a cursor that tracks the avatar. One coin is on
the map at a time, always within 8 cells of the avatar; picking it up scores
points, collecting enough reveals a staircase, and descending regenerates
the level one floor deeper. Dynamics, spawns and episode termination are a
pure function of the seed, so rollouts are replayable.

The adapter contract (reset/step/EnvStep) is what policy evaluation runs
against; a real-game adapter can implement the same three members.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import SCREEN_COLS, SCREEN_ROWS
from .errors import SteppedAfterDone
from .prng import SplitMix64
from .repack import RawEpisode, RawStepTuple

# action ids (subset of the configured vocabulary; everything else is a no-op)
WAIT, NORTH, EAST, SOUTH, WEST = 0, 1, 2, 3, 4
MOVES = {NORTH: (-1, 0), EAST: (0, 1), SOUTH: (1, 0), WEST: (0, -1)}

_CH_WALL, _CH_FLOOR, _CH_AVATAR, _CH_COIN, _CH_STAIRS = (
    ord("#"), ord("."), ord("@"), ord("$"), ord(">"))

_TOP, _BOTTOM = 4, 18          # playfield rows (inclusive)
_LEFT, _RIGHT = 20, 59
_SPAWN_RADIUS = 6
_COIN_VALUE = 25
_COINS_PER_LEVEL = 4


@dataclass
class EnvStep:
    tty_chars: np.ndarray   # [24, 80] u1
    tty_colors: np.ndarray  # [24, 80] i1
    tty_cursor: np.ndarray  # [2] i2
    reward: int
    done: bool
    info: dict

    def observation(self) -> dict:
        return {"tty_chars": self.tty_chars, "tty_colors": self.tty_colors,
                "tty_cursor": self.tty_cursor}


class GridHack:
    def __init__(self, horizon: int = 200, max_depth: int = 3):
        self.horizon = horizon
        self.max_depth = max_depth
        self._prng: SplitMix64 | None = None
        self._done = True

    def reset(self, seed: int = 0) -> EnvStep:
        self._prng = SplitMix64(seed)
        self._done = False
        self._turn = 0
        self._score = 0
        self._level = 1
        self._max_level = 1
        self._avatar = (11, 40)
        self._coins_left = _COINS_PER_LEVEL
        self._stairs = None
        self._coin = self._spawn_near(self._avatar)
        return self._emit(reward=0)

    def _spawn_near(self, origin: tuple[int, int]) -> tuple[int, int]:
        r0, c0 = origin
        while True:
            r = max(_TOP, r0 - _SPAWN_RADIUS) + self._prng.bounded(
                min(_BOTTOM, r0 + _SPAWN_RADIUS) - max(_TOP, r0 - _SPAWN_RADIUS) + 1)
            c = max(_LEFT, c0 - _SPAWN_RADIUS) + self._prng.bounded(
                min(_RIGHT, c0 + _SPAWN_RADIUS) - max(_LEFT, c0 - _SPAWN_RADIUS) + 1)
            if (r, c) != origin and (r, c) != self._stairs:
                return (r, c)

    def step(self, action: int) -> EnvStep:
        if self._done:
            raise SteppedAfterDone("reset() required after a terminal step")
        self._turn += 1
        if action in MOVES:
            dr, dc = MOVES[action]
            r, c = self._avatar[0] + dr, self._avatar[1] + dc
            if _TOP <= r <= _BOTTOM and _LEFT <= c <= _RIGHT:
                self._avatar = (r, c)

        reward = 0
        if self._coin is not None and self._avatar == self._coin:
            reward = _COIN_VALUE * self._level
            self._score += reward
            self._coins_left -= 1
            if self._coins_left > 0:
                self._coin = self._spawn_near(self._avatar)
            else:
                self._coin = None
                self._stairs = self._spawn_near(self._avatar)
        elif self._stairs is not None and self._avatar == self._stairs:
            if self._level >= self.max_depth:
                self._done = True
            else:
                self._level += 1
                self._max_level = max(self._max_level, self._level)
                self._stairs = None
                self._coins_left = _COINS_PER_LEVEL
                self._coin = self._spawn_near(self._avatar)

        if self._turn >= self.horizon:
            self._done = True
        return self._emit(reward)

    def _emit(self, reward: int) -> EnvStep:
        chars = np.full((SCREEN_ROWS, SCREEN_COLS), ord(" "), dtype=np.uint8)
        colors = np.zeros((SCREEN_ROWS, SCREEN_COLS), dtype=np.int8)

        chars[_TOP - 1, _LEFT - 1:_RIGHT + 2] = _CH_WALL
        chars[_BOTTOM + 1, _LEFT - 1:_RIGHT + 2] = _CH_WALL
        chars[_TOP - 1:_BOTTOM + 2, _LEFT - 1] = _CH_WALL
        chars[_TOP - 1:_BOTTOM + 2, _RIGHT + 1] = _CH_WALL
        chars[_TOP:_BOTTOM + 1, _LEFT:_RIGHT + 1] = _CH_FLOOR
        colors[_TOP - 1:_BOTTOM + 2, _LEFT - 1:_RIGHT + 2] = 8

        if self._stairs is not None:
            chars[self._stairs] = _CH_STAIRS
            colors[self._stairs] = 7
        if self._coin is not None:
            chars[self._coin] = _CH_COIN
            colors[self._coin] = 11
        chars[self._avatar] = _CH_AVATAR
        colors[self._avatar] = 15

        # no playfield glyphs in the status text (the scripted expert greps
        # the whole screen for them) and nothing that changes every step
        status = f"Dlvl:{self._level}".encode()
        chars[23, :len(status)] = np.frombuffer(status, dtype=np.uint8)
        colors[23, :len(status)] = 7

        cursor = np.asarray(self._avatar, dtype=np.int16)
        return EnvStep(tty_chars=chars, tty_colors=colors, tty_cursor=cursor,
                       reward=reward, done=self._done,
                       info={"score": self._score, "depth": self._max_level})


def scripted_policy(observation: dict) -> int:
    """Deterministic expert: walk to the coin, else to the stairs, closing
    the row gap before the column gap. Memoryless by construction."""
    chars = observation["tty_chars"]
    cursor = observation["tty_cursor"]
    ar, ac = int(cursor[0]), int(cursor[1])

    target = None
    for glyph in (_CH_COIN, _CH_STAIRS):
        cells = np.argwhere(chars == glyph)
        if cells.size:
            dists = np.abs(cells[:, 0] - ar) + np.abs(cells[:, 1] - ac)
            target = cells[int(np.argmin(dists))]
            break
    if target is None:
        return WAIT
    dr = int(target[0]) - ar
    dc = int(target[1]) - ac
    if dr != 0:
        return NORTH if dr < 0 else SOUTH
    if dc != 0:
        return EAST if dc > 0 else WEST
    return WAIT


def record_episode(env: GridHack, policy, seed: int, task_id: str,
                   episode_id: str) -> RawEpisode:
    """Roll one episode and capture it in the raw source convention: each
    step carries the reward received *before* it; the final action's reward
    lands in final_score_delta."""
    step = env.reset(seed)
    steps: list[RawStepTuple] = []
    prev_reward = 0
    score = 0
    final_delta = 0
    depth = 1
    while True:
        action = policy(step.observation())
        nxt = env.step(action)
        terminal = nxt.done
        steps.append(RawStepTuple(
            tty_chars=step.tty_chars, tty_colors=step.tty_colors,
            tty_cursor=(int(step.tty_cursor[0]), int(step.tty_cursor[1])),
            action=action, prev_reward=prev_reward, score=score,
            terminal=terminal))
        prev_reward = nxt.reward
        score += nxt.reward
        depth = nxt.info["depth"]
        if terminal:
            final_delta = nxt.reward
            break
        step = nxt
    return RawEpisode(task_id=task_id, episode_id=episode_id, steps=steps,
                      death_level=depth, final_score_delta=final_delta)
