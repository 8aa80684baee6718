"""Benchmark POMDPs: Tiger, slippery GridWorld and the pedestrian Crosswalk."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from erpbvi.errors import ConfigError
from erpbvi.model import TabularPomdp

DEFAULT_DISCOUNT = 0.95

# --- Tiger ---------------------------------------------------------------

TIGER_LEFT, TIGER_RIGHT = 0, 1
LISTEN, OPEN_LEFT, OPEN_RIGHT = 0, 1, 2
HEAR_LEFT, HEAR_RIGHT = 0, 1


@dataclass(frozen=True)
class TigerParams:
    p_correct: float = 0.85
    r_tiger: float = -100.0
    r_escape: float = 10.0
    r_listen: float = -1.0
    discount: float = DEFAULT_DISCOUNT
    # classic Tiger: opening a door resets the tiger uniformly; False ends the episode
    reset_on_open: bool = True

    def __post_init__(self):
        if not 0.0 <= self.p_correct <= 1.0:
            raise ConfigError(f"p_correct must lie in [0, 1], got {self.p_correct}")


def build_tiger(params: TigerParams = TigerParams()) -> TabularPomdp:
    n_states = 2 if params.reset_on_open else 3
    T = np.zeros((n_states, 3, n_states))
    Z = np.zeros((3, n_states, 2))
    R = np.zeros((n_states, 3))
    p = params.p_correct

    for s in (TIGER_LEFT, TIGER_RIGHT):
        T[s, LISTEN, s] = 1.0
        for a in (OPEN_LEFT, OPEN_RIGHT):
            if params.reset_on_open:
                T[s, a, :] = 0.5
            else:
                T[s, a, 2] = 1.0
    Z[LISTEN, TIGER_LEFT] = [p, 1 - p]
    Z[LISTEN, TIGER_RIGHT] = [1 - p, p]
    Z[OPEN_LEFT, :, :] = 0.5
    Z[OPEN_RIGHT, :, :] = 0.5

    R[:, LISTEN] = params.r_listen
    R[TIGER_LEFT, OPEN_LEFT] = params.r_tiger
    R[TIGER_RIGHT, OPEN_LEFT] = params.r_escape
    R[TIGER_LEFT, OPEN_RIGHT] = params.r_escape
    R[TIGER_RIGHT, OPEN_RIGHT] = params.r_tiger

    states = ["tiger-left", "tiger-right"]
    terminal = ()
    b0 = [0.5, 0.5]
    if not params.reset_on_open:
        T[2, :, 2] = 1.0
        Z[LISTEN, 2] = [0.5, 0.5]
        R[2, :] = 0.0
        states.append("done")
        terminal = (2,)
        b0 = [0.5, 0.5, 0.0]
    return TabularPomdp(
        T,
        Z,
        R,
        params.discount,
        terminal_states=terminal,
        initial_belief=b0,
        state_labels=states,
        action_labels=["listen", "open-left", "open-right"],
        observation_labels=["hear-left", "hear-right"],
    )


# --- GridWorld -----------------------------------------------------------

NORTH, SOUTH, EAST, WEST = 0, 1, 2, 3
_MOVES = {NORTH: (0, 1), SOUTH: (0, -1), EAST: (1, 0), WEST: (-1, 0)}
OBS_NORMAL, OBS_GOAL, OBS_FAILURE = 0, 1, 2

Cell = Tuple[int, int]


def _default_failures() -> tuple:
    return tuple((3, y) for y in range(1, 5))


GOAL_LAYOUTS = {
    "robustness": ((5, 0),),
    "right": ((5, 3),),
    "top": ((3, 5),),
}


@dataclass(frozen=True)
class GridWorldParams:
    """Cells are ``(x, y)`` with ``(0, 0)`` the bottom-left corner."""

    width: int = 6
    height: int = 6
    goal_variant: str = "robustness"
    goal_cells: tuple | None = None
    failure_cells: tuple = field(default_factory=_default_failures)
    include_failures: bool = True
    p_slip: float = 0.0
    start: Cell = (0, 0)
    goal_reward: float = 1.0
    failure_reward: float = -1.0
    discount: float = DEFAULT_DISCOUNT

    @property
    def goals(self) -> tuple:
        if self.goal_cells is not None:
            return tuple(tuple(c) for c in self.goal_cells)
        if self.goal_variant not in GOAL_LAYOUTS:
            raise ConfigError(f"unknown goal variant {self.goal_variant!r}")
        return GOAL_LAYOUTS[self.goal_variant]

    @property
    def failures(self) -> tuple:
        return tuple(tuple(c) for c in self.failure_cells) if self.include_failures else ()

    def state_index(self, cell: Cell) -> int:
        x, y = cell
        return y * self.width + x

    @property
    def terminal_index(self) -> int:
        return self.width * self.height

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("grid dimensions must be positive")
        if not 0.0 <= self.p_slip <= 1.0:
            raise ConfigError("p_slip must lie in [0, 1]")
        goals, fails = set(self.goals), set(self.failures)
        if not goals:
            raise ConfigError("at least one goal cell is required")
        for x, y in goals | fails | {tuple(self.start)}:
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise ConfigError(f"cell {(x, y)} lies outside the grid")
        if goals & fails:
            raise ConfigError("goal and failure cells overlap")
        if tuple(self.start) in goals | fails:
            raise ConfigError("start cell must not be terminal")


def build_gridworld(params: GridWorldParams = GridWorldParams()) -> TabularPomdp:
    params.validate()
    W, H = params.width, params.height
    n = W * H + 1
    term = params.terminal_index
    goals, fails = set(params.goals), set(params.failures)
    T = np.zeros((n, 4, n))
    R = np.zeros((n, 4))
    obs_of = np.full(n, OBS_NORMAL)

    for x, y in itertools.product(range(W), range(H)):
        s = params.state_index((x, y))
        if (x, y) in goals or (x, y) in fails:
            T[s, :, term] = 1.0
            R[s, :] = params.goal_reward if (x, y) in goals else params.failure_reward
            obs_of[s] = OBS_GOAL if (x, y) in goals else OBS_FAILURE
            continue
        for a, (dx, dy) in _MOVES.items():
            nx, ny = x + dx, y + dy
            if 0 <= nx < W and 0 <= ny < H:
                T[s, a, params.state_index((nx, ny))] += 1.0 - params.p_slip
                T[s, a, s] += params.p_slip
            else:
                T[s, a, s] = 1.0
    T[term, :, term] = 1.0

    Z = np.zeros((4, n, 3))
    Z[:, np.arange(n), obs_of] = 1.0
    b0 = np.zeros(n)
    b0[params.state_index(tuple(params.start))] = 1.0
    labels = [f"({x},{y})" for y in range(H) for x in range(W)] + ["terminal"]
    return TabularPomdp(
        T,
        Z,
        R,
        params.discount,
        terminal_states=(term,),
        initial_belief=b0,
        state_labels=labels,
        action_labels=["north", "south", "east", "west"],
        observation_labels=["normal", "goal", "failure"],
    )


# --- Crosswalk -----------------------------------------------------------

FORWARD, BACKWARD, STAY = 0, 1, 2


@dataclass(frozen=True)
class CrosswalkParams:
    n_positions: int = 10
    car_speeds: tuple = (0, 1, 2)
    p_brake_roadside: float = 0.5
    p_brake_street: float = 0.9
    street_start: int = 3
    collision_car_zone: tuple = (7, 9)
    obs_correct: float = 0.8
    obs_adjacent: float = 0.1
    collision_penalty: float = -100.0
    crossing_reward: float = 10.0
    discount: float = DEFAULT_DISCOUNT
    initial_ped: int = 0
    initial_car: int = 0

    def validate(self) -> None:
        for name in ("p_brake_roadside", "p_brake_street", "obs_correct", "obs_adjacent"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if abs(self.obs_correct + 2 * self.obs_adjacent - 1.0) > 1e-9:
            raise ConfigError("observation kernel must sum to 1")
        lo, hi = self.collision_car_zone
        if not (0 <= lo <= hi < self.n_positions):
            raise ConfigError("collision zone out of range")
        if not 0 <= self.street_start < self.n_positions - 1:
            raise ConfigError("street start out of range")
        if list(self.car_speeds) != list(range(len(self.car_speeds))):
            raise ConfigError("car speeds must be 0, 1, ..., k")

    @property
    def passed(self) -> int:
        # car positions past the last cell collapse into one absorbing value
        return self.n_positions

    @property
    def n_car_values(self) -> int:
        return self.n_positions + 1

    @property
    def far_side(self) -> int:
        return self.n_positions - 1

    def state_index(self, ped: int, car: int, speed: int) -> int:
        return (ped * self.n_car_values + car) * len(self.car_speeds) + speed

    @property
    def n_states(self) -> int:
        return self.n_positions * self.n_car_values * len(self.car_speeds) + 1

    def in_street(self, ped: int) -> bool:
        return ped > self.street_start

    def collided(self, ped: int, car: int) -> bool:
        lo, hi = self.collision_car_zone
        return self.in_street(ped) and lo <= car <= hi

    def observation_index(self, ped: int, car_obs: int) -> int:
        return ped * self.n_car_values + car_obs


def crosswalk_car_kernel(params: CrosswalkParams) -> np.ndarray:
    """``K[true_car, observed_car]``; the noise mass that falls off the ends is renormalized."""
    m = params.n_car_values
    K = np.zeros((m, m))
    for c in range(m):
        K[c, c] = params.obs_correct
        if c > 0:
            K[c, c - 1] = params.obs_adjacent
        if c < m - 1:
            K[c, c + 1] = params.obs_adjacent
        K[c] /= K[c].sum()
    return K


def build_crosswalk(params: CrosswalkParams = CrosswalkParams()) -> TabularPomdp:
    params.validate()
    n = params.n_states
    term = n - 1
    n_speed = len(params.car_speeds)
    vmax = n_speed - 1
    n_obs = params.n_positions * params.n_car_values
    T = np.zeros((n, 3, n))
    R = np.zeros((n, 3))
    Z = np.zeros((3, n, n_obs))
    K = crosswalk_car_kernel(params)
    moves = {FORWARD: 1, BACKWARD: -1, STAY: 0}

    for ped in range(params.n_positions):
        for car in range(params.n_car_values):
            for v in range(n_speed):
                s = params.state_index(ped, car, v)
                for o_car in range(params.n_car_values):
                    Z[:, s, params.observation_index(ped, o_car)] = K[car, o_car]
                if car != params.passed and params.collided(ped, car):
                    T[s, :, term] = 1.0
                    R[s, :] = params.collision_penalty
                    continue
                if ped == params.far_side:
                    T[s, :, term] = 1.0
                    R[s, :] = params.crossing_reward
                    continue
                p_brake = params.p_brake_street if params.in_street(ped) else params.p_brake_roadside
                for a, d in moves.items():
                    ped2 = min(max(ped + d, 0), params.far_side)
                    for v2, p in ((max(v - 1, 0), p_brake), (min(v + 1, vmax), 1.0 - p_brake)):
                        if p == 0.0:
                            continue
                        car2 = params.passed if car == params.passed else car + v2
                        car2 = min(car2, params.passed)
                        T[s, a, params.state_index(ped2, car2, v2)] += p
    T[term, :, term] = 1.0
    Z[:, term, :] = 0.0
    Z[:, term, 0] = 1.0

    b0 = np.zeros(n)
    for v in range(n_speed):
        b0[params.state_index(params.initial_ped, params.initial_car, v)] = 1.0 / n_speed
    labels = [
        f"ped{p}-car{'passed' if c == params.passed else c}-v{v}"
        for p in range(params.n_positions)
        for c in range(params.n_car_values)
        for v in range(n_speed)
    ] + ["terminal"]
    obs_labels = [
        f"ped{p}-car{'passed' if c == params.passed else c}"
        for p in range(params.n_positions)
        for c in range(params.n_car_values)
    ]
    return TabularPomdp(
        T,
        Z,
        R,
        params.discount,
        terminal_states=(term,),
        initial_belief=b0,
        state_labels=labels,
        action_labels=["forward", "backward", "stay"],
        observation_labels=obs_labels,
    )


def build(env: str, **overrides) -> TabularPomdp:
    """Build a named environment with keyword overrides of its parameters."""
    builders = {
        "tiger": (TigerParams, build_tiger),
        "gridworld": (GridWorldParams, build_gridworld),
        "crosswalk": (CrosswalkParams, build_crosswalk),
    }
    if env not in builders:
        raise ConfigError(f"unknown environment {env!r}")
    params_cls, builder = builders[env]
    try:
        params = params_cls(**overrides)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return builder(params)
