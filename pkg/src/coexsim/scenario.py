"""Highway topology: vehicle placement, technology assignment, mobility."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class Tech(enum.Enum):
    ITSG5 = "ItsG5"
    LTEV2X = "LteV2x"


class Direction(enum.Enum):
    FORWARD = 1
    BACKWARD = -1


@dataclass
class RoadConfig:
    """Straight highway segment with lanes_per_direction lanes each way."""

    length_m: float = 2000.0
    lanes_per_direction: int = 3
    lane_width_m: float = 4.0
    density_veh_per_km: float = 61.5
    speed_mps: float = 38.889  # 140 km/h

    def validate(self) -> list[str]:
        errors = []
        if self.length_m <= 0:
            errors.append("length_m must be > 0")
        if self.lanes_per_direction < 1:
            errors.append("lanes_per_direction must be >= 1")
        if self.density_veh_per_km <= 0:
            errors.append("density_veh_per_km must be > 0")
        if self.speed_mps < 0:
            errors.append("speed_mps must be >= 0")
        return errors


@dataclass
class Vehicle:
    id: int
    lane_index: int
    pos_m: float
    direction: Direction
    tech: Tech


def round_half_away(x: float) -> int:
    """Round to nearest integer, ties away from zero (not banker's)."""
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def vehicle_count(cfg: RoadConfig) -> int:
    return round_half_away(cfg.density_veh_per_km * cfg.length_m / 1000.0)


def itsg5_count(n_vehicles: int, itsg5_fraction: float) -> int:
    return round_half_away(itsg5_fraction * n_vehicles)


def spawn(cfg: RoadConfig, itsg5_fraction: float, rng: np.random.Generator) -> list[Vehicle]:
    """Place vehicles uniformly on the road and assign technologies.

    Vehicle count is density * length rounded half away from zero; exactly
    itsg5_count(N, fraction) of them get ITS-G5 radios, chosen uniformly at
    random. Lanes are i.i.d. uniform over both directions; the first half of
    the lane indices drives forward, the second half backward.
    """
    if not 0.0 <= itsg5_fraction <= 1.0:
        raise ValueError(f"itsg5_fraction must be in [0,1], got {itsg5_fraction}")
    n = vehicle_count(cfg)
    n_lanes = 2 * cfg.lanes_per_direction
    positions = rng.uniform(0.0, cfg.length_m, size=n)
    lanes = rng.integers(0, n_lanes, size=n)
    n_g5 = itsg5_count(n, itsg5_fraction)
    g5_ids = set(rng.permutation(n)[:n_g5].tolist())
    vehicles = []
    for i in range(n):
        lane = int(lanes[i])
        direction = Direction.FORWARD if lane < cfg.lanes_per_direction else Direction.BACKWARD
        tech = Tech.ITSG5 if i in g5_ids else Tech.LTEV2X
        vehicles.append(Vehicle(i, lane, float(positions[i]), direction, tech))
    return vehicles


def advance_positions(
    pos_m: np.ndarray, dir_sign: np.ndarray, speed_mps: float, dt_s: float, length_m: float
) -> np.ndarray:
    """Move positions along the road with wrap-around (vectorized)."""
    out = np.mod(pos_m + dir_sign * speed_mps * dt_s, length_m)
    # np.mod of a tiny negative offset can round up to exactly length_m.
    return np.where(out >= length_m, 0.0, out)


def advance(vehicles: list[Vehicle], cfg: RoadConfig, dt_s: float) -> None:
    """Advance all vehicles in place by dt_s seconds."""
    if dt_s < 0:
        raise ValueError("dt_s must be >= 0")
    for v in vehicles:
        wrapped = np.mod(v.pos_m + v.direction.value * cfg.speed_mps * dt_s, cfg.length_m)
        v.pos_m = float(wrapped) if wrapped < cfg.length_m else 0.0


def lateral_offset_m(lane_index: int, lane_width_m: float) -> float:
    return lane_index * lane_width_m


def distance_m(a: Vehicle, b: Vehicle, lane_width_m: float = 4.0) -> float:
    """Euclidean distance on the unwrapped line (mobility wraps, geometry does not)."""
    dx = a.pos_m - b.pos_m
    dy = (a.lane_index - b.lane_index) * lane_width_m
    return math.hypot(dx, dy)


def distance_matrix(pos_m: np.ndarray, lane_index: np.ndarray, lane_width_m: float) -> np.ndarray:
    dx = pos_m[:, None] - pos_m[None, :]
    dy = (lane_index[:, None] - lane_index[None, :]) * lane_width_m
    return np.hypot(dx, dy)
