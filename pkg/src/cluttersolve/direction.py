"""Retrieval direction proposal and disturbance scoring."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np

from .dynamics import DEFAULT_R, DynamicsPredictor, make_query
from .observation import Observation, adjacency

UP = np.array([0.0, 0.0, 1.0])
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class DirectionConfig:
    q: int = 64
    elevation_floor: float = math.radians(15.0)
    tie_tol: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if not 0.0 <= self.elevation_floor <= math.pi / 2:
            raise ValueError("elevation_floor must lie in [0, pi/2]")


@dataclass(frozen=True)
class DirectionCandidate:
    dir: np.ndarray
    safety: float


def propose_directions(cfg: DirectionConfig, seed: Optional[int] = None) -> np.ndarray:
    """``q`` unit directions: +z first, then a Fibonacci spiral above the elevation floor."""
    return _spiral(cfg.q, float(cfg.elevation_floor), int(cfg.seed if seed is None else seed)).copy()


@lru_cache(maxsize=64)
def _spiral(q: int, floor: float, seed: int) -> np.ndarray:
    out = np.empty((q, 3))
    out[0] = UP
    m = q - 1
    z_lo = math.sin(floor)
    phase = (seed * GOLDEN_ANGLE) % (2 * math.pi)
    for i in range(m):
        # equal-area bands of the spherical cap, lowest first
        z = z_lo + (1.0 - z_lo) * (i + 0.5) / m
        rho = math.sqrt(max(0.0, 1.0 - z * z))
        a = phase + i * GOLDEN_ANGLE
        out[i + 1] = (rho * math.cos(a), rho * math.sin(a), z)
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    out.setflags(write=False)
    return out


def disturbance(obs: Observation, mover_id: int, dirs: np.ndarray, predictor: DynamicsPredictor,
                eps_adj: Optional[float] = None, r: int = DEFAULT_R) -> np.ndarray:
    """Summed predicted neighbour movement for each direction (parents included)."""
    dirs = np.asarray(dirs, dtype=float).reshape(-1, 3)
    total = np.zeros(len(dirs))
    for j in sorted(adjacency(obs, mover_id, eps_adj)):
        q = make_query(obs, mover_id, j, dirs[0], r, eps_adj, check_adjacent=False)
        total += predictor.magnitudes(q, dirs)
    return total


def safety_of(total: float) -> float:
    return 1.0 / (1.0 + float(total))


def score_direction(obs: Observation, mover_id: int, d, predictor: DynamicsPredictor,
                    eps_adj: Optional[float] = None, r: int = DEFAULT_R) -> float:
    obs.get(mover_id)
    return safety_of(disturbance(obs, mover_id, np.asarray(d, dtype=float), predictor, eps_adj, r)[0])


def select_min(totals: np.ndarray, dirs: np.ndarray, tie_tol: float) -> int:
    """Index of the least-disturbing direction.

    Totals within a relative ``tie_tol`` of the minimum tie (so a common
    positive rescaling never changes the pick); ties go to the direction
    closest to +z, then to the lower index.
    """
    best = float(totals.min())
    tied = np.nonzero(totals <= best * (1.0 + tie_tol))[0]
    ang = np.arccos(np.clip(dirs[tied, 2], -1.0, 1.0))
    order = np.lexsort((tied, ang))
    return int(tied[order[0]])


def best_direction(obs: Observation, mover_id: int, cfg: DirectionConfig, predictor: DynamicsPredictor,
                   eps_adj: Optional[float] = None, r: int = DEFAULT_R) -> Tuple[np.ndarray, float]:
    obs.get(mover_id)
    dirs = propose_directions(cfg)
    if not adjacency(obs, mover_id, eps_adj):
        return dirs[0].copy(), 1.0
    totals = disturbance(obs, mover_id, dirs, predictor, eps_adj, r)
    k = select_min(totals, dirs, cfg.tie_tol)
    return dirs[k].copy(), safety_of(totals[k])


def rank_directions(obs: Observation, mover_id: int, cfg: DirectionConfig, predictor: DynamicsPredictor,
                    eps_adj: Optional[float] = None, r: int = DEFAULT_R) -> List[DirectionCandidate]:
    dirs = propose_directions(cfg)
    totals = disturbance(obs, mover_id, dirs, predictor, eps_adj, r)
    return [DirectionCandidate(dirs[k].copy(), safety_of(totals[k])) for k in range(len(dirs))]
