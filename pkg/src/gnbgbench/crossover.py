"""Bracket-adaptive binomial crossover.

The raw crossover rate is remapped into one of two disjoint brackets
(bimodal CR). Which bracket is chosen oscillates sinusoidally over
generations and is biased by whether the individual is competitive
(objective strictly better than the population median). This module is
frozen: nothing here is reachable from the configuration-loop edit surface.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpecError


@dataclass
class CrossoverConfig:
    low_bracket: tuple[float, float] = (0.0, 0.15)
    high_bracket: tuple[float, float] = (0.85, 1.0)
    oscillation_period: int = 50
    oscillation_amplitude: float = 0.25
    competitiveness_weight: float = 0.25

    def check(self) -> None:
        lo, hi = self.low_bracket, self.high_bracket
        if not (0 <= lo[0] <= lo[1] <= 1 and 0 <= hi[0] <= hi[1] <= 1):
            raise InvalidSpecError("brackets must lie within [0, 1]")
        if lo[1] > hi[0]:
            raise InvalidSpecError("brackets must be disjoint (low below high)")
        if self.oscillation_period < 1:
            raise InvalidSpecError("oscillation_period must be >= 1")
        if self.oscillation_amplitude + self.competitiveness_weight > 0.5:
            raise InvalidSpecError("amplitude + weight must be <= 0.5")
        if self.oscillation_amplitude < 0 or self.competitiveness_weight < 0:
            raise InvalidSpecError("amplitude and weight must be nonnegative")


def bracket_cr(
    cr_raw: float,
    generation: int,
    competitive: bool,
    cfg: CrossoverConfig,
    rng: np.random.Generator,
) -> float:
    """Map a raw CR in [0,1] affinely into the high or low bracket.

    P(high) = 0.5 + amplitude*sin(2*pi*generation/period)
                  + weight*(+1 if competitive else -1), clipped to [0,1].
    """
    p_hi = (
        0.5
        + cfg.oscillation_amplitude * math.sin(2.0 * math.pi * generation / cfg.oscillation_period)
        + cfg.competitiveness_weight * (1.0 if competitive else -1.0)
    )
    p_hi = min(1.0, max(0.0, p_hi))
    lo, hi = (cfg.high_bracket if rng.uniform() < p_hi else cfg.low_bracket)
    return lo + cr_raw * (hi - lo)


def binomial_crossover(
    target: np.ndarray, mutant: np.ndarray, cr: float, rng: np.random.Generator
) -> np.ndarray:
    """Standard binomial crossover; the jrand gene always comes from the mutant."""
    dim = target.shape[0]
    mask = rng.random(dim) < cr
    mask[rng.integers(dim)] = True
    return np.where(mask, mutant, target)


def bracket_cr_batch(
    cr_raw: np.ndarray,
    generation: int,
    competitive: np.ndarray,
    cfg: CrossoverConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Vectorized bracket mapping; same math as bracket_cr per entry."""
    osc = cfg.oscillation_amplitude * math.sin(
        2.0 * math.pi * generation / cfg.oscillation_period
    )
    p_hi = 0.5 + osc + cfg.competitiveness_weight * np.where(competitive, 1.0, -1.0)
    np.clip(p_hi, 0.0, 1.0, out=p_hi)
    take_hi = rng.random(cr_raw.shape[0]) < p_hi
    lo0, lo1 = cfg.low_bracket
    hi0, hi1 = cfg.high_bracket
    return np.where(take_hi, hi0 + cr_raw * (hi1 - hi0), lo0 + cr_raw * (lo1 - lo0))


def binomial_crossover_batch(
    targets: np.ndarray, mutants: np.ndarray, crs: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    m, dim = targets.shape
    mask = rng.random((m, dim)) < crs[:, None]
    mask[np.arange(m), rng.integers(dim, size=m)] = True
    return np.where(mask, mutants, targets)


def make_crossover_fn(cfg: CrossoverConfig):
    """Batch crossover callable for the engine: (targets, mutants, cr_raws,
    generation, competitive_mask, rng) -> (trials, bracketed_crs)."""
    cfg.check()

    def crossover(targets, mutants, cr_raws, generation, competitive, rng):
        crs = bracket_cr_batch(cr_raws, generation, competitive, cfg, rng)
        return binomial_crossover_batch(targets, mutants, crs, rng), crs

    return crossover
