"""Photon-pair source, detection windows and collection throughput.

The pair source is a Poisson process. The configured coincidence rate is
the rate of *detected* coincidences, so detector efficiency is already
folded into it; efficiency is only used when deciding whether a second
pair could have been seen within the gate plus dead time of the first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import NamedTuple, Optional

import numpy as np

from .qstate import CoincidenceProbs, JointState, coincidence_probs

# Outcome codes: 0 is the unprimed detector (1 or 2), 1 the primed one (1' or 2').
DET = 0
DET_PRIME = 1


@dataclass(frozen=True)
class SourceParams:
    coincidence_rate: float = 5000.0
    window: float = 1e-3
    cycle_period: float = 22e-3
    gate: float = 5e-9
    dead_time: float = 35e-9
    detector_efficiency: float = 0.60
    dark_rate: float = 400.0
    accidental_rate: float = 1e-5
    ambiguous_setting_prob: float = 0.119
    double_pair_key_frac: float = 0.007

    _RATES = ("coincidence_rate", "window", "cycle_period", "gate", "dead_time", "dark_rate", "accidental_rate")
    _FRACTIONS = ("detector_efficiency", "ambiguous_setting_prob", "double_pair_key_frac")

    def __post_init__(self):
        for name in self._RATES:
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ValueError(f"source.{name} must be a finite non-negative number, got {value!r}")
        for name in self._FRACTIONS:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"source.{name} must lie in [0, 1], got {value!r}")
        if not self.window < self.cycle_period:
            raise ValueError("source.window must be shorter than source.cycle_period")
        if self.double_pair_key_frac >= 1.0:
            raise ValueError("source.double_pair_key_frac must be below 1")
        if self.double_pair_key_frac > 0 and self.detector_efficiency == 0:
            raise ValueError("a nonzero double-pair fraction needs a nonzero detector efficiency")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @property
    def mean_pairs(self) -> float:
        """Expected detected coincidences per collection window."""
        return self.coincidence_rate * self.window

    @property
    def double_pair_interval(self) -> float:
        return self.gate + self.dead_time

    @property
    def pair_emission_rate(self) -> float:
        """Emission rate of extra pairs implied by the double-pair fraction.

        Chosen so that the chance of at least one detectable extra pair
        inside gate + dead time equals `double_pair_key_frac`.
        """
        if self.double_pair_key_frac == 0:
            return 0.0
        return -math.log1p(-self.double_pair_key_frac) / (self.detector_efficiency * self.double_pair_interval)

    @property
    def spurious_rate(self) -> float:
        """Accidental coincidences per second, background and dark counts.

        Dark-dark coincidences between the two parties (two detectors each)
        are added to the configured accidental rate.
        """
        return self.accidental_rate + (2.0 * self.dark_rate) ** 2 * self.gate


@dataclass(frozen=True)
class DetectionRecord:
    window_index: int
    alice_outcome: int
    bob_outcome: int
    double_pair: bool = False
    from_dark_or_accidental: bool = False


class WindowStats(NamedTuple):
    p_at_least_one: float
    p_more_than_one: float


class Throughput(NamedTuple):
    max_rate: float
    usable_rate: float


def poisson_window_stats(lam: float) -> WindowStats:
    if lam < 0:
        raise ValueError(f"mean count must be non-negative, got {lam!r}")
    p0 = math.exp(-lam)
    return WindowStats(1.0 - p0, 1.0 - p0 * (1.0 + lam))


def window_statistics(params: SourceParams) -> WindowStats:
    return poisson_window_stats(params.mean_pairs)


def throughput(params: SourceParams) -> Throughput:
    max_rate = 1.0 / params.cycle_period
    p1 = window_statistics(params).p_at_least_one
    return Throughput(max_rate, max_rate * p1 * (1.0 - params.ambiguous_setting_prob))


def outcome_table(probs: CoincidenceProbs) -> np.ndarray:
    """Normalized probabilities as a 2x2 array indexed [alice_outcome, bob_outcome]."""
    p = probs.normalized()
    # clip round-off below zero so samplers accept the table
    return np.clip(np.array([[p.p_12, p.p_12p], [p.p_1p2, p.p_1p2p]]), 0.0, None)


def sample_outcome(state: JointState, alpha: float, beta: float, rng: np.random.Generator) -> tuple[int, int]:
    """Draw one (alice_outcome, bob_outcome) coincidence.

    Probabilities are renormalized, so a lossy channel's pass probability
    has to be resolved by the caller.
    """
    table = outcome_table(coincidence_probs(state, alpha, beta)).ravel()
    k = int(rng.choice(4, p=table / table.sum()))
    return k // 2, k % 2


def sample_outcomes(tables: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized draw; `tables` has shape (n, 2, 2) of normalized probabilities."""
    cdf = np.cumsum(tables.reshape(-1, 4), axis=1)
    u = rng.random(len(cdf))[:, None]
    k = np.minimum((u >= cdf).sum(axis=1), 3)
    return (k // 2).astype(np.uint8), (k % 2).astype(np.uint8)


def draw_double_pair(params: SourceParams, rng: np.random.Generator, size=None):
    """Whether a detectable extra pair fell within gate + dead time."""
    extra = rng.poisson(params.pair_emission_rate * params.double_pair_interval, size=size)
    return rng.binomial(extra, params.detector_efficiency) > 0


def simulate_window(
    params: SourceParams,
    state: JointState,
    alpha: float,
    beta: float,
    rng: np.random.Generator,
    window_index: int = 0,
) -> Optional[DetectionRecord]:
    """Simulate one collection window and keep only its first event.

    Real and spurious events are ordered uniformly at random inside the
    window; a spurious first event gives independent uniform outcomes.
    """
    n_real = int(rng.poisson(params.mean_pairs))
    n_spur = int(rng.poisson(params.spurious_rate * params.window))
    total = n_real + n_spur
    if total == 0:
        return None
    if rng.random() < n_spur / total:
        a, b = (int(x) for x in rng.integers(0, 2, size=2))
        return DetectionRecord(window_index, a, b, False, True)
    a, b = sample_outcome(state, alpha, beta, rng)
    double = bool(draw_double_pair(params, rng))
    return DetectionRecord(window_index, a, b, double, False)
