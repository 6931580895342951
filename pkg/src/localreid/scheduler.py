"""Epoch-indexed schedules for the clustering density radius.

The default ``noise_robust`` schedule rises from a low radius to a high one
over the first half of training (cosine warmup), descends to a steady value
by the 75% mark (cosine annealing), then holds that plateau. Four alternative
shapes used for ablations are provided, plus a constant schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

KINDS = (
    "noise_robust",
    "only_warmup",
    "only_annealing",
    "one_cosine_cycle",
    "one_and_half_cosine_cycle",
    "fixed",
)

DEFAULT_EPS_LO = 0.5
DEFAULT_EPS_HI = 0.7
DEFAULT_EPS_STEADY = 0.6
DEFAULT_TOTAL_EPOCHS = 40


@dataclass(frozen=True)
class EpsSchedule:
    kind: str
    eps_lo: float = DEFAULT_EPS_LO
    eps_hi: float = DEFAULT_EPS_HI
    eps_steady: float = DEFAULT_EPS_STEADY
    total_epochs: int = DEFAULT_TOTAL_EPOCHS

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 < self.eps_lo <= self.eps_steady <= self.eps_hi < 1.0:
            raise ValueError(
                "need 0 < eps_lo <= eps_steady <= eps_hi < 1, got "
                f"({self.eps_lo}, {self.eps_steady}, {self.eps_hi})"
            )
        if self.total_epochs < 4:
            raise ValueError("total_epochs must be >= 4")


def epsilon_at(s: EpsSchedule, epoch: int) -> float:
    """Density radius at an integer epoch; always within [eps_lo, eps_hi]."""
    E = s.total_epochs
    if not 0 <= epoch < E:
        raise ValueError(f"epoch {epoch} outside [0, {E})")
    t = float(epoch)
    lo, hi, steady = s.eps_lo, s.eps_hi, s.eps_steady
    span = hi - lo
    if s.kind == "fixed":
        return steady
    if s.kind == "noise_robust":
        half, three_q = E / 2.0, 3.0 * E / 4.0
        if t < half:
            return lo + span * (1.0 - math.cos(math.pi * t / half)) / 2.0
        if t < three_q:
            return steady + (hi - steady) * (1.0 + math.cos(math.pi * (t - half) / (E / 4.0))) / 2.0
        return steady
    if s.kind == "only_warmup":
        return lo + span * (1.0 - math.cos(math.pi * t / E)) / 2.0
    if s.kind == "only_annealing":
        return lo + span * (1.0 + math.cos(math.pi * t / E)) / 2.0
    if s.kind == "one_cosine_cycle":
        return lo + span * (1.0 - math.cos(2.0 * math.pi * t / E)) / 2.0
    # one_and_half_cosine_cycle: full cycle plus a half, ending at eps_hi
    return lo + span * (1.0 - math.cos(3.0 * math.pi * t / E)) / 2.0


def schedule_curve(s: EpsSchedule) -> NDArray[np.float64]:
    """The whole schedule as an array of length total_epochs."""
    return np.array([epsilon_at(s, t) for t in range(s.total_epochs)])


def fixed_sweep(values, total_epochs: int = DEFAULT_TOTAL_EPOCHS) -> list[EpsSchedule]:
    """One constant schedule per value; used for fixed-radius ablation sweeps."""
    out = []
    for v in values:
        v = float(v)
        if not 0.0 < v < 1.0:
            raise ValueError(f"fixed radius must lie in (0, 1), got {v}")
        out.append(EpsSchedule("fixed", v, v, v, total_epochs))
    return out
