from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RATE = "RATE"
LP = "LP"
LD = "LD"


@dataclass(frozen=True)
class UtilityMatrix:
    """Nonnegative |B| x |K| scores that order greedy picks."""

    values: np.ndarray
    source: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("utility matrix must be 2-D")
        if (v < 0).any():
            raise ValueError("utilities must be nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    def scaled(self, c: float) -> "UtilityMatrix":
        return UtilityMatrix(self.values * c, self.source)
