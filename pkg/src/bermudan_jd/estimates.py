"""Monte Carlo bound estimates with confidence intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["BoundEstimate", "estimate_from_samples"]


@dataclass(frozen=True)
class BoundEstimate:
    """Monte Carlo mean of a pricing bound with its sampling error.

    ``wall_time_s`` is runtime metadata; it is excluded from the
    deterministic report serialization.
    """

    kind: str
    mean: float
    stderr: float
    n_paths: int
    seed: object = None
    wall_time_s: float = float("nan")

    @property
    def ci95_halfwidth(self) -> float:
        return 1.96 * self.stderr

    def as_record(self) -> dict:
        return {
            "kind": self.kind,
            "mean": self.mean,
            "stderr": self.stderr,
            "ci95_halfwidth": self.ci95_halfwidth,
            "n_paths": self.n_paths,
            "seed": list(self.seed) if isinstance(self.seed, tuple) else self.seed,
        }


def estimate_from_samples(kind: str, samples: np.ndarray, seed=None,
                          wall_time_s: float = float("nan")) -> BoundEstimate:
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    stderr = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return BoundEstimate(kind=kind, mean=float(samples.mean()), stderr=stderr,
                         n_paths=n, seed=seed, wall_time_s=wall_time_s)
