__copyright__ = "Copyright (C) 2026 switchq developers"

import dataclasses

import numpy as np

from switchq.exceptions import InvalidOverride

_ALGORITHMS = ("philox",)


@dataclasses.dataclass(frozen=True)
class RngSpec:
    """
    Counter-based random streams. The Philox key is (seed, stream) and the
    counter is (0, 0, lane, step), so the draws of step k of run r depend on
    nothing but (seed, r, k) and ensembles may run in any order.
    """

    seed: int
    stream: int = 0
    algorithm: str = "philox"

    def __post_init__(self):
        if self.algorithm not in _ALGORITHMS:
            raise InvalidOverride(
                self.algorithm, f"rng algorithm must be one of {_ALGORITHMS}"
            )
        if not 0 <= self.seed < 2**64 or not 0 <= self.stream < 2**64:
            raise InvalidOverride(
                (self.seed, self.stream), "seed and stream must be 64-bit"
            )

    @property
    def key(self) -> int:
        return int(self.seed) + (int(self.stream) << 64)

    def generator(self, step: int, lane: int = 0) -> np.random.Generator:
        counter = np.array([0, 0, lane, step], dtype=np.uint64)
        return np.random.Generator(
            np.random.Philox(key=self.key, counter=counter)
        )

    def uniforms(self, step: int, n: int, lane: int = 0) -> np.ndarray:
        return self.generator(step, lane).random(n)

    def for_run(self, run: int) -> "RngSpec":
        return dataclasses.replace(self, stream=int(run))


def sample_index(probabilities: np.ndarray, u: float) -> int:
    """inverse-CDF draw over a finite outcome vector, in index order"""
    cdf = np.cumsum(probabilities)
    index = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(index, len(cdf) - 1)
