"""Stochastic choice of a measure and its parameters.

Randomness flows through splittable value-like streams: a stream is a
(seed, path) pair, children are derived by appending an index to the
path, and the draws of a stream depend only on its seed and path. Two
workers deriving the same stream therefore see identical draws no
matter how the work was scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distances import KIND_NAMES, MeasureParams

_SEED_MASK = (1 << 64) - 1

# Epsilon substitute when every value at a node is identical (sigma == 0),
# keeping lcss/erp well defined on constant subseries.
DEGENERATE_EPSILON = 1e-8

# Stiffness grid for twe: one and five mantissas per decade up to 1.
TWE_NU_GRID = (1e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 5e-1, 1.0)

# Edit-penalty grid for twe: ten evenly spaced values in [0, 1].
TWE_LAMBDA_GRID = tuple(i / 9 for i in range(10))


def _msm_cost_grid() -> tuple[float, ...]:
    # 100 values spanning 0.01..100: 25 evenly spaced per decade.
    grid = []
    for lo, hi in ((0.01, 0.1), (0.1, 1.0), (1.0, 10.0), (10.0, 100.0)):
        step = (hi - lo) / 24
        grid.extend(lo + k * step for k in range(25))
    return tuple(grid)


MSM_COST_GRID = _msm_cost_grid()


def max_window(length: int) -> int:
    """Largest samplable warping-window half-width for series of `length`."""
    return (length + 1) // 4


@dataclass(frozen=True)
class RandomStream:
    """A derivable, replayable source of randomness.

    `generator()` returns a fresh numpy Generator seeded purely by
    (seed, path); calling it twice restarts the same draw sequence.
    """

    seed: int
    path: tuple[int, ...] = field(default_factory=tuple)

    def derive(self, index: int) -> "RandomStream":
        """Child stream for a non-negative index; children are independent."""
        if index < 0:
            raise ValueError("stream index must be >= 0")
        return RandomStream(self.seed, self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed & _SEED_MASK, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(ss))


def derive_stream(parent: RandomStream, child_index: int) -> RandomStream:
    return parent.derive(child_index)


@dataclass(frozen=True)
class DatasetStats:
    """Summary of the data reaching a node, consumed by the sampler."""

    sigma: float   # std over the pooled values of every series at the node
    length: int    # common series length

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.length < 1:
            raise ValueError("length must be >= 1")


def sample_measure(rng: np.random.Generator, stats: DatasetStats,
                   kind: str | None = None) -> MeasureParams:
    """Draw a parameterized measure.

    The kind is uniform over the 11 measures unless fixed by the caller
    (per-tree scope); parameters are then drawn from the kind's own
    distribution: warping windows uniform on [0, (l+1)//4], g ~ U(0,1),
    epsilon ~ U(sigma/5, sigma), twe parameters from their 10x10 grid and
    the msm cost from its 100-value grid.
    """
    if kind is None:
        kind = KIND_NAMES[int(rng.integers(len(KIND_NAMES)))]
    if kind in ("ed", "dtw", "ddtw"):
        return MeasureParams(kind)
    if kind in ("dtw_r", "ddtw_r"):
        w = int(rng.integers(0, max_window(stats.length) + 1))
        return MeasureParams(kind, window=w)
    if kind in ("wdtw", "wddtw"):
        return MeasureParams(kind, g=float(rng.random()))
    if kind == "lcss":
        w = int(rng.integers(0, max_window(stats.length) + 1))
        return MeasureParams(kind, window=w, epsilon=_sample_epsilon(rng, stats.sigma))
    if kind == "erp":
        return MeasureParams(kind, epsilon=_sample_epsilon(rng, stats.sigma))
    if kind == "twe":
        nu = TWE_NU_GRID[int(rng.integers(len(TWE_NU_GRID)))]
        lam = TWE_LAMBDA_GRID[int(rng.integers(len(TWE_LAMBDA_GRID)))]
        return MeasureParams(kind, nu=nu, lam=lam)
    if kind == "msm":
        return MeasureParams(kind, cost=MSM_COST_GRID[int(rng.integers(len(MSM_COST_GRID)))])
    raise ValueError(f"unknown measure kind: {kind!r}")


def _sample_epsilon(rng: np.random.Generator, sigma: float) -> float:
    if sigma <= 0.0:
        return DEGENERATE_EPSILON
    return float(rng.uniform(sigma / 5.0, sigma))


def node_stats(values: np.ndarray) -> DatasetStats:
    """Stats over the (n', l) value matrix of the series reaching a node."""
    return DatasetStats(sigma=float(values.std()), length=int(values.shape[1]))
