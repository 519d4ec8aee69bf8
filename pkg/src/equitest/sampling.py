"""Seeded randomness, nearest-neighbour search and pair sampling."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .core import Dataset, GeneratorDistribution, GroupAction, Metric

__all__ = [
    "SeededRng",
    "derive_seed",
    "SampledPair",
    "PairSample",
    "sample_generator",
    "sample_generators",
    "nearest_neighbour",
    "nearest_neighbours",
    "sample_pairs_nn",
    "sample_pairs_uniform",
]

# cap on distance-matrix entries held at once during NN search
_BLOCK_ENTRIES = 1 << 22


@dataclass
class SeededRng:
    """A numpy ``Generator`` keyed by ``(seed, stream)``.

    Distinct streams are statistically independent children of the same
    ``SeedSequence``, so parallel replicates can share one seed.
    """

    seed: int
    stream: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.seed < 0 or self.stream < 0:
            raise ValueError("seed and stream must be nonnegative")
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def spawn(self, stream: int) -> "SeededRng":
        return SeededRng(self.seed, stream)


def derive_seed(base: int, *coords) -> int:
    """Stable 63-bit seed for a cell of an experiment grid.

    ``coords`` must be JSON-serialisable; the same inputs give the same seed
    on every platform and Python version.
    """
    payload = json.dumps([int(base), *coords], sort_keys=True, default=str).encode()
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, SeededRng):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    return SeededRng(int(rng)).generator


@dataclass(frozen=True)
class SampledPair:
    g: str
    i: int
    j: int
    transformed_point: np.ndarray
    pair_distance: float


@dataclass(frozen=True)
class PairSample:
    """Column-wise store of sampled pairs.

    Iterating yields :class:`SampledPair` records; the arrays are what the
    tests consume.
    """

    g: np.ndarray
    i: np.ndarray
    j: np.ndarray
    transformed: np.ndarray
    distance: np.ndarray

    def __len__(self) -> int:
        return self.i.size

    def __iter__(self) -> Iterator[SampledPair]:
        for k in range(len(self)):
            yield self[k]

    def __getitem__(self, k: int) -> SampledPair:
        return SampledPair(str(self.g[k]), int(self.i[k]), int(self.j[k]),
                           self.transformed[k], float(self.distance[k]))

    def to_records(self) -> list[dict]:
        return [
            {"g": str(g), "i": int(i), "j": int(j), "pair_distance": float(d)}
            for g, i, j, d in zip(self.g, self.i, self.j, self.distance)
        ]


def sample_generators(dist: GeneratorDistribution, rng, size: int) -> np.ndarray:
    gen = _as_generator(rng)
    idx = gen.choice(len(dist.support), size=size, p=np.asarray(dist.weights))
    return np.asarray(dist.support, dtype=object)[idx]


def sample_generator(dist: GeneratorDistribution, rng) -> str:
    """Draw one element from ``dist``."""
    return str(sample_generators(dist, rng, 1)[0])


def nearest_neighbours(queries: np.ndarray, points: np.ndarray, metric: Metric,
                       exclude: np.ndarray | None = None):
    """Exhaustive nearest-neighbour scan.

    Returns ``(index, distance)`` arrays.  ``exclude[k] >= 0`` removes that
    candidate for query ``k``.  Ties go to the lowest index.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    k, n = queries.shape[0], points.shape[0]
    if exclude is None:
        exclude = np.full(k, -1, dtype=np.intp)
    exclude = np.asarray(exclude, dtype=np.intp)
    if n == 0 or (n == 1 and np.any(exclude == 0)):
        raise ValueError("no candidate points left for nearest-neighbour search")
    idx = np.empty(k, dtype=np.intp)
    dist = np.empty(k, dtype=np.float64)
    block = max(1, _BLOCK_ENTRIES // max(n, 1))
    for start in range(0, k, block):
        stop = min(start + block, k)
        D = metric.pairwise(queries[start:stop], points)
        rows = np.nonzero(exclude[start:stop] >= 0)[0]
        D[rows, exclude[start:stop][rows]] = np.inf
        best = np.argmin(D, axis=1)
        idx[start:stop] = best
        dist[start:stop] = D[np.arange(stop - start), best]
    return idx, dist


def nearest_neighbour(query, dataset: Dataset | np.ndarray, metric: Metric | None = None,
                      exclude: int | None = None) -> tuple[int, float]:
    """Index of, and distance to, the point closest to ``query``."""
    metric = metric or Metric()
    points = dataset.points if isinstance(dataset, Dataset) else np.atleast_2d(dataset)
    ex = None if exclude is None else np.array([exclude])
    idx, dist = nearest_neighbours(np.asarray(query)[None, :], points, metric, ex)
    return int(idx[0]), float(dist[0])


def _transform(action: GroupAction, g: np.ndarray, X: np.ndarray) -> np.ndarray:
    out = np.empty_like(X)
    for name in np.unique(g):
        mask = g == name
        out[mask] = action.apply_input(str(name), X[mask])
    return out


def sample_pairs_nn(dataset: Dataset, action: GroupAction, dist: GeneratorDistribution,
                    m: int, rng, metric: Metric | None = None) -> PairSample:
    """``m`` pairs ``(g, I, J)`` with ``J`` the nearest neighbour of ``g.X_I``.

    ``I`` is drawn uniformly with replacement.  ``I`` itself is excluded
    from the candidates exactly when ``g.X_I`` coincides with ``X_I``.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    metric = metric or Metric()
    gen = _as_generator(rng)
    X = dataset.points
    g = sample_generators(dist, gen, m)
    I = gen.integers(0, dataset.n, size=m)
    moved = _transform(action, g, X[I])
    self_dist = metric.rowwise(moved, X[I])
    exclude = np.where(self_dist == 0.0, I, -1)
    J, d = nearest_neighbours(moved, X, metric, exclude)
    return PairSample(g, I, J, moved, d)


def sample_pairs_uniform(dataset: Dataset, action: GroupAction, dist: GeneratorDistribution,
                         m: int, rng, metric: Metric | None = None,
                         max_rounds: int = 1000) -> PairSample:
    """``m`` pairs with both indices uniform, with replacement.

    Pairs at distance zero (e.g. ``I = J`` with ``g = e``) are redrawn so the
    ratio statistic never divides by zero.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    metric = metric or Metric()
    gen = _as_generator(rng)
    X = dataset.points
    g = sample_generators(dist, gen, m)
    I = gen.integers(0, dataset.n, size=m)
    J = gen.integers(0, dataset.n, size=m)
    moved = _transform(action, g, X[I])
    d = metric.rowwise(moved, X[J])
    bad = np.nonzero(d == 0.0)[0]
    rounds = 0
    while bad.size:
        rounds += 1
        if rounds > max_rounds:
            raise RuntimeError("could not draw pairs at positive distance; "
                               "are all points identical?")
        k = bad.size
        g[bad] = sample_generators(dist, gen, k)
        I[bad] = gen.integers(0, dataset.n, size=k)
        J[bad] = gen.integers(0, dataset.n, size=k)
        moved[bad] = _transform(action, g[bad], X[I[bad]])
        d[bad] = metric.rowwise(moved[bad], X[J[bad]])
        bad = bad[d[bad] == 0.0]
    return PairSample(g, I, J, moved, d)
