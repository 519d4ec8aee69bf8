"""Asymmetric variation test.

Nearest-neighbour pairs ``(g.X_i, X_j)`` are scored by how far the observed
output gap ``|g*Y_i - Y_j|`` exceeds the variation bound ``V(g.X_i, X_j)``.
Under equivariance those excesses are dominated by the noise gap
``|e_i - e_j|``, so the exceedance count at threshold ``t`` is stochastically
bounded by ``Binom(m, p_t)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import (
    Dataset,
    GeneratorDistribution,
    GroupAction,
    Metric,
    NoiseModel,
    OutputNorm,
    VariationBound,
)
from .sampling import PairSample, SampledPair, SeededRng, sample_pairs_nn
from .validation import check_dataset

__all__ = [
    "AvtConfig",
    "AvtReport",
    "ThresholdRow",
    "asym_statistic",
    "asym_statistics",
    "binomial_tail",
    "auto_threshold_grid",
    "effective_tail",
    "run_avt",
    "AsymmetricVariationTest",
]


def asym_statistics(pairs: PairSample, dataset: Dataset, action: GroupAction,
                    bound: VariationBound, metric: Metric | None = None,
                    norm: OutputNorm | None = None) -> np.ndarray:
    """``|g*Y_i - Y_j| - V(g.X_i, X_j)`` for every sampled pair."""
    metric = metric or Metric()
    norm = norm or OutputNorm.default_for(dataset.dim_y)
    Y = dataset.responses
    gy = np.empty((len(pairs), dataset.dim_y))
    for name in np.unique(pairs.g):
        mask = pairs.g == name
        gy[mask] = action.apply_output(str(name), Y[pairs.i[mask]])
    gap = norm(gy - Y[pairs.j])
    V = bound.evaluate(pairs.transformed, dataset.points[pairs.j], metric, dist=pairs.distance)
    return np.asarray(gap, dtype=np.float64) - V


def asym_statistic(pair: SampledPair, dataset: Dataset, action: GroupAction,
                   bound: VariationBound, metric: Metric | None = None,
                   norm: OutputNorm | None = None) -> float:
    sample = PairSample(
        np.array([pair.g], dtype=object),
        np.array([pair.i]),
        np.array([pair.j]),
        np.asarray(pair.transformed_point, dtype=np.float64)[None, :],
        np.array([pair.pair_distance], dtype=np.float64),
    )
    return float(asym_statistics(sample, dataset, action, bound, metric, norm)[0])


def binomial_tail(m: int, N: int, p: float) -> float:
    """``P(Binom(m, p) >= N)``.

    Terms are summed in log space, shifted by their maximum and accumulated
    with ``math.fsum``.  When ``N`` lies below the mean the short lower tail
    is summed and complemented instead.  ``p`` in ``{0, 1}`` and ``N = 0``
    are exact.
    """
    m = int(m)
    N = int(N)
    p = float(p)
    if m < 0 or not 0 <= N <= m:
        raise ValueError(f"need 0 <= N <= m, got N={N}, m={m}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if N == 0 or p == 1.0:
        return 1.0
    if p == 0.0:
        return 0.0
    if N == m:
        return p ** m
    # sum whichever side of the mean is the short tail
    if N - 1 < m * p:
        return max(0.0, 1.0 - _log_sum_terms(m, 0, N - 1, p))
    return min(1.0, _log_sum_terms(m, N, m, p))


def _log_sum_terms(m: int, lo: int, hi: int, p: float) -> float:
    k = np.arange(lo, hi + 1, dtype=np.float64)
    logterms = (gammaln(m + 1.0) - gammaln(k + 1.0) - gammaln(m - k + 1.0)
                + k * math.log(p) + (m - k) * math.log1p(-p))
    top = float(np.max(logterms))
    total = math.fsum(np.exp(logterms - top).tolist())
    return math.exp(top + math.log(total))


def effective_tail(noise: NoiseModel, t: float, dim_y: int = 1,
                   norm: OutputNorm | None = None) -> float:
    """Noise bound used by the test at threshold ``t``.

    ``t = 0`` is only meaningful for noiseless data, where it returns 0.
    Multi-dimensional outputs combine the per-coordinate bound with a union
    bound.
    """
    if noise.kind == "noiseless":
        if t < 0:
            raise ValueError("thresholds must be nonnegative")
        return 0.0
    norm = norm or OutputNorm.default_for(dim_y)
    mult, tt = norm.union_factor(dim_y, t)
    return min(1.0, mult * noise.tail(tt))


def auto_threshold_grid(noise: NoiseModel, k: int, t: float = 0.0) -> list[float]:
    """Thresholds whose tail bounds are spread evenly over ``(0, 1)``.

    Threshold ``i`` solves ``p_t = i / (k + 1)`` by bisection on the
    nonincreasing tail.  A noiseless model has no tail to spread, so the
    single user threshold ``t`` is returned unchanged.
    """
    if noise.kind == "noiseless":
        return [float(t)]
    if k < 1:
        raise ValueError("k must be at least 1")
    out = []
    for i in range(1, k + 1):
        target = i / (k + 1)
        out.append(_solve_tail(noise, target))
    out = sorted(set(out))
    return out


def _solve_tail(noise: NoiseModel, target: float) -> float:
    if noise.kind == "table":
        # smallest tabulated t whose bound already meets the target
        for tt, pp in noise.table:
            if pp <= target:
                return tt
        raise ValueError(f"tail table never drops to {target}")
    hi = noise.sigma
    while noise.tail(hi) > target:
        hi *= 2.0
    lo = hi / 2.0
    while noise.tail(lo) <= target:
        lo /= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if noise.tail(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


@dataclass(frozen=True)
class AvtConfig:
    """Settings for :func:`run_avt`.

    ``thresholds`` may be left empty: a noiseless model then uses ``t = 0``
    (count ``D > 0``), a Gaussian model ``t = 2 sigma``, unless ``grid_k``
    requests an automatic grid.
    """

    m: int
    noise: NoiseModel
    bound: VariationBound
    thresholds: tuple[float, ...] = ()
    grid_k: int | None = None
    generator_dist: GeneratorDistribution | None = None
    seed: int = 0
    stream: int = 0
    keep_samples: bool = False

    def __post_init__(self):
        if int(self.m) < 1:
            raise ValueError("m must be at least 1")
        ts = tuple(float(t) for t in self.thresholds)
        if ts:
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("thresholds must be strictly increasing")
            lowest = 0.0 if self.noise.kind == "noiseless" else None
            if lowest is None and ts[0] <= 0:
                raise ValueError("thresholds must be positive")
            if lowest is not None and ts[0] < 0:
                raise ValueError("thresholds must be nonnegative")
        object.__setattr__(self, "thresholds", ts)
        object.__setattr__(self, "m", int(self.m))

    def resolved_thresholds(self) -> list[float]:
        if self.thresholds:
            return list(self.thresholds)
        if self.noise.kind == "noiseless":
            return [0.0]
        if self.grid_k is not None:
            return auto_threshold_grid(self.noise, self.grid_k)
        if self.noise.kind == "gaussian":
            return [2.0 * self.noise.sigma]
        return auto_threshold_grid(self.noise, 9)

    def describe(self) -> dict:
        return {
            "m": self.m,
            "noise": self.noise.describe(),
            "bound": self.bound.describe(),
            "thresholds": list(self.thresholds),
            "grid_k": self.grid_k,
            "generator_dist": None if self.generator_dist is None
            else self.generator_dist.describe(),
            "seed": self.seed,
            "stream": self.stream,
        }


@dataclass(frozen=True)
class ThresholdRow:
    t: float
    p_t: float
    N_t: int
    p_value: float


@dataclass
class AvtReport:
    p_value: float
    per_threshold: list[ThresholdRow]
    statistics: np.ndarray
    config: dict
    seed: int
    pairs: PairSample | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def counts(self) -> list[int]:
        return [row.N_t for row in self.per_threshold]

    def to_dict(self, include_samples: bool = False) -> dict:
        out = {
            "test": "asymmetric_variation",
            "p_value": self.p_value,
            "per_threshold": [
                {"t": r.t, "p_t": r.p_t, "N_t": r.N_t, "p_value": r.p_value}
                for r in self.per_threshold
            ],
            "config": self.config,
            "seed": self.seed,
            "metadata": self.metadata,
        }
        if include_samples:
            out["samples"] = {"D": self.statistics.tolist()}
            if self.pairs is not None:
                out["samples"]["pairs"] = self.pairs.to_records()
        return out

    def to_json(self, include_samples: bool = False) -> str:
        return json.dumps(self.to_dict(include_samples), indent=2, sort_keys=True)


def count_exceedances(D: np.ndarray, t: float) -> int:
    # t = 0 only arises for noiseless data and counts strict positives
    if t == 0.0:
        return int(np.count_nonzero(D > 0.0))
    return int(np.count_nonzero(D >= t))


def run_avt(dataset: Dataset, action: GroupAction, config: AvtConfig,
            metric: Metric | None = None, norm: OutputNorm | None = None) -> AvtReport:
    """Run the asymmetric variation test; the p-value is the minimum over thresholds."""
    if config.bound.mode != "known":
        raise ValueError(
            "the asymmetric variation test needs a known bound V; "
            "with only the order of V use the permutation variant"
        )
    metric = metric or Metric()
    norm = norm or OutputNorm.default_for(dataset.dim_y)
    dist = config.generator_dist or GeneratorDistribution.default_for(action)
    dist.validate_for(action)
    rng = SeededRng(config.seed, config.stream)
    pairs = sample_pairs_nn(dataset, action, dist, config.m, rng, metric)
    D = asym_statistics(pairs, dataset, action, config.bound, metric, norm)
    rows = []
    for t in config.resolved_thresholds():
        p_t = effective_tail(config.noise, t, dataset.dim_y, norm)
        N = count_exceedances(D, t)
        rows.append(ThresholdRow(t, p_t, N, binomial_tail(config.m, N, p_t)))
    cfg = config.describe()
    cfg["generator_dist"] = dist.describe()
    cfg["action"] = action.describe()
    cfg["metric"] = metric.describe()
    cfg["norm"] = norm.kind
    metadata = {
        "pair_sampling": "nearest_neighbour",
        "index_sampling": "uniform_with_replacement",
        "self_match": "excluded_when_zero_distance",
        "threshold_rule": "D >= t (t > 0); D > 0 (t = 0)",
        "multi_threshold": "minimum p-value, no multiplicity correction",
    }
    if dataset.dim_y > 1:
        metadata["noise_combination"] = f"union bound over {dataset.dim_y} output coordinates"
    return AvtReport(
        p_value=min(r.p_value for r in rows),
        per_threshold=rows,
        statistics=D,
        config=cfg,
        seed=config.seed,
        pairs=pairs if config.keep_samples else None,
        metadata=metadata,
    )


class AsymmetricVariationTest(BaseEstimator):
    """Estimator-style front end to :func:`run_avt`.

    ``fit(X, y)`` runs the test on the sample and stores ``p_value_`` and
    ``report_``.

    Parameters
    ----------
    action : GroupAction
        Action on inputs and outputs whose equivariance is tested.
    m : int
        Number of nearest-neighbour pairs.
    L, alpha_holder : float
        Hölder bound ``V(x, y) = L d(x, y)**alpha_holder``.
    sigma : float or None
        Gaussian noise level; ``None`` means noiseless data.
    thresholds : sequence of float or None
        Explicit thresholds; see :class:`AvtConfig` for the defaults.
    grid_k : int or None
        Number of automatic thresholds.
    generators : sequence of str or None
        Elements to sample uniformly; defaults to the non-identity powers of
        the action's generators.
    metric : Metric or None
    random_state : int
    """

    def __init__(self, action=None, m=100, L=1.0, alpha_holder=1.0, sigma=None,
                 thresholds=None, grid_k=None, generators=None, metric=None,
                 random_state=0):
        self.action = action
        self.m = m
        self.L = L
        self.alpha_holder = alpha_holder
        self.sigma = sigma
        self.thresholds = thresholds
        self.grid_k = grid_k
        self.generators = generators
        self.metric = metric
        self.random_state = random_state

    def _config(self) -> AvtConfig:
        noise = NoiseModel.noiseless() if self.sigma is None else NoiseModel.gaussian(self.sigma)
        dist = None if self.generators is None else GeneratorDistribution.uniform(self.generators)
        return AvtConfig(
            m=self.m,
            noise=noise,
            bound=VariationBound.known(self.L, self.alpha_holder),
            thresholds=tuple(self.thresholds or ()),
            grid_k=self.grid_k,
            generator_dist=dist,
            seed=int(self.random_state),
        )

    def fit(self, X, y):
        if self.action is None:
            raise ValueError("an action is required")
        dataset = check_dataset(X, y)
        self.report_ = run_avt(dataset, self.action, self._config(), self.metric)
        self.p_value_ = self.report_.p_value
        self.statistics_ = self.report_.statistics
        return self

    def reject(self, level: float = 0.05) -> bool:
        check_is_fitted(self, "p_value_")
        return self.p_value_ <= level
