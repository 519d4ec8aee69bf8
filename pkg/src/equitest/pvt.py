"""Permutation variant of the asymmetric variation test.

Only the order ``V(x, y)`` of the variation bound is assumed.  Ratios
``|g*Y_i - Y_j| / V(g.X_i, X_j)`` over ``B`` batches of transformed pairs are
reduced to a quantile each and compared against the same quantile computed
with the identity element.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import (
    Dataset,
    GeneratorDistribution,
    GroupAction,
    Metric,
    OutputNorm,
    VariationBound,
)
from .sampling import (
    PairSample,
    SampledPair,
    SeededRng,
    sample_pairs_nn,
    sample_pairs_uniform,
)
from .validation import check_dataset

__all__ = [
    "PvtConfig",
    "PvtReport",
    "ratio_statistic",
    "ratio_statistics",
    "r_quantile_type7",
    "run_pvt",
    "PermutationVariationTest",
]


def ratio_statistics(pairs: PairSample, dataset: Dataset, action: GroupAction,
                     bound: VariationBound, metric: Metric | None = None,
                     norm: OutputNorm | None = None) -> np.ndarray:
    """``|g*Y_i - Y_j| / V(g.X_i, X_j)`` for every pair."""
    metric = metric or Metric()
    norm = norm or OutputNorm.default_for(dataset.dim_y)
    Y = dataset.responses
    gy = np.empty((len(pairs), dataset.dim_y))
    for name in np.unique(pairs.g):
        mask = pairs.g == name
        gy[mask] = action.apply_output(str(name), Y[pairs.i[mask]])
    gap = np.asarray(norm(gy - Y[pairs.j]), dtype=np.float64)
    denom = bound.evaluate(pairs.transformed, dataset.points[pairs.j], metric,
                           dist=pairs.distance)
    if np.any(denom <= 0):
        raise ZeroDivisionError(
            "variation order vanished for a sampled pair; the sampler should "
            "never return zero-distance pairs"
        )
    return gap / denom


def ratio_statistic(pair: SampledPair, dataset: Dataset, action: GroupAction,
                    bound: VariationBound, metric: Metric | None = None,
                    norm: OutputNorm | None = None) -> float:
    sample = PairSample(
        np.array([pair.g], dtype=object),
        np.array([pair.i]),
        np.array([pair.j]),
        np.asarray(pair.transformed_point, dtype=np.float64)[None, :],
        np.array([pair.pair_distance], dtype=np.float64),
    )
    return float(ratio_statistics(sample, dataset, action, bound, metric, norm)[0])


def r_quantile_type7(values, q: float) -> float:
    """R's default sample quantile: interpolate at ``1 + (n - 1) q`` (1-based)."""
    x = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if x.size == 0:
        raise ValueError("quantile of an empty sample")
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    h = (x.size - 1) * q
    lo = math.floor(h)
    if lo >= x.size - 1:
        return float(x[-1])
    return float(x[lo] + (h - lo) * (x[lo + 1] - x[lo]))


def _batch_quantiles(S: np.ndarray, q: float) -> np.ndarray:
    # row-wise type-7 quantile; identical arithmetic to r_quantile_type7
    S = np.sort(S, axis=1)
    n = S.shape[1]
    h = (n - 1) * q
    lo = math.floor(h)
    if lo >= n - 1:
        return S[:, -1].copy()
    return S[:, lo] + (h - lo) * (S[:, lo + 1] - S[:, lo])


_PAIRINGS = {"nearest_neighbour": sample_pairs_nn, "uniform": sample_pairs_uniform}


@dataclass(frozen=True)
class PvtConfig:
    m: int
    B: int = 100
    q: float = 0.95
    bound: VariationBound = field(default_factory=VariationBound.order)
    generator_dist: GeneratorDistribution | None = None
    batch_pairing: str = "nearest_neighbour"
    baseline_pairing: str = "nearest_neighbour"
    seed: int = 0
    stream: int = 0
    keep_samples: bool = False

    def __post_init__(self):
        if int(self.m) < 1:
            raise ValueError("m must be at least 1")
        if int(self.B) < 1:
            raise ValueError("B must be at least 1")
        if not 0 < self.q <= 1:
            raise ValueError("q must lie in (0, 1]")
        for name in ("batch_pairing", "baseline_pairing"):
            if getattr(self, name) not in _PAIRINGS:
                raise ValueError(f"{name} must be 'nearest_neighbour' or 'uniform'")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "B", int(self.B))

    def describe(self) -> dict:
        return {
            "m": self.m,
            "B": self.B,
            "q": self.q,
            "bound": self.bound.describe(),
            "generator_dist": None if self.generator_dist is None
            else self.generator_dist.describe(),
            "batch_pairing": self.batch_pairing,
            "baseline_pairing": self.baseline_pairing,
            "seed": self.seed,
            "stream": self.stream,
        }


@dataclass
class PvtReport:
    p_value: float
    A0: float
    A: np.ndarray
    config: dict
    seed: int
    p_value_plus_one: float
    batch_statistics: np.ndarray | None = None
    baseline_statistics: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self, include_samples: bool = False) -> dict:
        out = {
            "test": "permutation_variant",
            "p_value": self.p_value,
            "p_value_plus_one": self.p_value_plus_one,
            "A0": self.A0,
            "A": self.A.tolist(),
            "config": self.config,
            "seed": self.seed,
            "metadata": self.metadata,
        }
        if include_samples and self.batch_statistics is not None:
            out["samples"] = {
                "S": self.batch_statistics.tolist(),
                "S0": self.baseline_statistics.tolist(),
            }
        return out

    def to_json(self, include_samples: bool = False) -> str:
        return json.dumps(self.to_dict(include_samples), indent=2, sort_keys=True)

    def requantile(self, q: float) -> "PvtReport":
        """The same run re-reduced at quantile ``q``; needs kept samples."""
        if self.batch_statistics is None:
            raise ValueError("run with keep_samples=True to re-reduce at another q")
        if not 0 < q <= 1:
            raise ValueError("q must lie in (0, 1]")
        A = _batch_quantiles(self.batch_statistics, q)
        A0 = r_quantile_type7(self.baseline_statistics, q)
        count = int(np.count_nonzero(A <= A0))
        B = A.size
        config = dict(self.config, q=q)
        return PvtReport(count / B, A0, A, config, self.seed, (1 + count) / (1 + B),
                         self.batch_statistics, self.baseline_statistics,
                         dict(self.metadata))

    def write_quantiles_csv(self, path: str | Path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["batch", "A"])
            w.writerow([0, repr(self.A0)])
            for k, a in enumerate(self.A, start=1):
                w.writerow([k, repr(float(a))])


def run_pvt(dataset: Dataset, action: GroupAction, config: PvtConfig,
            metric: Metric | None = None, norm: OutputNorm | None = None) -> PvtReport:
    """Run the permutation variant; ``p = |{k : A_k <= A_0}| / B``."""
    metric = metric or Metric()
    norm = norm or OutputNorm.default_for(dataset.dim_y)
    dist = config.generator_dist or GeneratorDistribution.default_for(action)
    dist.validate_for(action)
    bound = config.bound
    rng = SeededRng(config.seed, config.stream).generator

    m, B = config.m, config.B
    pairs = _PAIRINGS[config.batch_pairing](dataset, action, dist, m * B, rng, metric)
    S = ratio_statistics(pairs, dataset, action, bound, metric, norm).reshape(B, m)
    A = _batch_quantiles(S, config.q)

    identity = GeneratorDistribution.point_mass(action.identity)
    base = _PAIRINGS[config.baseline_pairing](dataset, action, identity, m, rng, metric)
    S0 = ratio_statistics(base, dataset, action, bound, metric, norm)
    A0 = r_quantile_type7(S0, config.q)

    count = int(np.count_nonzero(A <= A0))
    cfg = config.describe()
    cfg["generator_dist"] = dist.describe()
    cfg["action"] = action.describe()
    cfg["metric"] = metric.describe()
    cfg["norm"] = norm.kind
    return PvtReport(
        p_value=count / B,
        A0=A0,
        A=A,
        config=cfg,
        seed=config.seed,
        p_value_plus_one=(1 + count) / (1 + B),
        batch_statistics=S if config.keep_samples else None,
        baseline_statistics=S0 if config.keep_samples else None,
        metadata={
            "batch_pairing": config.batch_pairing,
            "baseline_pairing": config.baseline_pairing,
            "zero_distance_pairs": "redrawn (uniform) / self excluded (nearest neighbour)",
            "ties": "A_k == A_0 counts towards the p-value",
        },
    )


class PermutationVariationTest(BaseEstimator):
    """Estimator-style front end to :func:`run_pvt`.

    ``fit(X, y)`` stores ``p_value_``, ``A0_``, ``A_`` and ``report_``.
    """

    def __init__(self, action=None, m=100, B=100, q=0.95, alpha_holder=1.0,
                 generators=None, pairing="nearest_neighbour",
                 baseline="nearest_neighbour", metric=None,
                 random_state=0):
        self.action = action
        self.m = m
        self.B = B
        self.q = q
        self.alpha_holder = alpha_holder
        self.generators = generators
        self.pairing = pairing
        self.baseline = baseline
        self.metric = metric
        self.random_state = random_state

    def fit(self, X, y):
        if self.action is None:
            raise ValueError("an action is required")
        dataset = check_dataset(X, y)
        dist = None if self.generators is None else GeneratorDistribution.uniform(self.generators)
        config = PvtConfig(
            m=self.m, B=self.B, q=self.q,
            bound=VariationBound.order(self.alpha_holder),
            generator_dist=dist,
            batch_pairing=self.pairing,
            baseline_pairing=self.baseline,
            seed=int(self.random_state),
        )
        self.report_ = run_pvt(dataset, self.action, config, self.metric)
        self.p_value_ = self.report_.p_value
        self.A0_ = self.report_.A0
        self.A_ = self.report_.A
        return self

    def reject(self, level: float = 0.05) -> bool:
        check_is_fitted(self, "p_value_")
        return self.p_value_ <= level
