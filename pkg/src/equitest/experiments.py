"""Monte Carlo harness for rejection-proportion tables.

A sweep crosses hypotheses with grids over ``(n, m)``, noise level,
Lipschitz constant, threshold and quantile.  Every replicate draws a fresh
dataset and a fresh test run from seeds derived only from the data
coordinates, so cells that differ in ``L``, ``t`` or ``q`` see the same
data and the same sampled pairs.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .avt import AvtConfig, run_avt
from .core import NoiseModel, VariationBound, rotation_action, rotation_star_action
from .pvt import PvtConfig, run_pvt
from .sampling import derive_seed
from .synth import InputLaw, NoiseSpec, SyntheticTarget, generate_dataset

__all__ = [
    "ACTIONS",
    "Hypothesis",
    "SweepSpec",
    "RejectionTable",
    "PRESETS",
    "run_sweep",
    "run_v_sensitivity",
    "run_q_sensitivity",
    "VALID_L",
    "INVALID_L",
    "NM_GRID",
]

ACTIONS = {
    "dot": rotation_action,
    "star": rotation_star_action,
}

VALID_L = (math.exp(-1), 0.5, 1.0, 2.0)
INVALID_L = (math.exp(-1.2), math.exp(-2), math.exp(-3))
NM_GRID = (20, 30, 40, 50, 60, 70, 80, 90, 100, 120, 150, 200, 250, 300)


@dataclass(frozen=True)
class Hypothesis:
    """A data-generating target paired with the action under test."""

    target: str
    action: str

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ValueError(f"unknown action {self.action!r}; choose from {sorted(ACTIONS)}")
        SyntheticTarget(self.target, 2)


def _pairs(values) -> tuple[tuple[int, int], ...]:
    out = []
    for v in values:
        if isinstance(v, (int, np.integer)):
            out.append((int(v), int(v)))
        else:
            n, m = v
            out.append((int(n), int(m)))
    return tuple(out)


@dataclass(frozen=True)
class SweepSpec:
    """Grid of Monte Carlo cells.

    ``sizes`` holds ``(n, m)`` pairs; a bare integer means ``n = m``.
    ``thresholds`` and ``L`` apply to the AVT, ``q`` and ``B`` to the PVT.
    An empty ``thresholds`` tuple means ``t = 2 sigma``.
    """

    test: str = "avt"
    hypotheses: Mapping[str, Hypothesis] = field(default_factory=lambda: {
        "H0": Hypothesis("f_2", "star"), "H1": Hypothesis("f_2", "dot")})
    sizes: tuple = (100, 200, 300)
    sigma: tuple[float, ...] = (0.05,)
    L: tuple[float, ...] = (1.0,)
    thresholds: tuple[float, ...] = ()
    q: tuple[float, ...] = (0.95,)
    B: int = 100
    alpha_holder: float = 1.0
    input_law: str = "gaussian"
    dim: int = 2
    replicates: int = 100
    level: float = 0.05
    seed: int = 0
    batch_pairing: str = "nearest_neighbour"
    baseline_pairing: str = "nearest_neighbour"

    def __post_init__(self):
        if self.test not in ("avt", "pvt"):
            raise ValueError("test must be 'avt' or 'pvt'")
        hyps = {}
        for k, h in dict(self.hypotheses).items():
            hyps[str(k)] = h if isinstance(h, Hypothesis) else Hypothesis(**dict(h))
        object.__setattr__(self, "hypotheses", hyps)
        object.__setattr__(self, "sizes", _pairs(self.sizes))
        for name in ("sigma", "L", "thresholds", "q"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not hyps:
            raise ValueError("at least one hypothesis is required")
        for name in ("sizes", "sigma", "L", "q"):
            if not getattr(self, name):
                raise ValueError(f"grid {name!r} is empty")
        if any(n < 2 or m < 1 for n, m in self.sizes):
            raise ValueError("need n >= 2 and m >= 1")
        if int(self.replicates) < 1:
            raise ValueError("replicates must be at least 1")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if any(s <= 0 for s in self.sigma) or any(L <= 0 for L in self.L):
            raise ValueError("sigma and L must be positive")
        if any(not 0 < q <= 1 for q in self.q):
            raise ValueError("q must lie in (0, 1]")
        InputLaw(self.input_law)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["hypotheses"] = {k: asdict(h) for k, h in self.hypotheses.items()}
        out["sizes"] = [list(p) for p in self.sizes]
        for k in ("sigma", "L", "thresholds", "q"):
            out[k] = list(out[k])
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "SweepSpec":
        data = dict(data)
        preset = data.pop("preset", None)
        if preset is not None:
            base = PRESETS[preset].to_dict()
            base.update(data)
            data = base
        return cls(**data)

    @classmethod
    def from_file(cls, path: str | Path) -> "SweepSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def cell_thresholds(self, sigma: float) -> tuple[float, ...]:
        return self.thresholds or (2.0 * sigma,)


PRESETS = {
    # f_2 with the two rotation actions, uniform inputs on the radius-4 disc
    "rotation-table": SweepSpec(
        sizes=tuple(itertools.product((100, 200, 300, 400, 500, 1000), repeat=2)),
        input_law="ball"),
    # f_3 (invariant) against f_4 (not invariant) under the rotation action
    "norm-vs-coordinate": SweepSpec(
        hypotheses={"H0": Hypothesis("f_3", "dot"), "H1": Hypothesis("f_4", "dot")},
        sizes=tuple(itertools.product((100, 200, 300, 400, 500, 1000), repeat=2)),
        input_law="ball"),
    "power-curves-avt": SweepSpec(sizes=NM_GRID, thresholds=(0.1,)),
    "power-curves-pvt": SweepSpec(test="pvt", sizes=NM_GRID),
    "v-sensitivity": SweepSpec(sizes=NM_GRID, thresholds=(0.1,),
                               L=VALID_L + INVALID_L),
    "q-sensitivity": SweepSpec(test="pvt", sizes=NM_GRID,
                               q=(0.5, 0.75, 0.9, 0.95, 1.0)),
}


@dataclass
class RejectionTable:
    """Rejection proportions with binomial standard errors, one row per cell."""

    spec: SweepSpec
    rows: list[dict] = field(default_factory=list)

    COLUMNS = ("hypothesis", "target", "action", "n", "m", "sigma", "L", "t", "q",
               "rejections", "replicates", "proportion", "se")

    def select(self, **coords) -> list[dict]:
        def hit(row):
            for k, v in coords.items():
                rv = row[k]
                if isinstance(v, float) or isinstance(rv, float):
                    if rv is None or not math.isclose(rv, v, rel_tol=1e-12, abs_tol=1e-15):
                        return False
                elif rv != v:
                    return False
            return True
        return [r for r in self.rows if hit(r)]

    def cell(self, **coords) -> dict:
        found = self.select(**coords)
        if len(found) != 1:
            raise KeyError(f"{len(found)} cells match {coords}")
        return found[0]

    def proportion(self, **coords) -> float:
        return self.cell(**coords)["proportion"]

    def paired_difference(self, first: Mapping, second: Mapping) -> tuple[float, float]:
        """Mean and standard error of ``first - second`` rejection indicators.

        Cells that share seeds are positively correlated, so this SE is the
        right yardstick for comparing them.
        """
        a = np.asarray(self.cell(**first)["outcomes"], dtype=float)
        b = np.asarray(self.cell(**second)["outcomes"], dtype=float)
        d = a - b
        se = float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else float("nan")
        return float(d.mean()), se

    def to_csv(self, path: str | Path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=self.COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: ("" if r[k] is None else r[k]) for k in self.COLUMNS})

    def to_json(self) -> str:
        return json.dumps({"spec": self.spec.to_dict(), "cells": self.rows},
                          indent=2, sort_keys=True)

    def plot_rows(self, x: str = "n") -> list[dict]:
        """Long-format ``(x, proportion, se, series)`` rows for external plotting."""
        out = []
        for r in self.rows:
            parts = [r["hypothesis"]]
            for k in ("m", "n", "sigma", "L", "t", "q"):
                if k != x and r[k] is not None:
                    parts.append(f"{k}={r[k]:g}")
            out.append({x: r[x], "proportion": r["proportion"], "se": r["se"],
                        "series": " ".join(parts)})
        return out

    def write_plot_csv(self, path: str | Path, x: str = "n"):
        rows = self.plot_rows(x)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=[x, "proportion", "se", "series"])
            w.writeheader()
            w.writerows(rows)


def _unit(spec: SweepSpec, label: str, n: int, m: int, sigma: float) -> dict:
    """Per-replicate rejections for every (L, t) or q at one (hypothesis, n, m, sigma)."""
    hyp = spec.hypotheses[label]
    target = SyntheticTarget(hyp.target, spec.dim)
    law = InputLaw(spec.input_law)
    noise = NoiseSpec("gaussian", sigma)
    action = ACTIONS[hyp.action](spec.dim)
    counts: dict = {}
    for r in range(int(spec.replicates)):
        data_seed = derive_seed(spec.seed, "data", hyp.target, spec.input_law, spec.dim,
                                n, sigma, r)
        test_seed = derive_seed(spec.seed, "test", label, n, m, sigma, r)
        ds = generate_dataset(target, law, noise, n, data_seed)
        if spec.test == "avt":
            model = NoiseModel.gaussian(sigma)
            for L in spec.L:
                for t in spec.cell_thresholds(sigma):
                    cfg = AvtConfig(m=m, noise=model,
                                    bound=VariationBound.known(L, spec.alpha_holder),
                                    thresholds=(t,), seed=test_seed)
                    rej = run_avt(ds, action, cfg).p_value <= spec.level
                    counts.setdefault((L, t), []).append(int(rej))
        else:
            cfg = PvtConfig(m=m, B=spec.B, q=spec.q[0],
                            bound=VariationBound.order(spec.alpha_holder),
                            batch_pairing=spec.batch_pairing,
                            baseline_pairing=spec.baseline_pairing,
                            seed=test_seed, keep_samples=len(spec.q) > 1)
            report = run_pvt(ds, action, cfg)
            for q in spec.q:
                rep = report if q == spec.q[0] else report.requantile(q)
                counts.setdefault(q, []).append(int(rep.p_value <= spec.level))
    return counts


def run_sweep(spec: SweepSpec, jobs: int = 1) -> RejectionTable:
    """Run every cell of ``spec``; rows come back in grid order whatever ``jobs`` is."""
    units = [(label, n, m, s) for label in spec.hypotheses
             for (n, m) in spec.sizes for s in spec.sigma]
    if jobs == 1:
        results = [_unit(spec, *u) for u in units]
    else:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=jobs)(delayed(_unit)(spec, *u) for u in units)
    R = int(spec.replicates)
    table = RejectionTable(spec)
    for (label, n, m, sigma), counts in zip(units, results):
        hyp = spec.hypotheses[label]
        if spec.test == "avt":
            keys = [((L, t), {"L": L, "t": t, "q": None})
                    for L in spec.L for t in spec.cell_thresholds(sigma)]
        else:
            keys = [(q, {"L": None, "t": None, "q": q}) for q in spec.q]
        for key, coords in keys:
            outcomes = counts[key]
            k = sum(outcomes)
            p = k / R
            table.rows.append({
                "hypothesis": label, "target": hyp.target, "action": hyp.action,
                "n": n, "m": m, "sigma": sigma, **coords,
                "rejections": k, "replicates": R, "proportion": p,
                "se": math.sqrt(p * (1 - p) / R),
                "outcomes": outcomes,
            })
    return table


def run_v_sensitivity(spec: SweepSpec | None = None, L: Sequence[float] = VALID_L + INVALID_L,
                      jobs: int = 1) -> RejectionTable:
    """AVT sweep over Lipschitz constants, sharing data and pairs across ``L``."""
    spec = spec or PRESETS["v-sensitivity"]
    spec = SweepSpec.from_dict({**spec.to_dict(), "test": "avt", "L": list(L)})
    return run_sweep(spec, jobs)


def run_q_sensitivity(spec: SweepSpec | None = None,
                      q: Iterable[float] = (0.5, 0.75, 0.9, 0.95, 1.0),
                      jobs: int = 1) -> RejectionTable:
    """PVT sweep over quantile levels, sharing data and pairs across ``q``."""
    spec = spec or PRESETS["q-sensitivity"]
    spec = SweepSpec.from_dict({**spec.to_dict(), "test": "pvt", "q": list(q)})
    return run_sweep(spec, jobs)
