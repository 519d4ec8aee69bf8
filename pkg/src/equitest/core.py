"""Domain types shared by both tests.

Everything here is immutable after construction.  Vector-valued operations
accept a single vector of shape ``(d,)`` or a batch of shape ``(k, d)``; the
transform is applied along the last axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "Dataset",
    "Metric",
    "OutputNorm",
    "SignedPermutation",
    "MatrixTransform",
    "FunctionTransform",
    "GroupAction",
    "GeneratorDistribution",
    "VariationBound",
    "NoiseModel",
    "evaluate_variation",
    "noise_tail",
    "rotation_action",
    "rotation_star_action",
    "d4_image_action",
    "permutation_action",
    "action_from_spec",
    "load_action_spec",
]


# --------------------------------------------------------------------------
# Dataset
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Paired sample ``{(X_i, Y_i)}``.

    ``points`` is stored as a float64 array of shape ``(n, d_x)`` and
    ``responses`` as ``(n, d_y)``; a 1-d ``responses`` argument is promoted to
    a single output column.
    """

    points: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.points, dtype=np.float64)
        Y = np.asarray(self.responses, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim != 2 or Y.ndim != 2:
            raise ValueError("points and responses must be 1-d or 2-d arrays")
        if X.shape[0] != Y.shape[0]:
            raise ValueError(
                f"points and responses disagree on sample count "
                f"({X.shape[0]} != {Y.shape[0]})"
            )
        if X.shape[0] < 2:
            raise ValueError("a dataset needs at least two samples")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("dataset contains NaN or infinite values")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "responses", Y)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim_x(self) -> int:
        return self.points.shape[1]

    @property
    def dim_y(self) -> int:
        return self.responses.shape[1]


# --------------------------------------------------------------------------
# Metrics and norms
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Metric:
    """Distance on the input space.

    ``kind`` is ``"euclidean"``, ``"minkowski"`` (with ``p >= 1``) or
    ``"custom"``, in which case ``func(x, y)`` is called pair by pair.
    """

    kind: str = "euclidean"
    p: float = 2.0
    func: Callable[[np.ndarray, np.ndarray], float] | None = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "minkowski", "custom"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.kind == "minkowski" and not self.p >= 1:
            raise ValueError("minkowski metric needs p >= 1")
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom metric needs func")

    @classmethod
    def euclidean(cls) -> "Metric":
        return cls("euclidean")

    @classmethod
    def minkowski(cls, p: float) -> "Metric":
        return cls("minkowski", p=float(p))

    @classmethod
    def custom(cls, func) -> "Metric":
        return cls("custom", func=func)

    def __call__(self, x, y) -> float:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.shape != y.shape:
            raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
        return float(self.pairwise(x[None, :], y[None, :])[0, 0])

    def pairwise(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Distance matrix of shape ``(len(A), len(B))``."""
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        B = np.atleast_2d(np.asarray(B, dtype=np.float64))
        if A.shape[1] != B.shape[1]:
            raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
        if self.kind == "euclidean":
            return cdist(A, B, "euclidean")
        if self.kind == "minkowski":
            return cdist(A, B, "minkowski", p=self.p)
        out = np.empty((A.shape[0], B.shape[0]))
        for i, a in enumerate(A):
            for j, b in enumerate(B):
                out[i, j] = self.func(a, b)
        return out

    def rowwise(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Distances ``d(A[k], B[k])`` for matched rows."""
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        B = np.atleast_2d(np.asarray(B, dtype=np.float64))
        if A.shape != B.shape:
            raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
        if self.kind == "euclidean":
            return np.sqrt(np.sum((A - B) ** 2, axis=1))
        if self.kind == "minkowski":
            return np.sum(np.abs(A - B) ** self.p, axis=1) ** (1.0 / self.p)
        return np.array([self.func(a, b) for a, b in zip(A, B)], dtype=np.float64)

    def describe(self) -> dict:
        if self.kind == "minkowski":
            return {"kind": "minkowski", "p": self.p}
        return {"kind": self.kind}


@dataclass(frozen=True)
class OutputNorm:
    """Norm on the output space: ``euclidean``, ``max`` or ``absolute``."""

    kind: str = "euclidean"

    def __post_init__(self):
        if self.kind not in ("euclidean", "max", "absolute"):
            raise ValueError(f"unknown norm kind {self.kind!r}")

    @classmethod
    def default_for(cls, dim_y: int) -> "OutputNorm":
        # max-norm keeps the per-coordinate noise bound usable via a union bound
        return cls("absolute") if dim_y == 1 else cls("max")

    def __call__(self, y) -> np.ndarray | float:
        y = np.asarray(y, dtype=np.float64)
        if self.kind == "absolute":
            if y.shape[-1] != 1:
                raise ValueError("absolute norm is only defined for scalar outputs")
            out = np.abs(y[..., 0])
        elif self.kind == "max":
            out = np.max(np.abs(y), axis=-1)
        else:
            out = np.sqrt(np.sum(y * y, axis=-1))
        return float(out) if out.ndim == 0 else out

    def union_factor(self, dim_y: int, t: float) -> tuple[float, float]:
        """``(multiplier, per-coordinate threshold)`` for a union bound.

        ``P(|e| > t) <= multiplier * P(|e_k| > threshold)`` whenever the
        coordinates each satisfy the scalar bound.
        """
        if dim_y == 1:
            return 1.0, t
        if self.kind == "max":
            return float(dim_y), t
        return float(dim_y), t / math.sqrt(dim_y)


# --------------------------------------------------------------------------
# Transforms and group actions
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SignedPermutation:
    """``x -> signs * x[..., perm]``.

    Covers coordinate rotations by quarter turns, sign flips and pixel
    permutations of flattened images.
    """

    perm: np.ndarray
    signs: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.intp)
        signs = np.asarray(self.signs, dtype=np.float64)
        if perm.ndim != 1 or signs.shape != perm.shape:
            raise ValueError("perm and signs must be 1-d arrays of equal length")
        if not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise ValueError("perm is not a permutation")
        perm.setflags(write=False)
        signs.setflags(write=False)
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "signs", signs)

    @classmethod
    def identity(cls, dim: int) -> "SignedPermutation":
        return cls(np.arange(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.perm.size

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(
                f"transform acts on dimension {self.dim}, got {x.shape[-1]}"
            )
        return self.signs * x[..., self.perm]

    def then(self, other: "SignedPermutation") -> "SignedPermutation":
        """Apply ``self`` first, then ``other``."""
        return SignedPermutation(self.perm[other.perm], other.signs * self.signs[other.perm])

    def __eq__(self, other):
        return (
            isinstance(other, SignedPermutation)
            and np.array_equal(self.perm, other.perm)
            and np.array_equal(self.signs, other.signs)
        )

    def __hash__(self):
        return hash((self.perm.tobytes(), self.signs.tobytes()))


@dataclass(frozen=True, eq=False)
class MatrixTransform:
    """``x -> M x`` for a square matrix ``M``."""

    matrix: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("matrix must be square")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(
                f"transform acts on dimension {self.dim}, got {x.shape[-1]}"
            )
        return x @ self.matrix.T

    def then(self, other: "MatrixTransform") -> "MatrixTransform":
        return MatrixTransform(other.matrix @ self.matrix)


@dataclass(frozen=True, eq=False)
class FunctionTransform:
    """Wraps a user callable acting on the last axis."""

    func: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return np.asarray(self.func(x), dtype=np.float64)
        return np.stack([np.asarray(self.func(row), dtype=np.float64) for row in x])

    def then(self, other):
        return FunctionTransform(lambda x: other(self(x)))


def _compose(first, second):
    if type(first) is type(second) and hasattr(first, "then"):
        return first.then(second)
    return FunctionTransform(lambda x: second(first(x)))


@dataclass(frozen=True)
class GroupAction:
    """A finite (semi-)group acting on inputs and, linearly, on outputs.

    ``input_maps`` and ``output_maps`` hold every named element the action
    knows about; ``generators`` names the elements the default sampling
    distribution is built from.  Element words compose as functions, so the
    element ``"ba"`` acts as ``b(a(x))``.
    """

    name: str
    kind: str
    generators: tuple[str, ...]
    input_maps: Mapping[str, Callable]
    output_maps: Mapping[str, Callable]
    identity: str = "e"
    min_dim: int = 1
    powers: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if not self.generators:
            raise ValueError("a group action needs at least one generator")
        missing = [g for g in self.generators if g not in self.input_maps]
        if missing:
            raise ValueError(f"generators without an input map: {missing}")
        if set(self.input_maps) != set(self.output_maps):
            raise ValueError("input and output maps must name the same elements")
        if self.identity not in self.input_maps:
            raise ValueError("identity element is not registered")

    @property
    def elements(self) -> tuple[str, ...]:
        return tuple(self.input_maps)

    def _check(self, g: str):
        if g not in self.input_maps:
            raise KeyError(f"unknown group element {g!r} for action {self.name!r}")

    def apply_input(self, g: str, x) -> np.ndarray:
        self._check(g)
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] < self.min_dim:
            raise ValueError(
                f"action {self.name!r} needs input dimension >= {self.min_dim}"
            )
        return self.input_maps[g](x)

    def apply_output(self, g: str, y) -> np.ndarray:
        self._check(g)
        return self.output_maps[g](np.asarray(y, dtype=np.float64))

    def compose(self, g: str, h: str) -> str:
        """Name of the element acting as ``g(h(x))``.

        Only available when every map is a :class:`SignedPermutation`.
        """
        self._check(g)
        self._check(h)
        gi, hi = self.input_maps[g], self.input_maps[h]
        go, ho = self.output_maps[g], self.output_maps[h]
        if not all(isinstance(t, SignedPermutation) for t in (gi, hi, go, ho)):
            raise NotImplementedError("composition needs signed-permutation maps")
        ci, co = hi.then(gi), ho.then(go)
        for name in self.elements:
            if self.input_maps[name] == ci and self.output_maps[name] == co:
                return name
        raise KeyError(f"{g}*{h} is not a registered element")

    def describe(self) -> dict:
        return {"name": self.name, "kind": self.kind, **dict(self.params)}


def _closure(generators: Mapping[str, tuple[SignedPermutation, SignedPermutation]],
             identity: tuple[SignedPermutation, SignedPermutation],
             max_order: int = 64):
    """Non-identity powers of each generator, named ``g``, ``g^2``, ..."""
    names: dict[str, tuple] = {"e": identity}
    powers: dict[str, tuple[str, ...]] = {}
    for gname, (gi, go) in generators.items():
        seq = []
        ci, co = gi, go
        for k in range(1, max_order + 1):
            if ci == identity[0] and co == identity[1]:
                break
            label = gname if k == 1 else f"{gname}^{k}"
            names.setdefault(label, (ci, co))
            seq.append(label)
            ci, co = ci.then(gi), co.then(go)
        powers[gname] = tuple(seq)
    return names, powers


def _output_generator(kind: str, dim_y: int) -> SignedPermutation:
    if kind == "trivial":
        return SignedPermutation.identity(dim_y)
    if kind == "negate":
        return SignedPermutation(np.arange(dim_y), -np.ones(dim_y))
    raise ValueError(f"unknown output action {kind!r}")


def _build(name, kind, gens, dim_in, dim_out, min_dim, params) -> GroupAction:
    ident = (SignedPermutation.identity(dim_in), SignedPermutation.identity(dim_out))
    elements, powers = _closure(gens, ident)
    return GroupAction(
        name=name,
        kind=kind,
        generators=tuple(gens),
        input_maps={k: v[0] for k, v in elements.items()},
        output_maps={k: v[1] for k, v in elements.items()},
        min_dim=min_dim,
        powers=powers,
        params=params,
    )


def rotation_action(dim: int, output: str = "trivial", dim_y: int = 1) -> GroupAction:
    """Quarter turn in the first two coordinates: ``(-x2, x1, x3, ...)``."""
    if dim < 2:
        raise ValueError("rotation actions need dimension >= 2")
    perm = np.arange(dim)
    perm[:2] = [1, 0]
    signs = np.ones(dim)
    signs[0] = -1.0
    gens = {"R": (SignedPermutation(perm, signs), _output_generator(output, dim_y))}
    return _build("rotation", "rotation", gens, dim, dim_y, 2,
                  {"dim": dim, "output": output, "dim_y": dim_y})


def rotation_star_action(dim: int, output: str = "trivial", dim_y: int = 1) -> GroupAction:
    """Sign-flip variant of the rotation: ``(-x1, -x2, x3, ...)``.

    The generator squares to the identity, so ``R^2 = R^4 = e``; the element
    names ``R^2`` and ``R^3`` are registered as aliases so both rotation
    actions accept the same words.
    """
    if dim < 2:
        raise ValueError("rotation actions need dimension >= 2")
    signs = np.ones(dim)
    signs[:2] = -1.0
    gi = SignedPermutation(np.arange(dim), signs)
    go = _output_generator(output, dim_y)
    action = _build("rotation_star", "rotation_star", {"R": (gi, go)}, dim, dim_y, 2,
                    {"dim": dim, "output": output, "dim_y": dim_y})
    go2 = go.then(go)
    inputs = dict(action.input_maps)
    outputs = dict(action.output_maps)
    inputs.update({"R^2": SignedPermutation.identity(dim), "R^3": gi})
    outputs.update({"R^2": go2, "R^3": go2.then(go)})
    return GroupAction(
        name=action.name,
        kind=action.kind,
        generators=action.generators,
        input_maps=inputs,
        output_maps=outputs,
        min_dim=2,
        # U(R, R^2, R^3) as in the rotation experiments
        powers={"R": ("R", "R^2", "R^3")},
        params=action.params,
    )


def _grid_perm(side: int, op) -> np.ndarray:
    idx = np.arange(side * side).reshape(side, side)
    return np.ascontiguousarray(op(idx)).ravel()


def d4_image_action(side: int = 28, output: str = "trivial") -> GroupAction:
    """Dihedral group of the square acting on flattened ``side x side`` images.

    ``a`` is a counter-clockwise quarter turn, ``b`` mirrors across the
    vertical centre line.  ``output`` is ``"trivial"`` (classification labels)
    or ``"same"`` (outputs are images transformed alongside the inputs).
    """
    dim = side * side
    a = SignedPermutation(_grid_perm(side, np.rot90), np.ones(dim))
    b = SignedPermutation(_grid_perm(side, np.fliplr), np.ones(dim))
    if output == "trivial":
        out_a = out_b = SignedPermutation.identity(1)
        dim_y = 1
    elif output == "same":
        out_a, out_b = a, b
        dim_y = dim
    else:
        raise ValueError(f"unknown output action {output!r}")
    ident_in = SignedPermutation.identity(dim)
    ident_out = SignedPermutation.identity(dim_y)
    inputs = {"e": ident_in}
    outputs = {"e": ident_out}
    ai, ao = ident_in, ident_out
    for k in range(4):
        if k:
            ai, ao = ai.then(a), ao.then(out_a)
            label = "a" if k == 1 else f"a^{k}"
            inputs[label], outputs[label] = ai, ao
        # b a^k: apply a^k, then b
        blabel = "b" if k == 0 else ("ba" if k == 1 else f"ba^{k}")
        inputs[blabel] = ai.then(b)
        outputs[blabel] = ao.then(out_b)
    return GroupAction(
        name="d4",
        kind="d4_image",
        generators=("a", "b"),
        input_maps=inputs,
        output_maps=outputs,
        min_dim=dim,
        powers={"a": ("a", "a^2", "a^3"), "b": ("b",)},
        params={"side": side, "output": output},
    )


def permutation_action(generators: Mapping[str, Mapping[str, Sequence]],
                       dim: int, dim_y: int = 1) -> GroupAction:
    """User-registered signed-permutation action.

    ``generators`` maps a name to ``{"input": perm, "input_signs": signs,
    "output": perm, "output_signs": signs}``; missing output entries mean the
    trivial output action.
    """
    gens = {}
    for name, g in generators.items():
        if name == "e":
            raise ValueError("'e' is reserved for the identity")
        perm = np.asarray(g["input"])
        signs = np.asarray(g.get("input_signs", np.ones(dim)))
        if perm.size != dim:
            raise ValueError(f"generator {name!r} permutes {perm.size} coordinates, expected {dim}")
        operm = np.asarray(g.get("output", np.arange(dim_y)))
        osigns = np.asarray(g.get("output_signs", np.ones(dim_y)))
        gens[name] = (SignedPermutation(perm, signs), SignedPermutation(operm, osigns))
    return _build("permutation", "permutation", gens, dim, dim_y, dim,
                  {"dim": dim, "dim_y": dim_y,
                   "generators": {k: {kk: list(map(float if "signs" in kk else int, vv))
                                      for kk, vv in v.items()}
                                  for k, v in generators.items()}})


def action_from_spec(spec: Mapping) -> GroupAction:
    """Build a group action from a declarative mapping.

    Recognised ``kind`` values: ``rotation``, ``rotation_star`` (both take
    ``dim``, ``output`` and ``dim_y``), ``d4_image`` (``side``, ``output``) and
    ``permutation`` (``dim``, ``dim_y``, ``generators``).
    """
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "rotation":
        return rotation_action(**spec)
    if kind == "rotation_star":
        return rotation_star_action(**spec)
    if kind == "d4_image":
        return d4_image_action(**spec)
    if kind == "permutation":
        return permutation_action(**spec)
    raise ValueError(f"unknown action kind {kind!r}")


def load_action_spec(path: str | Path) -> GroupAction:
    with open(path, encoding="utf-8") as fh:
        return action_from_spec(json.load(fh))


# --------------------------------------------------------------------------
# Generator distribution
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorDistribution:
    """Probability weights over named group elements."""

    support: tuple[str, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        support = tuple(self.support)
        weights = tuple(float(w) for w in self.weights)
        if not support:
            raise ValueError("generator distribution needs a nonempty support")
        if len(weights) != len(support):
            raise ValueError("support and weights differ in length")
        if any(w < 0 for w in weights):
            raise ValueError("weights must be nonnegative")
        if abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, elements: Sequence[str]) -> "GeneratorDistribution":
        elements = tuple(dict.fromkeys(elements))
        return cls(elements, tuple(1.0 / len(elements) for _ in elements))

    @classmethod
    def point_mass(cls, element: str) -> "GeneratorDistribution":
        return cls((element,), (1.0,))

    @classmethod
    def default_for(cls, action: GroupAction) -> "GeneratorDistribution":
        """Uniform over the distinct non-identity powers of each generator."""
        elements = []
        for g in action.generators:
            elements.extend(action.powers.get(g, (g,)))
        elements = [g for g in elements if g != action.identity]
        if not elements:
            raise ValueError("every generator acts as the identity")
        return cls.uniform(elements)

    def validate_for(self, action: GroupAction):
        unknown = [g for g in self.support if g not in action.input_maps]
        if unknown:
            raise ValueError(f"elements {unknown} are not part of action {action.name!r}")

    def describe(self) -> dict:
        return {"support": list(self.support), "weights": list(self.weights)}


# --------------------------------------------------------------------------
# Variation bound and noise model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class VariationBound:
    """Bound on ``|f(x) - f(y)|``.

    In ``known`` mode the bound is ``L * d(x, y)**alpha``; in ``order`` mode
    only the order ``d(x, y)**alpha`` is assumed.  ``func(X, Y)`` overrides
    the Hölder form; it receives matched ``(k, d)`` arrays and returns ``k``
    nonnegative values.
    """

    mode: str = "known"
    L: float | None = 1.0
    alpha: float = 1.0
    func: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.mode not in ("known", "order"):
            raise ValueError("mode must be 'known' or 'order'")
        if self.mode == "known" and self.func is None:
            if self.L is None or not self.L >= 0 or not math.isfinite(self.L):
                raise ValueError("known-mode bound needs a finite L >= 0")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")

    @classmethod
    def known(cls, L: float, alpha: float = 1.0) -> "VariationBound":
        return cls("known", float(L), float(alpha))

    @classmethod
    def order(cls, alpha: float = 1.0) -> "VariationBound":
        return cls("order", None, float(alpha))

    @property
    def scale(self) -> float:
        return 1.0 if self.mode == "order" else float(self.L)

    def from_distance(self, dist) -> np.ndarray:
        dist = np.asarray(dist, dtype=np.float64)
        return self.scale * dist ** self.alpha

    def evaluate(self, A, B, metric: Metric, dist=None) -> np.ndarray:
        """Bound for matched rows of ``A`` and ``B``.

        ``dist`` may carry precomputed ``metric`` distances for the rows.
        """
        if self.func is not None:
            A = np.atleast_2d(A)
            B = np.atleast_2d(B)
            return np.array([float(self.func(a, b)) for a, b in zip(A, B)])
        if dist is None:
            dist = metric.rowwise(A, B)
        return self.from_distance(dist)

    def describe(self) -> dict:
        out = {"mode": self.mode, "alpha": self.alpha}
        if self.mode == "known":
            out["L"] = self.L
        if self.func is not None:
            out["custom"] = True
        return out


def evaluate_variation(bound: VariationBound, x, y, metric: Metric | None = None) -> float:
    """``L * d(x, y)**alpha`` (``L = 1`` for an order-only bound)."""
    metric = metric or Metric()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(bound.evaluate(x[None, :], y[None, :], metric)[0])


_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class NoiseModel:
    """Concentration bound ``t -> p_t`` on ``|e_i - e_j|``.

    ``kind="table"`` takes ``(t, p_t)`` pairs; between tabulated points the
    bound at the largest tabulated ``t' <= t`` is used, which stays valid
    because the true tail is nonincreasing.
    """

    kind: str = "gaussian"
    sigma: float = 1.0
    table: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("noiseless", "gaussian", "table"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian" and not self.sigma > 0:
            raise ValueError("gaussian noise needs sigma > 0")
        if self.kind == "table":
            table = tuple(sorted((float(t), float(p)) for t, p in self.table))
            if not table:
                raise ValueError("table noise model needs at least one row")
            ts = [t for t, _ in table]
            ps = [p for _, p in table]
            if any(t <= 0 for t in ts) or len(set(ts)) != len(ts):
                raise ValueError("table thresholds must be distinct and positive")
            if any(not 0 <= p <= 1 for p in ps):
                raise ValueError("table probabilities must lie in [0, 1]")
            if any(b > a for a, b in zip(ps, ps[1:])):
                raise ValueError("table probabilities must be nonincreasing in t")
            object.__setattr__(self, "table", table)

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls("noiseless")

    @classmethod
    def gaussian(cls, sigma: float) -> "NoiseModel":
        return cls("gaussian", sigma=float(sigma))

    @classmethod
    def from_table(cls, rows) -> "NoiseModel":
        return cls("table", table=tuple(tuple(r) for r in rows))

    def tail(self, t: float) -> float:
        if not t > 0:
            raise ValueError("the tail bound is defined for t > 0")
        if self.kind == "noiseless":
            return 0.0
        if self.kind == "gaussian":
            s = self.sigma
            p = (2.0 * s / t) * math.exp(-t * t / (4.0 * s * s)) / _SQRT_2PI
            return min(1.0, p)
        p = 1.0
        for tt, pp in self.table:
            if tt <= t:
                p = pp
            else:
                break
        return p

    def describe(self) -> dict:
        if self.kind == "gaussian":
            return {"kind": "gaussian", "sigma": self.sigma}
        if self.kind == "table":
            return {"kind": "table", "table": [list(r) for r in self.table]}
        return {"kind": "noiseless"}


def noise_tail(model: NoiseModel, t: float) -> float:
    """Bound ``p_t`` on ``P(|e_i - e_j| > t)``, clamped to ``[0, 1]``."""
    return model.tail(t)
