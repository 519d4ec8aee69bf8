"""MNIST ingestion and the digit-orientation experiment.

Each digit class is split in half; one half is mirrored and, for digits
whose mirror image is a different symbol, relabelled 0.  The asymmetric
variation test then looks for pairs the dihedral action brings closer than
any two differently-labelled images in the data.
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .avt import AvtConfig, run_avt
from .core import Dataset, GeneratorDistribution, Metric, NoiseModel, VariationBound, d4_image_action
from .sampling import SeededRng

__all__ = [
    "ORIENTED_DIGITS",
    "D4_ELEMENTS",
    "IdxFormatError",
    "VacuousBoundError",
    "ImageDataset",
    "OrientationDataset",
    "EstimatedLipschitz",
    "MnistReport",
    "read_idx",
    "write_idx",
    "load_mnist",
    "find_mnist_files",
    "apply_d4",
    "build_orientation_dataset",
    "estimate_lipschitz",
    "group_distribution",
    "run_mnist_experiment",
]

ORIENTED_DIGITS = frozenset({2, 3, 4, 5, 6, 7, 9})
D4_ELEMENTS = ("e", "a", "a^2", "a^3", "b", "ba", "ba^2", "ba^3")

_IDX_TYPES = {
    0x08: np.dtype("u1"),
    0x09: np.dtype("i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_IDX_CODES = {np.dtype(v).str.lstrip("<>|="): k for k, v in _IDX_TYPES.items()}


class IdxFormatError(ValueError):
    pass


class VacuousBoundError(ValueError):
    """Raised when no pair of differently-labelled images exists."""


def _open(path: Path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    return gzip.open(path, "rb") if head == b"\x1f\x8b" else open(path, "rb")


def read_idx(path: str | Path, scale: bool = True) -> np.ndarray:
    """Read an IDX file (optionally gzip-compressed).

    Unsigned-byte tensors of rank 3 are images and come back as float64
    scaled into ``[0, 1]`` unless ``scale`` is false; rank-1 unsigned-byte
    tensors are labels and come back as ``int64``.
    """
    path = Path(path)
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise IdxFormatError(f"{path}: file too short for an IDX header")
    zero, code, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0 or code not in _IDX_TYPES or ndim == 0:
        raise IdxFormatError(f"{path}: bad magic number {raw[:4].hex()}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxFormatError(f"{path}: truncated header")
    shape = struct.unpack(">" + "I" * ndim, raw[4:header])
    dtype = _IDX_TYPES[code]
    count = int(np.prod(shape, dtype=np.int64))
    need = header + count * dtype.itemsize
    if len(raw) < need:
        raise IdxFormatError(f"{path}: truncated data ({len(raw)} of {need} bytes)")
    if len(raw) > need:
        raise IdxFormatError(f"{path}: {len(raw) - need} trailing bytes")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=header).reshape(shape)
    if code == 0x08 and ndim == 3 and scale:
        return data.astype(np.float64) / 255.0
    if code == 0x08 and ndim == 1:
        return data.astype(np.int64)
    return data.astype(dtype.newbyteorder("="))


def write_idx(path: str | Path, array, compress: bool | None = None) -> None:
    """Write ``array`` as IDX.

    Float arrays are taken to be ``[0, 1]`` intensities and stored as
    rounded unsigned bytes; integer label arrays are stored as bytes.
    """
    path = Path(path)
    arr = np.asarray(array)
    if arr.dtype.kind == "f":
        if arr.size and (arr.min() < 0 or arr.max() > 1):
            raise ValueError("float images must lie in [0, 1]")
        arr = np.rint(arr * 255.0).astype(np.uint8)
    elif arr.dtype.kind in "iu" and arr.size and 0 <= arr.min() and arr.max() <= 255:
        arr = arr.astype(np.uint8)
    code = _IDX_CODES.get(arr.dtype.str.lstrip("<>|="))
    if code is None:
        raise ValueError(f"cannot store dtype {arr.dtype} in IDX")
    payload = struct.pack(">HBB", 0, code, arr.ndim)
    payload += struct.pack(">" + "I" * arr.ndim, *arr.shape)
    payload += arr.astype(_IDX_TYPES[code]).tobytes()
    if compress is None:
        compress = path.suffix == ".gz"
    opener = gzip.open if compress else open
    with opener(path, "wb") as fh:
        fh.write(payload)


@dataclass(frozen=True)
class ImageDataset:
    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.ndim != 3 or images.shape[1] != images.shape[2]:
            raise ValueError("images must be an (n, side, side) array")
        if labels.shape != (images.shape[0],):
            raise ValueError(
                f"{labels.size} labels for {images.shape[0]} images"
            )
        if images.size and (images.min() < 0 or images.max() > 1):
            raise ValueError("intensities must lie in [0, 1]")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    @property
    def side(self) -> int:
        return self.images.shape[1]

    def digit(self, n: int) -> np.ndarray:
        return self.images[self.labels == n]


def find_mnist_files(directory: str | Path, split: str = "train") -> tuple[Path, Path]:
    """Locate ``<split>-images-idx3-ubyte`` and ``<split>-labels-idx1-ubyte``
    (plain or ``.gz``, with ``-`` or ``.`` before ``idx``)."""
    directory = Path(directory)
    found = []
    for kind, rank in (("images", 3), ("labels", 1)):
        hit = None
        for sep in ("-", "."):
            for ext in ("", ".gz"):
                cand = directory / f"{split}-{kind}{sep}idx{rank}-ubyte{ext}"
                if cand.exists():
                    hit = cand
                    break
            if hit:
                break
        if hit is None:
            raise FileNotFoundError(f"no {split} {kind} IDX file in {directory}")
        found.append(hit)
    return found[0], found[1]


def load_mnist(images_path: str | Path, labels_path: str | Path) -> ImageDataset:
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim != 3:
        raise IdxFormatError(f"{images_path}: expected a rank-3 image tensor")
    if labels.ndim != 1:
        raise IdxFormatError(f"{labels_path}: expected a rank-1 label vector")
    if labels.shape[0] != images.shape[0]:
        raise IdxFormatError(
            f"{labels.shape[0]} labels do not match {images.shape[0]} images"
        )
    return ImageDataset(images, labels)


def apply_d4(element: str, image) -> np.ndarray:
    """Act on a square image by a dihedral word.

    ``a`` turns the image a quarter counter-clockwise and ``b`` mirrors it
    left to right; words act right to left, so ``"ba"`` rotates first.
    """
    image = np.asarray(image)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ValueError("apply_d4 needs a square image")
    if element not in D4_ELEMENTS:
        raise KeyError(f"unknown D4 element {element!r}")
    if element == "e":
        return image.copy()
    word = element.replace("^2", "a").replace("^3", "aa")
    out = image
    for letter in reversed(word):
        out = np.rot90(out) if letter == "a" else np.fliplr(out)
    return np.ascontiguousarray(out)


@dataclass(frozen=True)
class OrientationDataset:
    digit: int
    dataset: Dataset
    upright: np.ndarray
    reflected: np.ndarray
    oriented: bool


def build_orientation_dataset(images, digit: int, oriented=ORIENTED_DIGITS,
                              seed: int = 0) -> OrientationDataset:
    """Split one digit class at random, mirror one half, label the result.

    The unmirrored half is labelled 1; the mirrored half is labelled 1 only
    when the digit is not in ``oriented``.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3 or images.shape[1] != images.shape[2]:
        raise ValueError("images must be an (n, side, side) array")
    k = images.shape[0]
    if k < 2:
        raise ValueError("need at least two images")
    perm = SeededRng(seed).generator.permutation(k)
    upright = np.sort(perm[: k // 2])
    reflected = np.sort(perm[k // 2:])
    X = images.copy()
    X[reflected] = X[reflected][:, :, ::-1]
    y = np.ones(k)
    is_oriented = int(digit) in set(oriented)
    if is_oriented:
        y[reflected] = 0.0
    return OrientationDataset(
        digit=int(digit),
        dataset=Dataset(X.reshape(k, -1), y),
        upright=upright,
        reflected=reflected,
        oriented=is_oriented,
    )


@dataclass(frozen=True)
class EstimatedLipschitz:
    L_hat: float
    min_distance: float
    subsample: int | None
    pairs_scanned: int


def estimate_lipschitz(data: OrientationDataset | Dataset, subsample: int | None = None,
                       seed: int = 0, metric: Metric | None = None) -> EstimatedLipschitz:
    """Reciprocal of the smallest distance between a 1-labelled and a
    0-labelled input.

    With ``subsample`` set, at most that many points are drawn from each
    class (seeded) before the scan.
    """
    ds = data.dataset if isinstance(data, OrientationDataset) else data
    metric = metric or Metric()
    y = ds.responses[:, 0]
    ones = np.nonzero(y == 1.0)[0]
    zeros = np.nonzero(y == 0.0)[0]
    if ones.size == 0 or zeros.size == 0:
        raise VacuousBoundError("only one class present: bound unavailable, test is vacuous")
    if subsample is not None:
        rng = SeededRng(seed).generator
        if ones.size > subsample:
            ones = np.sort(rng.choice(ones, subsample, replace=False))
        if zeros.size > subsample:
            zeros = np.sort(rng.choice(zeros, subsample, replace=False))
    A = ds.points[ones]
    B = ds.points[zeros]
    best = np.inf
    block = max(1, (1 << 22) // max(1, B.shape[0]))
    for start in range(0, A.shape[0], block):
        best = min(best, float(metric.pairwise(A[start:start + block], B).min()))
    if best <= 0:
        raise VacuousBoundError("a 1-labelled and a 0-labelled input coincide")
    return EstimatedLipschitz(1.0 / best, best, subsample, int(ones.size * zeros.size))


def group_distribution(choice: str) -> GeneratorDistribution:
    """``D4``: uniform on ``{a, b}``; ``a``/``<a>``: always ``a``;
    ``b``/``<b>``: always ``b``."""
    key = choice.strip().lower().strip("<>")
    if key == "d4":
        return GeneratorDistribution.uniform(("a", "b"))
    if key in ("a", "b"):
        return GeneratorDistribution.point_mass(key)
    raise ValueError(f"unknown group choice {choice!r}; use D4, a or b")


@dataclass
class MnistReport:
    digit: int
    group: str
    n: int
    m: int
    N0: int
    p_value: float
    vacuous: bool
    L_hat: float | None
    min_distance: float | None
    subsample: int | None
    seed: int
    avt: dict | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "digit": self.digit,
            "group": self.group,
            "n": self.n,
            "m": self.m,
            "N0": self.N0,
            "p_value": self.p_value,
            "vacuous": self.vacuous,
            "L_hat": self.L_hat,
            "min_distance": self.min_distance,
            "subsample": self.subsample,
            "seed": self.seed,
            "avt": self.avt,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def run_mnist_experiment(images: ImageDataset, digit: int, group: str = "D4",
                         m: int = 1000, seed: int = 0, subsample: int | None = None,
                         oriented=ORIENTED_DIGITS) -> MnistReport:
    """Noiseless asymmetric variation test of one digit's orientation data.

    Reports ``N_0``, the number of the ``m`` pairs with ``D > 0``; with no
    noise the p-value is 0 exactly when ``N_0 > 0``.
    """
    od = build_orientation_dataset(images.digit(digit), digit, oriented, seed)
    dist = group_distribution(group)
    meta = {"oriented_digits": sorted(oriented), "split_seed": seed,
            "distance": "euclidean on [0, 1] pixels"}
    try:
        est = estimate_lipschitz(od, subsample, seed)
    except VacuousBoundError as exc:
        # identical responses give |Y_i - Y_j| = 0, so no pair can exceed any bound
        meta["vacuous_reason"] = str(exc)
        return MnistReport(digit, group, od.dataset.n, m, 0, 1.0, True, None, None,
                           subsample, seed, None, meta)
    action = d4_image_action(images.side, output="trivial")
    config = AvtConfig(
        m=m,
        noise=NoiseModel.noiseless(),
        bound=VariationBound.known(est.L_hat),
        thresholds=(0.0,),
        generator_dist=dist,
        seed=seed,
        stream=1,
    )
    report = run_avt(od.dataset, action, config)
    return MnistReport(
        digit=digit,
        group=group,
        n=od.dataset.n,
        m=m,
        N0=report.per_threshold[0].N_t,
        p_value=report.p_value,
        vacuous=False,
        L_hat=est.L_hat,
        min_distance=est.min_distance,
        subsample=subsample,
        seed=seed,
        avt=report.to_dict(),
        metadata=meta,
    )
