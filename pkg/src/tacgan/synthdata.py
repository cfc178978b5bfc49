"""Ground-truth data: labeled Gaussian mixtures, IDX ingestion, overlap groups.

The mixtures are isotropic per class with exact densities and posteriors
available, so generated samples can be scored against the truth. MNIST-style
data arrives in IDX files (big-endian, magic-checked) and is regrouped into
the two-group overlap construction where digit 0 lives in both groups.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class MixtureSpec:
    """Class-labeled isotropic Gaussian mixture: means (K, dims), stds, priors."""

    means: np.ndarray
    stds: np.ndarray
    priors: np.ndarray

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", np.asarray(self.stds, dtype=np.float64))
        object.__setattr__(self, "priors", np.asarray(self.priors, dtype=np.float64))
        if self.dims not in (1, 2):
            raise ValueError(f"only 1-d and 2-d mixtures are supported, got dims={self.dims}")
        if not (len(self.stds) == len(self.priors) == self.n_classes):
            raise ValueError("means, stds and priors must agree on the class count")
        if np.any(self.stds <= 0):
            raise ValueError(f"standard deviations must be positive: {self.stds}")
        if abs(float(self.priors.sum()) - 1.0) > 1e-12:
            raise ValueError(f"priors must sum to 1, got {self.priors.sum()!r}")

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]

    @property
    def dims(self) -> int:
        return self.means.shape[1]


@dataclass
class LabeledBatch:
    """Samples x (n, dims) with integer class labels y (n,)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y)
        if self.x.ndim != 2 or len(self.y) != self.x.shape[0]:
            raise ValueError(f"inconsistent batch: x {self.x.shape}, y {self.y.shape}")
        if self.x.shape[0] == 0:
            raise ValueError("batch must be nonempty")

    def __len__(self) -> int:
        return self.x.shape[0]


def make_mog_spec(
    d_m: float,
    base_mean=0.0,
    stds=(1.0, 2.0, 3.0),
    priors=None,
) -> MixtureSpec:
    """Three components spaced d_m apart along the first axis.

    base_mean may be a scalar (1-d mixture) or a 2-vector (2-d mixture whose
    second coordinate is shared by all classes).
    """
    if d_m <= 0:
        raise ValueError(f"component spacing d_m must be positive, got {d_m}")
    base = np.atleast_1d(np.asarray(base_mean, dtype=np.float64))
    k = len(stds)
    if priors is None:
        priors = np.full(k, 1.0 / k)
    means = np.tile(base, (k, 1))
    means[:, 0] += d_m * np.arange(k)
    return MixtureSpec(means=means, stds=np.asarray(stds, float), priors=np.asarray(priors, float))


def sample_mog(spec: MixtureSpec, n: int, seed: int) -> LabeledBatch:
    """Draw n labeled points; deterministic in seed."""
    if n <= 0:
        raise ValueError(f"sample count must be positive, got {n}")
    rng = np.random.default_rng(seed)
    y = rng.choice(spec.n_classes, size=n, p=spec.priors)
    x = spec.means[y] + spec.stds[y, None] * rng.standard_normal((n, spec.dims))
    return LabeledBatch(x=x, y=y)


def _component_pdfs(spec: MixtureSpec, x: np.ndarray) -> np.ndarray:
    """N(x; mean_k, std_k^2 I) for every class: shape (n, K)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != spec.dims:
        raise ValueError(f"points have dim {x.shape[1]}, mixture has dim {spec.dims}")
    diff = x[:, None, :] - spec.means[None, :, :]
    sq = (diff**2).sum(axis=2)
    var = spec.stds**2
    norm = (2.0 * np.pi * var) ** (spec.dims / 2.0)
    return np.exp(-0.5 * sq / var) / norm


def mog_pdf(spec: MixtureSpec, x) -> np.ndarray:
    """Mixture density sum_k prior_k N(x; mean_k, std_k^2) at each point."""
    comp = _component_pdfs(spec, x)
    return comp @ spec.priors


def mog_posterior(spec: MixtureSpec, x) -> np.ndarray:
    """P(Y=k | x) rows by Bayes rule; shape (n, K)."""
    weighted = _component_pdfs(spec, x) * spec.priors
    total = weighted.sum(axis=1, keepdims=True)
    return weighted / total


# -- IDX files -------------------------------------------------------------


@dataclass
class IdxDataset:
    images: np.ndarray  # (n, rows, cols) uint8
    labels: np.ndarray  # (n,) uint8

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"image count {self.images.shape[0]} != label count {self.labels.shape[0]}"
            )


def _read_be32(fh, what: str) -> int:
    raw = fh.read(4)
    if len(raw) != 4:
        raise ValueError(f"truncated IDX file while reading {what}")
    return struct.unpack(">i", raw)[0]


def load_idx(image_path, label_path) -> IdxDataset:
    """Parse the big-endian IDX pair, verifying magic numbers and counts."""
    with open(image_path, "rb") as fh:
        magic = _read_be32(fh, "image magic")
        if magic != IDX_IMAGE_MAGIC:
            raise ValueError(
                f"bad image magic: expected {IDX_IMAGE_MAGIC:#010x}, got {magic:#010x}"
            )
        n = _read_be32(fh, "image count")
        rows = _read_be32(fh, "row count")
        cols = _read_be32(fh, "column count")
        raw = fh.read(n * rows * cols)
        if len(raw) != n * rows * cols:
            raise ValueError(
                f"truncated image data: expected {n * rows * cols} bytes, got {len(raw)}"
            )
        images = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows, cols)
    with open(label_path, "rb") as fh:
        magic = _read_be32(fh, "label magic")
        if magic != IDX_LABEL_MAGIC:
            raise ValueError(
                f"bad label magic: expected {IDX_LABEL_MAGIC:#010x}, got {magic:#010x}"
            )
        n_labels = _read_be32(fh, "label count")
        raw = fh.read(n_labels)
        if len(raw) != n_labels:
            raise ValueError(f"truncated label data: expected {n_labels} bytes, got {len(raw)}")
        labels = np.frombuffer(raw, dtype=np.uint8)
    if n != n_labels:
        raise ValueError(f"image count {n} != label count {n_labels}")
    return IdxDataset(images=images, labels=labels)


def save_idx(ds: IdxDataset, image_path, label_path) -> None:
    """Inverse of load_idx; the round trip is bit-identical."""
    n, rows, cols = ds.images.shape
    with open(image_path, "wb") as fh:
        fh.write(struct.pack(">iiii", IDX_IMAGE_MAGIC, n, rows, cols))
        fh.write(ds.images.astype(np.uint8).tobytes())
    with open(label_path, "wb") as fh:
        fh.write(struct.pack(">ii", IDX_LABEL_MAGIC, n))
        fh.write(ds.labels.astype(np.uint8).tobytes())


# -- overlapping groups ----------------------------------------------------


@dataclass
class OverlapGroups:
    """Two 10k groups sharing digit 0: A = {0, 1}, B = {0, 2}.

    x holds flattened images scaled to [-1, 1]; digits keeps the original
    digit identity; the group index (0 for A, 1 for B) is the GAN condition.
    """

    a: LabeledBatch  # y = digit labels within the group
    b: LabeledBatch

    def __post_init__(self):
        if len(self.a) != len(self.b):
            raise ValueError("groups must have equal size")

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(x, group labels, digit labels) over A then B."""
        x = np.concatenate([self.a.x, self.b.x], axis=0)
        groups = np.repeat([0, 1], [len(self.a), len(self.b)])
        digits = np.concatenate([self.a.y, self.b.y])
        return x, groups, digits


def _scale_images(images: np.ndarray) -> np.ndarray:
    flat = images.reshape(images.shape[0], -1).astype(np.float64)
    return flat / 127.5 - 1.0


def build_overlap_groups(
    ds: IdxDataset, seed: int, per_digit: int = 5000, disjoint_zeros: bool = True
) -> OverlapGroups:
    """Draw the two-group construction from an IDX dataset.

    With disjoint_zeros the two digit-0 pools never share an image, which
    needs 2*per_digit zeros in the source data; the real MNIST training set
    has fewer than that, so the harness disables it there and documents the
    reuse (the zeros of A and B are then independent draws without overlap
    inside each group).
    """
    rng = np.random.default_rng(seed)
    by_digit = {d: np.flatnonzero(ds.labels == d) for d in (0, 1, 2)}
    needed = {0: 2 * per_digit if disjoint_zeros else per_digit, 1: per_digit, 2: per_digit}
    for digit, need in needed.items():
        if len(by_digit[digit]) < need:
            raise ValueError(
                f"insufficient digits: need {need} of digit {digit}, found {len(by_digit[digit])}"
            )
    if disjoint_zeros:
        zeros = rng.permutation(by_digit[0])[: 2 * per_digit]
        zeros_a, zeros_b = zeros[:per_digit], zeros[per_digit:]
    else:
        zeros_a = rng.permutation(by_digit[0])[:per_digit]
        zeros_b = rng.permutation(by_digit[0])[:per_digit]
    ones = rng.permutation(by_digit[1])[:per_digit]
    twos = rng.permutation(by_digit[2])[:per_digit]

    def group(idx: np.ndarray) -> LabeledBatch:
        return LabeledBatch(x=_scale_images(ds.images[idx]), y=ds.labels[idx].astype(np.int64))

    return OverlapGroups(
        a=group(np.concatenate([zeros_a, ones])),
        b=group(np.concatenate([zeros_b, twos])),
    )


def balanced_batches(x: np.ndarray, y: np.ndarray, batch_size: int, seed: int):
    """Endless batches with exactly batch_size/K samples per class.

    One epoch is min_k floor(n_k / per_class) batches; within an epoch every
    chosen sample of a class appears exactly once, and classes are reshuffled
    between epochs.
    """
    classes = np.unique(y)
    k = len(classes)
    if batch_size % k != 0:
        raise ValueError(f"batch size {batch_size} not divisible by {k} classes")
    per = batch_size // k
    pools = [np.flatnonzero(y == c) for c in classes]
    n_batches = min(len(p) // per for p in pools)
    if n_batches == 0:
        raise ValueError(f"not enough samples for one balanced batch of {batch_size}")
    rng = np.random.default_rng(seed)

    def gen():
        while True:
            shuffled = [rng.permutation(p) for p in pools]
            for b in range(n_batches):
                idx = np.concatenate([p[b * per : (b + 1) * per] for p in shuffled])
                yield x[idx], y[idx]

    return gen()
