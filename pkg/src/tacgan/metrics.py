"""Evaluation of generated samples: KDE curves, MMD distances, proportions.

The MMD here is the biased V-statistic (diagonal included) under an RBF
kernel, square-rooted after clamping at zero, so mmd(X, X) is exactly 0 and
the value is never negative. Kernel matrices are accumulated block-wise to
keep 30k-sample evaluations inside a small memory budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class DensityEstimate:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float


@dataclass
class MmdResult:
    value: float
    bandwidth: float
    n_x: int
    n_y: int


def kde(samples, bandwidth: float, grid) -> DensityEstimate:
    """Parzen estimate with a Gaussian kernel on a sorted grid of points."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size == 0:
        raise ValueError("kde needs at least one sample")
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    grid = np.asarray(grid, dtype=np.float64)
    norm = 1.0 / (np.sqrt(2.0 * np.pi) * bandwidth * samples.size)
    density = np.empty_like(grid)
    step = 512
    for start in range(0, grid.size, step):
        g = grid[start : start + step]
        z = (g[:, None] - samples[None, :]) / bandwidth
        density[start : start + step] = norm * np.exp(-0.5 * z * z).sum(axis=1)
    return DensityEstimate(grid=grid, density=density, bandwidth=float(bandwidth))


def silverman_bandwidth(samples) -> float:
    """1.06 * min(std, IQR/1.34) * n^(-1/5)."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size < 2:
        raise ValueError(f"need at least 2 samples, got {samples.size}")
    std = samples.std()
    q75, q25 = np.percentile(samples, [75, 25])
    scale = min(std, (q75 - q25) / 1.34)
    if scale <= 0:
        raise ValueError("samples are constant; bandwidth undefined")
    return 1.06 * scale * samples.size ** (-0.2)


def _as_points(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a.reshape(-1, 1) if a.ndim == 1 else a


def _mean_kernel(a: np.ndarray, b: np.ndarray, gamma: float, block: int = 4096) -> float:
    """Mean of exp(-gamma ||a_i - b_j||^2) over all pairs, block-wise.

    When a and b are the same array, only the upper triangle of blocks is
    visited and mirrored.
    """
    same = a is b
    a_sq = (a * a).sum(axis=1)
    b_sq = a_sq if same else (b * b).sum(axis=1)
    total = 0.0
    for i in range(0, a.shape[0], block):
        ai = a[i : i + block]
        ai_sq = a_sq[i : i + block]
        j_start = i if same else 0
        for j in range(j_start, b.shape[0], block):
            bj = b[j : j + block]
            d2 = ai @ bj.T
            d2 *= -2.0
            d2 += ai_sq[:, None]
            d2 += b_sq[j : j + block][None, :]
            np.maximum(d2, 0.0, out=d2)
            d2 *= -gamma
            np.exp(d2, out=d2)
            s = float(d2.sum())
            if same and j > i:
                s *= 2.0
            total += s
    return total / (a.shape[0] * b.shape[0])


def mmd_biased(x, y, bandwidth: float) -> MmdResult:
    """Biased MMD with RBF kernel exp(-||a-b||^2 / (2 h^2))."""
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    x = _as_points(x)
    y = _as_points(y)
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise ValueError("mmd needs nonempty sample sets")
    if x.shape == y.shape and np.array_equal(x, y):
        # the V-statistic is identically zero on equal sets
        return MmdResult(value=0.0, bandwidth=float(bandwidth), n_x=x.shape[0], n_y=y.shape[0])
    gamma = 1.0 / (2.0 * bandwidth**2)
    mmd_sq = _mean_kernel(x, x, gamma) + _mean_kernel(y, y, gamma) - 2.0 * _mean_kernel(x, y, gamma)
    value = float(np.sqrt(max(mmd_sq, 0.0)))
    return MmdResult(value=value, bandwidth=float(bandwidth), n_x=x.shape[0], n_y=y.shape[0])


def median_heuristic(points, seed: int = 0, max_points: int = 2000) -> float:
    """Median pairwise distance over a deterministic subsample."""
    points = _as_points(points)
    if points.shape[0] < 2:
        raise ValueError("median heuristic needs at least 2 points")
    if points.shape[0] > max_points:
        idx = np.random.default_rng(seed).choice(points.shape[0], size=max_points, replace=False)
        points = points[idx]
    sq = (points * points).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (points @ points.T)
    np.maximum(d2, 0.0, out=d2)
    dists = np.sqrt(d2[np.triu_indices(points.shape[0], k=1)])
    med = float(np.median(dists))
    if med <= 0:
        raise ValueError("all points identical; median distance is zero")
    return med


def self_mmd_baseline(
    sample_fn: Callable[[int], np.ndarray], n_pairs: int = 10, base_seed: int = 0
) -> float:
    """Noise floor: median MMD between independent draws of the same source.

    sample_fn(seed) must return one sample set; each pair uses two fresh
    seeds and the median heuristic on their union.
    """
    values = []
    for i in range(n_pairs):
        a = sample_fn(base_seed + 2 * i)
        b = sample_fn(base_seed + 2 * i + 1)
        h = median_heuristic(np.concatenate([_as_points(a), _as_points(b)]), seed=base_seed + i)
        values.append(mmd_biased(a, b, h).value)
    return float(np.median(values))


def write_kde_csv(estimate: DensityEstimate, path) -> None:
    """Two-column curve dump: grid, density. Floats round-trip exactly."""
    with open(path, "w") as fh:
        fh.write("grid,density\n")
        for g, d in zip(estimate.grid, estimate.density):
            fh.write(f"{float(g)!r},{float(d)!r}\n")


def label_proportions(samples: np.ndarray, oracle: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Frequencies of the oracle's argmax class over the samples."""
    scores = oracle(np.asarray(samples, dtype=np.float64))
    if scores.ndim != 2:
        raise ValueError(f"oracle must return per-class scores, got shape {scores.shape}")
    picks = scores.argmax(axis=1)
    k = scores.shape[1]
    counts = np.bincount(picks, minlength=k).astype(np.float64)
    return counts / counts.sum()
