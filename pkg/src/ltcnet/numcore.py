"""Deterministic numeric helpers for seeded weight draws and 2-D trajectory measurements.

Matrices are plain 2-D float64 ndarrays; a 2-D polyline is an ``(N, 2)`` array.
"""

from __future__ import annotations

import numpy as np

from ltcnet.errors import ParameterError

#: Identifier stored in reports and checkpoints so a run can be replayed.
RNG_ALGORITHM = "numpy.PCG64"


def make_rng(seed: int) -> np.random.Generator:
    if seed < 0 or seed >= 2**64:
        raise ParameterError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def child_seed(seed: int, *keys: int) -> int:
    """Derive an independent 64-bit seed for a sub-stream, e.g. one trial."""
    ss = np.random.SeedSequence([seed, *keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def gaussian_matrix(rows: int, cols: int, mean: float, variance: float, seed: int) -> np.ndarray:
    """i.i.d. ``N(mean, variance)`` matrix, reproducible per seed.

    Draws standard normals and applies ``mean + sqrt(variance) * z``, so for
    a fixed seed the output is an affine function of the scale.
    """
    if variance < 0 or not np.isfinite(variance):
        raise ParameterError(f"variance must be a finite non-negative number, got {variance}")
    if rows < 0 or cols < 0:
        raise ParameterError("rows and cols must be non-negative")
    z = make_rng(seed).standard_normal((rows, cols))
    return mean + np.sqrt(variance) * z


def pca_top2(samples) -> tuple[np.ndarray, np.ndarray]:
    """Project observations onto their two leading principal axes.

    Parameters
    ----------
    samples : array_like, shape (observations, dims)

    Returns
    -------
    projection : ndarray, shape (observations, 2)
        Scores of the mean-centred data. Each axis is signed so that its
        largest-magnitude loading is positive.
    variance_explained : ndarray, shape (2,)
        Fraction of the total variance carried by each component. Both are
        zero for constant data, and the second is zero for rank-1 data.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ParameterError(f"samples must be 2-D, got shape {x.shape}")
    n_obs, dims = x.shape
    if n_obs < 2 or dims < 2:
        raise ParameterError(f"need at least 2 observations and 2 dims, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("samples contain non-finite entries")

    centred = x - x.mean(axis=0)
    cov = centred.T @ centred / (n_obs - 1)
    total = float(np.trace(cov))
    if total <= 0.0:
        return np.zeros((n_obs, 2)), np.zeros(2)

    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:2]
    evals = np.clip(evals[order], 0.0, None)
    axes = evecs[:, order]
    # numerically null directions carry no signal; zero them so rank-deficient
    # inputs give an exactly zero component
    null = evals <= total * 1e-13
    evals[null] = 0.0
    axes[:, null] = 0.0
    for j in range(2):
        pivot = np.argmax(np.abs(axes[:, j]))
        if axes[pivot, j] < 0:
            axes[:, j] = -axes[:, j]
    return centred @ axes, evals / total


def arc_length(path) -> float:
    """Sum of Euclidean lengths of consecutive segments of a polyline."""
    p = np.asarray(path, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] < 1:
        raise ParameterError(f"path must be a non-empty (N, d) array, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ParameterError("path contains non-finite coordinates")
    if p.shape[0] == 1:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1)))
