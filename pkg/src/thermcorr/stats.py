"""Resampling error estimates for Monte Carlo averages."""

from __future__ import annotations

from typing import Callable

import numpy as np


def jackknife(samples, estimator: Callable[..., np.ndarray] | None = None, blocks: int | None = None):
    """Delete-one-block jackknife estimate and standard error.

    Parameters
    ----------
    samples : array_like or tuple of array_like
        Per-sample observables along axis 0.  A tuple is passed to
        ``estimator`` as separate arguments, each already block-averaged.
    estimator : callable, optional
        Function of the sample means.  Defaults to the identity, in which
        case the error reduces to the usual standard error of the mean.
    blocks : int, optional
        Number of blocks; defaults to one block per sample (capped at 200).

    Returns
    -------
    value, error : ndarray
    """
    arrays = samples if isinstance(samples, tuple) else (samples,)
    arrays = tuple(np.asarray(a, dtype=float) for a in arrays)
    n = arrays[0].shape[0]
    if n < 2:
        raise ValueError("jackknife needs at least two samples")
    if estimator is None:
        estimator = lambda *m: m[0] if len(m) == 1 else np.stack(m)  # noqa: E731
    nb = min(n, 200) if blocks is None else min(blocks, n)
    # equal-size blocks; leftover samples are folded into the last block
    edges = np.linspace(0, n, nb + 1).astype(int)
    sums = [np.add.reduceat(a, edges[:-1], axis=0) for a in arrays]
    counts = np.diff(edges).reshape((-1,) + (1,) * (arrays[0].ndim - 1))
    totals = [s.sum(axis=0) for s in sums]
    full = np.asarray(estimator(*[t / n for t in totals]))
    loo = np.stack([
        np.asarray(estimator(*[(t - s[b]) / (n - counts[b]) for t, s in zip(totals, sums)]))
        for b in range(nb)
    ])
    mean_loo = loo.mean(axis=0)
    err = np.sqrt((nb - 1) / nb * np.sum((loo - mean_loo) ** 2, axis=0))
    return full, err


def bootstrap(samples, estimator: Callable[[np.ndarray], np.ndarray], resamples: int = 400,
              rng: np.random.Generator | None = None):
    """Nonparametric bootstrap of ``estimator`` over rows of ``samples``.

    Returns the estimate on the full data and the bootstrap standard deviation.
    """
    data = np.asarray(samples)
    rng = np.random.default_rng(0) if rng is None else rng
    n = data.shape[0]
    full = np.asarray(estimator(data))
    reps = np.stack([np.asarray(estimator(data[rng.integers(0, n, n)])) for _ in range(resamples)])
    return full, reps.std(axis=0, ddof=1)
