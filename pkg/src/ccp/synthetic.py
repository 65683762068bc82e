"""Seeded synthetic data sets with known feature structure."""

from __future__ import annotations

import numpy as np

from .dataset import DataMatrix, LabelVector


def correlated_blobs(M: int = 300, I: int = 500, n_classes: int = 3,
                     informative: int = 50, shift: float = 5.0, latent_sd: float = 0.5,
                     noise_sd: float = 1.0, seed: int = 0):
    """Classes marked by blocks of mutually correlated features.

    Feature block ``c`` (``informative`` columns) shares a per-sample latent
    value that is shifted by ``shift`` for samples of class ``c``; each
    column adds independent noise. Remaining columns are pure noise.
    Returns ``(data, labels, blocks)`` with ``blocks[c]`` the column
    indices of block ``c``.
    """
    if n_classes * informative > I:
        raise ValueError("not enough features for the informative blocks")
    rng = np.random.default_rng(seed)
    y = rng.permutation(np.arange(M) % n_classes)
    X = rng.standard_normal((M, I))
    blocks = []
    for c in range(n_classes):
        cols = np.arange(c * informative, (c + 1) * informative)
        latent = shift * (y == c) + latent_sd * rng.standard_normal(M)
        X[:, cols] = latent[:, None] + noise_sd * rng.standard_normal((M, cols.size))
        blocks.append(cols)
    return DataMatrix(X), LabelVector(y), blocks


def two_block(M: int = 200, I: int = 400, noise_sd: float = 0.15, seed: int = 0):
    """Features driven by one of two independent latent signals.

    Returns ``(data, truth)`` where ``truth[i]`` is the signal (0 or 1)
    behind feature ``i``; the feature order is shuffled.
    """
    rng = np.random.default_rng(seed)
    latent = rng.standard_normal((M, 2))
    truth = rng.permutation(np.arange(I) % 2)
    gain = rng.uniform(0.5, 2.0, size=I)
    X = latent[:, truth] * gain + noise_sd * rng.standard_normal((M, I))
    return DataMatrix(X), truth
