"""Mixture size control by moment-preserving pairwise merging.

Pairs sharing the same discrete label are merged greedily, always taking
the pair with the smallest KLD-upper-bound dissimilarity.  Merging is
moment-matched, so the mixture's global mean and covariance are exact
invariants of any merge sequence.  Hypotheses with different discrete
labels are never merged; if the number of distinct labels alone exceeds
the cap, the lightest hypotheses are dropped with a warning.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import Gaussian, HybridMixand, HybridMixture, normalize, symmetrize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReductionConfig:
    """Mixture size cap; merging only ever occurs within a discrete state."""

    max_mixands: int = 10

    def __post_init__(self):
        if self.max_mixands < 1:
            raise ValueError("max_mixands must be at least 1")


def merge_pair(a: HybridMixand, b: HybridMixand) -> HybridMixand:
    """Moment-matched merge of two mixands sharing a discrete label."""
    w = a.weight + b.weight
    wa, wb = a.weight / w, b.weight / w
    mean = wa * a.gaussian.mean + wb * b.gaussian.mean
    da = a.gaussian.mean - mean
    db = b.gaussian.mean - mean
    cov = symmetrize(
        wa * (a.gaussian.cov + np.outer(da, da)) + wb * (b.gaussian.cov + np.outer(db, db))
    )
    return HybridMixand(w, a.discrete, Gaussian(mean, cov))


def merge_cost(a: HybridMixand, b: HybridMixand) -> float:
    """KLD upper bound on the divergence increase caused by merging a and b."""
    merged = merge_pair(a, b)
    _, ld_ab = np.linalg.slogdet(merged.gaussian.cov)
    _, ld_a = np.linalg.slogdet(a.gaussian.cov)
    _, ld_b = np.linalg.slogdet(b.gaussian.cov)
    return 0.5 * ((a.weight + b.weight) * ld_ab - a.weight * ld_a - b.weight * ld_b)


def reduce_mixture(mix: HybridMixture, cfg: ReductionConfig) -> HybridMixture:
    """Merge mixands until the total count is at most the configured cap."""
    if len(mix) <= cfg.max_mixands:
        return mix
    mixands = list(mix.mixands)
    # Pairwise costs are cached and only recomputed for pairs touching the
    # most recent merge product.
    costs = {}

    def pair_cost(i, j):
        key = (id(mixands[i]), id(mixands[j]))
        if key not in costs:
            costs[key] = merge_cost(mixands[i], mixands[j])
        return costs[key]

    while len(mixands) > cfg.max_mixands:
        best = None
        for i in range(len(mixands)):
            for j in range(i + 1, len(mixands)):
                if mixands[i].discrete != mixands[j].discrete:
                    continue
                cost = pair_cost(i, j)
                if best is None or cost < best[0] - 1e-15:
                    best = (cost, i, j)
        if best is None:
            # Only distinct discrete hypotheses remain; drop the lightest.
            drop = min(range(len(mixands)), key=lambda i: (mixands[i].weight, i))
            log.warning(
                "mixand cap %d below distinct discrete hypothesis count; "
                "dropping hypothesis %r with weight %.3e",
                cfg.max_mixands,
                mixands[drop].discrete,
                mixands[drop].weight,
            )
            mixands.pop(drop)
            continue
        _, i, j = best
        merged = merge_pair(mixands[i], mixands[j])
        mixands = mixands[:i] + [merged] + mixands[i + 1 : j] + mixands[j + 1 :]
    return normalize(mixands, mix.time_index)
