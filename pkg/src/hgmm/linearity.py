"""Affine-fit residual metric for sigma-point propagation.

How well a propagated point set is explained by the best affine model
x' = A x + b is measured by the least-squares residual, computed through
an LQ factorization of the augmented pre-point matrix so that neither A
nor b is ever materialized.  The direction of worst fit becomes the
splitting axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatchError

_TIE_TOL = 1e-10
_RANK_TOL = 1e-12


@dataclass(frozen=True)
class LinearityReport:
    """Result of the affine-fit assessment for one mixand."""

    e_res: float                 # threshold-comparable residual (per normalization mode)
    e_res_raw: float             # raw Frobenius-norm residual
    point_residuals: np.ndarray  # n_x x (2 n_x + 1), column j = residual of point j
    split_axis: np.ndarray       # unit vector, direction of worst affine fit
    passed: bool
    rank_deficient: bool = False


def _principal_axis(moment: np.ndarray) -> np.ndarray:
    """Top eigenvector of a symmetric moment matrix, deterministically signed."""
    evals, evecs = scipy.linalg.eigh(moment)
    top = evals[-1]
    if top <= 0.0:
        axis = np.zeros(moment.shape[0])
        axis[0] = 1.0
        return axis
    # Candidates within tie tolerance of the top eigenvalue; prefer the one
    # loading most heavily on the lowest coordinate index.
    tied = [i for i in range(len(evals)) if evals[i] >= top - _TIE_TOL * max(top, 1.0)]
    best = min(tied, key=lambda i: int(np.argmax(np.abs(evecs[:, i]))))
    axis = evecs[:, best].copy()
    nz = np.nonzero(np.abs(axis) > 1e-14)[0]
    if nz.size and axis[nz[0]] < 0:
        axis = -axis
    return axis / np.linalg.norm(axis)


def assess_linearity(
    pre_points: np.ndarray,
    post_points: np.ndarray,
    *,
    prior_cov: np.ndarray | None = None,
    normalization: str = "scaled",
    e_res_max: float = math.inf,
) -> LinearityReport:
    """Assess how well an affine model explains the point propagation.

    ``pre_points`` and ``post_points`` are the 2*n_x + 1 state sigma
    points (rows) before and after propagation; noise-block points do not
    participate.  ``normalization``:

    * ``"raw"`` -- the plain Frobenius residual (unit-dependent),
    * ``"scaled"`` -- raw divided by sqrt(2 n_x + 1) and by
      sqrt(trace(prior covariance)), comparable across state scales
      (requires ``prior_cov``).
    """
    pre = np.asarray(pre_points, dtype=float)
    post = np.asarray(post_points, dtype=float)
    if pre.shape != post.shape or pre.ndim != 2:
        raise DimensionMismatchError(
            f"pre/post point shapes differ: {pre.shape} vs {post.shape}"
        )
    m, n_x = pre.shape
    if m != 2 * n_x + 1:
        raise DimensionMismatchError(
            f"expected {2 * n_x + 1} state points for dim {n_x}, got {m}"
        )

    # Augmented pre-point matrix: state rows plus a row of ones.  Its LQ
    # factors come from the QR factorization of the transpose.
    c_aug = np.vstack([pre.T, np.ones((1, m))])          # (n_x + 1, m)
    q_t, r_t = scipy.linalg.qr(c_aug.T)                  # c_aug = r_t.T @ q_t.T
    l_full, q = r_t.T, q_t.T                             # L (n_x+1, m), Q (m, m)
    l0_diag = np.abs(np.diag(l_full[:, : n_x + 1]))
    rank_deficient = bool(l0_diag.min() <= _RANK_TOL * max(l0_diag.max(), 1.0))

    rotated = post.T @ q.T                               # (n_x, m)
    chi_res = rotated[:, n_x + 1:]                       # unexplained block
    e_raw = float(np.linalg.norm(chi_res))
    padded = np.hstack([np.zeros((n_x, n_x + 1)), chi_res])
    point_residuals = padded @ q                         # (n_x, m)

    # Splitting axis: principal eigenvector of the residual-norm-weighted
    # second moment of the pre-points, centered on the prior mean.
    mu = pre[0]
    res_norms = np.linalg.norm(point_residuals, axis=0)
    centered = pre - mu
    moment = (centered * res_norms[:, None]).T @ centered
    axis = _principal_axis(0.5 * (moment + moment.T))

    if normalization == "raw":
        e_res = e_raw
    elif normalization == "scaled":
        if prior_cov is None:
            raise ValueError("scaled normalization requires prior_cov")
        tr = max(float(np.trace(np.atleast_2d(prior_cov))), 1e-300)
        e_res = e_raw / (math.sqrt(m) * math.sqrt(tr))
    else:
        raise ValueError(f"unknown normalization mode {normalization!r}")

    passed = bool(rank_deficient or e_res <= e_res_max)
    return LinearityReport(
        e_res=e_res,
        e_res_raw=e_raw,
        point_residuals=point_residuals,
        split_axis=axis,
        passed=passed,
        rank_deficient=rank_deficient,
    )
