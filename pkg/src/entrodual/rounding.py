"""Rounding near-feasible primal estimates to exactly feasible points.

Each rounder returns the feasible payload together with a proven bound on the
objective perturbation it can introduce. Transport plans are fixed by
row/column scaling plus a rank-one mass correction; SDP estimates are fixed by
deflating the offending diagonal (or diagonal-block spectrum) and shifting the
deficit back in, which keeps the output PSD by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = ["RoundedPrimal", "PSDFactor", "psd_factor", "round_ot",
           "round_unit_diag", "round_maxcut", "round_strong_ps", "triple_norm"]


@dataclass(frozen=True)
class RoundedPrimal:
    """Feasible payload, the certified perturbation bound, and the shift actually measured.

    measured_shift is the realized |<A, X - X'>| (or |<c, pi_hat - pi>|) when
    the objective matrix was supplied; for transport without a cost it is the
    entrywise l1 movement of the plan, the quantity the certificate bounds.
    """

    payload: np.ndarray
    perturbation_certificate: float
    measured_shift: Optional[float] = None


@dataclass(frozen=True)
class PSDFactor:
    """Factor v with x = v.T @ v; negative eigenvalue mass clipped to zero."""

    v: np.ndarray
    clip_mass: float


def _check_symmetric(x, name="matrix"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"{name} must be square")
    scale = max(1.0, float(np.abs(x).max()))
    if np.abs(x - x.T).max() > 1e-8 * scale:
        raise ValueError(f"{name} must be symmetric")
    return (x + x.T) / 2


def psd_factor(x, tol: float = 1e-8) -> PSDFactor:
    """Eigendecomposition factor of a numerically PSD matrix.

    Eigenvalues below -tol * ||x||_2 are rejected; small negatives above that
    are clipped to zero and their total magnitude reported as clip_mass.
    """
    x = _check_symmetric(x)
    w, u = np.linalg.eigh(x)
    spectral = float(np.abs(w).max()) if w.size else 0.0
    if w.size and w.min() < -tol * max(spectral, 1e-300):
        raise ValueError(f"input not numerically PSD: min eigenvalue {w.min():.3e}")
    clipped = np.clip(w, 0.0, None)
    clip_mass = float(np.clip(-w, 0.0, None).sum())
    return PSDFactor(v=np.sqrt(clipped)[:, None] * u.T, clip_mass=clip_mass)


def round_ot(pi, mu, nu, cost=None) -> RoundedPrimal:
    """Scale rows then columns down to the marginals, then restore the deficit.

    Rows are scaled by min(1, mu_i / row_mass_i) (factor 1 on empty rows),
    columns likewise, and the remaining nonnegative marginal deficits are added
    back as a rank-one term, so the output marginals are exact. The certified
    entrywise l1 movement is twice the input's total marginal error.
    """
    pi = np.asarray(pi, dtype=float)
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if pi.ndim != 2 or pi.shape != (mu.size, nu.size):
        raise ValueError("plan must be m x n matching the marginals")
    if np.any(pi < 0.0):
        raise ValueError("plan must be entrywise nonnegative")

    row = pi.sum(axis=1)
    col0 = pi.sum(axis=0)
    certificate = 2.0 * float(np.abs(row - mu).sum() + np.abs(col0 - nu).sum())

    x = np.where(row > 0.0, np.minimum(1.0, mu / np.where(row > 0.0, row, 1.0)), 1.0)
    scaled = pi * x[:, None]
    col = scaled.sum(axis=0)
    y = np.where(col > 0.0, np.minimum(1.0, nu / np.where(col > 0.0, col, 1.0)), 1.0)
    scaled = scaled * y[None, :]

    # deficits are nonnegative in exact arithmetic; clamp roundoff dust so the
    # rank-one fill cannot introduce negative entries
    err_r = np.maximum(mu - scaled.sum(axis=1), 0.0)
    err_c = np.maximum(nu - scaled.sum(axis=0), 0.0)
    mass = err_r.sum()
    if mass > 0.0:
        rounded = scaled + np.outer(err_r, err_c) / mass
    else:
        rounded = scaled

    if cost is None:
        measured = float(np.abs(rounded - pi).sum())
    else:
        cost = np.asarray(cost, dtype=float)
        if cost.shape != pi.shape:
            raise ValueError("cost must match the plan shape")
        measured = float(abs(np.sum(cost * (rounded - pi))))
    return RoundedPrimal(payload=rounded, perturbation_certificate=certificate,
                         measured_shift=measured)


def _row_sum_norm(a) -> float:
    return float(np.abs(a).sum(axis=1).max())


def round_unit_diag(x, a=None) -> RoundedPrimal:
    """Round a PSD matrix to exact unit diagonal.

    Entries with x_ii > 1 are deflated by the scaling d_i = 1/sqrt(x_ii),
    which keeps the matrix PSD and caps the diagonal at 1; the remaining
    diagonal deficit is added back as a nonnegative diagonal. Objective shift
    against a symmetric a is certified at 3 * delta * max abs row sum of a,
    delta the l1 diagonal error of the input.
    """
    x = _check_symmetric(x)
    factor = psd_factor(x)
    x = factor.v.T @ factor.v
    diag = np.diag(x).copy()
    delta = float(np.abs(diag - 1.0).sum())

    d = np.where(diag > 1.0, 1.0 / np.sqrt(np.where(diag > 1.0, diag, 1.0)), 1.0)
    deflated = x * np.outer(d, d)
    rounded = deflated.copy()
    np.fill_diagonal(rounded, 1.0)

    if a is None:
        return RoundedPrimal(payload=rounded, perturbation_certificate=3.0 * delta)
    a = _check_symmetric(a, "objective matrix")
    certificate = 3.0 * delta * _row_sum_norm(a)
    measured = float(abs(np.sum(a * (x - rounded))))
    return RoundedPrimal(payload=rounded, perturbation_certificate=certificate,
                         measured_shift=measured)


def round_maxcut(x, b, a) -> RoundedPrimal:
    """Round a PSD matrix to exact diagonal b > 0.

    Conjugating by diag(1/sqrt(b)) reduces to the unit-diagonal case; the
    certificate is 3 * kappa * delta * max abs row sum of a, with kappa the
    ratio of extreme entries of b and delta the measured l1 diagonal error.
    """
    x = _check_symmetric(x)
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or b.size != x.shape[0]:
        raise ValueError("b must be a vector matching the matrix size")
    if np.any(b <= 0.0):
        raise ValueError("b must be strictly positive")
    a = _check_symmetric(a, "objective matrix")

    delta = float(np.abs(np.diag(x) - b).sum())
    kappa = float(b.max() / b.min())

    root = np.sqrt(b)
    frame = np.outer(root, root)
    unit = round_unit_diag(x / frame)
    rounded = unit.payload * frame
    np.fill_diagonal(rounded, b)

    certificate = 3.0 * kappa * delta * _row_sum_norm(a)
    measured = float(abs(np.sum(a * (x - rounded))))
    return RoundedPrimal(payload=rounded, perturbation_certificate=certificate,
                         measured_shift=measured)


def _block_slices(n, num_images, block_size):
    if num_images < 1 or block_size < 1 or num_images * block_size != n:
        raise ValueError(
            f"blocks of size {block_size} x {num_images} do not tile size {n}")
    return [slice(i * block_size, (i + 1) * block_size) for i in range(num_images)]


def triple_norm(a, num_images: int, block_size: int) -> float:
    """Max over block rows of the summed spectral norms of the blocks."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    sl = _block_slices(a.shape[0], num_images, block_size)
    best = 0.0
    for si in sl:
        total = sum(np.linalg.norm(a[si, sj], 2) for sj in sl)
        best = max(best, float(total))
    return best


def round_strong_ps(x, num_images: int, block_size: int, a=None) -> RoundedPrimal:
    """Round a PSD matrix to exact identity diagonal blocks.

    Works on the frame where the block target is the identity (callers using
    trace normalization rescale before and after). The factor's column blocks
    get their singular values thresholded at 1, which caps every diagonal
    block at the identity; the deficits are shifted back in block-diagonally.
    Certificate: (2K + 1) * delta * triple_norm(a), delta the summed nuclear
    norm error of the input's diagonal blocks.
    """
    x = _check_symmetric(x)
    k = block_size
    sl = _block_slices(x.shape[0], num_images, k)

    delta = 0.0
    for si in sl:
        w = np.linalg.eigvalsh(x[si, si] - np.eye(k))
        delta += float(np.abs(w).sum())

    factor = psd_factor(x)
    parts = []
    for si in sl:
        u, s, vh = np.linalg.svd(factor.v[:, si], full_matrices=False)
        parts.append((u * np.minimum(s, 1.0)) @ vh)
    tilde = np.hstack(parts)
    rounded = tilde.T @ tilde
    rounded = (rounded + rounded.T) / 2
    for si in sl:
        rounded[si, si] = np.eye(k)

    if a is None:
        return RoundedPrimal(payload=rounded,
                             perturbation_certificate=(2.0 * k + 1.0) * delta)
    a = _check_symmetric(a, "objective matrix")
    certificate = (2.0 * k + 1.0) * delta * triple_norm(a, num_images, k)
    measured = float(abs(np.sum(a * (x - rounded))))
    return RoundedPrimal(payload=rounded, perturbation_certificate=certificate,
                         measured_shift=measured)
