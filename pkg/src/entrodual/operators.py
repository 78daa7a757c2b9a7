"""Symmetric operators, spectral intervals, exponential action, dense Gibbs states.

Everything here works on real symmetric matrices only. Operators are stored
either as a full dense array or as a strictly-upper sparse part plus a diagonal,
with lazy diagonal / block-diagonal / scalar-shift terms so that the shifted
operators needed inside an iterative solver never force a sparse rebuild.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.special import ive

__all__ = [
    "SymOperator",
    "SpectralInterval",
    "DenseGibbs",
    "spectral_bounds",
    "expm_action",
    "dense_gibbs",
    "vn_entropy",
    "load_matrix_market",
]

_SYM_TOL = 1e-12


def _block_diag_apply(blocks: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Apply blockdiag(blocks) to v. blocks has shape (N, K, K), v is (n,) or (n, S)."""
    nblocks, k, _ = blocks.shape
    squeeze = v.ndim == 1
    if squeeze:
        v = v[:, None]
    out = np.einsum("bij,bjs->bis", blocks, v.reshape(nblocks, k, -1))
    out = out.reshape(nblocks * k, -1)
    return out[:, 0] if squeeze else out


class SymOperator:
    """Real symmetric operator with a cheap matvec.

    Base storage is either a dense symmetric array or a strictly-upper CSR
    matrix plus its diagonal. On top of the base, three lazy terms can be
    attached without copying the base: a diagonal vector, a scalar multiple of
    the identity, and a symmetric block-diagonal stack. apply() sums all parts.
    Instances are treated as immutable; composition methods return new objects
    that share the unmodified parts.
    """

    def __init__(self, *, dense=None, upper=None, diag=None, shift=0.0,
                 extra_diag=None, extra_blocks=None):
        if dense is not None:
            self.n = dense.shape[0]
            assert dense.shape == (self.n, self.n)
        else:
            assert upper is not None and diag is not None
            self.n = upper.shape[0]
        self._dense = dense
        self._upper = upper
        self._diag = diag
        self.shift = float(shift)
        self.extra_diag = extra_diag
        self.extra_blocks = extra_blocks
        if extra_blocks is not None:
            nb, k, k2 = extra_blocks.shape
            assert k == k2 and nb * k == self.n, "block stack does not tile the diagonal"

    @property
    def is_dense(self) -> bool:
        return self._dense is not None

    # ---- constructors -------------------------------------------------

    @classmethod
    def from_dense(cls, a: np.ndarray, tol: float = 1e-8) -> "SymOperator":
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("expected a square 2-d array")
        scale = max(1.0, np.abs(a).max()) if a.size else 1.0
        if np.abs(a - a.T).max(initial=0.0) > tol * scale:
            raise ValueError("input matrix is not symmetric")
        return cls(dense=(a + a.T) / 2.0)

    @classmethod
    def from_triplets(cls, n: int, rows, cols, vals) -> "SymOperator":
        """Build from symmetric triplets; entries may lie in either triangle.

        Each (i, j, v) with i != j contributes v to both (i, j) and (j, i).
        Duplicate coordinates are summed.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        lo = np.minimum(rows, cols)
        hi = np.maximum(rows, cols)
        coo = sp.coo_array((vals, (lo, hi)), shape=(n, n))
        coo.sum_duplicates()
        full_upper = coo.tocsr()
        diag = full_upper.diagonal().copy()
        strict = sp.triu(full_upper, k=1).tocsr()
        return cls(upper=strict, diag=diag)

    @classmethod
    def from_sparse(cls, m, tol: float = 1e-8) -> "SymOperator":
        m = sp.csr_array(m)
        if m.shape[0] != m.shape[1]:
            raise ValueError("expected a square sparse matrix")
        scale = max(1.0, np.abs(m.data).max()) if m.nnz else 1.0
        asym = abs(m - m.T)
        if asym.nnz and asym.data.max() > tol * scale:
            raise ValueError("input sparse matrix is not symmetric")
        diag = m.diagonal().copy()
        strict = sp.triu((m + m.T) / 2.0, k=1).tocsr()
        return cls(upper=strict, diag=diag)

    @classmethod
    def zeros(cls, n: int) -> "SymOperator":
        return cls(upper=sp.csr_array((n, n)), diag=np.zeros(n))

    # ---- algebra ------------------------------------------------------

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Matrix-vector (or matrix-block) product. v is (n,) or (n, S)."""
        v = np.asarray(v, dtype=float)
        if self._dense is not None:
            out = self._dense @ v
        else:
            out = self._upper @ v + self._upper.T @ v
            d = self._diag
            out += d[:, None] * v if v.ndim == 2 else d * v
        if self.extra_diag is not None:
            e = self.extra_diag
            out += e[:, None] * v if v.ndim == 2 else e * v
        if self.shift != 0.0:
            out += self.shift * v
        if self.extra_blocks is not None:
            out += _block_diag_apply(self.extra_blocks, v)
        return out

    def add_diagonal(self, d: np.ndarray) -> "SymOperator":
        d = np.asarray(d, dtype=float)
        assert d.shape == (self.n,)
        new = d if self.extra_diag is None else self.extra_diag + d
        return SymOperator(dense=self._dense, upper=self._upper, diag=self._diag,
                           shift=self.shift, extra_diag=new,
                           extra_blocks=self.extra_blocks)

    def add_scalar(self, c: float) -> "SymOperator":
        return SymOperator(dense=self._dense, upper=self._upper, diag=self._diag,
                           shift=self.shift + float(c), extra_diag=self.extra_diag,
                           extra_blocks=self.extra_blocks)

    def add_block_diag(self, blocks: np.ndarray) -> "SymOperator":
        """Add blockdiag(blocks), blocks shaped (N, K, K) with N*K = n."""
        blocks = np.asarray(blocks, dtype=float)
        new = blocks if self.extra_blocks is None else self.extra_blocks + blocks
        return SymOperator(dense=self._dense, upper=self._upper, diag=self._diag,
                           shift=self.shift, extra_diag=self.extra_diag,
                           extra_blocks=new)

    def scale(self, alpha: float) -> "SymOperator":
        alpha = float(alpha)
        dense = None if self._dense is None else alpha * self._dense
        upper = None if self._upper is None else self._upper * alpha
        diag = None if self._diag is None else alpha * self._diag
        ed = None if self.extra_diag is None else alpha * self.extra_diag
        eb = None if self.extra_blocks is None else alpha * self.extra_blocks
        return SymOperator(dense=dense, upper=upper, diag=diag,
                           shift=alpha * self.shift, extra_diag=ed, extra_blocks=eb)

    def to_dense(self) -> np.ndarray:
        if self._dense is not None:
            out = self._dense.copy()
        else:
            u = self._upper.toarray()
            out = u + u.T + np.diag(self._diag)
        if self.extra_diag is not None:
            out[np.diag_indices(self.n)] += self.extra_diag
        if self.shift != 0.0:
            out[np.diag_indices(self.n)] += self.shift
        if self.extra_blocks is not None:
            nb, k, _ = self.extra_blocks.shape
            for i in range(nb):
                sl = slice(i * k, (i + 1) * k)
                out[sl, sl] += self.extra_blocks[i]
        return out

    def to_sparse(self):
        """Materialize as CSR, including any attached diagonal, shift, and blocks."""
        if self._dense is not None:
            out = sp.csr_array(self._dense)
        else:
            out = (self._upper + self._upper.T
                   + sp.diags_array(self._diag, format="csr"))
        if self.extra_diag is not None:
            out = out + sp.diags_array(self.extra_diag, format="csr")
        if self.shift != 0.0:
            out = out + sp.diags_array(np.full(self.n, self.shift), format="csr")
        if self.extra_blocks is not None:
            out = out + sp.csr_array(sp.block_diag(list(self.extra_blocks)))
        return sp.csr_array(out)

    def inf_norm_bound(self) -> float:
        """Max absolute row sum of the full operator; upper-bounds the spectral radius."""
        if self._dense is not None:
            row = np.abs(self._dense).sum(axis=1)
        else:
            au = abs(self._upper)
            row = au.sum(axis=1) + au.sum(axis=0) + np.abs(self._diag)
        row = np.asarray(row, dtype=float).ravel()
        if self.extra_diag is not None:
            row += np.abs(self.extra_diag)
        if self.shift != 0.0:
            row += abs(self.shift)
        if self.extra_blocks is not None:
            brow = np.abs(self.extra_blocks).sum(axis=2).ravel()
            row += brow
        return float(row.max()) if row.size else 0.0


@dataclass(frozen=True)
class SpectralInterval:
    """Closed interval [lo, hi] intended to contain the spectrum of an operator.

    margin records the relative inflation applied to the raw estimates and
    certified is False when the underlying power iteration did not converge.
    """

    lo: float
    hi: float
    margin: float = 0.0
    certified: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError("interval endpoints must be finite")
        if self.hi < self.lo:
            raise ValueError(f"empty interval: [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def shifted(self, c: float) -> "SpectralInterval":
        return SpectralInterval(self.lo + c, self.hi + c, self.margin, self.certified)

    def scaled(self, alpha: float) -> "SpectralInterval":
        a, b = alpha * self.lo, alpha * self.hi
        return SpectralInterval(min(a, b), max(a, b), self.margin, self.certified)

    def padded(self, r: float) -> "SpectralInterval":
        assert r >= 0.0
        return SpectralInterval(self.lo - r, self.hi + r, self.margin, self.certified)

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi


def _power_iteration(matvec, n: int, rng, tol: float, max_iter: int):
    """Dominant (largest magnitude) eigenvalue via power iteration with Rayleigh quotients.

    Returns (converged, estimate). Convergence is declared when the eigenpair
    residual drops below tol relative to max(1, |estimate|).
    """
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    rho = 0.0
    for _ in range(max_iter):
        w = matvec(v)
        nw = np.linalg.norm(w)
        rho = float(v @ w)
        if nw <= 1e-300:
            return True, 0.0
        resid = np.linalg.norm(w - rho * v)
        v = w / nw
        if resid <= tol * max(1.0, abs(rho)):
            return True, rho
    return False, rho


def spectral_bounds(op: SymOperator, *, margin: float = 0.05, tol: float = 1e-3,
                    max_iter: int = 2000, seed: int = 0) -> SpectralInterval:
    """Estimate an interval containing the spectrum of a symmetric operator.

    Two power iterations: one for the extreme eigenvalue of largest magnitude,
    one on a shifted operator for the opposite extreme. The raw interval is
    inflated on both sides by margin times its width, so multiplicity-n spectra
    (width zero) stay tight. A magnitude tie in the first pass is broken by
    rerunning on op + bound*I, which is positive semidefinite by construction.
    """
    if margin < 0.0:
        raise ValueError("margin must be nonnegative")
    rng = np.random.default_rng(seed)
    ok1, a = _power_iteration(op.apply, op.n, rng, tol, max_iter)
    if not ok1:
        bound = op.inf_norm_bound()
        ok1, d = _power_iteration(lambda x: op.apply(x) + bound * x,
                                  op.n, rng, tol, max_iter)
        a = d - bound
    ok2, mu = _power_iteration(lambda x: a * x - op.apply(x), op.n, rng, tol, max_iter)
    other = a - mu
    lo, hi = min(a, other), max(a, other)
    pad = margin * (hi - lo)
    return SpectralInterval(lo - pad, hi + pad, margin=margin, certified=ok1 and ok2)


def _chebyshev_degree(half_width: float, tol: float) -> np.ndarray:
    """Scaled Chebyshev coefficients of exp on the given half-width, truncated.

    Returns q with q[0] = I_0(h) e^{-h} and q[k] = 2 I_k(h) e^{-h}; the full
    series sums to 1 and the dropped tail is below a small fraction of tol.
    """
    h = half_width
    kmax = int(np.ceil(h + 12.0 * np.sqrt(h + 4.0) + 60.0))
    q = ive(np.arange(kmax + 1), h)
    q[1:] *= 2.0
    target = max(tol * 1e-3, 2e-17)
    tail = 1.0 - np.cumsum(q)
    keep = np.nonzero(tail <= target)[0]
    d = int(keep[0]) + 2 if keep.size else kmax
    return q[: min(d, kmax) + 1]


def expm_action(op: SymOperator, interval: SpectralInterval, z: np.ndarray,
                tol: float = 1e-10) -> np.ndarray:
    """Compute exp(op) @ z by Clenshaw evaluation of a Chebyshev expansion.

    interval must contain the spectrum of op; the expansion lives on it after
    an affine map to [-1, 1]. Accuracy is relative to the dominant spectral
    scale exp(interval.hi); callers that need normalized output should shift
    the operator so hi is near zero before calling (the shift factors out).
    """
    if not 0.0 < tol < 1.0:
        raise ValueError("tol must lie in (0, 1)")
    z = np.asarray(z, dtype=float)
    c = interval.center
    h = 0.5 * interval.width
    if h <= 1e-14 * max(1.0, abs(c)):
        return np.exp(c) * z
    q = _chebyshev_degree(h, tol)
    inv_h = 1.0 / h

    def bmap(v):
        return (op.apply(v) - c * v) * inv_h

    b1 = np.zeros_like(z)
    b2 = np.zeros_like(z)
    for k in range(len(q) - 1, 0, -1):
        b1, b2 = q[k] * z + 2.0 * bmap(b1) - b2, b1
    y = q[0] * z + bmap(b1) - b2
    return np.exp(c + h) * y


@dataclass(frozen=True)
class DenseGibbs:
    """Dense Gibbs state exp(-beta M) / Z with its log partition function.

    density is the normalized positive semidefinite matrix with unit trace,
    log_partition is log Tr exp(-beta M), and spectrum holds the eigenvalues
    of density in ascending order.
    """

    density: np.ndarray
    log_partition: float
    spectrum: np.ndarray


def dense_gibbs(op: SymOperator, beta: float, limit: int = 2048) -> DenseGibbs:
    """Eigendecomposition route to the Gibbs state of a symmetric operator.

    Intended as the exact small-scale path; refuses n > limit since cost is
    cubic. The spectral shift by min(eig) keeps the exponentials in range and
    cancels in the normalized state; it is added back into log_partition.
    """
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    if op.n > limit:
        raise ValueError(
            f"n={op.n} exceeds the dense limit {limit}; use the probe-based path")
    evals, vecs = np.linalg.eigh(op.to_dense())
    shifted = -beta * (evals - evals[0])
    w = np.exp(shifted)
    z = w.sum()
    occ = w / z
    x = (vecs * occ) @ vecs.T
    x = (x + x.T) / 2.0
    log_partition = float(np.log(z) - beta * evals[0])
    return DenseGibbs(density=x, log_partition=log_partition,
                      spectrum=np.sort(occ))


def vn_entropy(x: np.ndarray) -> float:
    """Tr[X log X] for a density matrix X (unit trace, PSD), in [-log n, 0].

    The convention 0 log 0 = 0 applies. Eigenvalues below -1e-8 or a trace
    away from 1 by more than 1e-8 raise, since the quantity is then undefined.
    """
    x = np.asarray(x, dtype=float)
    evals = np.linalg.eigvalsh(x)
    if evals[0] < -1e-8:
        raise ValueError(f"matrix is not PSD: min eigenvalue {evals[0]:.3e}")
    tr = float(evals.sum())
    if abs(tr - 1.0) > 1e-8:
        raise ValueError(f"matrix is not a density matrix: trace {tr!r}")
    p = np.clip(evals, 0.0, None)
    p = p[p > 0.0]
    return float(np.sum(p * np.log(p)))


def load_matrix_market(path) -> SymOperator:
    """Read a symmetric real matrix from a MatrixMarket file."""
    m = scipy.io.mmread(path)
    if isinstance(m, np.ndarray):
        return SymOperator.from_dense(m)
    return SymOperator.from_sparse(m)
