"""The four entropically regularized problems behind one dual-solver contract.

Each problem owns its cost data and exposes: the dual norm family, the zero
initial dual point, exact (dense-oracle) and probe-based stochastic gradients,
the dual objective in minimization form, the norm-induced update, and the
primal feasibility metric derived from the gradient. Gradients of the dual
objective coincide with primal constraint residuals of the current Gibbs
state, which is why feasibility is always a cheap function of the gradient.

Sign convention: the dual concave objective g(lambda) is stored negated, as
f(lambda) = -g(lambda), so every routine here minimizes f. Constraint data
enters f through a linear term: f(lambda) = -<b, lambda> + log Z(lambda) / beta.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, log
from typing import Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from entrodual.norms import NormFamily, step_block, step_linf, step_pair
from entrodual.operators import SymOperator, dense_gibbs
from entrodual.probes import ProbeBatch, estimate_functional, FunctionalRequest

__all__ = [
    "MaxCutProblem",
    "OTProblem",
    "StrongPermSyncProblem",
    "WeakPermSyncProblem",
    "ot_exact_gradient",
    "ot_dual_objective",
    "sdp_exact_gradient",
    "sdp_stochastic_gradient",
    "update",
    "feasibility_error",
]

DENSE_LIMIT = 2048


def _diag_blocks(x: np.ndarray, nblocks: int, k: int) -> np.ndarray:
    """Extract the (N, K, K) diagonal blocks of a dense NK x NK matrix."""
    return np.einsum("ikil->ikl", x.reshape(nblocks, k, nblocks, k))


def _batch_diag(batch: ProbeBatch) -> np.ndarray:
    return estimate_functional(batch, FunctionalRequest.diag())


def _batch_blocks(batch: ProbeBatch, k: int) -> np.ndarray:
    """All (N, K, K) diagonal-block estimates of X_hat in one pass."""
    nblocks = batch.n // k
    rows = batch.images.reshape(nblocks, k, batch.num_samples)
    return np.einsum("nks,nls->nkl", rows, rows) / batch.mass


@dataclass(frozen=True)
class MaxCutProblem:
    """Minimize Tr[CX] + entropy/beta over unit-trace PSD X with diag(X) = b."""

    cost: SymOperator
    b: np.ndarray
    beta: float

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        object.__setattr__(self, "b", b)
        if b.shape != (self.cost.n,):
            raise ValueError("b must have one entry per vertex")
        if not np.all(b > 0.0):
            raise ValueError("b must be strictly positive")
        if abs(b.sum() - 1.0) > 1e-12:
            raise ValueError("b must sum to 1")
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")

    @property
    def dimension(self) -> int:
        return self.cost.n

    @property
    def kappa(self) -> float:
        return float(self.b.max() / self.b.min())

    def norm_family(self) -> NormFamily:
        return NormFamily.linf()

    def initial_dual(self) -> np.ndarray:
        return np.zeros(self.dimension)

    def shifted_operator(self, lam: np.ndarray) -> SymOperator:
        return self.cost.add_diagonal(-np.asarray(lam, dtype=float))

    def linear_term(self, lam: np.ndarray) -> float:
        return float(self.b @ lam)

    def exact_gradient(self, lam, limit: int = DENSE_LIMIT) -> np.ndarray:
        state = dense_gibbs(self.shifted_operator(lam), self.beta, limit)
        return np.diag(state.density) - self.b

    def dual_objective(self, lam, limit: int = DENSE_LIMIT) -> float:
        state = dense_gibbs(self.shifted_operator(lam), self.beta, limit)
        return -self.linear_term(lam) + state.log_partition / self.beta

    def dense_eval(self, lam, limit: int = DENSE_LIMIT):
        """(gradient, objective) from a single eigendecomposition."""
        state = dense_gibbs(self.shifted_operator(lam), self.beta, limit)
        grad = np.diag(state.density) - self.b
        obj = -self.linear_term(lam) + state.log_partition / self.beta
        return grad, obj

    def stochastic_gradient(self, batch: ProbeBatch) -> np.ndarray:
        if batch.n != self.dimension:
            raise ValueError("probe batch dimension mismatch")
        return _batch_diag(batch) - self.b

    def update(self, lam, grad, eta: float) -> np.ndarray:
        return step_linf(lam, grad, eta)

    def feasibility_error(self, grad) -> float:
        return float(np.abs(grad).sum())

    def default_sample_count(self, coef: float = 25.0) -> int:
        return max(1, ceil(coef * log(max(2, self.dimension))))

    def descriptor(self) -> dict:
        return {"kind": "maxcut", "n": self.dimension, "beta": self.beta,
                "kappa": self.kappa}


@dataclass(frozen=True)
class OTProblem:
    """Entropic optimal transport between two finite marginals.

    Duals are a pair of potentials; gradients are exact marginal residuals of
    the normalized Gibbs plan, so there is no stochastic path for this problem.
    """

    cost: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    beta: float

    def __post_init__(self):
        c = np.asarray(self.cost, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        nu = np.asarray(self.nu, dtype=float)
        object.__setattr__(self, "cost", c)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "nu", nu)
        if c.ndim != 2 or c.shape != (mu.size, nu.size):
            raise ValueError("cost must be m x n matching the marginals")
        for m in (mu, nu):
            if np.any(m < 0.0) or abs(m.sum() - 1.0) > 1e-12:
                raise ValueError("marginals must be nonnegative and sum to 1")
        if min(mu.min(), nu.min()) <= 0.0:
            raise ValueError("marginals must be strictly positive")
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.cost.shape

    @property
    def cost_bound(self) -> float:
        """Largest absolute cost entry."""
        return float(np.abs(self.cost).max())

    @property
    def marginal_floor(self) -> float:
        """Smallest marginal entry."""
        return float(min(self.mu.min(), self.nu.min()))

    def norm_family(self) -> NormFamily:
        return NormFamily.pair()

    def initial_dual(self):
        return (np.zeros(self.mu.size), np.zeros(self.nu.size))

    def _log_plan(self, duals) -> np.ndarray:
        phi, psi = duals
        return -self.beta * (self.cost - np.asarray(phi)[:, None]
                             - np.asarray(psi)[None, :])

    def plan(self, duals) -> np.ndarray:
        """Normalized Gibbs transport plan at the given potentials."""
        e = self._log_plan(duals)
        p = np.exp(e - e.max())
        return p / p.sum()

    def exact_gradient(self, duals, limit: Optional[int] = None):
        pi = self.plan(duals)
        return (pi.sum(axis=1) - self.mu, pi.sum(axis=0) - self.nu)

    def dual_objective(self, duals, limit: Optional[int] = None) -> float:
        phi, psi = duals
        lse = float(logsumexp(self._log_plan(duals)))
        return -float(self.mu @ phi + self.nu @ psi) + lse / self.beta

    def dense_eval(self, duals, limit: Optional[int] = None):
        return self.exact_gradient(duals), self.dual_objective(duals)

    def update(self, duals, grad, eta: float):
        phi, psi = step_pair(duals, grad, eta)
        return (phi - phi.mean(), psi - psi.mean())

    def feasibility_error(self, grad) -> float:
        gp, gq = grad
        return float(np.abs(gp).sum() + np.abs(gq).sum())

    def descriptor(self) -> dict:
        return {"kind": "ot", "m": self.shape[0], "n": self.shape[1],
                "beta": self.beta, "cost_bound": self.cost_bound,
                "marginal_floor": self.marginal_floor}


@dataclass(frozen=True)
class StrongPermSyncProblem:
    """Permutation synchronization SDP with full diagonal blocks pinned to I/n.

    The cost operator has (N, K) block structure; duals are one symmetric
    K x K block per image, and gradients are the diagonal-block residuals.
    """

    cost: SymOperator
    num_images: int
    block_size: int
    beta: float

    def __post_init__(self):
        if self.num_images < 1 or self.block_size < 1:
            raise ValueError("block structure must be positive")
        if self.cost.n != self.num_images * self.block_size:
            raise ValueError("operator size must equal num_images * block_size")
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")

    @property
    def dimension(self) -> int:
        return self.cost.n

    def norm_family(self) -> NormFamily:
        return NormFamily.block_spectral(self.num_images, self.block_size)

    def initial_dual(self) -> np.ndarray:
        return np.zeros((self.num_images, self.block_size, self.block_size))

    def shifted_operator(self, lam: np.ndarray) -> SymOperator:
        return self.cost.add_block_diag(-np.asarray(lam, dtype=float))

    def linear_term(self, lam: np.ndarray) -> float:
        return float(np.trace(lam, axis1=1, axis2=2).sum() / self.dimension)

    def _target(self) -> np.ndarray:
        return np.eye(self.block_size) / self.dimension

    def exact_gradient(self, lam, limit: int = DENSE_LIMIT) -> np.ndarray:
        state = dense_gibbs(self.shifted_operator(lam), self.beta, limit)
        blocks = _diag_blocks(state.density, self.num_images, self.block_size)
        return blocks - self._target()

    def dual_objective(self, lam, limit: int = DENSE_LIMIT) -> float:
        state = dense_gibbs(self.shifted_operator(lam), self.beta, limit)
        return -self.linear_term(lam) + state.log_partition / self.beta

    def dense_eval(self, lam, limit: int = DENSE_LIMIT):
        state = dense_gibbs(self.shifted_operator(lam), self.beta, limit)
        blocks = _diag_blocks(state.density, self.num_images, self.block_size)
        grad = blocks - self._target()
        obj = -self.linear_term(lam) + state.log_partition / self.beta
        return grad, obj

    def stochastic_gradient(self, batch: ProbeBatch) -> np.ndarray:
        if batch.n != self.dimension:
            raise ValueError("probe batch dimension mismatch")
        return _batch_blocks(batch, self.block_size) - self._target()

    def update(self, lam, grad, eta: float) -> np.ndarray:
        return step_block(lam, grad, eta)

    def feasibility_error(self, grad) -> float:
        return float(np.abs(np.linalg.eigvalsh(grad)).sum())

    def default_sample_count(self, coef: float = 8.0) -> int:
        return max(1, ceil(coef * self.block_size * log(max(2, self.num_images))))

    def descriptor(self) -> dict:
        return {"kind": "ps-strong", "num_images": self.num_images,
                "block_size": self.block_size, "n": self.dimension,
                "beta": self.beta}


@dataclass(frozen=True)
class WeakPermSyncProblem:
    """Permutation synchronization SDP with diagonal and block-mass constraints.

    Duals are a pair (per-row vector, per-image vector); the second component
    prices the all-ones quadratic form on each diagonal block.
    """

    cost: SymOperator
    num_images: int
    block_size: int
    beta: float

    def __post_init__(self):
        if self.num_images < 1 or self.block_size < 1:
            raise ValueError("block structure must be positive")
        if self.cost.n != self.num_images * self.block_size:
            raise ValueError("operator size must equal num_images * block_size")
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")

    @property
    def dimension(self) -> int:
        return self.cost.n

    def norm_family(self) -> NormFamily:
        return NormFamily.pair()

    def initial_dual(self):
        return (np.zeros(self.dimension), np.zeros(self.num_images))

    def shifted_operator(self, duals) -> SymOperator:
        lam, mu = duals
        k = self.block_size
        ones_block = np.ones((k, k)) / k
        blocks = -np.asarray(mu, dtype=float)[:, None, None] * ones_block
        return self.cost.add_diagonal(-np.asarray(lam, dtype=float)).add_block_diag(blocks)

    def linear_term(self, duals) -> float:
        lam, mu = duals
        return float((np.sum(lam) + np.sum(mu)) / self.dimension)

    def _residuals(self, diag: np.ndarray, block_means: np.ndarray):
        inv_n = 1.0 / self.dimension
        return (diag - inv_n, block_means - inv_n)

    def exact_gradient(self, duals, limit: int = DENSE_LIMIT):
        return self.dense_eval(duals, limit)[0]

    def dual_objective(self, duals, limit: int = DENSE_LIMIT) -> float:
        state = dense_gibbs(self.shifted_operator(duals), self.beta, limit)
        return -self.linear_term(duals) + state.log_partition / self.beta

    def dense_eval(self, duals, limit: int = DENSE_LIMIT):
        state = dense_gibbs(self.shifted_operator(duals), self.beta, limit)
        blocks = _diag_blocks(state.density, self.num_images, self.block_size)
        grad = self._residuals(np.diag(state.density),
                               blocks.sum(axis=(1, 2)) / self.block_size)
        obj = -self.linear_term(duals) + state.log_partition / self.beta
        return grad, obj

    def stochastic_gradient(self, batch: ProbeBatch):
        if batch.n != self.dimension:
            raise ValueError("probe batch dimension mismatch")
        rows = batch.images.reshape(self.num_images, self.block_size,
                                    batch.num_samples)
        colsum = rows.sum(axis=1)
        block_means = np.einsum("ns,ns->n", colsum, colsum) / (batch.mass
                                                               * self.block_size)
        return self._residuals(_batch_diag(batch), block_means)

    def update(self, duals, grad, eta: float):
        return step_pair(duals, grad, eta)

    def feasibility_error(self, grad) -> float:
        g, h = grad
        return float(np.hypot(np.abs(g).sum(), np.abs(h).sum()))

    def default_sample_count(self, coef: float = 25.0) -> int:
        return max(1, ceil(coef * log(max(2, self.dimension))))

    def descriptor(self) -> dict:
        return {"kind": "ps-weak", "num_images": self.num_images,
                "block_size": self.block_size, "n": self.dimension,
                "beta": self.beta}


# ---- module-level contract functions ------------------------------------

def ot_exact_gradient(problem: OTProblem, duals):
    return problem.exact_gradient(duals)


def ot_dual_objective(problem: OTProblem, duals) -> float:
    return problem.dual_objective(duals)


def sdp_exact_gradient(problem, lam, limit: int = DENSE_LIMIT):
    return problem.exact_gradient(lam, limit)


def sdp_stochastic_gradient(problem, batch: ProbeBatch):
    return problem.stochastic_gradient(batch)


def update(problem, lam, grad, eta: float):
    return problem.update(lam, grad, eta)


def feasibility_error(problem, grad) -> float:
    return problem.feasibility_error(grad)
