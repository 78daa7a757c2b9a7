"""Outer dual-descent loop with trace recording and a-priori gradient certificates.

One solve() drives any of the four problems. Optimal transport always uses
exact gradients (they cost one dense pass over the plan). The SDPs run either
on the dense eigendecomposition oracle or on the stochastic probe path with a
fresh batch per iteration; on the probe path the spectral interval of the
shifted cost is obtained once for the bare cost and widened by the current
dual norm, which bounds the spectral perturbation of every admissible shift.
"""

from __future__ import annotations

import csv
import json
import math
import subprocess
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from entrodual.norms import dual_norm, primal_norm
from entrodual.operators import spectral_bounds
from entrodual.probes import draw_probes, probe_gibbs
from entrodual.problems import OTProblem

__all__ = ["SolverConfig", "SolverTrace", "CertificateReport", "solve",
           "certify_gradient_decay"]

CSV_HEADER = ["iter", "feas_err", "grad_dnorm", "dual_obj", "step_norm", "wall_ms"]


@dataclass(frozen=True)
class SolverConfig:
    """Run parameters. beta, eta and samples resolve against the problem at solve time.

    beta None means "use the problem's beta"; a non-None value must agree with
    it (the problem carries the physics, the config carries the run). eta None
    resolves to 1/beta; values above 1/beta are allowed but warn, since every
    guarantee assumes eta <= 1/beta. samples None resolves to the problem's
    default probe count on the stochastic path.
    """

    beta: Optional[float] = None
    eta: Optional[float] = None
    iters: int = 100
    samples: Optional[int] = None
    gamma_target: Optional[float] = None
    seed: int = 0
    record_objective: bool = False
    dense_oracle: bool = False
    tol_feasibility: Optional[float] = None
    probe_tol: float = 1e-8
    dense_limit: int = 2048

    def __post_init__(self):
        if self.iters < 1:
            raise ValueError("need at least one iteration")
        if self.eta is not None and self.eta <= 0.0:
            raise ValueError("eta must be positive")
        if self.beta is not None and self.beta <= 0.0:
            raise ValueError("beta must be positive")
        if self.samples is not None and self.samples < 1:
            raise ValueError("samples must be positive")

    def resolve(self, problem):
        """(beta, eta) for this run, warning when eta exceeds 1/beta."""
        beta = problem.beta
        if self.beta is not None and not math.isclose(self.beta, beta,
                                                      rel_tol=1e-12):
            raise ValueError(
                f"config beta {self.beta} disagrees with problem beta {beta}")
        eta = 1.0 / beta if self.eta is None else self.eta
        if eta > 1.0 / beta * (1.0 + 1e-12):
            warnings.warn("eta exceeds 1/beta; convergence guarantees do not apply",
                          stacklevel=3)
        return beta, eta


def _payload_diff(a, b):
    if isinstance(a, tuple):
        return tuple(x - y for x, y in zip(a, b))
    return a - b


def _payload_copy(a):
    if isinstance(a, tuple):
        return tuple(np.array(x) for x in a)
    return np.array(a)


@dataclass
class SolverTrace:
    """Dense per-iteration metrics plus the best-gradient iterate.

    dual_objective rows are NaN when the objective was not recorded (always
    the case on the stochastic path). best_iteration minimizes the recorded
    gradient dual norm, which on stochastic runs is the computable proxy for
    the exact argmin selection rule.
    """

    iterations: np.ndarray
    feasibility: np.ndarray
    grad_dual_norm: np.ndarray
    dual_objective: np.ndarray
    step_norm: np.ndarray
    wall_ms: np.ndarray
    best_iteration: int
    best_dual: object
    best_grad_dual_norm: float
    trajectory_diameter_hat: float
    final_dual: object
    stopped_early: bool
    config: SolverConfig
    problem_info: dict = field(default_factory=dict)
    eta: float = 0.0

    def __len__(self) -> int:
        return len(self.iterations)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for i in range(len(self)):
                obj = self.dual_objective[i]
                writer.writerow([
                    int(self.iterations[i]),
                    f"{self.feasibility[i]:.12e}",
                    f"{self.grad_dual_norm[i]:.12e}",
                    "" if np.isnan(obj) else f"{obj:.12e}",
                    f"{self.step_norm[i]:.12e}",
                    f"{self.wall_ms[i]:.3f}",
                ])

    def metadata(self) -> dict:
        return {
            "schema": 1,
            "config": asdict(self.config),
            "problem": self.problem_info,
            "seed": self.config.seed,
            "eta": self.eta,
            "iterations_run": len(self),
            "stopped_early": self.stopped_early,
            "best_iteration": int(self.best_iteration),
            "best_grad_dual_norm": float(self.best_grad_dual_norm),
            "trajectory_diameter_hat": float(self.trajectory_diameter_hat),
            "build": _git_describe(),
        }

    def write_metadata(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             cwd=Path(__file__).resolve().parent,
                             capture_output=True, text=True, timeout=5)
        return out.stdout.strip() if out.returncode == 0 else "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def solve(problem, config: SolverConfig,
          callback: Optional[Callable] = None) -> SolverTrace:
    """Run dual descent from the zero dual point and record per-iteration metrics.

    callback, if given, is invoked as callback(t, dual_point, gradient) after
    the metrics of iteration t are recorded and before the update is applied.
    Backend failures are re-raised with the iteration index attached.
    """
    beta, eta = config.resolve(problem)
    family = problem.norm_family()
    lam = problem.initial_dual()

    exact = config.dense_oracle or isinstance(problem, OTProblem)
    if not exact:
        base_interval = spectral_bounds(problem.cost, seed=config.seed)
        samples = config.samples or problem.default_sample_count()

    n_rows = config.iters
    feas = np.empty(n_rows)
    gnorm = np.empty(n_rows)
    obj = np.full(n_rows, np.nan)
    stepn = np.empty(n_rows)
    wall = np.empty(n_rows)

    best_t, best_lam, best_g = -1, None, np.inf
    diameter = 0.0
    stopped = False
    rows = 0

    for t in range(config.iters):
        tic = time.perf_counter()
        try:
            if exact:
                if config.record_objective:
                    grad, fval = problem.dense_eval(lam, config.dense_limit)
                    obj[t] = fval
                else:
                    grad = problem.exact_gradient(lam, config.dense_limit)
            else:
                shifted = problem.shifted_operator(lam)
                interval = base_interval.padded(primal_norm(family, lam))
                z = draw_probes(problem.dimension, samples, config.seed, t)
                batch = probe_gibbs(shifted, beta, interval, z,
                                    tol=config.probe_tol,
                                    seed_path=(config.seed, t))
                grad = problem.stochastic_gradient(batch)
            feas[t] = problem.feasibility_error(grad)
            gnorm[t] = dual_norm(family, grad)
            if gnorm[t] < best_g:
                best_t, best_lam, best_g = t, _payload_copy(lam), float(gnorm[t])
            diameter = max(diameter,
                           primal_norm(family, _payload_diff(lam, best_lam)))
            if callback is not None:
                callback(t, lam, grad)
            new_lam = problem.update(lam, grad, eta)
            stepn[t] = primal_norm(family, _payload_diff(new_lam, lam))
            lam = new_lam
        except Exception as err:
            raise RuntimeError(f"solver failed at iteration {t}: {err}") from err
        wall[t] = (time.perf_counter() - tic) * 1e3
        rows = t + 1
        if config.tol_feasibility is not None and feas[t] <= config.tol_feasibility:
            stopped = True
            break

    sl = slice(0, rows)
    return SolverTrace(
        iterations=np.arange(rows),
        feasibility=feas[sl].copy(),
        grad_dual_norm=gnorm[sl].copy(),
        dual_objective=obj[sl].copy(),
        step_norm=stepn[sl].copy(),
        wall_ms=wall[sl].copy(),
        best_iteration=best_t,
        best_dual=best_lam,
        best_grad_dual_norm=best_g,
        trajectory_diameter_hat=diameter,
        final_dual=lam,
        stopped_early=stopped,
        config=config,
        problem_info=problem.descriptor(),
        eta=eta,
    )


@dataclass(frozen=True)
class CertificateReport:
    """Outcome of checking the a-priori gradient-decay bound on a finished run."""

    kind: str
    observed_min: float
    bound: float
    passed: bool
    margin: float
    details: dict

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.kind}: min grad dual norm {self.observed_min:.6e} "
                f"vs bound {self.bound:.6e} (margin {self.margin:.6e})")


def certify_gradient_decay(trace: SolverTrace, problem,
                           gamma: Optional[float] = None) -> CertificateReport:
    """Check the recorded gradient decay against the problem's a-priori bound.

    SDP runs use the sqrt(beta spectral_width / T) + sqrt(log n / T) bound with
    a 3 gamma bias term and require eta = 1/beta. OT runs use the
    16 (2M + (log(1/s)+1)/beta) / ((T-1) eta) bound. gamma defaults to zero on
    exact-gradient runs and to the declared gamma_target on stochastic runs.
    """
    if len(trace) == 0 or not np.all(np.isfinite(trace.grad_dual_norm)):
        raise ValueError("trace has no usable gradient records")
    beta = problem.beta
    eta = trace.eta if trace.eta > 0.0 else 1.0 / beta
    exact_run = trace.config.dense_oracle or isinstance(problem, OTProblem)
    if gamma is None:
        if exact_run:
            gamma = 0.0
        elif trace.config.gamma_target is not None:
            gamma = trace.config.gamma_target
        else:
            raise ValueError("stochastic run without a declared gamma_target")
    observed = float(trace.grad_dual_norm.min())

    if isinstance(problem, OTProblem):
        if eta > 1.0 / beta * (1.0 + 1e-12):
            raise ValueError("OT gradient-decay bound requires eta <= 1/beta")
        scale = 2.0 * problem.cost_bound + (
            math.log(1.0 / problem.marginal_floor) + 1.0) / beta
        horizon = len(trace) - 1
        bound = math.inf if horizon < 2 else 16.0 * scale / ((horizon - 1) * eta)
        details = {"horizon": horizon, "potential_scale": scale, "eta": eta}
        kind = "ot-gradient-decay"
    else:
        if not math.isclose(eta, 1.0 / beta, rel_tol=1e-9):
            raise ValueError("SDP gradient-decay bound is stated for eta = 1/beta")
        interval = spectral_bounds(problem.cost, seed=trace.config.seed)
        horizon = len(trace)
        n = problem.dimension
        bound = (3.0 * gamma
                 + 2.0 * math.sqrt(beta * interval.width / horizon)
                 + 2.0 * math.sqrt(math.log(n) / horizon))
        details = {"horizon": horizon, "spectral_width": interval.width,
                   "gamma": gamma, "eta": eta, "n": n}
        kind = "sdp-gradient-decay"

    passed = observed <= bound
    return CertificateReport(kind=kind, observed_min=observed, bound=bound,
                             passed=bool(passed), margin=float(bound - observed),
                             details=details)
