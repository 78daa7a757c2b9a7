"""Command-line front end: generate instances, run solves, round, certify.

A problem directory holds meta.json (kind, beta, sizes), cost.mtx in
MatrixMarket form, and the kind's vectors (mu.txt/nu.txt for transport,
b.txt for the cut relaxation). `gen` writes such directories, `solve` reads
them and emits trace CSV/JSON, `round` projects a primal estimate onto the
feasible set with a certificate, and `certify` checks a recorded trace
against its a-priori gradient-decay bound.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy.io

from entrodual.datasets import (PermSynchModel, gen_er_maxcut, gen_permsynch,
                                gen_synthetic_ot, load_mnist_pair)
from entrodual.operators import dense_gibbs, load_matrix_market
from entrodual.problems import (MaxCutProblem, OTProblem,
                                StrongPermSyncProblem, WeakPermSyncProblem)
from entrodual.rounding import round_maxcut, round_ot, round_strong_ps
from entrodual.solver import (SolverConfig, SolverTrace,
                              certify_gradient_decay, solve)

__all__ = ["main", "load_problem", "write_problem"]


# ---- problem directory IO -------------------------------------------------

def write_problem(problem, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"schema": 1}
    meta.update(problem.descriptor())
    if isinstance(problem, OTProblem):
        scipy.io.mmwrite(out / "cost.mtx", problem.cost)
        np.savetxt(out / "mu.txt", problem.mu)
        np.savetxt(out / "nu.txt", problem.nu)
    else:
        scipy.io.mmwrite(out / "cost.mtx", problem.cost.to_sparse(),
                         symmetry="symmetric")
        if isinstance(problem, MaxCutProblem):
            np.savetxt(out / "b.txt", problem.b)
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def load_problem(path, beta: float | None = None):
    p = Path(path)
    meta = json.loads((p / "meta.json").read_text())
    kind = meta["kind"]
    beta = float(meta["beta"]) if beta is None else float(beta)
    if kind == "ot":
        cost = scipy.io.mmread(p / "cost.mtx")
        if hasattr(cost, "toarray"):
            cost = cost.toarray()
        mu = np.loadtxt(p / "mu.txt", ndmin=1)
        nu = np.loadtxt(p / "nu.txt", ndmin=1)
        return OTProblem(np.asarray(cost, dtype=float), mu, nu, beta)
    cost = load_matrix_market(p / "cost.mtx")
    if kind == "maxcut":
        return MaxCutProblem(cost, np.loadtxt(p / "b.txt", ndmin=1), beta)
    if kind == "ps-strong":
        return StrongPermSyncProblem(cost, meta["num_images"],
                                     meta["block_size"], beta)
    if kind == "ps-weak":
        return WeakPermSyncProblem(cost, meta["num_images"],
                                   meta["block_size"], beta)
    raise ValueError(f"unknown problem kind '{kind}' in {p / 'meta.json'}")


def _load_estimate(path) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise OSError(f"estimate file not found: {p}")
    if p.suffix == ".npy":
        return np.asarray(np.load(p), dtype=float)
    est = scipy.io.mmread(p)
    if hasattr(est, "toarray"):
        est = est.toarray()
    return np.asarray(est, dtype=float)


# ---- gen -------------------------------------------------------------------

def _cmd_gen(args) -> int:
    if args.kind == "maxcut":
        problem = gen_er_maxcut(args.n, args.p, seed=args.seed, beta=args.beta)
    elif args.kind == "ot-synthetic":
        problem = gen_synthetic_ot(args.k, seed=args.seed, beta=args.beta)
    elif args.kind == "ot-mnist":
        problem = load_mnist_pair(args.images, args.k, seed=args.seed,
                                  beta=args.beta)
    else:
        model = PermSynchModel(num_images=args.num_images,
                               keypoints=args.keypoints,
                               registry=args.registry,
                               corruption=args.corruption, seed=args.seed)
        problem = gen_permsynch(model, args.beta,
                                args.kind.removeprefix("ps-"))
    out = write_problem(problem, args.out)
    desc = problem.descriptor()
    print(f"wrote {desc['kind']} instance "
          f"(n={desc.get('n', desc.get('m'))}, beta={problem.beta:g}) to {out}")
    return 0


# ---- solve -----------------------------------------------------------------

def _save_primal(problem, trace, path) -> None:
    if isinstance(problem, OTProblem):
        primal = problem.plan(trace.best_dual)
    else:
        op = problem.shifted_operator(trace.best_dual)
        primal = dense_gibbs(op, problem.beta).density
    scipy.io.mmwrite(path, primal)


def _cmd_solve(args) -> int:
    problem = load_problem(args.problem, beta=args.beta)
    if problem.descriptor()["kind"] != args.kind:
        raise ValueError(f"problem directory holds kind "
                         f"'{problem.descriptor()['kind']}', not '{args.kind}'")
    config = SolverConfig(beta=args.beta, eta=args.eta, iters=args.iters,
                          samples=args.samples, seed=args.seed,
                          gamma_target=args.gamma_target,
                          record_objective=args.record_objective,
                          dense_oracle=args.dense_oracle,
                          tol_feasibility=args.tol)
    trace = solve(problem, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace.write_csv(out / "trace.csv")
    trace.write_metadata(out / "trace.json")
    if args.save_primal:
        _save_primal(problem, trace, out / "primal.mtx")
    tail = " (stopped early)" if trace.stopped_early else ""
    print(f"{args.kind}: {len(trace)} iterations{tail}, "
          f"feasibility {trace.feasibility[-1]:.3e}, "
          f"best grad dual norm {trace.best_grad_dual_norm:.3e} "
          f"at iteration {trace.best_iteration}; traces in {out}")
    return 0


# ---- round -----------------------------------------------------------------

def _cmd_round(args) -> int:
    problem = load_problem(args.problem)
    estimate = _load_estimate(args.estimate)
    if args.kind == "ot":
        if not isinstance(problem, OTProblem):
            raise ValueError("round ot needs a transport problem directory")
        result = round_ot(estimate, problem.mu, problem.nu, cost=problem.cost)
        payload, cert, measured = (result.payload,
                                   result.perturbation_certificate,
                                   result.measured_shift)
        # cert bounds the entrywise l1 plan perturbation; scale by the cost
        # range to bound the objective shift
        objective_bound = cert * float(np.abs(problem.cost).max())
    elif args.kind == "maxcut":
        if not isinstance(problem, MaxCutProblem):
            raise ValueError("round maxcut needs a cut-relaxation directory")
        result = round_maxcut(estimate, problem.b, problem.cost.to_dense())
        payload, cert, measured = (result.payload,
                                   result.perturbation_certificate,
                                   result.measured_shift)
        objective_bound = cert
    else:
        if not isinstance(problem, StrongPermSyncProblem):
            raise ValueError("round ps-strong needs a strong synchronization "
                             "directory")
        # the block rounding operates in the identity-block frame; rescale a
        # unit-trace estimate into it and bring the certificate back
        dim = problem.dimension
        result = round_strong_ps(dim * estimate, problem.num_images,
                                 problem.block_size,
                                 a=problem.cost.to_dense())
        payload = result.payload / dim
        cert = result.perturbation_certificate / dim
        measured = (None if result.measured_shift is None
                    else result.measured_shift / dim)
        objective_bound = cert
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(out / "rounded.mtx", payload)
    report = {"schema": 1, "kind": args.kind, "certificate": float(cert),
              "objective_bound": float(objective_bound),
              "measured_shift": None if measured is None else float(measured),
              "payload": "rounded.mtx"}
    with open(out / "round.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"rounded {args.kind} estimate: objective shift at most "
          f"{objective_bound:.6e}"
          + ("" if measured is None else f", measured {measured:.6e}")
          + f"; wrote {out}")
    return 0


# ---- certify ---------------------------------------------------------------

def _read_trace(csv_path, meta_path) -> SolverTrace:
    with open(csv_path) as fh:
        rows = list(csv.reader(fh))[1:]
    if not rows:
        raise ValueError(f"no data rows in {csv_path}")
    meta = json.loads(Path(meta_path).read_text())
    cols = list(zip(*rows))
    obj = np.array([float(v) if v else np.nan for v in cols[3]])
    return SolverTrace(
        iterations=np.array([int(v) for v in cols[0]]),
        feasibility=np.array([float(v) for v in cols[1]]),
        grad_dual_norm=np.array([float(v) for v in cols[2]]),
        dual_objective=obj,
        step_norm=np.array([float(v) for v in cols[4]]),
        wall_ms=np.array([float(v) for v in cols[5]]),
        best_iteration=meta["best_iteration"],
        best_dual=None,
        best_grad_dual_norm=meta["best_grad_dual_norm"],
        trajectory_diameter_hat=meta["trajectory_diameter_hat"],
        final_dual=None,
        stopped_early=meta["stopped_early"],
        config=SolverConfig(**meta["config"]),
        problem_info=meta.get("problem", {}),
        eta=meta["eta"],
    )


def _cmd_certify(args) -> int:
    problem = load_problem(args.problem)
    meta_path = args.metadata or Path(args.trace).with_suffix(".json")
    trace = _read_trace(args.trace, meta_path)
    report = certify_gradient_decay(trace, problem, gamma=args.gamma)
    print(report)
    return 0 if report.passed else 1


# ---- parser ----------------------------------------------------------------

def _add_gen_flags(p, *, beta_default=10.0):
    p.add_argument("--beta", type=float, default=beta_default,
                   help="inverse temperature baked into the instance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="problem directory to write")


def _add_solver_flags(p):
    p.add_argument("--problem", required=True, help="problem directory")
    p.add_argument("--beta", type=float, default=None,
                   help="override the instance's inverse temperature")
    p.add_argument("--eta", type=float, default=None,
                   help="step size, defaults to 1/beta")
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--samples", type=int, default=None,
                   help="probe vectors per iteration on the stochastic path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="directory for trace files")
    p.add_argument("--dense-oracle", action="store_true",
                   help="use exact dense gradients instead of probes")
    p.add_argument("--tol", type=float, default=None,
                   help="stop once the feasibility error falls below this")
    p.add_argument("--gamma-target", type=float, default=None,
                   help="declared gradient-error level for certification")
    p.add_argument("--record-objective", action="store_true",
                   help="evaluate the dual objective each iteration")
    p.add_argument("--save-primal", action="store_true",
                   help="write the primal estimate at the best iterate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entrodual",
        description="Entropically regularized LP/SDP solving in adapted norms")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a problem directory")
    gen_kinds = gen.add_subparsers(dest="kind", required=True)
    g = gen_kinds.add_parser("maxcut", help="random-graph cut relaxation")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--p", type=float, default=None,
                   help="edge probability, defaults to 3/n")
    _add_gen_flags(g)
    g = gen_kinds.add_parser("ot-synthetic", help="random bright-square images")
    g.add_argument("--k", type=int, required=True, help="image side length")
    _add_gen_flags(g)
    g = gen_kinds.add_parser("ot-mnist", help="pooled image pair from IDX file")
    g.add_argument("--images", required=True, help="IDX image file")
    g.add_argument("--k", type=int, required=True, help="pooled side length")
    _add_gen_flags(g)
    for kind in ("ps-strong", "ps-weak"):
        g = gen_kinds.add_parser(kind, help="permutation synchronization")
        g.add_argument("--num-images", type=int, required=True)
        g.add_argument("--keypoints", type=int, required=True)
        g.add_argument("--registry", type=int, required=True)
        g.add_argument("--corruption", type=float, default=0.0)
        _add_gen_flags(g)
    gen.set_defaults(func=_cmd_gen)

    slv = sub.add_parser("solve", help="run the dual ascent solver")
    slv_kinds = slv.add_subparsers(dest="kind", required=True)
    for kind in ("maxcut", "ot", "ps-strong", "ps-weak"):
        s = slv_kinds.add_parser(kind)
        _add_solver_flags(s)
    slv.set_defaults(func=_cmd_solve)

    rnd = sub.add_parser("round", help="project a primal estimate to feasibility")
    rnd_kinds = rnd.add_subparsers(dest="kind", required=True)
    for kind in ("ot", "maxcut", "ps-strong"):
        r = rnd_kinds.add_parser(kind)
        r.add_argument("--problem", required=True, help="problem directory")
        r.add_argument("--estimate", required=True,
                       help="primal estimate, .mtx or .npy")
        r.add_argument("--out", required=True)
    rnd.set_defaults(func=_cmd_round)

    crt = sub.add_parser("certify",
                         help="check a trace against its gradient-decay bound")
    crt.add_argument("--problem", required=True, help="problem directory")
    crt.add_argument("--trace", required=True, help="trace CSV from solve")
    crt.add_argument("--metadata", default=None,
                     help="trace JSON, defaults to the CSV path with .json")
    crt.add_argument("--gamma", type=float, default=None,
                     help="override the gradient-error level")
    crt.set_defaults(func=_cmd_certify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
