"""Command-line front end.

Subcommands: ``solve`` (one run, trace + summary artifacts), ``analyze``
(Jacobian spectrum, rate bounds, fixed-point enumeration, genericity
certificate), ``sweep`` (rate-vs-bound grid, concurrent trials in
deterministic order), ``counterexample`` (the closed-form spurious
fixed-point problems), and ``verify`` (the invariant suite).

Exit codes: 0 converged to the true subspace / all checks pass; 3
converged to a different fixed point; 4 hit the iteration limit or
stalled; 2 usage or I/O error; 1 internal error. Artifacts are
deterministic: 17-significant-digit decimal floats in CSV and JSON, and
re-running a manifest's argv reproduces artifacts byte for byte (only the
manifest timestamp field changes).
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, mmio
from .analysis import (
    enumerate_invariant_projectors,
    gamma_bound,
    genericity_check,
    jacobian_blocks,
)
from .errors import AceError
from .iteration import (
    CONVERGED,
    CONVERGED_TO_OTHER,
    CONVERGED_TO_TRUTH,
    MAX_ITER,
    STALLED,
    Problem,
    estimate_rate,
    run,
    run_summary,
    trace_to_csv,
)
from .linalg import Frame
from .problems import EnsembleSpec, counterexample, load_problem, random_problem
from .textfmt import canonical_json, csv_cell

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_WRONG_FIXED_POINT = 3
EXIT_NO_CONVERGENCE = 4

_STATUS_EXIT = {
    CONVERGED_TO_TRUTH: EXIT_OK,
    CONVERGED: EXIT_OK,
    CONVERGED_TO_OTHER: EXIT_WRONG_FIXED_POINT,
    MAX_ITER: EXIT_NO_CONVERGENCE,
    STALLED: EXIT_NO_CONVERGENCE,
}


class UsageError(Exception):
    pass


def _parse_gen(text: str) -> EnsembleSpec:
    fields = {}
    for part in text.split(","):
        if not part:
            continue
        if "=" not in part:
            raise UsageError(f"--gen expects key=value pairs, got {part!r}")
        key, value = part.split("=", 1)
        fields[key.strip()] = value.strip()
    try:
        return EnsembleSpec(
            N=int(fields["N"]),
            n=int(fields["n"]),
            gap=float(fields.get("gap", 1.0)),
            b_norm=float(fields.get("bnorm", 1.0)),
            seed=int(fields.get("seed", 0)),
            field=fields.get("field", "real"),
        )
    except KeyError as exc:
        raise UsageError(f"--gen is missing required key {exc}") from exc
    except ValueError as exc:
        raise UsageError(f"bad --gen value: {exc}") from exc


def _load_problem_arg(args) -> tuple[Problem, dict]:
    if getattr(args, "gen", None):
        spec = _parse_gen(args.gen)
        prob = random_problem(spec)
        descriptor = {"generator": spec.to_dict()}
    elif getattr(args, "problem", None):
        prob = load_problem(args.problem)
        descriptor = {"file": os.path.abspath(args.problem)}
    else:
        raise UsageError("one of --gen or --problem is required")
    if getattr(args, "shift", None) is not None and args.shift != "keep":
        shift = "auto" if args.shift == "auto" else float(args.shift)
        prob = Problem.build(prob.A, prob.B, prob.n, shift=shift, label=prob.label, meta=prob.meta)
        descriptor["shift_override"] = prob.t
    return prob, descriptor


def _resolve_init(args, prob: Problem):
    mode = getattr(args, "init", "a-eigvecs") or "a-eigvecs"
    if mode == "a-eigvecs":
        return "eigvecs_of_A", {"init": "a-eigvecs"}
    if mode.startswith("random:"):
        seed = int(mode.split(":", 1)[1])
        rng = np.random.default_rng(np.random.SeedSequence([seed, 424242]))
        field = "complex" if prob.A.field == "complex" else "real"
        return Frame.haar(prob.dim, prob.n, rng, field), {"init": mode}
    if mode.startswith("file:"):
        path = mode.split(":", 1)[1]
        return mmio.read_frame(path), {"init": mode}
    raise UsageError(f"unknown --init mode {mode!r}")


def _write_json(path: str, payload) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(canonical_json(payload))


def _write_manifest(out_dir: str, argv, command, descriptor, config) -> None:
    manifest = {
        "command": command,
        "argv": list(argv),
        "problem": descriptor,
        "config": config,
        "versions": {
            "ace-lab": __version__,
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
            "python": ".".join(map(str, sys.version_info[:3])),
        },
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)


def _gamma_bound_or_none(prob: Problem):
    if prob.truth is None:
        return None
    try:
        gb = gamma_bound(prob)
    except AceError:
        return None
    return {k: gb[k] for k in ("gamma_exact", "bound_schur", "bound_b", "lambda_g")}


def _cmd_solve(args, argv) -> int:
    prob, descriptor = _load_problem_arg(args)
    init, init_desc = _resolve_init(args, prob)
    trace = run(prob, tol=args.tol, max_iter=args.max_iter, init=init)
    summary = run_summary(prob, trace)
    summary["gamma_bound"] = _gamma_bound_or_none(prob)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        trace_to_csv(trace, os.path.join(args.out, "trace.csv"))
        _write_json(os.path.join(args.out, "summary.json"), summary)
        config = {"tol": args.tol, "max_iter": args.max_iter, **init_desc}
        _write_manifest(args.out, argv, "solve", descriptor, config)
    print(f"status: {trace.terminal_status}  iters: {trace.iters}  "
          f"final_distance: {trace.final_distance!r}", file=sys.stderr)
    return _STATUS_EXIT[trace.terminal_status]


def _axis_name(frame: Frame) -> str:
    """Coordinate-axis label of a frame when it aligns with axes, else a dot."""
    proj = frame.projector()
    axes = [i for i in range(frame.dim) if abs(proj[i, i].real - 1.0) <= 1e-8]
    if len(axes) == frame.rank and abs(np.trace(proj).real - frame.rank) <= 1e-8:
        off = proj - np.diag(np.diag(proj))
        if np.max(np.abs(off)) <= 1e-8:
            return "{" + ",".join(f"e{i + 1}" for i in axes) + "}"
    return "."


def _cmd_counterexample(args, argv) -> int:
    prob = counterexample(args.which)
    init = Frame.coordinate(prob.dim, [prob.dim - 1])
    trace = run(prob, tol=args.tol, max_iter=args.max_iter, init=init)
    header = ["k"] + [f"lambda_{i+1}" for i in range(prob.n)] + ["dist_prev", "dist_truth", "span"]
    print("  ".join(f"{h:>12s}" for h in header))
    for step in trace.steps:
        lams = ["-"] * prob.n if step.eigenvalues is None else [
            f"{v:.6f}" for v in step.eigenvalues
        ]
        cells = [str(step.k), *lams,
                 "-" if step.dist_prev is None else f"{step.dist_prev:.3e}",
                 "-" if step.dist_truth is None else f"{step.dist_truth:.3e}",
                 _axis_name(step.frame)]
        print("  ".join(f"{c:>12s}" for c in cells))
    path = " -> ".join(_axis_name(s.frame) for s in trace.steps)
    print(f"projector path: {path}")
    print(f"status: {trace.terminal_status}", file=sys.stderr)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        trace_to_csv(trace, os.path.join(args.out, "trace.csv"))
        summary = run_summary(prob, trace)
        summary["gamma_bound"] = _gamma_bound_or_none(prob)
        _write_json(os.path.join(args.out, "summary.json"), summary)
        _write_manifest(args.out, argv, "counterexample",
                        {"counterexample": args.which},
                        {"tol": args.tol, "max_iter": args.max_iter})
    return _STATUS_EXIT[trace.terminal_status]


def _cmd_analyze(args, argv) -> int:
    prob, descriptor = _load_problem_arg(args)
    os.makedirs(args.out, exist_ok=True)
    cert = genericity_check(prob)
    _write_json(os.path.join(args.out, "genericity.json"), cert)
    reports = enumerate_invariant_projectors(prob)
    _write_json(os.path.join(args.out, "fixed_points.json"),
                [r.to_dict() for r in reports])
    gb = _gamma_bound_or_none(prob)
    _write_json(os.path.join(args.out, "gamma_bounds.json"), gb)
    spectrum = None
    if prob.truth is not None:
        jb = jacobian_blocks(prob, prob.truth)
        spectrum = {
            "gamma": jb.gamma,
            "mu": list(jb.mu),
            "block_eigenvalues": [list(w) for w in jb.block_eigenvalues],
        }
    _write_json(os.path.join(args.out, "jacobian_spectrum.json"), spectrum)
    _write_manifest(args.out, argv, "analyze", descriptor, {})
    print(f"certified_generic: {cert['certified']}  "
          f"fixed_points: {sum(r.is_fixed for r in reports)}", file=sys.stderr)
    return EXIT_OK


def _parse_seed_list(text: str) -> list[int]:
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            lo, hi = part.split(":", 1)
            seeds.extend(range(int(lo), int(hi)))
        else:
            seeds.append(int(part))
    if not seeds:
        raise UsageError("--seeds produced an empty list")
    return seeds


def _sweep_trial(args, gap: float, b_norm: float, seed: int) -> dict:
    spec = EnsembleSpec(N=args.N, n=args.n, gap=gap, b_norm=b_norm, seed=seed)
    prob = random_problem(spec)
    trace = run(prob, tol=args.tol, max_iter=args.max_iter)
    row = {
        "N": args.N, "n": args.n, "gap": gap, "b_norm": b_norm, "seed": seed,
        "status": trace.terminal_status, "iters": trace.iters,
        "b_matvecs": trace.steps[-1].b_matvecs,
        "fitted_rate": None, "r_squared": None,
        "gamma_exact": None, "bound_schur": None, "bound_b": None,
    }
    try:
        fit = estimate_rate(trace)
        row["fitted_rate"], row["r_squared"] = fit.rate, fit.r_squared
    except AceError:
        pass
    gb = _gamma_bound_or_none(prob)
    if gb:
        row.update({k: gb[k] for k in ("gamma_exact", "bound_schur", "bound_b")})
    return row


def _cmd_sweep(args, argv) -> int:
    gaps = [float(x) for x in args.gaps.split(",") if x]
    bnorms = [float(x) for x in args.bnorms.split(",") if x]
    seeds = _parse_seed_list(args.seeds)
    grid = [(g, b, s) for g in gaps for b in bnorms for s in seeds]
    workers = os.environ.get("ACE_THREADS")
    workers = int(workers) if workers else (os.cpu_count() or 1)
    workers = max(1, min(workers, len(grid)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(lambda gbs: _sweep_trial(args, *gbs), grid))
    os.makedirs(args.out, exist_ok=True)
    columns = ["index", "N", "n", "gap", "b_norm", "seed", "status", "iters",
               "b_matvecs", "fitted_rate", "r_squared", "gamma_exact",
               "bound_schur", "bound_b"]
    with open(os.path.join(args.out, "sweep.csv"), "w", encoding="ascii") as fh:
        fh.write(",".join(columns) + "\n")
        for idx, row in enumerate(rows):
            fh.write(",".join(csv_cell(v) for v in [idx, *[row[c] for c in columns[1:]]]) + "\n")
    _write_manifest(args.out, argv, "sweep", {"grid": {
        "N": args.N, "n": args.n, "gaps": gaps, "bnorms": bnorms, "seeds": seeds,
    }}, {"tol": args.tol, "max_iter": args.max_iter, "workers": workers})
    bad = sum(1 for r in rows if r["status"] != CONVERGED_TO_TRUTH)
    print(f"trials: {len(rows)}  non-truth: {bad}", file=sys.stderr)
    return EXIT_OK if bad == 0 else EXIT_WRONG_FIXED_POINT


def _cmd_verify(args, argv) -> int:
    from .verify import run_checks

    ok = run_checks(quick=args.quick)
    return EXIT_OK if ok else EXIT_INTERNAL


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ace",
        description="Adaptively compressed exchange eigensolver and verification toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_problem_flags(p):
        p.add_argument("--gen", help="ensemble spec, e.g. N=32,n=4,gap=0.5,bnorm=1,seed=7")
        p.add_argument("--problem", help="path to a problem.json manifest")
        p.add_argument("--shift", default=None, help="'auto' or a shift value t (default: keep)")

    solve = sub.add_parser("solve", help="run the fixed-point iteration")
    add_problem_flags(solve)
    solve.add_argument("--tol", type=float, default=1e-10)
    solve.add_argument("--max-iter", type=int, default=500, dest="max_iter")
    solve.add_argument("--init", default="a-eigvecs",
                       help="a-eigvecs | random:<seed> | file:<frame.mtx>")
    solve.add_argument("--out", help="artifact directory (trace.csv, summary.json, manifest.json)")

    analyze = sub.add_parser("analyze", help="fixed-point landscape and rate bounds")
    add_problem_flags(analyze)
    analyze.add_argument("--out", required=True)

    sweep = sub.add_parser("sweep", help="rate-vs-bound grid over gaps, norms, seeds")
    sweep.add_argument("--N", type=int, default=32)
    sweep.add_argument("--n", type=int, default=4)
    sweep.add_argument("--gaps", default="0.3,1,3")
    sweep.add_argument("--bnorms", default="1")
    sweep.add_argument("--seeds", default="0:8", help="comma list and lo:hi ranges")
    sweep.add_argument("--tol", type=float, default=1e-10)
    sweep.add_argument("--max-iter", type=int, default=500, dest="max_iter")
    sweep.add_argument("--out", required=True)

    cex = sub.add_parser("counterexample", help="reproduce a closed-form spurious fixed point")
    cex.add_argument("which", choices=["2x2", "3x3"])
    cex.add_argument("--tol", type=float, default=1e-10)
    cex.add_argument("--max-iter", type=int, default=500, dest="max_iter")
    cex.add_argument("--out")

    ver = sub.add_parser("verify", help="run the full invariant suite")
    ver.add_argument("--quick", action="store_true", help="smaller sample sizes")

    return parser


_DISPATCH = {
    "solve": _cmd_solve,
    "analyze": _cmd_analyze,
    "sweep": _cmd_sweep,
    "counterexample": _cmd_counterexample,
    "verify": _cmd_verify,
}


def execute(argv) -> int:
    """Parse and run one command; returns the exit code (never raises)."""
    argv = list(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        return _DISPATCH[args.command](args, argv)
    except (UsageError, FileNotFoundError, NotADirectoryError, IsADirectoryError,
            PermissionError, json.JSONDecodeError, AceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - boundary of the process
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(execute(sys.argv[1:]))


if __name__ == "__main__":
    main()
