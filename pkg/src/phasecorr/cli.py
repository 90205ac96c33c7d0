"""Command-line front end.

Subcommands: build, bounds, couple, map, expand, queue, validate.  Models
travel as JSON files (see modelio); queue results are CSV rows.  Exit codes:
0 success, 1 validation failure, 2 usage error, 3 malformed input file,
4 infeasible target.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import builders, expand, mapproc, modelio, queueing
from .coupling import TransportProblem, monotone_coupling, target_coupling, to_transfer_matrix
from .errors import InfeasibleTargetError, InvalidModelError, PhasecorrError
from .phase_type import PhaseType, is_exponential

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_BADFILE = 3
EXIT_INFEASIBLE = 4


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _load_phd(path: str) -> PhaseType:
    try:
        with open(path) as fh:
            model = modelio.parse_model(fh.read())
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise _BadFile(str(exc)) from exc
    if not isinstance(model, PhaseType):
        raise _BadFile(f"{path} does not hold a phase_type model")
    return model


class _BadFile(Exception):
    pass


def _cmd_build(args) -> int:
    if args.n is not None:
        n = args.n
    else:
        sign = -1.0 if args.sign == "-" else 1.0
        target = sign * abs(args.rho)
        n = builders.min_phases_for_rho(target, chain=args.chain if target >= 0 else "auto")
    if args.sign == "-":
        phd, _, _ = builders.harmonic_chain(n)
    elif args.chain == "harmonic":
        phd, _, _ = builders.harmonic_chain(n)
    else:
        phd, _, _ = builders.optimal_positive_chain(n)
    _emit(modelio.dump_model(phd), args.out)
    return EXIT_OK


def _sequential_problem(phd: PhaseType, sense: str) -> TransportProblem:
    rev = builders.reverse_transform(phd)
    dx = rev.desc
    return TransportProblem(
        u=dx.psi, v=phd.pi, alpha=np.nan_to_num(dx.a), beta=phd.desc.m, sense=sense
    )


def _parallel_problem(phd: PhaseType, sense: str) -> TransportProblem:
    m = phd.desc.m
    return TransportProblem(u=phd.pi, v=phd.pi, alpha=m, beta=m, sense=sense)


def _cmd_bounds(args) -> int:
    phd = _load_phd(args.file)
    if args.mode == "map":
        expansion = mapproc.path_expand(phd)
        lo, hi, _, _ = mapproc.autocorr_bounds(expansion)
    else:
        make = _parallel_problem if args.mode == "parallel" else _sequential_problem
        lo = monotone_coupling(make(phd, "min")).rho
        hi = monotone_coupling(make(phd, "max")).rho
    _emit(f"({lo:.6g}, {hi:.6g})", args.out)
    return EXIT_OK


def _cmd_couple(args) -> int:
    phd = _load_phd(args.file)
    make = _parallel_problem if args.mode == "parallel" else _sequential_problem
    sense = args.sense
    if args.rho is not None:
        sense = "min" if args.rho < 0 else "max"
    problem = make(phd, sense)
    coupling = monotone_coupling(problem)
    if args.rho is not None:
        coupling = target_coupling(
            coupling.F, coupling.rho, problem.u, problem.v, args.rho, problem
        )
    transfer = None
    if args.mode == "sequential":
        transfer = to_transfer_matrix(coupling.F, problem.u)
    _emit(modelio.dump_model(coupling, transfer=transfer), args.out)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(modelio.matrix_csv(coupling.F))
            if transfer is not None:
                fh.write(modelio.matrix_csv(transfer, header_prefix="psi"))
    return EXIT_OK


def _cmd_map(args) -> int:
    phd = _load_phd(args.file)
    expansion = mapproc.path_expand(phd)
    lo, hi, nu_lo, nu_hi = mapproc.autocorr_bounds(expansion)
    desc = expansion.phd.desc
    if args.rho is not None:
        extreme, rho_ext = (nu_lo, lo) if args.rho < 0 else (nu_hi, hi)
        flow = target_coupling(extreme, rho_ext, desc.psi, expansion.phd.pi, args.rho)
        nu = flow.F
    else:
        nu = nu_hi
    built = mapproc.build_map(expansion, nu)
    _emit(modelio.dump_model(built), args.out)
    if args.trace:
        times = mapproc.sample_intervals(built, args.trace, seed=args.seed)
        text = "\n".join(format(t, ".17g") for t in times)
        _emit(text, args.trace_out)
    return EXIT_OK


def _cmd_expand(args) -> int:
    if args.kind == "hyperexp":
        probs = [float(x) for x in args.probs.split(",")]
        rates = [float(x) for x in args.rates.split(",")]
        h = expand.HyperExp(probs, rates)
        sign = -1 if args.sign == "-" else 1
        if sign > 0 and args.rho is not None:
            alloc = expand.greedy_allocate(h, args.rho)
        else:
            alloc = (
                np.full(h.order, args.order_per_phase)
                if args.order_per_phase
                else np.ones(h.order, dtype=int)
            )
        phd, rho = expand.expand_hyperexp(h, alloc, sign=sign)
        sys.stderr.write(f"allocation {list(map(int, alloc))}, rho {rho:.6g}\n")
        _emit(modelio.dump_model(phd), args.out)
        return EXIT_OK
    chain, _, _ = builders.optimal_positive_chain(args.n)
    from .phase_type import scale

    scaled = scale(chain, float(args.k))
    form = {
        "in": expand.erlang_expand_in,
        "out": expand.erlang_expand_out,
        "full": expand.erlang_expand_full,
    }[args.form]
    result = form(args.k, scaled)
    _emit(modelio.dump_model(result.phd), args.out)
    return EXIT_OK


def _cmd_queue(args) -> int:
    rows = ["rho,util,L,W,ci_L,realized_rho"]
    if args.model == "mm1corr":
        lam_s = args.lam_s
        lam_a = args.util * lam_s
        model = queueing.build_correlated_mm1(lam_a, lam_s, args.rho)
        stats = queueing.simulate_correlated_mm1(
            model, args.customers, warmup=args.customers // 10, seed=args.seed
        )
        rows.append(
            f"{args.rho:.17g},{args.util:.17g},{stats.L:.17g},{stats.W:.17g},"
            f"{stats.ci_L:.17g},{stats.realized_corr:.17g}"
        )
    else:
        service = queueing.correlated_task_service(args.lam_s, args.rho)
        lam_a = args.util / service.mean
        L, W = queueing.mg1_pk(lam_a, service)
        rows.append(
            f"{args.rho:.17g},{args.util:.17g},{L:.17g},{W:.17g},0,{service.rho:.17g}"
        )
    _emit("\n".join(rows), args.out)
    return EXIT_OK


def _cmd_validate(args) -> int:
    phd = _load_phd(args.file)
    report = is_exponential(phd, args.lam, args.tol)
    lines = [
        f"order {phd.order}, mean {phd.mean:.12g}",
        f"exponential(rate={args.lam}): {'PASS' if report.passed else 'FAIL'} "
        f"(max relative deviation {report.max_rel_deviation:.3g} at {report.worst_check})",
    ]
    desc = phd.desc
    checks = {
        "M >= 0": bool(np.all(desc.M >= -args.tol)),
        "sum(psi) == 1": bool(abs(desc.psi.sum() - 1.0) <= max(args.tol, 1e-10)),
        "psi.a == pi.m": bool(abs(desc.mean - phd.mean) <= max(args.tol, 1e-9) * phd.mean),
        "phi normalised": bool(abs(desc.phi.sum() - 1.0) <= max(args.tol, 1e-10)),
    }
    ok = report.passed
    for label, passed in checks.items():
        ok = ok and passed
        lines.append(f"{label}: {'PASS' if passed else 'FAIL'}")
    _emit("\n".join(lines), args.out)
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phasecorr",
        description="correlated exponential distributions as phase-type models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="write output to this file instead of stdout")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--tol", type=float, default=1e-9)

    p = sub.add_parser("build", help="emit a chain representation of Exp(1)")
    p.add_argument("--sign", choices=["+", "-"], default="+")
    p.add_argument("--rho", type=float, help="target correlation magnitude")
    p.add_argument("--n", type=int, help="explicit order instead of sizing by --rho")
    p.add_argument("--chain", choices=["optimal", "harmonic"], default="optimal")
    common(p)
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("bounds", help="attainable correlation range of a model")
    p.add_argument("--file", required=True)
    p.add_argument("--mode", choices=["parallel", "sequential", "map"], default="parallel")
    common(p)
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("couple", help="extreme or target coupling of a chain with itself")
    p.add_argument("--file", required=True)
    p.add_argument("--mode", choices=["parallel", "sequential"], default="parallel")
    p.add_argument("--sense", choices=["min", "max"], default="max")
    p.add_argument("--rho", type=float, help="interpolate to this correlation")
    p.add_argument("--csv", help="also write the matrices as CSV")
    common(p)
    p.set_defaults(func=_cmd_couple)

    p = sub.add_parser("map", help="expand a chain into an autocorrelated point process")
    p.add_argument("--file", required=True)
    p.add_argument("--rho", type=float, help="target lag-1 autocorrelation")
    p.add_argument("--trace", type=int, help="also simulate this many inter-event times")
    p.add_argument("--trace-out", help="write the trace here (default stdout)")
    common(p)
    p.set_defaults(func=_cmd_map)

    p = sub.add_parser("expand", help="correlated hyperexponential/Erlang representations")
    p.add_argument("--kind", choices=["hyperexp", "erlang"], required=True)
    p.add_argument("--probs", help="hyperexp: comma-separated probabilities")
    p.add_argument("--rates", help="hyperexp: comma-separated rates")
    p.add_argument("--rho", type=float, help="hyperexp: target correlation")
    p.add_argument("--sign", choices=["+", "-"], default="+")
    p.add_argument("--order-per-phase", type=int, help="fixed per-phase order")
    p.add_argument("--k", type=int, default=2, help="erlang: number of stages")
    p.add_argument("--n", type=int, default=2, help="erlang: chain order per stage")
    p.add_argument("--form", choices=["in", "out", "full"], default="in")
    common(p)
    p.set_defaults(func=_cmd_expand)

    p = sub.add_parser("queue", help="simulate/analyse the two queueing applications")
    p.add_argument("--model", choices=["mm1corr", "taskpair"], required=True)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--util", type=float, default=0.8)
    p.add_argument("--customers", type=int, default=100000)
    p.add_argument("--lam-s", type=float, default=1.0)
    common(p)
    p.set_defaults(func=_cmd_queue)

    p = sub.add_parser("validate", help="check a stored model represents Exp(rate)")
    p.add_argument("--file", required=True)
    p.add_argument("--lam", type=float, default=1.0)
    common(p)
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _BadFile as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_BADFILE
    except InfeasibleTargetError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INFEASIBLE
    except (InvalidModelError, PhasecorrError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
