"""Command-line front end: ``covpovm {decompose,check,mub,mutinfo}``.

Exit codes: 0 success, 1 input error, 2 mathematical validation failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from contextlib import nullcontext

import numpy as np

from . import __version__
from .apps import (
    build_mub_scenario,
    make_ensemble,
    mutual_information,
    optimal_mub_discrimination,
    orbit_bound,
)
from .errors import CovPovmError, InputError, ValidationError
from .extremal import RANK_TOL, analyze, decompose_blocks, extremal_decomposition
from .fileio import AnalysisReport, load_ensemble, load_group, load_rep, load_seeds, parse_stabilizers
from .group_core import DEFAULT_TOL as REP_TOL, make_subgroup
from .povm import DEFAULT_TOL as POVM_TOL, check_membership, make_seed_block, synthesize
from .repdec import commutant_basis, decompose
from .stability import (
    block_seed_from_full,
    build_s_blocks,
    build_setup,
    stability_extremality,
    stability_membership,
    synthesize_quotient_povm,
)

EXIT_OK, EXIT_INPUT, EXIT_INVALID = 0, 1, 2


def _tolerances(args) -> dict:
    if args.tol is not None:
        return {"rep": args.tol, "membership": args.tol, "rank": args.tol}
    return {"rep": REP_TOL, "membership": POVM_TOL, "rank": RANK_TOL}


def _emit(report: AnalysisReport, args, summary=()) -> None:
    """JSON to ``--out`` or stdout. Summary lines go to stdout only when stdout is not carrying JSON."""
    text = report.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    json_on_stdout = args.command != "decompose" and not args.out
    stream = sys.stderr if json_on_stdout else sys.stdout
    for line in summary:
        print(line, file=stream)
    if json_on_stdout:
        sys.stdout.write(text)


def _base_report(args, tols: dict) -> AnalysisReport:
    return AnalysisReport(command=args.command, tool_version=__version__, tolerances=tols,
                          scenario={"probe_seed": args.probe_seed})


def _load_pipeline(args, tols):
    group = load_group(args.group)
    rep = load_rep(args.rep, group, tols["rep"])
    dec = decompose(rep, probe_seed=args.probe_seed)
    return group, rep, dec


def cmd_decompose(args) -> int:
    tols = _tolerances(args)
    group, rep, dec = _load_pipeline(args, tols)
    comm = len(commutant_basis(rep))
    report = _base_report(args, tols)
    report.scenario.update({"group": args.group, "rep": args.rep, "order": group.order, "dim": rep.dim})
    report.decomposition = dec.summary()
    report.application = {"commutant_dimension": comm, "sum_m_squared": dec.sum_m_squared}
    lines = [f"{'mu':>4} {'d_mu':>6} {'m_mu':>6}"]
    lines += [f"{row['mu']:>4} {row['d_mu']:>6} {row['m_mu']:>6}" for row in dec.summary()]
    lines += [f"commutant dimension: {comm}", f"sum m_mu^2: {dec.sum_m_squared}"]
    _emit(report, args, lines)
    return EXIT_OK


def _stability_check(args, tols, rep, dec, seeds, labels, report) -> int:
    members = parse_stabilizers(args.stabilizers)
    subgroups = [make_subgroup(rep.group, m) for m in members]
    setup = build_setup(rep, subgroups, seed=args.probe_seed)
    blocks, residuals = block_seed_from_full(setup, seeds, tols["membership"])
    s_blocks = build_s_blocks(setup, dec)
    mem = stability_membership(blocks, s_blocks, tols["membership"])
    report.scenario["stabilizers"] = members
    report.scenario["restrictions"] = [r.summary() for r in setup.restrictions]
    report.scenario["commutation_residuals"] = residuals
    report.membership = mem.to_dict()
    if not mem.member:
        return EXIT_INVALID
    ext = stability_extremality(blocks, s_blocks, tols["rank"])
    report.extremality = ext.to_dict()
    povm = synthesize_quotient_povm(blocks, tol=tols["membership"])
    report.application = {"completeness_residual": povm.completeness_residual(),
                          "outcome_counts": list(povm.outcome_counts)}
    if args.split:
        report.split_tree = decompose_blocks(blocks.blocks, s_blocks, tols["rank"]).to_dict()
    return EXIT_OK


def _count_leaves(node: dict) -> int:
    return sum(_count_leaves(c) for c in node["children"]) if node["children"] else 1


def _check_summary(report: AnalysisReport) -> list[str]:
    lines = [f"member: {report.membership['member'] if report.membership else None}"]
    if report.extremality:
        e = report.extremality
        lines.append(f"extremal: {e['is_extremal']} (span {e['span_dim']} of {e['full_dim']})")
        lines.append(f"rank bound: {e['rank_bound_lhs']} <= {e['rank_bound_rhs']}: {e['rank_bound_satisfied']}")
    if report.split_tree:
        lines.append(f"extremal leaves: {_count_leaves(report.split_tree)}")
    return lines


def cmd_check(args) -> int:
    tols = _tolerances(args)
    group, rep, dec = _load_pipeline(args, tols)
    seeds, labels = load_seeds(args.seeds)
    report = _base_report(args, tols)
    report.scenario.update({"group": args.group, "rep": args.rep, "seeds": args.seeds,
                            "order": group.order, "dim": rep.dim, "orbits": len(seeds)})
    report.decomposition = dec.summary()
    if args.stabilizers:
        code = _stability_check(args, tols, rep, dec, seeds, labels, report)
        _emit(report, args, _check_summary(report))
        return code
    block = make_seed_block(rep, seeds, labels, tols["membership"])
    mem = check_membership(block, dec, tols["membership"])
    report.membership = mem.to_dict()
    if not mem.member:
        _emit(report, args, _check_summary(report))
        return EXIT_INVALID
    ext = analyze(block, dec, tols["rank"])
    report.extremality = ext.to_dict()
    povm = synthesize(block, tols["membership"])
    report.application = {"completeness_residual": povm.completeness_residual(),
                          "covariance_residual": povm.covariance_residual()}
    if args.split:
        report.split_tree = extremal_decomposition(block, dec, tols["rank"]).to_dict()
    _emit(report, args, _check_summary(report))
    return EXIT_OK


def _parse_priors(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        from .errors import InvalidPriors

        raise InvalidPriors(f"priors must be comma-separated numbers, got {text!r}") from None


def cmd_mub(args) -> int:
    tols = _tolerances(args)
    scenario = build_mub_scenario(args.d, _parse_priors(args.priors), probe_seed=args.probe_seed)
    result = optimal_mub_discrimination(scenario, tols["rank"])
    report = _base_report(args, tols)
    report.scenario.update({"d": args.d, "basis_priors": list(scenario.basis_priors),
                            "stabilizers": [list(s.members) for s in scenario.setup.subgroups]})
    report.decomposition = scenario.dec.summary()
    report.application = result.to_dict()
    lines = [f"chosen basis: {result.chosen_basis}",
             f"minimum error probability: {result.min_error_probability:.12g}"]
    if result.degenerate:
        lines.append(f"degenerate: bases {result.tied_bases} tie")
    for l, c in enumerate(result.certificates, start=1):
        lines.append(f"basis {l} candidate extremal: {c.is_extremal}")
    _emit(report, args, lines)
    return EXIT_OK


def cmd_mutinfo(args) -> int:
    tols = _tolerances(args)
    group, rep, dec = _load_pipeline(args, tols)
    seeds, labels = load_seeds(args.seeds)
    states, priors = load_ensemble(args.ensemble)
    ensemble = make_ensemble(states, priors, tols["membership"])
    report = _base_report(args, tols)
    report.scenario.update({"group": args.group, "rep": args.rep, "seeds": args.seeds,
                            "ensemble": args.ensemble, "order": group.order, "dim": rep.dim})
    report.decomposition = dec.summary()
    if args.stabilizers:
        members = parse_stabilizers(args.stabilizers)
        setup = build_setup(rep, [make_subgroup(group, m) for m in members], seed=args.probe_seed)
        blocks, _ = block_seed_from_full(setup, seeds, tols["membership"])
        mem = stability_membership(blocks, build_s_blocks(setup, dec), tols["membership"])
        report.membership = mem.to_dict()
        if not mem.member:
            _emit(report, args, ["seed block is not a covariant POVM"])
            return EXIT_INVALID
        povm = synthesize_quotient_povm(blocks, tol=tols["membership"])
    else:
        block = make_seed_block(rep, seeds, labels, tols["membership"])
        mem = check_membership(block, dec, tols["membership"])
        report.membership = mem.to_dict()
        if not mem.member:
            _emit(report, args, ["seed block is not a covariant POVM"])
            return EXIT_INVALID
        povm = synthesize(block, tols["membership"])
    used = sum(1 for A in seeds if np.linalg.norm(A) > tols["membership"])
    info, bound = mutual_information(povm, ensemble), orbit_bound(dec)
    report.application = {"mutual_information_bits": info, "orbit_bound": bound,
                          "nonzero_orbits": used, "within_bound": used <= bound}
    _emit(report, args, [f"mutual information: {info:.12g} bits", f"orbit bound: {bound}",
                         f"nonzero seed orbits: {used}"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None,
                        help="override every numerical tolerance with one value")
    common.add_argument("--out", default=None, help="write the JSON report to this file")
    common.add_argument("--probe-seed", type=int, default=0, help="seed of the decomposition probe")

    parser = argparse.ArgumentParser(prog="covpovm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", parents=[common], help="isotypic decomposition of a representation")
    p.add_argument("--group", required=True)
    p.add_argument("--rep", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("check", parents=[common], help="membership and extremality of a seed block")
    p.add_argument("--group", required=True)
    p.add_argument("--rep", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--stabilizers", default=None, help="one subgroup per seed: file or '0,1;0,2'")
    p.add_argument("--split", action="store_true", help="split into extremal points when not extremal")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("mub", parents=[common], help="minimum-error discrimination of two MUBs")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--priors", required=True, help="basis priors, e.g. 0.7,0.3")
    p.set_defaults(func=cmd_mub)

    p = sub.add_parser("mutinfo", parents=[common], help="mutual information and orbit bound")
    p.add_argument("--group", required=True)
    p.add_argument("--rep", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--ensemble", required=True)
    p.add_argument("--stabilizers", default=None)
    p.set_defaults(func=cmd_mutinfo)
    return parser


def _thread_limit():
    n = os.environ.get("COVPOVM_THREADS")
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(n)))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "mub" and args.d < 2:
        print("error: --d must be at least 2", file=sys.stderr)
        return EXIT_INPUT
    try:
        with _thread_limit():
            return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValidationError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except CovPovmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
