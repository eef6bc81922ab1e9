"""
Command-line entry point.

Subcommands: ``class``, ``certify``, ``flow``, ``surface``, ``measure`` and
``mixing``.  Every output embeds a manifest with the command, seed,
package version and class hash, and identical flags give identical bytes.

Exit codes: 0 success, 1 negative certification, 2 bad input, 3 budget
exhausted, 4 numerical failure.
"""

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path as FsPath

import numpy as np

from . import __version__
from .combinatorics import (IrreducibleError, MarkedPermutation, Path, StructuralError,
                            enumerate_class, irreducibility_report)

EXIT_OK, EXIT_NEGATIVE, EXIT_INPUT, EXIT_BUDGET, EXIT_NUMERIC = 0, 1, 2, 3, 4
OUT_ENV = "RAUZYINV_OUT"

FORMATS = {"class": ("dot", "json"), "certify": ("json",), "flow": ("csv", "json"),
           "surface": ("json", "csv"), "measure": ("json", "csv"), "mixing": ("csv", "json")}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _read_row(text):
    if text is None:
        raise CliError("a permutation row is required (--row)", EXIT_INPUT)
    if text.startswith("@"):
        try:
            text = FsPath(text[1:]).read_text().strip()
        except OSError as exc:
            raise CliError(f"cannot read row file: {exc}", EXIT_INPUT)
    try:
        perm = MarkedPermutation.from_string(text)
    except StructuralError as exc:
        raise CliError(f"malformed row: {exc}", EXIT_INPUT)
    if not perm.is_valid():
        raise CliError(
            "row fails the subset condition: i(A_l) is contained in A_r or i(A_r) in A_l", EXIT_INPUT)
    return perm


def _diagram(perm):
    try:
        return enumerate_class(perm)
    except IrreducibleError as exc:
        raise CliError(f"row is not irreducible: {exc}", EXIT_INPUT)


def _manifest(args, diagram=None, extra=None):
    from .measures import class_hash

    out = {"command": args.command, "seed": args.seed, "version": __version__,
           "row": getattr(args, "row", None)}
    if diagram is not None:
        out["class_hash"] = class_hash(diagram)
    if extra:
        out.update(extra)
    return out


def _emit(args, text, ext, summary):
    out = args.out
    if out is None and os.environ.get(OUT_ENV):
        out = os.path.join(os.environ[OUT_ENV], f"{args.command}.{ext}")
    if out is None:
        sys.stdout.write(text)
    else:
        FsPath(out).parent.mkdir(parents=True, exist_ok=True)
        FsPath(out).write_text(text)
    print(summary, file=sys.stderr)


def _with_manifest(fmt, manifest, body):
    """Attach the manifest: a JSON key, or leading comment lines."""
    if fmt == "json":
        body = dict(body)
        body["manifest"] = manifest
        return json.dumps(body, indent=2, sort_keys=True) + "\n"
    prefix = "//" if fmt == "dot" else "#"
    head = prefix + " manifest " + json.dumps(manifest, sort_keys=True) + "\n"
    return head + body


def _format(args, default):
    fmt = args.format or default
    if fmt not in FORMATS[args.command]:
        raise CliError(f"format {fmt!r} is not available for {args.command}", EXIT_INPUT)
    return fmt


# commands


def cmd_class(args):
    from .geometry import stratum

    perm = _read_row(args.row)
    report = irreducibility_report(perm)
    if not report[0]:
        raise CliError(f"row is not irreducible: {report[1]}", EXIT_INPUT)
    diagram = _diagram(perm)
    st = stratum(perm)
    fmt = _format(args, "dot")
    summary = {"vertices": len(diagram.vertices), "arrows": len(diagram.arrows), "stratum": st.to_json()}
    man = _manifest(args, diagram, {"summary": summary})
    if fmt == "dot":
        text = _with_manifest("dot", man, diagram.to_dot())
    else:
        text = _with_manifest("json", man, {"diagram": diagram.to_json(), "summary": summary})
    _emit(args, text, fmt, f"class: {summary['vertices']} vertices, {summary['arrows']} arrows")
    return EXIT_OK


def cmd_certify(args):
    from .cones import (BudgetError, SectionSpec, canonical_section, certify_strong_positivity,
                        has_border, search_neat_loop)

    perm = _read_row(args.row)
    _format(args, "json")
    diagram = None
    if args.verify:
        data = json.loads(FsPath(args.verify).read_text())
        path = Path.from_word(MarkedPermutation.from_string(data["start"]), data["word"])
        cert = certify_strong_positivity(path)
        same = cert.to_json()["margins"] == data.get("margins")
        ok = cert.strongly_positive and same
        body = {"verified": ok, "certificate": cert.to_json()}
    elif args.loop:
        try:
            path = Path.from_word(perm, args.loop)
        except (ValueError, StructuralError) as exc:
            raise CliError(f"loop word does not follow arrows from the row: {exc}", EXIT_INPUT)
        cert = certify_strong_positivity(path)
        closed = path.end == path.start
        ok = cert.strongly_positive
        body = {"certificate": cert.to_json(), "closed": closed,
                "neat": bool(closed and ok and not has_border(path))}
    elif args.search:
        diagram = _diagram(perm)
        try:
            if args.base:
                base = _read_row(args.base)
                loop = search_neat_loop(diagram, base, max_length=args.budget or 60)
                spec = SectionSpec.certified(base, loop)
            else:
                spec = canonical_section(diagram, symmetrize=False, max_length=args.budget or 60)
        except BudgetError as exc:
            raise CliError(str(exc), EXIT_BUDGET)
        body = {"certificate": spec.to_json(), "base": str(spec.base)}
        ok = True
    else:
        raise CliError("give --loop WORD, --search or --verify FILE", EXIT_INPUT)
    text = _with_manifest("json", _manifest(args, diagram), body)
    verdict = "strongly positive" if ok else "not strongly positive"
    _emit(args, text, "json", f"certify: {verdict}")
    return EXIT_OK if ok else EXIT_NEGATIVE


def _seeded_point(perm, diagram, rng):
    from .induction import random_length_data
    from .suspension import SuspensionPoint, ThetaSampler

    lam = random_length_data(perm, rng, denominator=1000).normalized()
    tau = ThetaSampler(diagram, rng).sample(perm, rng)
    x = SuspensionPoint(lam, perm, tau)
    scale = x.area
    return SuspensionPoint(lam, perm, tuple(t / scale for t in tau))


def cmd_flow(args):
    from .induction import NotInDomain
    from .suspension import FlowUndefined, trajectory_csv, veech_trajectory

    perm = _read_row(args.row)
    diagram = _diagram(perm)
    fmt = _format(args, "csv")
    rng = np.random.default_rng(args.seed)
    x = _seeded_point(perm, diagram, rng)
    n = max(1, args.samples or 50)
    times = [args.t * k / n for k in range(n + 1)]
    try:
        rows = veech_trajectory(x, times, max_steps=args.budget or 100000)
    except (FlowUndefined, NotInDomain) as exc:
        raise CliError(f"flow undefined: {exc}", EXIT_NUMERIC)
    man = _manifest(args, diagram, {"t": args.t, "start": x.to_json()})
    if fmt == "csv":
        text = _with_manifest("csv", man, trajectory_csv(rows))
    else:
        text = _with_manifest("json", man, {"trajectory": [
            {"t": t, "n_steps": k, "point": {"perm": str(z.perm), "lambda": [float(v) for v in z.lam.values],
                                             "tau": [float(v) for v in z.tau]}} for t, k, z in rows]})
    areas = [float(z.area) for _, _, z in rows]
    _emit(args, text, fmt, f"flow: {len(rows)} samples, area drift {max(areas) - min(areas):.3g}")
    return EXIT_OK


def cmd_surface(args):
    from .geometry import SurfaceError, build_surface

    perm = _read_row(args.row)
    diagram = _diagram(perm)
    fmt = _format(args, "json")
    rng = np.random.default_rng(args.seed)
    x = _seeded_point(perm, diagram, rng)
    try:
        surf = build_surface(x)
    except SurfaceError as exc:
        raise CliError(str(exc), EXIT_NUMERIC)
    man = _manifest(args, diagram, {"point": x.to_json()})
    st = surf.to_json()["stratum"]
    if fmt == "json":
        text = _with_manifest("json", man, {"surface": surf.to_json(),
                                            "check": {"sum_multiplicities": sum(st["multiplicities"]),
                                                      "four_g_minus_four": 4 * st["genus"] - 4}})
    else:
        text = _with_manifest("csv", man, surf.outlines_csv())
    _emit(args, text, fmt, f"surface: genus {st['genus']}, multiplicities {st['multiplicities']}, "
                           f"sum {sum(st['multiplicities'])} = 4g-4 = {4 * st['genus'] - 4}")
    return EXIT_OK


def _parse_q(text, d):
    if not text:
        return tuple(Fraction(1) for _ in range(d))
    q = tuple(Fraction(x) for x in text.split(","))
    if len(q) != d or any(x <= 0 for x in q):
        raise CliError(f"--q needs {d} positive comma-separated values", EXIT_INPUT)
    return q


def cmd_measure(args):
    from .measures import (MeasureBudgetError, arrow_probabilities, distortion_experiment, nu_measure,
                           table_csv)

    perm = _read_row(args.row)
    fmt = _format(args, "json")
    q = _parse_q(args.q, perm.d)
    rng = np.random.default_rng(args.seed)
    body = {"q": [str(x) for x in q]}
    if args.mode == "exact":
        try:
            nu = nu_measure(perm, q)
        except MeasureBudgetError as exc:
            raise CliError(str(exc), EXIT_BUDGET)
        body["nu"] = str(nu)
        body["arrow_probabilities"] = {k: str(v) for k, v in sorted(arrow_probabilities(perm, q).items())}
    else:
        val, se = nu_measure(perm, q, mode="montecarlo", n=args.samples or 100000, rng=rng)
        body["nu"] = val
        body["stderr"] = se
    rows = None
    if args.distortion:
        grid = [float(c) for c in args.distortion.split(",")]
        rows = distortion_experiment(perm, grid, args.samples or 2000, rng, q=q)
        body["distortion"] = [{"C": c, "probability": p, "ci": 1.96 * s, "below_bound": b}
                              for c, p, s, b in rows]
    man = _manifest(args, None, {"mode": args.mode})
    if fmt == "json":
        text = _with_manifest("json", man, body)
    else:
        if rows is None:
            raise CliError("csv output needs --distortion", EXIT_INPUT)
        text = _with_manifest("csv", man, table_csv(["C", "probability", "ci"],
                                                    [(c, p, 1.96 * s) for c, p, s, _ in rows]))
    _emit(args, text, fmt, f"measure: nu = {body['nu']}")
    return EXIT_OK


def cmd_mixing(args):
    from .combinatorics import CompiledDiagram
    from .cones import BudgetError, canonical_section
    from .measures import (ExperimentConfig, constant_observable, correlation_experiment, min_height,
                           table_csv, tail_experiment)

    perm = _read_row(args.row)
    diagram = _diagram(perm)
    fmt = _format(args, "csv")
    try:
        spec = canonical_section(diagram)
    except BudgetError as exc:
        raise CliError(str(exc), EXIT_BUDGET)
    compiled = CompiledDiagram(diagram)
    cfg = ExperimentConfig(seed=args.seed, threads=args.threads)
    if args.experiment == "tail":
        cfg.samples = args.samples or 2000
        res = tail_experiment(spec, compiled, cfg)
        header, rows = ["T", "tail", "ci"], [(t, p, 1.96 * s) for t, p, s in res.rows()]
        summary = f"tail: slope {res.slope:.3g}, R^2 {res.r2:.4f}"
    else:
        cfg.samples = args.samples or 20000
        obs = min_height if args.observable == "min_h" else constant_observable(1.0)
        times = [float(t) for t in (args.times.split(",") if args.times else range(11))]
        res = correlation_experiment(spec, compiled, (obs, obs), times, cfg)
        header, rows = ["t", "correlation", "ci"], [(t, c, 1.96 * s) for t, c, s in res.rows()]
        summary = f"correlation: decay factor {res.decay_factor:.3g}"
    man = _manifest(args, diagram, {"experiment": args.experiment, "config": cfg.to_json(),
                                    "section": {"base": str(spec.base), "word": spec.word,
                                                "copies": len(spec.copies)}})
    if fmt == "csv":
        text = _with_manifest("csv", man, table_csv(header, rows))
    else:
        text = _with_manifest("json", man, {"result": res.to_json()})
    _emit(args, text, fmt, summary)
    return EXIT_OK


COMMANDS = {"class": cmd_class, "certify": cmd_certify, "flow": cmd_flow, "surface": cmd_surface,
            "measure": cmd_measure, "mixing": cmd_mixing}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--row", help="permutation row, or @FILE to read it from a file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--budget", type=int, default=None,
                        help="search or step budget (command specific)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--format", default=None, choices=["dot", "csv", "json"])
    common.add_argument("--out", default=None, help=f"output file (default: ${OUT_ENV}/<command>.<ext> or stdout)")

    parser = argparse.ArgumentParser(prog="rauzyinv", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("class", parents=[common], help="enumerate the Rauzy class")
    p = sub.add_parser("certify", parents=[common], help="certify a loop or search for a neat one")
    p.add_argument("--loop", help="arrow word such as LRRL")
    p.add_argument("--search", action="store_true")
    p.add_argument("--base", help="base row for --search (default: canonical section of the class)")
    p.add_argument("--verify", help="re-check a certificate JSON file")
    p = sub.add_parser("flow", parents=[common], help="Veech flow trajectory from a seeded point")
    p.add_argument("--t", type=float, default=5.0)
    p.add_argument("--samples", type=int, default=None)
    sub.add_parser("surface", parents=[common], help="zippered-rectangle surface of a seeded point")
    p = sub.add_parser("measure", parents=[common], help="measures, probabilities, distortion table")
    p.add_argument("--q", help="comma-separated weights (default all ones)")
    p.add_argument("--mode", choices=["exact", "montecarlo"], default="exact")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--distortion", help="comma-separated C grid, e.g. 2,4,8,16,32")
    p = sub.add_parser("mixing", parents=[common], help="roof tails or correlation decay")
    p.add_argument("--experiment", choices=["tail", "correlation"], default="correlation")
    p.add_argument("--observable", choices=["min_h", "constant"], default="min_h")
    p.add_argument("--times", help="comma-separated flow times")
    p.add_argument("--samples", type=int, default=None)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    from .cones import BudgetError
    from .induction import NotInDomain

    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except BudgetError as exc:
        print(f"error: budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (NotInDomain, FloatingPointError, ZeroDivisionError, OverflowError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
