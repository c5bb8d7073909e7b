"""Command-line pipeline: parse a .red reduction, triangulate when needed,
run the optimization engine, verify against the brute-force oracle, and emit
reports, DOT lattices, C-like code, and op-count CSVs.

Exit codes: 0 success, 1 parse error, 2 unsupported input, 3 verification
mismatch, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from importlib import resources
from pathlib import Path

from .classify import EmptyReuseError, analyze_face
from .dsl import ParseError, ReductionSpec, parse_spec, pretty_print
from .emit import emit_c_like
from .engine import (
    Decision,
    EngineError,
    FactorPlan,
    FractalPlan,
    cost_of,
    plan_nodes,
    plan_to_text,
    simplify_max,
)
from .interp import (
    EMPTY,
    InterpretationError,
    estimate_degree,
    input_grid,
    interpret,
    oracle_evaluate,
    program_of_reduction,
)
from .polyhedra import (
    DegenerateSplitError,
    EmptyPolyhedronError,
    UnboundedPolyhedronError,
    UnsupportedInputError,
    build_face_lattice,
    growth_degree,
    is_simplex,
    lattice_to_dot,
)
from .program import EquationProgram
from .reduction import Reduction, make_reduction
from .transforms import NonAdmissibleLabelingError

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_UNSUPPORTED = 2
EXIT_MISMATCH = 3
EXIT_INTERNAL = 4

DEFAULT_VERIFY_NS = (6, 9, 12)
DEFAULT_FIT_NS = (32, 64, 128, 256)
DEFAULT_SEED = 20240521

REPORT_SCHEMA_VERSION = 1

_UNSUPPORTED = (UnsupportedInputError, UnboundedPolyhedronError,
                EmptyPolyhedronError, DegenerateSplitError,
                NonAdmissibleLabelingError, EmptyReuseError, ValueError)


class VerificationMismatch(RuntimeError):
    pass


def _load_spec(path: str) -> ReductionSpec:
    return parse_spec(Path(path).read_text())


def _prepare(spec: ReductionSpec, args) -> Reduction:
    return spec.to_reduction(product_invertible=getattr(args, "product_invertible",
                                                        False))


def _maybe_triangulate(red: Reduction):
    """Non-simplex bodies in three dimensions are decomposed into simplices
    before simplification; 2D bodies go to the engine directly (it splits
    them), and higher dimensions must already be simplices."""
    from .polyhedra import triangulate

    if red.body.dim <= 2 or is_simplex(red.body):
        return [red]
    if red.body.dim == 3:
        return [make_reduction(piece, red.write, red.read, red.op, red.source)
                for piece in triangulate(red.body)]
    raise UnsupportedInputError(
        "bodies of dimension four or more must be simplices")


def run_pipeline(spec: ReductionSpec, args) -> dict:
    """The full pipeline; returns the report dictionary."""
    t_start = time.time()
    red = _prepare(spec, args)
    pieces = _maybe_triangulate(red)
    threshold = getattr(args, "fractal_threshold", 4)
    if len(pieces) == 1:
        decision, program, cost = simplify_max(pieces[0],
                                               fractal_threshold=threshold)
        plan_text = plan_to_text(decision)
    else:
        from .engine import simplify_union

        decisions, program, cost = simplify_union(red, pieces,
                                                  fractal_threshold=threshold)
        plan_text = "".join(plan_to_text(d) for d in decisions)
    raw_degree = growth_degree(red.body)
    bound = red.d - min(red.a, red.r)
    analysis = analyze_face(red)
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "input": {
            "name": spec.name,
            "text": pretty_print(spec),
            "dimensions": {"d": red.d, "a": red.a, "r": red.r},
            "operator": red.op.name,
        },
        "plan": plan_text,
        "degrees": {
            "raw": raw_degree,
            "simplified": cost.degree,
            "theorem_bound": bound,
        },
        "labelings": [
            {"signs": list(l.signs), "witness": list(l.witness),
             "admissible_without_inverse": l.admissible_without_inverse}
            for l in analysis.labelings
        ],
        "facet_classes": [
            {"facet": fc.facet.label(), "boundary": fc.boundary,
             "invariant": fc.invariant, "residual": fc.residual}
            for fc in analysis.classes
        ],
        "verification": None,
        "timing": {"total_seconds": None},
    }
    if getattr(args, "verify", False):
        report["verification"] = _verify(red, program, args)
    report["timing"]["total_seconds"] = round(time.time() - t_start, 3)
    _write_outputs(red, program, decision, report, args)
    return report


def _verify(red: Reduction, program: EquationProgram, args) -> dict:
    ns = getattr(args, "ns", None) or DEFAULT_VERIFY_NS
    seed = getattr(args, "seed", DEFAULT_SEED)
    matches = {}
    counts = {}
    for n in ns:
        inputs = input_grid(red, n, seed)
        oracle, raw_counter = oracle_evaluate(red, n, inputs)
        result, counter = interpret(program, n, inputs)
        ok = True
        for key, value in oracle["Y"].items():
            got = result[program.output].get(key)
            if got is EMPTY or got != value:
                ok = False
                break
        matches[str(n)] = ok
        counts[str(n)] = {"raw": raw_counter.ops,
                          "simplified": counter.ops,
                          "inverse": counter.inverse_ops}
        if not ok:
            break
    verification = {"seed": seed, "ns": list(ns), "matches": matches,
                    "op_counts": counts}
    if not all(matches.values()):
        raise VerificationMismatch(json.dumps(verification))
    return verification


def _write_outputs(red, program, decision, report, args) -> None:
    report_path = getattr(args, "report", None)
    if report_path:
        Path(report_path).write_text(json.dumps(report, indent=2) + "\n")
    emit_path = getattr(args, "emit_c", None)
    if emit_path:
        Path(emit_path).write_text(emit_c_like(program))
    csv_path = getattr(args, "csv", None)
    if csv_path and report.get("verification"):
        rows = ["n,ops_raw,ops_simplified"]
        for n, cts in report["verification"]["op_counts"].items():
            rows.append(f"{n},{cts['raw']},{cts['simplified']}")
        Path(csv_path).write_text("\n".join(rows) + "\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _cmd_simplify(args) -> int:
    spec = _load_spec(args.file)
    report = run_pipeline(spec, args)
    print(report["plan"], end="")
    print(f"degree: {report['degrees']['raw']} -> "
          f"{report['degrees']['simplified']} "
          f"(theorem bound {report['degrees']['theorem_bound']})")
    if report["verification"]:
        for n, ok in report["verification"]["matches"].items():
            print(f"verify N={n}: {'match' if ok else 'MISMATCH'}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    args.verify = True
    return _cmd_simplify(args)


def _cmd_lattice(args) -> int:
    spec = _load_spec(args.file)
    red = _prepare(spec, args)
    lattice = build_face_lattice(red.body)
    counts = lattice.face_counts()
    if args.dot:
        text = lattice_to_dot(lattice)
        if args.output:
            Path(args.output).write_text(text)
        else:
            print(text, end="")
    else:
        for dim in sorted(counts, reverse=True):
            faces = lattice.faces_by_dim[dim]
            print(f"dim {dim}: {len(faces)} faces: "
                  + " ".join(f.label() for f in faces))
    return EXIT_OK


def _cmd_labelings(args) -> int:
    spec = _load_spec(args.file)
    red = _prepare(spec, args)
    analysis = analyze_face(red)
    facets = [f.label() for f in analysis.facets]
    print("facets:", " ".join(facets))
    glyph = {1: "+", 0: "0", -1: "-"}
    for l in analysis.labelings:
        signs = " ".join(glyph[s] for s in l.signs)
        tag = "admissible" if l.admissible_without_inverse else ""
        print(f"[{signs}]  rho={list(l.witness)} {tag}")
    return EXIT_OK


def _cmd_emit_c(args) -> int:
    spec = _load_spec(args.file)
    red = _prepare(spec, args)
    _, program, _ = simplify_max(red, fractal_threshold=args.fractal_threshold)
    text = emit_c_like(program)
    if args.output:
        Path(args.output).write_text(text)
    else:
        print(text, end="")
    return EXIT_OK


def corpus_names() -> list[str]:
    base = resources.files("redsimp").joinpath("corpus")
    return sorted(p.name[:-4] for p in base.iterdir() if p.name.endswith(".red"))


def corpus_text(name: str) -> str:
    return resources.files("redsimp").joinpath("corpus", f"{name}.red").read_text()


def bundled_corpus() -> list[ReductionSpec]:
    """The motivating examples shipped with the package."""
    return [parse_spec(corpus_text(name)) for name in corpus_names()]


def _cmd_corpus(args) -> int:
    if args.name:
        print(corpus_text(args.name), end="")
    else:
        for name in corpus_names():
            print(name)
    return EXIT_OK


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="redsimp",
        description="Maximal simplification of polyhedral reductions")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_file=True):
        if with_file:
            p.add_argument("file", help="reduction description (.red)")
        p.add_argument("--fractal-threshold", type=int, default=4)
        p.add_argument("--product-invertible", action="store_true",
                       help="treat product as invertible (inputs nonzero)")

    p = sub.add_parser("simplify", help="run the optimization pipeline")
    add_common(p)
    p.add_argument("--verify", action="store_true")
    p.add_argument("--ns", type=_int_list, default=None,
                   help="comma-separated verification sizes")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--report", metavar="PATH")
    p.add_argument("--emit-c", metavar="PATH")
    p.add_argument("--csv", metavar="PATH")
    p.set_defaults(func=_cmd_simplify)

    p = sub.add_parser("verify", help="simplify and check against the oracle")
    add_common(p)
    p.add_argument("--ns", type=_int_list, default=None)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--report", metavar="PATH")
    p.add_argument("--csv", metavar="PATH")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("lattice", help="print the face lattice")
    add_common(p)
    p.add_argument("--dot", action="store_true")
    p.add_argument("--output", metavar="PATH")
    p.set_defaults(func=_cmd_lattice)

    p = sub.add_parser("labelings", help="enumerate reuse labelings")
    add_common(p)
    p.set_defaults(func=_cmd_labelings)

    p = sub.add_parser("emit-c", help="emit C-like code")
    add_common(p)
    p.add_argument("--output", metavar="PATH")
    p.set_defaults(func=_cmd_emit_c)

    p = sub.add_parser("corpus", help="list or print bundled examples")
    p.add_argument("name", nargs="?")
    p.set_defaults(func=_cmd_corpus)
    return parser


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def main(argv=None) -> int:
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except VerificationMismatch as e:
        print(f"verification mismatch: {e}", file=sys.stderr)
        return EXIT_MISMATCH
    except _UNSUPPORTED as e:
        print(f"unsupported input: {e}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (EngineError, InterpretationError, AssertionError) as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
