"""C-like code emission for equation programs: one loop nest per branch in
dependence order, integer floor/ceil division helpers for rational bounds,
and a recursive function per fractal leaf with the threshold base case, the
backward scan, the forward scan, and the self-recursive call."""

from __future__ import annotations

from fractions import Fraction as Q
from typing import Optional

from .numerics import ParamAffine
from .polyhedra import Constraint, Polyhedron
from .program import (
    Branch,
    Combine,
    EmptyValue,
    Equation,
    EquationProgram,
    FractalLeaf,
    InverseCombine,
    Reduce,
    Ref,
)
from .reduction import AffineMap

_PRELUDE = """\
#include <limits.h>
#define MAX2(a, b) ((a) > (b) ? (a) : (b))
#define MIN2(a, b) ((a) < (b) ? (a) : (b))
#define IDENT_MAX LONG_MIN
#define IDENT_MIN LONG_MAX
static long ifloor(long a, long b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
static long iceil(long a, long b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }
"""

_PARAMS = ["N"] + [f"T{k}" for k in range(1, 8)]


def _dim_names(d: int, prefix: str = "") -> list[str]:
    base = ["i", "j", "k", "l", "m", "q", "s", "u"]
    names = base[:d] if d <= len(base) else [f"x{t}" for t in range(d)]
    return [prefix + n for n in names]


def _affine_text(aff: ParamAffine) -> str:
    terms = []
    for t, c in enumerate(aff.coeffs):
        if c == 0:
            continue
        name = _PARAMS[t]
        terms.append(_term(c, name))
    if aff.const != 0 or not terms:
        terms.append(_frac(aff.const))
    return _join_terms(terms)


def _term(c: Q, name: str) -> str:
    c = Q(c)
    if c == 1:
        return f"+{name}"
    if c == -1:
        return f"-{name}"
    if c.denominator == 1:
        return f"{'+' if c > 0 else '-'}{abs(c)}*{name}"
    return f"{'+' if c > 0 else '-'}({abs(c.numerator)}*{name})/{c.denominator}"


def _frac(c: Q) -> str:
    c = Q(c)
    return f"+{c}" if c >= 0 else f"{c}"


def _join_terms(terms: list[str]) -> str:
    out = "".join(terms)
    return out[1:] if out.startswith("+") else out


def _linear_text(coeffs, names, aff: ParamAffine) -> str:
    terms = []
    for c, n in zip(coeffs, names):
        if c:
            terms.append(_term(Q(c), n))
    for t, c in enumerate(aff.coeffs):
        if c:
            terms.append(_term(c, _PARAMS[t]))
    if aff.const != 0 or not terms:
        terms.append(_frac(aff.const))
    return _join_terms(terms)


def _index_text(m: AffineMap, names: list[str]) -> str:
    parts = []
    for row, aff in zip(m.matrix, m.affines):
        parts.append(f"[{_linear_text(row, names, aff)}]")
    return "".join(parts)


def _bounds_for(poly: Polyhedron, names: list[str]):
    """Per-dimension (lowers, uppers) as expression strings over the earlier
    loop variables, via Fourier-Motzkin elimination of the later ones."""
    from .polyhedra import _fm_eliminate, _row_from_constraint

    rows = []
    for c in poly.constraints:
        rows.extend(_row_from_constraint(c))
    systems = [rows]
    current = rows
    for var in range(poly.dim - 1, 0, -1):
        current = _fm_eliminate(current, var)
        systems.append(current)
    out = []
    for t in range(poly.dim):
        sys_rows = systems[poly.dim - 1 - t]
        lowers, uppers = [], []
        for coeffs, params, const, _ in sys_rows:
            c = coeffs[t]
            if c == 0:
                continue
            rest = _linear_text(
                [-x for x in coeffs[:t]], names[:t],
                ParamAffine(tuple(-Q(x) for x in params), Q(-const)))
            if c > 0:
                lowers.append(rest if c == 1 else f"iceil({rest}, {c})")
            else:
                uppers.append(rest if c == -1 else f"ifloor({rest}, {-c})")
        out.append((lowers or ["0 /* unbounded */"], uppers or ["0 /* unbounded */"]))
    return out


def _fold(exprs: list[str], fn: str) -> str:
    out = exprs[0]
    for e in exprs[1:]:
        out = f"{fn}({out}, {e})"
    return out


def _op_assign(op_name: str, target: str, value: str) -> str:
    if op_name == "sum":
        return f"{target} += {value};"
    if op_name == "product":
        return f"{target} *= {value};"
    if op_name == "max":
        return f"{target} = MAX2({target}, {value});"
    return f"{target} = MIN2({target}, {value});"


def _op_identity(op_name: str) -> str:
    return {"sum": "0", "product": "1", "max": "IDENT_MAX",
            "min": "IDENT_MIN"}[op_name]


class _Emitter:
    def __init__(self) -> None:
        self.lines: list[str] = []
        self.indent = 0
        self.fractal_count = 0
        self.fractal_defs: list[str] = []
        self.temp = 0

    def put(self, text: str = "") -> None:
        self.lines.append("    " * self.indent + text if text else "")

    def fresh_temp(self) -> str:
        self.temp += 1
        return f"acc{self.temp}"


def emit_c_like(program: EquationProgram) -> str:
    """Deterministic, compilable C-like rendering of the program; the
    interpreter remains the normative semantics."""
    em = _Emitter()
    main_lines: list[str] = []
    for eq in program.equations:
        _emit_equation(em, eq)
    body = em.lines
    out = [_PRELUDE]
    out.extend(em.fractal_defs)
    out.append("void compute(long N) {")
    out.extend("    " + ln if ln else "" for ln in body)
    out.append("}")
    return "\n".join(out) + "\n"


def _emit_equation(em: _Emitter, eq: Equation) -> None:
    names = _dim_names(eq.base.dim)
    em.put(f"/* {eq.var} over {eq.base} */")
    for branch in eq.branches:
        if isinstance(branch.expr, EmptyValue):
            continue
        if isinstance(branch.expr, FractalLeaf):
            _emit_fractal_call(em, eq, branch)
            continue
        _emit_loop_nest(em, eq, branch, names)
    em.put()


def _emit_loop_nest(em: _Emitter, eq: Equation, branch: Branch,
                    names: list[str]) -> None:
    bounds = _bounds_for(branch.guard, names)
    opened = 0
    for t, (lowers, uppers) in enumerate(bounds):
        lo = _fold(lowers, "MAX2")
        hi = _fold(uppers, "MIN2")
        descending = (eq.order_vector is not None and t < len(eq.order_vector)
                      and eq.order_vector[t] < 0)
        v = names[t]
        if descending:
            em.put(f"for (long {v} = {hi}; {v} >= {lo}; {v}--) {{")
        else:
            em.put(f"for (long {v} = {lo}; {v} <= {hi}; {v}++) {{")
        em.indent += 1
        opened += 1
    value = _emit_expr(em, branch.expr, names)
    target = f"{eq.var}{_index_text(eq.write, names)}"
    em.put(f"{target} = {value};")
    for _ in range(opened):
        em.indent -= 1
        em.put("}")


def _emit_expr(em: _Emitter, expr, names: list[str]) -> str:
    if isinstance(expr, Ref):
        return f"{expr.var}{_index_text(expr.index_map, names)}"
    if isinstance(expr, Reduce):
        return _emit_reduce(em, expr, names)
    if isinstance(expr, Combine):
        left = _emit_expr(em, expr.left, names)
        right = _emit_expr(em, expr.right, names)
        return _combine_text(expr.op.name, left, right)
    if isinstance(expr, InverseCombine):
        left = _emit_expr(em, expr.left, names)
        right = _emit_expr(em, expr.right, names)
        return f"({left}) {'-' if expr.op.name == 'sum' else '/'} ({right})"
    if isinstance(expr, EmptyValue):
        return _op_identity("sum")
    raise ValueError(f"cannot emit {type(expr).__name__}")


def _combine_text(op_name: str, left: str, right: str) -> str:
    if op_name == "sum":
        return f"({left}) + ({right})"
    if op_name == "product":
        return f"({left}) * ({right})"
    fn = "MAX2" if op_name == "max" else "MIN2"
    return f"{fn}({left}, {right})"


def _emit_reduce(em: _Emitter, node: Reduce, names: list[str]) -> str:
    """Inner loop nest folding the slice {y in body : write(y) = anchor(q)}."""
    acc = em.fresh_temp()
    inner_names = _dim_names(node.body.dim, prefix="r")
    em.put(f"long {acc} = {_op_identity(node.op.name)};")
    # Slice constraints: body plus write(y) == current answer point.
    slice_cons = list(node.body.constraints)
    anchor_names = names
    extra_eqs = []
    for row, aff in zip(node.write.matrix, node.write.affines):
        lhs = _linear_text(row, inner_names, aff)
        if node.anchor is None:
            rhs_parts = []
            rhs = anchor_names[len(extra_eqs)] if len(extra_eqs) < len(anchor_names) else "0"
        else:
            arow = node.anchor.matrix[len(extra_eqs)]
            aaff = node.anchor.affines[len(extra_eqs)]
            rhs = _linear_text(arow, anchor_names, aaff)
        extra_eqs.append((lhs, rhs))
    bounds = _bounds_for(node.body, inner_names)
    opened = 0
    for t, (lowers, uppers) in enumerate(bounds):
        v = inner_names[t]
        em.put(f"for (long {v} = {_fold(lowers, 'MAX2')}; {v} <= {_fold(uppers, 'MIN2')}; {v}++) {{")
        em.indent += 1
        opened += 1
    conds = " && ".join(f"({l}) == ({r})" for l, r in extra_eqs)
    if conds:
        em.put(f"if ({conds}) {{")
        em.indent += 1
        opened += 1
    em.put(_op_assign(node.op.name, acc,
                      f"{node.source}{_index_text(node.read, inner_names)}"))
    for _ in range(opened):
        em.indent -= 1
        em.put("}")
    return acc


def _emit_fractal_call(em: _Emitter, eq: Equation, branch: Branch) -> None:
    leaf: FractalLeaf = branch.expr  # type: ignore[assignment]
    node = leaf.node
    fid = em.fractal_count
    em.fractal_count += 1
    em.fractal_defs.append(_fractal_function(node, fid, eq.var))
    names = _dim_names(branch.guard.dim)
    bounds = _bounds_for(branch.guard, names)
    lo = _fold(bounds[0][0], "MAX2")
    hi = _fold(bounds[0][1], "MIN2")
    em.put(f"fractal_{fid}({eq.var}, {node.source}, {lo}, {hi});  "
           f"/* recursive fractal over {branch.guard} */")


def _fractal_function(node, fid: int, out_var: str) -> str:
    """Fig.-9-shaped recursive function: threshold base case, a backward scan
    and a forward scan over the peeled strip, then recursion on the scaled
    remainder.  Slice bounds come from the triangle's own constraints."""
    axis = node.cut_axis
    names = _dim_names(2)
    if axis == 1:
        names = [names[1], names[0]]
    v, w = names[axis], names[1 - axis]
    read = f"X{_index_text(node.read, names)}"
    write = f"{out_var}{_index_text(node.write, names)}"
    op = node.op.name
    scale_num, scale_den = node.scale.numerator, node.scale.denominator
    other = 1 - axis

    def slice_bounds(var_name: str) -> tuple[str, str]:
        lowers, uppers = [], []
        for c in node.triangle.constraints:
            cw = c.coeffs[other]
            if cw == 0:
                continue
            rest = _linear_text(
                [-c.coeffs[axis]], [var_name],
                ParamAffine(tuple(-Q(x) for x in c.param_coeffs), Q(-c.const)))
            if cw > 0:
                lowers.append(rest if cw == 1 else f"iceil({rest}, {cw})")
            else:
                uppers.append(rest if cw == -1 else f"ifloor({rest}, {-cw})")
        return (_fold(lowers or ["L"], "MAX2"), _fold(uppers or ["U"], "MIN2"))

    lo_expr, hi_expr = slice_bounds(v)
    near_sign = (node.corner[other] - node.v1[other]).sign_for_large()
    near_is_low = near_sign is None or near_sign < 0
    lo_cut, hi_cut = slice_bounds("cut")
    ident = _op_identity(op)
    lines = [
        f"static void fractal_{fid}(long *{out_var}, long *X, long L, long U) {{",
        f"    if (U - L + 1 <= {node.threshold}) {{",
        "        /* base case: direct reduction per answer */",
        f"        for (long {v} = L; {v} <= U; {v}++) {{",
        f"            long acc = {ident};",
        f"            for (long {w} = {lo_expr}; {w} <= {hi_expr}; {w}++)",
        f"                {_op_assign(op, 'acc', read)}",
        f"            {_op_assign(op, write if '[' in write else write, 'acc')}",
        "        }",
        "        return;",
        "    }",
        f"    long cut = L + ifloor((U - L) * {scale_num}, {scale_den});",
        f"    long wcut = {lo_cut if near_is_low else hi_cut};",
        "    {",
        f"        long acc = {ident};",
        f"        for (long {v} = U; {v} > cut; {v}--) {{  /* backward scan */",
        f"            for (long {w} = {lo_expr}; {w} <= MIN2({hi_expr}, wcut - 1); {w}++)",
        f"                {_op_assign(op, 'acc', read)}",
        f"            {_op_assign(op, write, 'acc')}",
        "        }",
        "    }",
        "    {",
        f"        long acc = {ident};",
        f"        for (long {v} = cut + 1; {v} <= U; {v}++) {{  /* forward scan */",
        f"            for (long {w} = MAX2({lo_expr}, wcut); {w} <= {hi_expr}; {w}++)",
        f"                {_op_assign(op, 'acc', read)}",
        f"            {_op_assign(op, write, 'acc')}",
        "        }",
        "    }",
        f"    fractal_{fid}({out_var}, X, L, cut);  /* recurse on the scaled copy */",
        "}",
        "",
    ]
    return "\n".join(lines)
