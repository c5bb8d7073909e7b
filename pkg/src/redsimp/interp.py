"""Reference interpreter with operation counting, the brute-force oracle,
reproducible input generation, and complexity-degree estimation.

The interpreter is the normative semantics for equation programs.  Values are
exact (ints, rationals for inverted products); an EMPTY sentinel marks "no
contribution yet" so operator identities are never materialized, and fractal
recursion runs on an explicit worklist of intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction as Q
from typing import Iterable, Optional, Sequence

from .polyhedra import Polyhedron, integer_points
from .program import (
    Branch,
    Combine,
    Equation,
    EquationProgram,
    Expr,
    FractalLeaf,
    InverseCombine,
    Reduce,
    Ref,
)
from .reduction import AffineMap, Operator, Reduction, projection_image


class InterpretationError(RuntimeError):
    pass


class _Empty:
    def __repr__(self):
        return "EMPTY"


EMPTY = _Empty()

ValueGrid = dict[str, dict[tuple, object]]


@dataclass
class OpCounter:
    ops: int = 0
    inverse_ops: int = 0


def apply_op(op: Operator, a, b):
    if op.name == "sum":
        return a + b
    if op.name == "product":
        return a * b
    if op.name == "max":
        return a if a >= b else b
    if op.name == "min":
        return a if a <= b else b
    raise InterpretationError(f"unknown operator {op.name}")


def apply_inverse(op: Operator, a, b):
    if not op.has_inverse:
        raise InterpretationError(f"operator {op.name} admits no inverse")
    if op.name == "sum":
        return a - b
    if op.name == "product":
        if b == 0:
            raise InterpretationError("inverse of product hit a zero value")
        return Q(a) / Q(b)
    raise InterpretationError(f"unknown invertible operator {op.name}")


def _combine(op: Operator, acc, val, counter: OpCounter):
    if val is EMPTY:
        return acc
    if acc is EMPTY:
        return val
    counter.ops += 1
    return apply_op(op, acc, val)


def _uncombine(op: Operator, acc, val, counter: OpCounter):
    if val is EMPTY:
        return acc
    if acc is EMPTY:
        raise InterpretationError("inverse application to an empty accumulator")
    counter.inverse_ops += 1
    return apply_inverse(op, acc, val)


# ---------------------------------------------------------------------------
# Reproducible inputs
# ---------------------------------------------------------------------------

def lcg_stream(seed: int):
    """Knuth-style 64-bit linear congruential generator."""
    state = seed & 0xFFFFFFFFFFFFFFFF
    while True:
        state = (6364136223846793005 * state + 1442695040888963407) & 0xFFFFFFFFFFFFFFFF
        yield state >> 33


def input_grid(r: Reduction, n: int, seed: int = 20240521,
               span: int = 100) -> ValueGrid:
    """Pseudorandom integer inputs covering the read image of the body."""
    env = [n] + [0] * (r.body.nparams - 1)
    footprint = projection_image(r.body, r.read)
    gen = lcg_stream(seed)
    values = {}
    for idx in integer_points(footprint, env):
        values[idx] = next(gen) % span
    for z in integer_points(r.body, env):
        idx = r.read.apply_point(z, env)
        if idx not in values:
            values[idx] = next(gen) % span
    return {r.source: values}


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------

def oracle_evaluate(r: Reduction, n: int,
                    inputs: ValueGrid) -> tuple[ValueGrid, OpCounter]:
    """Direct evaluation of the defining form: fold the operator over every
    body point's input value, grouped by answer."""
    env = [n] + [0] * (r.body.nparams - 1)
    if n < r.body.param_lower_bound:
        raise ValueError("parameter below its declared lower bound")
    source = inputs[r.source]
    counter = OpCounter()
    answers: dict[tuple, object] = {}
    for z in integer_points(r.body, env):
        idx = r.read.apply_point(z, env)
        if idx not in source:
            raise InterpretationError(f"missing input value at {idx}")
        val = source[idx]
        p = r.write.apply_point(z, env)
        if p in answers:
            counter.ops += 1
            answers[p] = apply_op(r.op, answers[p], val)
        else:
            answers[p] = val
    return {"Y": answers}, counter


def program_of_reduction(r: Reduction, var: str = "Y") -> EquationProgram:
    """The identity program: one Reduce over the whole body (the raw form)."""
    from .program import Branch, Equation
    from .reduction import identity_map

    answers = r.answers()
    expr = Reduce(r.op, r.body, r.write, r.read, r.source)
    eq = Equation(var, answers, identity_map(answers.dim, r.body.nparams),
                  (Branch(answers, expr),))
    return EquationProgram((eq,), output=var, inputs=(r.source,))


# ---------------------------------------------------------------------------
# Interpreter
# ---------------------------------------------------------------------------

def interpret(program: EquationProgram, n: int,
              inputs: ValueGrid) -> tuple[ValueGrid, OpCounter]:
    """Evaluate equations in dependence order, recurrences in guard-respecting
    index order; fractal leaves run on an explicit interval worklist."""
    counter = OpCounter()
    grid: ValueGrid = {name: dict(vals) for name, vals in inputs.items()}
    for eq in program.equations:
        target = grid.setdefault(eq.var, {})
        env = [n] + [0] * (eq.base.nparams - 1)
        for branch in eq.branches:
            if isinstance(branch.expr, FractalLeaf):
                _run_fractal_branch(branch, eq, n, grid, target, counter)
                continue
            tables = _batch_reduces(branch, eq, env, grid, counter)
            pts = list(integer_points(branch.guard, env))
            if eq.order_vector is not None:
                ov = eq.order_vector
                pts.sort(key=lambda q: (sum(a * b for a, b in zip(ov, q)), q))
            for q in pts:
                val = _eval(branch.expr, q, env, grid, tables, counter)
                target[eq.write.apply_point(q, env)] = val
    return grid, counter


def _eval(expr: Expr, q, env, grid: ValueGrid, tables, counter: OpCounter):
    if isinstance(expr, Ref):
        idx = expr.index_map.apply_point(q, env)
        try:
            return grid[expr.var][idx]
        except KeyError:
            raise InterpretationError(
                f"read of unwritten value {expr.var}{list(idx)}") from None
    if isinstance(expr, Reduce):
        anchor = expr.anchor.apply_point(q, env) if expr.anchor else tuple(q)
        return tables[id(expr)].get(anchor, EMPTY)
    if isinstance(expr, Combine):
        left = _eval(expr.left, q, env, grid, tables, counter)
        right = _eval(expr.right, q, env, grid, tables, counter)
        return _combine(expr.op, left, right, counter)
    if isinstance(expr, InverseCombine):
        left = _eval(expr.left, q, env, grid, tables, counter)
        right = _eval(expr.right, q, env, grid, tables, counter)
        return _uncombine(expr.op, left, right, counter)
    raise InterpretationError(f"cannot evaluate {type(expr).__name__} here")


def _batch_reduces(branch: Branch, eq: Equation, env, grid: ValueGrid,
                   counter: OpCounter):
    """Fold each Reduce node over its body restricted to the answers this
    branch can touch, one pass per node."""
    from .polyhedra import preimage

    tables = {}
    for node in _reduce_nodes(branch.expr):
        needed = branch.guard
        if node.anchor is not None:
            needed = projection_image(branch.guard, node.anchor)
        body = node.body.intersect(
            preimage(needed, node.write.matrix, node.write.affines, node.body.dim))
        table: dict[tuple, object] = {}
        source = grid.get(node.source)
        if source is None:
            raise InterpretationError(f"unknown source variable {node.source}")
        for z in integer_points(body, env):
            idx = node.read.apply_point(z, env)
            if idx not in source:
                raise InterpretationError(
                    f"missing input value {node.source}{list(idx)}")
            val = source[idx]
            if val is EMPTY:
                continue
            p = node.write.apply_point(z, env)
            if p in table:
                counter.ops += 1
                table[p] = apply_op(node.op, table[p], val)
            else:
                table[p] = val
        tables[id(node)] = table
    return tables


def _reduce_nodes(expr: Expr):
    if isinstance(expr, Reduce):
        yield expr
    elif isinstance(expr, (Combine, InverseCombine)):
        yield from _reduce_nodes(expr.left)
        yield from _reduce_nodes(expr.right)


# ---------------------------------------------------------------------------
# Fractal execution
# ---------------------------------------------------------------------------

def _concrete_rows(poly: Polyhedron, env) -> list[tuple[tuple[int, ...], int, bool]]:
    rows = []
    for c in poly.constraints:
        const = c.const + sum(a * v for a, v in zip(c.param_coeffs, env))
        rows.append((c.coeffs, const, c.is_eq))
    return rows


def _axis_interval(rows, axis: int) -> Optional[tuple[int, int]]:
    lo = None
    hi = None
    other = 1 - axis
    # Rational 2D elimination of the other axis.
    expand = []
    for coeffs, const, is_eq in rows:
        expand.append((coeffs, const))
        if is_eq:
            expand.append((tuple(-x for x in coeffs), -const))
    pos = [r for r in expand if r[0][other] > 0]
    neg = [r for r in expand if r[0][other] < 0]
    zero = [r for r in expand if r[0][other] == 0]
    projected = list(zero)
    for p in pos:
        for q in neg:
            a, b = p[0][other], -q[0][other]
            projected.append((tuple(b * x + a * y for x, y in zip(p[0], q[0])),
                              b * p[1] + a * q[1]))
    for coeffs, const in projected:
        c = coeffs[axis]
        if c == 0:
            if const < 0:
                return None
        elif c > 0:
            b = math.ceil(Q(-const, c))
            lo = b if lo is None or b > lo else lo
        else:
            b = math.floor(Q(-const, c))
            hi = b if hi is None or b < hi else hi
    if lo is None or hi is None or lo > hi:
        return None
    return lo, hi


def _slice_interval(rows, axis: int, value, rational: bool = False):
    """Bounds of the other axis over the (possibly rational) slice at
    x_axis = value."""
    other = 1 - axis
    lo = None
    hi = None
    for coeffs, const, is_eq in rows:
        variants = [(coeffs, const)]
        if is_eq:
            variants.append((tuple(-x for x in coeffs), -const))
        for cf, ct in variants:
            c = cf[other]
            rest = Q(ct) + Q(cf[axis]) * Q(value)
            if c == 0:
                if rest < 0:
                    return None
            elif c > 0:
                b = Q(-rest, c)
                if not rational:
                    b = math.ceil(b)
                lo = b if lo is None or b > lo else lo
            else:
                b = Q(-rest) / c
                if not rational:
                    b = math.floor(b)
                hi = b if hi is None or b < hi else hi
    if lo is None or hi is None or lo > hi:
        return None
    return lo, hi


def _run_fractal_branch(branch: Branch, eq: Equation, n: int, grid: ValueGrid,
                        target: dict, counter: OpCounter) -> None:
    leaf: FractalLeaf = branch.expr  # type: ignore[assignment]
    node = leaf.node
    nparams = node.triangle.nparams
    instances: Iterable[tuple] = [()]
    if nparams > 1:
        proj = getattr(leaf, "instance_proj", None) or getattr(
            node, "instance_proj", None)
        if proj is None:
            raise InterpretationError("fractal node with unbound instance parameters")
        inst_poly = projection_image(branch.guard, proj)
        instances = sorted(set(integer_points(inst_poly, [n] + [0] * (eq.base.nparams - 1))))
    for inst in instances:
        env = [n] + [int(v) for v in inst]
        if len(env) != nparams:
            raise InterpretationError("instance arity mismatch in fractal node")
        _run_fractal_instance(node, env, grid, target, counter)


def _run_fractal_instance(node, env, grid: ValueGrid, target: dict,
                          counter: OpCounter) -> None:
    tri_rows = _concrete_rows(node.triangle, env)
    region_rows = _concrete_rows(node.region, env)
    axis = node.cut_axis
    other = 1 - axis
    interval = _axis_interval(region_rows, axis)
    if interval is None:
        return
    lo, hi = interval
    source = grid.get(node.source)
    if source is None:
        raise InterpretationError(f"unknown source variable {node.source}")

    def read_at(pt):
        idx = node.read.apply_point(pt, env)
        if idx not in source:
            raise InterpretationError(
                f"missing input value {node.source}{list(idx)}")
        return source[idx]

    def accumulate(pt_repr, val):
        if val is EMPTY:
            return
        ans = node.write.apply_point(pt_repr, env)
        if ans in target and target[ans] is not EMPTY:
            counter.ops += 1
            target[ans] = apply_op(node.op, target[ans], val)
        else:
            target[ans] = val

    corner_val = node.corner[axis].evaluate(env)
    corner_other = node.corner[other].evaluate(env)
    residual_edges = [r for r in tri_rows
                      if not r[2] and r[0][0] != 0 and r[0][1] != 0]

    def base_case(a, b):
        for x in range(a, b + 1):
            rng = _slice_interval(tri_rows, axis, x)
            if rng is None:
                continue
            acc = EMPTY
            pts = []
            for y in range(rng[0], rng[1] + 1):
                pt = (x, y) if axis == 0 else (y, x)
                if all((sum(c * v for c, v in zip(cf, pt)) + ct) == 0 if is_eq
                       else (sum(c * v for c, v in zip(cf, pt)) + ct) >= 0
                       for cf, ct, is_eq in tri_rows):
                    pts.append(pt)
            if not pts:
                continue
            if axis == 0:
                acc = EMPTY
                for pt in pts:
                    acc = _combine(node.op, acc, read_at(pt), counter)
                accumulate(pts[0], acc)
            else:
                # recursion along the accumulation axis: fold per answer
                per_ans: dict[tuple, object] = {}
                for pt in pts:
                    ans = node.write.apply_point(pt, env)
                    if ans in per_ans:
                        counter.ops += 1
                        per_ans[ans] = apply_op(node.op, per_ans[ans], read_at(pt))
                    else:
                        per_ans[ans] = read_at(pt)
                for ans, val in per_ans.items():
                    if ans in target and target[ans] is not EMPTY:
                        counter.ops += 1
                        target[ans] = apply_op(node.op, target[ans], val)
                    else:
                        target[ans] = val

    corner_low = node.corner_low
    while True:
        if lo > hi:
            break
        if hi - lo + 1 <= max(node.threshold, 2):
            base_case(lo, hi)
            break
        far = hi if corner_low else lo
        slice_rng = _slice_interval(tri_rows, axis, far, rational=True)
        if slice_rng is None:
            base_case(lo, hi)
            break
        olo, ohi = slice_rng
        if corner_other <= olo:
            j_star = olo
        elif corner_other >= ohi:
            j_star = ohi
        else:
            base_case(lo, hi)
            break
        candidates = []
        for cf, ct, _ in residual_edges:
            if cf[axis] == 0:
                continue
            # cf[axis]*x + cf[other]*j_star + ct (+param part already in ct) = 0
            x = Q(-(Q(ct) + Q(cf[other]) * j_star), cf[axis])
            candidates.append(x)
        if corner_low:
            valid = [x for x in candidates if x < far]
            cut_val = max(valid) if valid else None
        else:
            valid = [x for x in candidates if x > far]
            cut_val = min(valid) if valid else None
        if cut_val is None:
            base_case(lo, hi)
            break
        if corner_low:
            new_hi = math.ceil(cut_val) - 1
            if new_hi >= hi:
                new_hi = hi - 1
            if new_hi < lo - 1:
                new_hi = lo - 1
            scan_a, scan_b = new_hi + 1, hi
        else:
            new_lo = math.floor(cut_val) + 1
            if new_lo <= lo:
                new_lo = lo + 1
            if new_lo > hi + 1:
                new_lo = hi + 1
            scan_a, scan_b = lo, new_lo - 1
        jc = math.ceil(j_star)
        for side in (-1, +1):
            _scan_piece(node, tri_rows, axis, scan_a, scan_b, jc, side,
                        read_at, accumulate, counter, env)
        if corner_low:
            hi = new_hi
        else:
            lo = new_lo


def _scan_piece(node, tri_rows, axis, a, b, jc, side, read_at, accumulate,
                counter, env) -> None:
    """Scan one half of the peeled strip along the reuse axis (x0), reusing
    the running fold whenever consecutive slices nest."""
    if a > b:
        return
    other = 1 - axis
    rows = list(tri_rows)
    rows.extend(_interval_rows(axis, a, b))
    if side < 0:
        rows.append(_bound_row(other, upper=jc - 1))
    else:
        rows.append(_bound_row(other, lower=jc))
    rng0 = _axis_interval(rows, 0)
    if rng0 is None:
        return
    run = []
    for x0 in range(rng0[0], rng0[1] + 1):
        rr = _slice_interval(rows, 0, x0)
        if rr is not None:
            run.append((x0, rr))
    if not run:
        return
    if (run[0][1][1] - run[0][1][0]) > (run[-1][1][1] - run[-1][1][0]):
        run.reverse()
    acc = EMPTY
    prev = None
    for x0, (ylo, yhi) in run:
        if prev is not None and ylo <= prev[0] and yhi >= prev[1]:
            for y in range(ylo, prev[0]):
                acc = _combine(node.op, acc, read_at((x0, y)), counter)
            for y in range(prev[1] + 1, yhi + 1):
                acc = _combine(node.op, acc, read_at((x0, y)), counter)
        else:
            acc = EMPTY
            for y in range(ylo, yhi + 1):
                acc = _combine(node.op, acc, read_at((x0, y)), counter)
        prev = (ylo, yhi)
        accumulate((x0, ylo), acc)


def _interval_rows(axis: int, a: int, b: int):
    low = [0, 0]
    low[axis] = 1
    high = [0, 0]
    high[axis] = -1
    return [(tuple(low), -a, False), (tuple(high), b, False)]


def _bound_row(axis: int, lower: Optional[int] = None,
               upper: Optional[int] = None):
    coeffs = [0, 0]
    if lower is not None:
        coeffs[axis] = 1
        return (tuple(coeffs), -lower, False)
    coeffs[axis] = -1
    return (tuple(coeffs), upper, False)


# ---------------------------------------------------------------------------
# Degree estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DegreeFit:
    slope: float
    residual: float


def fit_log_slope(ns: Sequence[int], counts: Sequence[int]) -> DegreeFit:
    if len(ns) < 3:
        raise ValueError("need at least three sample sizes")
    if any(c <= 0 for c in counts):
        raise ValueError("zero operation counts cannot be fit")
    xs = [math.log(n) for n in ns]
    ys = [math.log(c) for c in counts]
    k = len(xs)
    mx = sum(xs) / k
    my = sum(ys) / k
    sxx = sum((x - mx) ** 2 for x in xs)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    slope = sxy / sxx
    resid = sum((y - (my + slope * (x - mx))) ** 2 for x, y in zip(xs, ys))
    return DegreeFit(slope, resid)


def estimate_degree(program: EquationProgram, reduction: Reduction,
                    ns: Sequence[int], seed: int = 20240521) -> DegreeFit:
    """Least-squares slope of log(op count) against log(n)."""
    counts = []
    for n in ns:
        inputs = input_grid(reduction, n, seed)
        _, counter = interpret(program, n, inputs)
        counts.append(counter.ops + counter.inverse_ops)
    return fit_log_slope(ns, counts)
