"""The piecewise equational program AST produced by the transformations:
branched equations whose expressions combine recurrence references, residual
reductions, inverse combinations, and recursive fractal leaves, plus the
well-formedness diagnostics over guards and recurrences."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .numerics import IntVec
from .polyhedra import Polyhedron, set_difference
from .reduction import AffineMap, Operator


@dataclass(frozen=True)
class Ref:
    """A single access source[index_map(q)] at the evaluation point q."""

    var: str
    index_map: AffineMap


@dataclass(frozen=True)
class Reduce:
    """Fold of op over {y in body : write(y) = anchor(q)} of source[read(y)].

    `anchor` maps the enclosing equation's iteration point to the answer
    index being assembled; None means the identity.
    """

    op: Operator
    body: Polyhedron
    write: AffineMap
    read: AffineMap
    source: str
    anchor: Optional[AffineMap] = None


@dataclass(frozen=True)
class Combine:
    op: Operator
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class InverseCombine:
    """left combined with the inverse of right; illegal for operators
    without an inverse."""

    op: Operator
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class FractalLeaf:
    """Recursive fractal computation covering the whole guard of its branch;
    the node payload lives in the transforms module.  `instance_proj`, when
    set, maps a guard point to the values of the node's instance parameters."""

    node: object
    instance_proj: Optional[AffineMap] = None


@dataclass(frozen=True)
class EmptyValue:
    """Explicitly no contribution (identity); fills totalized helper
    variables outside their defined region."""


Expr = Union[Ref, Reduce, Combine, InverseCombine, FractalLeaf, EmptyValue]


@dataclass(frozen=True)
class Branch:
    guard: Polyhedron
    expr: Expr


@dataclass(frozen=True)
class Equation:
    """var[write(q)] = branch expression, for q over the branch guards.

    `order_vector`, when present, fixes the iteration order (ascending dot
    product) so recurrences read already-written values.
    """

    var: str
    base: Polyhedron
    write: AffineMap
    branches: tuple[Branch, ...]
    order_vector: Optional[IntVec] = None


@dataclass(frozen=True)
class EquationProgram:
    equations: tuple[Equation, ...]
    output: str
    inputs: tuple[str, ...] = ("X",)

    def equation_for(self, var: str) -> list[Equation]:
        return [e for e in self.equations if e.var == var]

    def all_exprs(self):
        for eq in self.equations:
            for br in eq.branches:
                yield from _walk(br.expr)


def _walk(expr: Expr):
    yield expr
    if isinstance(expr, (Combine, InverseCombine)):
        yield from _walk(expr.left)
        yield from _walk(expr.right)


def substitute_expr(expr: Expr, old: Expr, new: Expr) -> Expr:
    if expr is old:
        return new
    if isinstance(expr, Combine):
        return Combine(expr.op, substitute_expr(expr.left, old, new),
                       substitute_expr(expr.right, old, new))
    if isinstance(expr, InverseCombine):
        return InverseCombine(expr.op, substitute_expr(expr.left, old, new),
                              substitute_expr(expr.right, old, new))
    return expr


@dataclass
class Diagnostics:
    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues


def evaluate_branch_wellformedness(program: EquationProgram) -> Diagnostics:
    """Check guard disjointness and coverage per equation, acyclicity of the
    variable dependence order, and non-trivial recurrence steps."""
    diag = Diagnostics()
    defined: set[str] = set(program.inputs)
    for eq in program.equations:
        for i, b1 in enumerate(eq.branches):
            for b2 in eq.branches[i + 1:]:
                inter = b1.guard.intersect(b2.guard)
                if not inter.is_empty():
                    diag.issues.append(
                        f"{eq.var}: guards overlap on {inter}")
        leftover = [piece for piece in
                    _coverage_gap(eq.base, [b.guard for b in eq.branches])]
        for piece in leftover:
            diag.issues.append(f"{eq.var}: guards do not cover {piece}")
        for br in eq.branches:
            for node in _walk(br.expr):
                if isinstance(node, Ref):
                    if node.var == eq.var:
                        if eq.order_vector is None:
                            diag.issues.append(
                                f"{eq.var}: recurrence without an iteration order")
                    elif node.var not in defined:
                        diag.issues.append(
                            f"{eq.var}: reads {node.var} before it is defined")
                elif isinstance(node, Reduce):
                    if node.source != eq.var and node.source not in defined:
                        diag.issues.append(
                            f"{eq.var}: reduces over undefined {node.source}")
        defined.add(eq.var)
    return diag


def _coverage_gap(base: Polyhedron, guards: list[Polyhedron]):
    pieces = [base]
    for g in guards:
        nxt = []
        for piece in pieces:
            nxt.extend(set_difference(piece, g).pieces)
        pieces = nxt
    return [p for p in pieces if not p.is_empty()]
