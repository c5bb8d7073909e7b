"""The optimization engine: a dynamic program over candidate single-step
simplifications, reduction decompositions, and simplex-preserving splits,
with memoization, a lexicographic cost model, and termination guards.

The search phase decides a plan on analysis twins whose instance parameters
are pinned to generic values; the realize phase replays the chosen
transformations on the unpinned reductions to produce the final equation
program.  All structural data a replay needs (witness vectors, anchor
constraints, subspaces) is parameter-free or mapped back to the unpinned twin
when the plan is built.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction as Q
from typing import Optional, Sequence, Union

from .classify import Labeling, admissible_labelings, analyze_face
from .numerics import (
    IntVec,
    LinearSubspace,
    ParamAffine,
    _int_matrix_inverse,
    primitive_signed,
    solve,
    unimodular_with_columns,
)
from .polyhedra import (
    Constraint,
    Polyhedron,
    UnsupportedInputError,
    build_face_lattice,
    constraint,
    growth_degree,
    is_simplex,
    polyhedron,
    split_by_hyperplane,
)
from .program import (
    Branch,
    Combine,
    EmptyValue,
    Equation,
    EquationProgram,
    Expr,
    FractalLeaf,
    InverseCombine,
    Reduce,
    Ref,
)
from .reduction import (
    AffineMap,
    IndependentFamily,
    Reduction,
    affine_map,
    drop_equalities,
    factor_independent,
    identity_map,
    make_reduction,
    projection_image,
)
from .transforms import (
    Decomposition,
    EmbeddedPiece,
    FractalCase,
    FractalNode,
    ScanCase,
    ScanSpec,
    SplitCase,
    analyze_triangle,
    assemble_single_step,
    build_fractal_node,
    combine_source_branches,
    decompose_reduction,
    decomposition_candidates,
    fractal_geometry,
    single_step_parts,
    spb_spi_candidates,
    strip_layers,
)

DEFAULT_FRACTAL_THRESHOLD = 4
DEPTH_CAP = 64

# Generic pinnings for instance parameters; the case analysis must agree on
# both assignments or the input is rejected as unstable.
_PIN_PRIMARY = [(Q(3, 7), Q(2, 7)), (Q(2, 5), Q(1, 5)), (Q(4, 9), Q(1, 3))]
_PIN_SECONDARY = [(Q(5, 11), Q(3, 11)), (Q(3, 8), Q(1, 4)), (Q(5, 13), Q(2, 13))]


class EngineError(RuntimeError):
    """Internal invariant violation inside the engine."""


class _CandidateRejected(Exception):
    """A candidate transformation turned out inapplicable during search."""


# ---------------------------------------------------------------------------
# Cost model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostVector:
    degree: int
    pieces: int
    faces_explored: int

    def key(self):
        return (self.degree, self.pieces, self.faces_explored)

    def __str__(self):
        return (f"degree={self.degree} pieces={self.pieces} "
                f"faces={self.faces_explored}")


def _cost_max(a: CostVector, b: CostVector) -> CostVector:
    return CostVector(max(a.degree, b.degree), a.pieces + b.pieces,
                      a.faces_explored + b.faces_explored)


def _growth(poly: Polyhedron) -> int:
    if poly.nparams == 1:
        return growth_degree(poly)
    pinned = _pin_polyhedron(poly, _PIN_PRIMARY)
    return growth_degree(pinned)


# ---------------------------------------------------------------------------
# Plan nodes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerPlan:
    kind: str                     # 'inline' | 'leaf' | 'var'
    var: Optional[str] = None
    decision: Optional["Decision"] = None


@dataclass(frozen=True)
class StripPlan:
    position: int
    exit: bool
    layers: tuple[LayerPlan, ...]


@dataclass(frozen=True)
class SimplifyPlan:
    labeling: Labeling
    strips: tuple[StripPlan, ...]
    scan_direction: Optional[int] = None


@dataclass(frozen=True)
class DecomposePlan:
    inner_acc: LinearSubspace
    collapse: bool
    inner_labeling: Optional[Labeling]
    intermediate: str
    inner_decision: Optional["Decision"]          # plain decomposition
    layer_decisions: tuple["Decision", ...]       # collapse: entry layers
    outer_decision: Optional["Decision"]          # collapse: projected outer


@dataclass(frozen=True)
class SplitPlan:
    hyperplane: Constraint                        # in unpinned coordinates
    kind: str
    children: tuple[tuple[str, "Decision"], ...]  # aligned with (low, high)
    fractal_child: Optional[int] = None
    boundary_low: bool = False                    # cut lattice points go low


@dataclass(frozen=True)
class FractalPlan:
    case: FractalCase                              # unpinned constraints
    threshold: int


@dataclass(frozen=True)
class FactorPlan:
    free_count: int
    member_decision: "Decision"
    free_domain: Polyhedron


@dataclass(frozen=True)
class LeafPlan:
    pass


PlanNode = Union[SimplifyPlan, DecomposePlan, SplitPlan, FractalPlan,
                 FactorPlan, LeafPlan]

_KIND_RANK = {"SimplifyPlan": 1, "DecomposePlan": 2, "SplitPlan": 3,
              "FractalPlan": 0, "FactorPlan": 0, "LeafPlan": 4}


@dataclass(frozen=True)
class Decision:
    plan: PlanNode
    cost: CostVector


PLAN_FORMAT_VERSION = 1


def plan_to_text(decision: Decision) -> str:
    lines = [f"# redsimp plan v{PLAN_FORMAT_VERSION}"]

    def emit(node: PlanNode, indent: int):
        pad = "  " * indent
        if isinstance(node, LeafPlan):
            lines.append(f"{pad}Leaf")
        elif isinstance(node, SimplifyPlan):
            if node.scan_direction is not None:
                arrow = "forward" if node.scan_direction > 0 else "backward"
                lines.append(f"{pad}Scan {arrow} rho={list(node.labeling.witness)}")
            else:
                lines.append(f"{pad}Simplify rho={list(node.labeling.witness)}")
            for strip in node.strips:
                for layer in strip.layers:
                    if layer.decision is not None:
                        emit(layer.decision.plan, indent + 1)
        elif isinstance(node, DecomposePlan):
            basis = [list(b) for b in node.inner_acc.basis]
            tag = " collapse" if node.collapse else ""
            lines.append(f"{pad}Decompose inner_acc={basis}{tag}")
            if node.inner_labeling is not None:
                lines.append(
                    f"{pad}  Simplify rho={list(node.inner_labeling.witness)} (inner)")
            if node.inner_decision is not None:
                emit(node.inner_decision.plan, indent + 1)
            for child in node.layer_decisions:
                emit(child.plan, indent + 1)
            if node.outer_decision is not None:
                emit(node.outer_decision.plan, indent + 1)
        elif isinstance(node, SplitPlan):
            lines.append(f"{pad}Split {node.kind} [{node.hyperplane}]")
            for _, child in node.children:
                emit(child.plan, indent + 1)
        elif isinstance(node, FractalPlan):
            lines.append(f"{pad}Fractal threshold={node.threshold}")
        elif isinstance(node, FactorPlan):
            lines.append(f"{pad}Factor free_dims={node.free_count}")
            emit(node.member_decision.plan, indent + 1)

    emit(decision.plan, 0)
    lines.append(f"# cost {decision.cost}")
    return "\n".join(lines) + "\n"


def plan_nodes(decision: Decision):
    stack: list[PlanNode] = [decision.plan]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, SimplifyPlan):
            for strip in node.strips:
                for layer in strip.layers:
                    if layer.decision is not None:
                        stack.append(layer.decision.plan)
        elif isinstance(node, DecomposePlan):
            if node.inner_decision is not None:
                stack.append(node.inner_decision.plan)
            for child in node.layer_decisions:
                stack.append(child.plan)
            if node.outer_decision is not None:
                stack.append(node.outer_decision.plan)
        elif isinstance(node, SplitPlan):
            for _, child in node.children:
                stack.append(child.plan)
        elif isinstance(node, FactorPlan):
            stack.append(node.member_decision.plan)


# ---------------------------------------------------------------------------
# Context and pinning
# ---------------------------------------------------------------------------

@dataclass
class EngineContext:
    fractal_threshold: int = DEFAULT_FRACTAL_THRESHOLD
    memoize: bool = True
    memo: dict = field(default_factory=dict)
    counter: int = 0
    faces_seen: int = 0
    split_log: list = field(default_factory=list)

    def fresh(self, prefix: str) -> str:
        self.counter += 1
        return f"{prefix}{self.counter}"


def _param_bounds(p: Polyhedron, k: int) -> tuple[ParamAffine, ParamAffine]:
    """Affine-in-N bounds of instance parameter k over the set of instances
    for which p is nonempty (all dims and other parameters eliminated)."""
    from .polyhedra import _fm_eliminate, _row_from_constraint, _row_sign_for_large

    np_total = p.nparams
    # Move parameter k and every later parameter into dimension slots so FM
    # can eliminate the dims and the later parameters, leaving (N..k-1, k).
    extra = np_total - k
    rows = []
    for c in p.constraints:
        coeffs = tuple(c.coeffs) + tuple(int(x) for x in c.param_coeffs[k:])
        base = constraint(coeffs, c.param_coeffs[:k], c.const, c.is_eq)
        rows.extend(_row_from_constraint(base))
    total_dims = p.dim + extra
    # Eliminate real dims and parameters beyond k; keep slot p.dim (= param k).
    for var in range(total_dims - 1, p.dim, -1):
        rows = _fm_eliminate(rows, var)
    for var in range(p.dim - 1, -1, -1):
        rows = _fm_eliminate(rows, var)
    lo: Optional[ParamAffine] = None
    hi: Optional[ParamAffine] = None
    for coeffs, params, const, strict in rows:
        c = coeffs[p.dim]
        aff = ParamAffine(tuple(Q(x) for x in params) + (Q(0),) * (np_total - k),
                          Q(const))
        if c == 0:
            continue
        bound = aff.scale(Q(-1, c))
        if c > 0:
            if lo is None or (bound - lo).sign_for_large() == 1:
                lo = bound
        else:
            if hi is None or (bound - hi).sign_for_large() == -1:
                hi = bound
    if lo is None or hi is None:
        raise UnsupportedInputError(
            "instance parameter is unbounded; cannot pin a generic value")
    return lo, hi


def _generic_assignments(p: Polyhedron, pins) -> dict:
    """Pin each instance parameter (in order) to a generic rational point
    strictly inside its bounds, substituting as we go."""
    table: dict[int, ParamAffine] = {}
    current = p
    for k in range(1, p.nparams):
        if all(c.param_coeffs[k] == 0 for c in current.constraints):
            table[k] = ParamAffine.constant(0, p.nparams)
            continue
        alpha, gamma = pins[(k - 1) % len(pins)]
        alpha = alpha + Q(k - 1, 97)
        try:
            lo, hi = _param_bounds(current, k)
            value = lo + (hi - lo).scale(alpha)
        except UnsupportedInputError:
            # No intrinsic range (e.g. an answer-space projection): any
            # generic value serves for growth estimation.
            coeffs = [Q(0)] * p.nparams
            coeffs[0] = alpha
            value = ParamAffine(tuple(coeffs), gamma)
        table[k] = value
        current = current.substitute_param(k, value)
    return table


def _apply_assignments(aff: ParamAffine, table) -> ParamAffine:
    out = aff
    for k in sorted(table):
        out = out.substitute_param(k, table[k])
    return out


def _pin_polyhedron(p: Polyhedron, pins) -> Polyhedron:
    if p.nparams == 1:
        return p
    table = _generic_assignments(p, pins)
    cons = []
    for c in p.constraints:
        aff = _apply_assignments(c.affine(), table)
        cons.append(constraint(c.coeffs, aff.coeffs, aff.const, c.is_eq))
    return polyhedron(p.dim, cons, nparams=p.nparams, plb=p.param_lower_bound)


@dataclass
class PinnedView:
    reduction: Reduction
    shadow: Reduction
    constraint_map: dict


def pin_reduction(r: Reduction, pins=_PIN_PRIMARY) -> PinnedView:
    nparams = r.body.nparams
    if nparams == 1:
        return PinnedView(r, r, {c: c for c in r.body.constraints})
    table = _generic_assignments(r.body, pins)
    raw = []
    for c in r.body.constraints:
        aff = _apply_assignments(c.affine(), table)
        raw.append(constraint(c.coeffs, aff.coeffs, aff.const, c.is_eq))
    body = polyhedron(r.body.dim, raw, nparams=nparams,
                      plb=r.body.param_lower_bound)
    cmap = {}
    for pc in body.constraints:
        for rc, oc in zip(raw, r.body.constraints):
            if pc == rc:
                cmap[pc] = oc
                break

    def pin_map(m: AffineMap) -> AffineMap:
        return AffineMap(m.matrix,
                         tuple(_apply_assignments(a, table) for a in m.affines))

    pinned = make_reduction(body, pin_map(r.write), pin_map(r.read), r.op,
                            r.source)
    return PinnedView(pinned, r, cmap)


def _map_constraints(view: PinnedView, cons: Sequence[Constraint]) -> list[Constraint]:
    out = []
    for c in cons:
        mapped = view.constraint_map.get(c)
        if mapped is None:
            raise UnsupportedInputError(
                "analysis constraint has no unpinned counterpart")
        out.append(mapped)
    return out


def _anchored_hyperplane(anchors: Sequence[Constraint], normal: IntVec,
                         nparams: int) -> Constraint:
    """The hyperplane with the given linear part containing the affine hull
    of the anchors: a rational combination of the anchor forms."""
    mat = [[Q(a.coeffs[t]) for a in anchors] for t in range(len(normal))]
    coeffs = solve(mat, list(normal))
    if coeffs is None:
        raise UnsupportedInputError("cut normal is not anchored by the face")
    aff = ParamAffine.constant(0, nparams)
    for lam, a in zip(coeffs, anchors):
        aff = aff + a.affine().scale(lam)
    return constraint(normal, aff.coeffs, aff.const, is_eq=True)


# ---------------------------------------------------------------------------
# Termination guard
# ---------------------------------------------------------------------------

def assert_termination(parent: Reduction, pieces: Sequence[Reduction]) -> None:
    """Each SPB/SPI split piece keeps the facet count (simplex preserved; at
    most the parent's count for non-simplex parents) and strictly decreases
    the residual facet count; violations abort as engine bugs."""
    from .classify import classify_facets

    parent_classes = classify_facets(parent)
    parent_res = sum(1 for fc in parent_classes if fc.residual)
    parent_facets = len(parent_classes)
    parent_simplex = is_simplex(parent.body)
    for piece in pieces:
        piece_classes = classify_facets(piece)
        res = sum(1 for fc in piece_classes if fc.residual)
        nfacets = len(piece_classes)
        if parent_simplex and nfacets != parent_facets:
            raise EngineError(
                f"split broke the simplex: {nfacets} facets vs {parent_facets}")
        if not parent_simplex and nfacets > parent_facets:
            raise EngineError("split increased the facet count")
        if res >= parent_res:
            raise EngineError(
                f"split did not decrease residual facets ({res} >= {parent_res})")


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------

def _canonical_2d(red: Reduction) -> Reduction:
    """Reindex a 2D one-accumulation one-reuse reduction so the reuse space
    is the first axis; identity when no unimodular reindexing exists (the
    general path then handles it without the triangle machinery)."""
    if not (red.d == 2 and red.a == 1 and red.r == 1):
        return red
    from .numerics import subspace
    from .reduction import canonicalize_axes

    want_r = subspace([[1, 0]], 2)
    want_a = subspace([[0, 1]], 2)
    if (red.reuse_space.basis == want_r.basis
            and red.acc_space.basis == want_a.basis):
        return red
    try:
        return canonicalize_axes(red)[0]
    except UnsupportedInputError:
        return red


def _is_canonical_2d(red: Reduction) -> bool:
    from .numerics import subspace

    return (red.reuse_space.basis == subspace([[1, 0]], 2).basis
            and red.acc_space.basis == subspace([[0, 1]], 2).basis)


def search(red: Reduction, ctx: EngineContext, depth: int = 0) -> Decision:
    if depth > DEPTH_CAP:
        raise EngineError("engine depth cap exceeded (termination guard)")
    red = drop_equalities(red)
    red = _canonical_2d(red)
    key = red.key()
    if ctx.memoize and key in ctx.memo:
        return ctx.memo[key]
    decision = _search_impl(red, ctx, depth)
    if ctx.memoize:
        ctx.memo[key] = decision
    return decision


def _direct_leaf(red: Reduction) -> Decision:
    return Decision(LeafPlan(), CostVector(_growth(red.body), 1, 0))


def _search_impl(red: Reduction, ctx: EngineContext, depth: int) -> Decision:
    if red.r == 0:
        return _direct_leaf(red)
    from .numerics import intersect_subspaces

    if intersect_subspaces(red.reuse_space, red.acc_space).dim == red.r:
        # All reuse lies inside the write kernel: every step vector maps to
        # the same answer, so the standard path has no moves here.
        return _direct_leaf(red)
    fam = factor_independent(red)
    if isinstance(fam, IndependentFamily):
        member_decision = search(fam.member, ctx, depth + 1)
        free_domain = _family_free_domain(red, fam)
        cost = CostVector(_growth(free_domain) + member_decision.cost.degree,
                          member_decision.cost.pieces,
                          member_decision.cost.faces_explored)
        return Decision(FactorPlan(fam.free_count, member_decision,
                                   free_domain), cost)
    view = pin_reduction(red)
    _verify_pin_stability(red, view)
    pinned = view.reduction
    if (pinned.d == 2 and _is_canonical_2d(red)
            and is_simplex(pinned.body)):
        return _search_triangle(red, view, ctx, depth)
    return _search_general(red, view, ctx, depth)


def _family_free_domain(red: Reduction, fam: IndependentFamily) -> Polyhedron:
    uinv = _int_matrix_inverse([list(row) for row in fam.transform])
    free_rows = uinv[red.d - fam.free_count:]
    return projection_image(red.body, affine_map(free_rows, red.body.nparams))


def _verify_pin_stability(red: Reduction, view: PinnedView) -> None:
    if red.body.nparams == 1:
        return
    alt = pin_reduction(red, pins=_PIN_SECONDARY)
    a, b = view.reduction.body, alt.reduction.body
    if a.dim != b.dim or len(a.constraints) != len(b.constraints):
        raise UnsupportedInputError(
            "instance-parameter structure is not stable across generic pinnings")


def _labeling_delta(red: Reduction, labeling: Labeling) -> IntVec:
    return red.write.apply_vector(labeling.witness)


def _decision_key(d: Decision):
    return (d.cost.key(), _KIND_RANK.get(type(d.plan).__name__, 9),
            _plan_tiebreak(d.plan))


def _plan_tiebreak(plan: PlanNode):
    if isinstance(plan, SimplifyPlan):
        return (0, plan.labeling.signs)
    if isinstance(plan, DecomposePlan):
        return (1, tuple(tuple(b) for b in plan.inner_acc.basis),
                plan.inner_labeling.signs if plan.inner_labeling else ())
    if isinstance(plan, SplitPlan):
        return (2, plan.hyperplane.coeffs, plan.hyperplane.param_coeffs,
                plan.hyperplane.const)
    return (3,)


def _search_triangle(red: Reduction, view: PinnedView, ctx: EngineContext,
                     depth: int) -> Decision:
    pinned = view.reduction
    analysis = analyze_face(pinned)
    ctx.faces_seen += len(analysis.facets)
    case = analyze_triangle(pinned, analysis)
    if view.shadow.body.nparams > 1:
        alt = pin_reduction(red, pins=_PIN_SECONDARY)
        alt_case = analyze_triangle(alt.reduction, analyze_face(alt.reduction))
        if type(alt_case) is not type(case):
            raise UnsupportedInputError(
                "triangle case dispatch is not stable across generic pinnings")
    if isinstance(case, ScanCase):
        return _decide_single_step(red, view, case.labeling, ctx, depth,
                                   scan=True)
    if isinstance(case, SplitCase):
        anchors = _map_constraints(view, list(case.anchor))
        normal = [0, 0]
        normal[case.cut_axis] = 1
        cut = _anchored_hyperplane(anchors, tuple(normal), red.body.nparams)
        return _decide_split(red, cut, case.kind, ctx, depth,
                             check_termination=True)
    assert isinstance(case, FractalCase)
    shadow_case = FractalCase(
        _map_constraints(view, [case.non_res])[0],
        _map_constraints(view, [case.res_near])[0],
        _map_constraints(view, [case.res_far])[0],
        case.cut_axis, case.corner_low)
    return _decide_fractal(red, shadow_case, ctx, depth)


def _search_general(red: Reduction, view: PinnedView, ctx: EngineContext,
                    depth: int) -> Decision:
    pinned = view.reduction
    analysis = analyze_face(pinned)
    ctx.faces_seen += len(analysis.facets)
    singles = [l for l in admissible_labelings(pinned, analysis.labelings,
                                               analysis.classes)
               if any(x != 0 for x in _labeling_delta(pinned, l))]
    residual_faces = [fc.facet for fc in analysis.classes if fc.residual]
    decomp_spaces = decomposition_candidates(pinned, residual_faces)
    options: list[Decision] = []
    skip = (_CandidateRejected, UnsupportedInputError)
    from .polyhedra import DegenerateSplitError

    for labeling in singles:
        try:
            options.append(_decide_single_step(red, view, labeling, ctx, depth))
        except skip:
            continue
    for space in decomp_spaces:
        try:
            options.extend(_decide_decompositions(red, view, space, ctx, depth))
        except skip:
            continue
    if not singles and not decomp_spaces:
        if pinned.d >= 3 and not is_simplex(pinned.body):
            raise UnsupportedInputError(
                "splitting requires a simplex body in three or more dimensions")
        lattice = build_face_lattice(pinned.body)
        for cand in spb_spi_candidates(pinned, lattice):
            cut = cand.hyperplane
            try:
                if view.shadow is not view.reduction:
                    anchors = _map_constraints(
                        view, [pinned.body.constraints[i]
                               for i in sorted(cand.through_face.saturated)])
                    cut = _anchored_hyperplane(anchors, cut.coeffs,
                                               red.body.nparams)
                options.append(_decide_split(red, cut, cand.kind, ctx, depth,
                                             check_termination=True))
            except skip + (DegenerateSplitError,):
                continue
    if not options:
        return _direct_leaf(red)
    return min(options, key=_decision_key)


# --- single step -----------------------------------------------------------

def _decide_single_step(red: Reduction, view: PinnedView, labeling: Labeling,
                        ctx: EngineContext, depth: int,
                        scan: bool = False) -> Decision:
    pinned = view.reduction
    parts = single_step_parts(pinned, labeling)
    strips: list[StripPlan] = []
    cost = CostVector(_growth(parts.answers), len(parts.init_guards) + 1, 0)
    for exit_flag, pieces in ((False, parts.entry_pieces),
                              (True, parts.exit_pieces)):
        for pos, piece in pieces:
            layers: list[LayerPlan] = []
            for emb in strip_layers(piece, pinned.write, pinned.read):
                layer_plan, layer_cost = _decide_layer(emb, red, ctx, depth,
                                                       parent_dim=pinned.d)
                layers.append(layer_plan)
                cost = _cost_max(cost, layer_cost)
            strips.append(StripPlan(pos, exit_flag, tuple(layers)))
    direction = None
    if scan:
        direction = 1 if labeling.witness[0] > 0 else -1
    return Decision(SimplifyPlan(labeling, tuple(strips), direction), cost)


def _decide_layer(emb: EmbeddedPiece, red: Reduction, ctx: EngineContext,
                  depth: int, parent_dim: int) -> tuple[LayerPlan, CostVector]:
    acc_dim = emb.write.kernel().dim
    if acc_dim == 0:
        if unimodular_inline_map(emb) is not None:
            return LayerPlan("inline"), CostVector(0, 0, 0)
        return LayerPlan("leaf"), CostVector(_growth(emb.body), 0, 0)
    if emb.body.dim >= parent_dim:
        # The strip did not re-embed onto a lower-dimensional lattice; stop
        # here rather than risk a same-dimension recursion.
        return LayerPlan("leaf"), CostVector(_growth(emb.body), 0, 0)
    sub = _embedded_reduction(emb, red)
    if sub.reuse_space.dim == 0:
        return LayerPlan("leaf"), CostVector(_growth(emb.body), 0, 0)
    var = ctx.fresh("S")
    decision = search(sub, ctx, depth + 1)
    return LayerPlan("var", var, decision), decision.cost


def _embedded_reduction(emb: EmbeddedPiece, red: Reduction) -> Reduction:
    return Reduction(emb.body, emb.write, emb.read, red.op,
                     emb.write.kernel(), emb.read.kernel(), red.source)


def unimodular_inline_map(emb: EmbeddedPiece) -> Optional[AffineMap]:
    """When the embedded piece's write is a unimodular bijection, each answer
    reads exactly one point: returns read o write^{-1}."""
    from .numerics import _det_int

    w = emb.write
    if w.out_dim != w.in_dim or w.out_dim == 0:
        return None
    mat = [list(row) for row in w.matrix]
    det = _det_int(mat)
    if det not in (1, -1):
        return None
    winv = _int_matrix_inverse(mat)
    nparams = w.affines[0].nparams
    inv_aff = []
    for i in range(w.in_dim):
        acc = ParamAffine.constant(0, nparams)
        for j in range(w.out_dim):
            acc = acc - w.affines[j].scale(winv[i][j])
        inv_aff.append(acc)
    inv = AffineMap(tuple(tuple(row) for row in winv), tuple(inv_aff))
    return emb.read.compose(inv)


# --- decomposition ---------------------------------------------------------

def _decide_decompositions(red: Reduction, view: PinnedView,
                           space: LinearSubspace, ctx: EngineContext,
                           depth: int) -> list[Decision]:
    pinned = view.reduction
    out: list[Decision] = []
    try:
        dec = decompose_reduction(pinned, space)
    except (ValueError, UnsupportedInputError):
        return out
    inner_analysis = analyze_face(dec.inner)
    ctx.faces_seen += len(inner_analysis.facets)
    inner_singles = [l for l in admissible_labelings(
        dec.inner, inner_analysis.labelings, inner_analysis.classes)
        if any(x != 0 for x in _labeling_delta(dec.inner, l))]
    for labeling in inner_singles:
        option = _decide_collapse(red, view, space, dec, labeling, ctx, depth)
        if option is not None:
            out.append(option)
    var_z = ctx.fresh("Z")
    shadow_inner = decompose_reduction(view.shadow, space, var_z).inner \
        if view.shadow is not view.reduction else dec.inner
    inner_decision = search(shadow_inner, ctx, depth + 1)
    cost = _cost_max(inner_decision.cost,
                     CostVector(_growth(dec.outer.body), 1, 0))
    out.append(Decision(
        DecomposePlan(space, False, None, var_z, inner_decision, (), None),
        cost))
    return out


def _copy_projection(delta: IntVec, out_dim: int, nparams: int) -> AffineMap:
    prim = primitive_signed(delta)
    u = unimodular_with_columns([list(prim)], out_dim)
    if u is None:
        raise UnsupportedInputError("no unimodular projection along the copy step")
    uinv = _int_matrix_inverse(u)
    return affine_map(uinv[1:], nparams)


def _decide_collapse(red: Reduction, view: PinnedView, space: LinearSubspace,
                     dec: Decomposition, labeling: Labeling,
                     ctx: EngineContext, depth: int) -> Optional[Decision]:
    parts = single_step_parts(dec.inner, labeling)
    if parts.exit_pieces:
        return None
    for _, piece in parts.entry_pieces:
        img = projection_image(piece, dec.inner.write)
        if not img.intersect(parts.rec_guard).is_empty():
            return None
    # Pure copy: every inner answer equals the init value on its line.  The
    # intermediate collapses to entry-layer values read through a projection
    # along the copy direction; the paper's post-processing step that reads
    # only the needed facet values of the inner variable.
    var_v = ctx.fresh("V")
    shadow_dec = decompose_reduction(view.shadow, space, var_v) \
        if view.shadow is not view.reduction else dec
    shadow_parts = single_step_parts(shadow_dec.inner, labeling) \
        if view.shadow is not view.reduction else parts
    pi = _copy_projection(parts.delta, dec.inner.write.out_dim,
                          view.shadow.body.nparams)
    layer_decisions: list[Decision] = []
    cost = CostVector(0, 1, 0)
    for _, piece in shadow_parts.entry_pieces:
        for emb in strip_layers(piece,
                                pi.compose(shadow_dec.inner.write),
                                shadow_dec.inner.read):
            sub = _embedded_reduction(emb, view.shadow)
            if (sub.acc_space.dim == 0 or sub.reuse_space.dim == 0
                    or emb.body.dim >= view.shadow.d):
                child = _direct_leaf_for(sub)
            else:
                child = search(sub, ctx, depth + 1)
            layer_decisions.append(child)
            cost = _cost_max(cost, child.cost)
    outer_shadow = make_reduction(shadow_dec.outer.body,
                                  shadow_dec.outer.write, pi, red.op, var_v)
    outer_decision = search(outer_shadow, ctx, depth + 1)
    cost = _cost_max(cost, outer_decision.cost)
    plan = DecomposePlan(space, True, labeling, var_v, None,
                         tuple(layer_decisions), outer_decision)
    return Decision(plan, cost)


def _direct_leaf_for(sub: Reduction) -> Decision:
    return Decision(LeafPlan(), CostVector(_growth(sub.body), 1, 0))


# --- splits ----------------------------------------------------------------

def _split_progress_ok(parent: Reduction, pieces: Sequence[Reduction]) -> bool:
    try:
        assert_termination(parent, pieces)
    except EngineError:
        return False
    return True


def _decide_split(red: Reduction, cut: Constraint, kind: str,
                  ctx: EngineContext, depth: int,
                  check_termination: bool) -> Decision:
    pieces = split_by_hyperplane(red.body, cut)
    piece_reds = [make_reduction(p, red.write, red.read, red.op, red.source)
                  for p in pieces]
    if check_termination and not _split_progress_ok(red, piece_reds):
        raise _CandidateRejected(f"split {cut} does not make progress")
    children = []
    cost = CostVector(_growth(projection_image(red.body, red.write)), 1, 0)
    for piece_red in piece_reds:
        var = ctx.fresh("P")
        decision = search(piece_red, ctx, depth + 1)
        children.append((var, decision))
        cost = _cost_max(cost, decision.cost)
    return Decision(SplitPlan(cut, kind, tuple(children)), cost)


# --- fractal ---------------------------------------------------------------

def _decide_fractal(red: Reduction, case: FractalCase, ctx: EngineContext,
                    depth: int) -> Decision:
    from .transforms import oriented_split

    geo = fractal_geometry(red.body, case, case.non_res, case.res_near,
                           case.res_far)
    # The recursion region is the strict corner side; the cut line belongs to
    # the scanned strip.
    boundary_low = not case.corner_low
    low, high = oriented_split(red.body, geo.outer_cut, boundary_low)
    region, scan_strip = (low, high) if case.corner_low else (high, low)
    try:
        scan_pieces = list(oriented_split(scan_strip, geo.inner_cut, False))
    except Exception:
        scan_pieces = [scan_strip]
    cost = CostVector(max(_growth(projection_image(red.body, red.write)), 1),
                      3, 0)
    scan_children: list[tuple[str, Decision]] = []
    for piece in scan_pieces:
        sub = make_reduction(piece, red.write, red.read, red.op, red.source)
        decision = search(sub, ctx, depth + 1)
        scan_children.append((ctx.fresh("P"), decision))
        cost = _cost_max(cost, decision.cost)
    inner_kind = "SPB" if geo.inner_cut.coeffs[1] == 0 else "SPI"
    inner_split = Decision(SplitPlan(geo.inner_cut, inner_kind,
                                     tuple(scan_children)), cost)
    node_decision = Decision(FractalPlan(case, ctx.fractal_threshold), cost)
    outer_kind = "SPB" if geo.outer_cut.coeffs[1] == 0 else "SPI"
    frac_idx = 0 if case.corner_low else 1
    kids: list = [None, None]
    kids[frac_idx] = (ctx.fresh("F"), node_decision)
    kids[1 - frac_idx] = (ctx.fresh("P"), inner_split)
    outer = SplitPlan(geo.outer_cut, outer_kind, tuple(kids),
                      fractal_child=frac_idx, boundary_low=boundary_low)
    return Decision(outer, cost)


# ---------------------------------------------------------------------------
# Realize
# ---------------------------------------------------------------------------

@dataclass
class EquationSink:
    equations: list[Equation] = field(default_factory=list)
    seen: set = field(default_factory=set)

    def add(self, eq: Equation) -> None:
        key = (eq.var, eq.base, eq.write, eq.branches)
        if key in self.seen:
            return
        self.seen.add(key)
        self.equations.append(eq)


def realize(decision: Decision, shadow: Reduction, var: str,
            ctx: EngineContext, sink: EquationSink) -> Polyhedron:
    """Replay a plan on the (unpinned) reduction, emitting equations in
    dependence order; returns the polyhedron of answers the variable covers."""
    shadow = drop_equalities(shadow)
    shadow = _canonical_2d(shadow)
    plan = decision.plan
    if isinstance(plan, LeafPlan):
        answers = projection_image(shadow.body, shadow.write)
        expr = Reduce(shadow.op, shadow.body, shadow.write, shadow.read,
                      shadow.source)
        sink.add(Equation(var, answers,
                          identity_map(answers.dim, shadow.body.nparams),
                          (Branch(answers, expr),)))
        return answers
    if isinstance(plan, SimplifyPlan):
        return _realize_simplify(plan, shadow, var, ctx, sink)
    if isinstance(plan, DecomposePlan):
        return _realize_decompose(plan, shadow, var, ctx, sink)
    if isinstance(plan, SplitPlan):
        return _realize_split(plan, shadow, var, ctx, sink)
    if isinstance(plan, FractalPlan):
        return _realize_fractal(plan, shadow, var, ctx, sink)
    if isinstance(plan, FactorPlan):
        return _realize_factor(plan, shadow, var, ctx, sink)
    raise EngineError(f"unknown plan node {type(plan).__name__}")


def _realize_simplify(plan: SimplifyPlan, shadow: Reduction, var: str,
                      ctx: EngineContext, sink: EquationSink) -> Polyhedron:
    parts = single_step_parts(shadow, plan.labeling)
    layer_lookup = {(s.exit, s.position): s.layers for s in plan.strips}

    def piece_expr(pos: int, piece: Polyhedron, is_exit: bool) -> Expr:
        embs = strip_layers(piece, shadow.write, shadow.read)
        layers = layer_lookup.get((is_exit, pos))
        if layers is None or len(layers) != len(embs):
            return Reduce(shadow.op, piece, shadow.write, shadow.read,
                          shadow.source)
        expr: Optional[Expr] = None
        for layer, emb in zip(layers, embs):
            term = _realize_layer(layer, emb, shadow, parts, ctx, sink)
            expr = term if expr is None else Combine(shadow.op, expr, term)
        assert expr is not None
        return expr

    eq = assemble_single_step(shadow, parts, var, piece_expr)
    sink.add(eq)
    return parts.answers


def _realize_layer(layer: LayerPlan, emb: EmbeddedPiece, shadow: Reduction,
                   parts, ctx: EngineContext, sink: EquationSink) -> Expr:
    if layer.kind == "inline":
        inline = unimodular_inline_map(emb)
        if inline is not None:
            return Ref(shadow.source, inline)
        return Reduce(shadow.op, emb.body, emb.write, emb.read, shadow.source)
    if layer.kind == "leaf":
        return Reduce(shadow.op, emb.body, emb.write, emb.read, shadow.source)
    sub = _embedded_reduction(emb, shadow)
    child_answers = realize(layer.decision, sub, layer.var, ctx, sink)
    _fill_variable(layer.var, parts.answers, child_answers, sink,
                   shadow.body.nparams)
    return Ref(layer.var, identity_map(parts.answers.dim, shadow.body.nparams))


def _fill_variable(var: str, needed: Polyhedron, covered: Polyhedron,
                   sink: EquationSink, nparams: int) -> None:
    from .polyhedra import set_difference

    gaps = [p for p in set_difference(needed, covered).pieces if not p.is_empty()]
    for gap in gaps:
        sink.add(Equation(var, gap, identity_map(gap.dim, nparams),
                          (Branch(gap, EmptyValue()),)))


def _realize_decompose(plan: DecomposePlan, shadow: Reduction, var: str,
                       ctx: EngineContext, sink: EquationSink) -> Polyhedron:
    dec = decompose_reduction(shadow, plan.inner_acc, plan.intermediate)
    answers = projection_image(shadow.body, shadow.write)
    if not plan.collapse:
        realize(plan.inner_decision, dec.inner, plan.intermediate, ctx, sink)
        expr = Reduce(shadow.op, dec.outer.body, dec.outer.write,
                      identity_map(dec.outer.body.dim, shadow.body.nparams),
                      plan.intermediate)
        sink.add(Equation(var, answers,
                          identity_map(answers.dim, shadow.body.nparams),
                          (Branch(answers, expr),)))
        return answers
    parts = single_step_parts(dec.inner, plan.inner_labeling)
    pi = _copy_projection(parts.delta, dec.inner.write.out_dim,
                          shadow.body.nparams)
    layer_iter = iter(plan.layer_decisions)
    for _, piece in parts.entry_pieces:
        for emb in strip_layers(piece, pi.compose(dec.inner.write),
                                dec.inner.read):
            try:
                child = next(layer_iter)
            except StopIteration:
                raise EngineError("collapse layer count mismatch") from None
            sub = _embedded_reduction(emb, shadow)
            if isinstance(child.plan, LeafPlan) and sub.acc_space.dim == 0:
                _realize_pointwise(sub, plan.intermediate, sink)
            else:
                realize(child, sub, plan.intermediate, ctx, sink)
    outer_shadow = make_reduction(dec.outer.body, dec.outer.write, pi,
                                  shadow.op, plan.intermediate)
    realize(plan.outer_decision, outer_shadow, var, ctx, sink)
    return answers


def _realize_pointwise(sub: Reduction, var: str, sink: EquationSink) -> None:
    """A degenerate layer whose write map is injective on the layer: emit the
    values pointwise over the layer body."""
    expr = Reduce(sub.op, sub.body, sub.write, sub.read, sub.source,
                  anchor=sub.write)
    sink.add(Equation(var, sub.body, sub.write, (Branch(sub.body, expr),)))


def _realize_split(plan: SplitPlan, shadow: Reduction, var: str,
                   ctx: EngineContext, sink: EquationSink) -> Polyhedron:
    from .transforms import oriented_split

    pieces = oriented_split(shadow.body, plan.hyperplane, plan.boundary_low)
    answers = projection_image(shadow.body, shadow.write)
    if plan.fractal_child is None and shadow.body.nparams == 1:
        taken = [make_reduction(p, shadow.write, shadow.read, shadow.op,
                                shadow.source) for p in pieces]
        assert_termination(shadow, taken)
        ctx.split_log.append((plan.kind, plan.hyperplane))
    sources = []
    for (child_var, child), piece in zip(plan.children, pieces):
        sub = make_reduction(piece, shadow.write, shadow.read, shadow.op,
                             shadow.source)
        child_answers = realize(child, sub, child_var, ctx, sink)
        sources.append((child_answers,
                        Ref(child_var,
                            identity_map(answers.dim, shadow.body.nparams))))
    branches = combine_source_branches(answers, sources, shadow.op)
    sink.add(Equation(var, answers,
                      identity_map(answers.dim, shadow.body.nparams),
                      tuple(branches)))
    return answers


def _realize_fractal(plan: FractalPlan, shadow: Reduction, var: str,
                     ctx: EngineContext, sink: EquationSink) -> Polyhedron:
    case = plan.case
    geo = fractal_geometry(shadow.body, case, case.non_res, case.res_near,
                           case.res_far)
    region = shadow.body
    answers = projection_image(region, shadow.write)
    forward = ScanSpec(region, +1)
    backward = ScanSpec(region, -1)
    node = build_fractal_node(shadow, case, geo, plan.threshold, region,
                              forward, backward)
    sink.add(Equation(var, answers,
                      identity_map(answers.dim, shadow.body.nparams),
                      (Branch(answers, FractalLeaf(node)),)))
    return answers


def _realize_factor(plan: FactorPlan, shadow: Reduction, var: str,
                    ctx: EngineContext, sink: EquationSink) -> Polyhedron:
    fam = factor_independent(shadow)
    if not isinstance(fam, IndependentFamily) or fam.free_count != plan.free_count:
        raise EngineError("family factoring disagreed between search and realize")
    member_sink = EquationSink()
    realize(plan.member_decision, fam.member, var, ctx, member_sink)
    free_domain = _family_free_domain(shadow, fam)
    for eq in member_sink.equations:
        sink.add(_lift_equation(eq, plan.free_count, free_domain))
    return projection_image(shadow.body, shadow.write)


# --- lifting member equations over their instance parameters ---------------

def _lift_poly(p: Polyhedron, f: int,
               free_domain: Optional[Polyhedron]) -> Polyhedron:
    new_dim = p.dim + f
    np_new = p.nparams - f
    cons = []
    for c in p.constraints:
        coeffs = list(c.coeffs) + [int(x) for x in c.param_coeffs[np_new:]]
        cons.append(constraint(coeffs, c.param_coeffs[:np_new], c.const, c.is_eq))
    if free_domain is not None:
        for c in free_domain.constraints:
            coeffs = [0] * p.dim + list(c.coeffs)
            cons.append(constraint(coeffs, c.param_coeffs, c.const, c.is_eq))
    return polyhedron(new_dim, cons, nparams=np_new, plb=p.param_lower_bound)


def _lift_map(m: AffineMap, f: int) -> AffineMap:
    np_new = m.affines[0].nparams - f if m.affines else 1
    rows = []
    affs = []
    for row, aff in zip(m.matrix, m.affines):
        extra = aff.coeffs[np_new:]
        if any(x.denominator != 1 for x in extra):
            raise EngineError("non-integer instance coefficient in lifted map")
        rows.append(tuple(row) + tuple(int(x) for x in extra))
        affs.append(ParamAffine(aff.coeffs[:np_new], aff.const))
    return AffineMap(tuple(rows), tuple(affs))


def _free_selector(base_dim: int, f: int, nparams_new: int) -> AffineMap:
    rows = []
    for t in range(f):
        row = [0] * (base_dim + f)
        row[base_dim + t] = 1
        rows.append(row)
    return affine_map(rows, nparams_new)


def _lift_expr(expr: Expr, f: int, base_dim: int, nparams_new: int) -> Expr:
    if isinstance(expr, Ref):
        return Ref(expr.var, _lift_map(expr.index_map, f))
    if isinstance(expr, EmptyValue):
        return expr
    if isinstance(expr, Combine):
        return Combine(expr.op, _lift_expr(expr.left, f, base_dim, nparams_new),
                       _lift_expr(expr.right, f, base_dim, nparams_new))
    if isinstance(expr, InverseCombine):
        return InverseCombine(expr.op,
                              _lift_expr(expr.left, f, base_dim, nparams_new),
                              _lift_expr(expr.right, f, base_dim, nparams_new))
    if isinstance(expr, Reduce):
        body = _lift_poly(expr.body, f, None)
        write = _lift_map(expr.write, f)
        # Pin the instance coordinates of the slice to those of the base point.
        selector_rows = []
        for t in range(f):
            row = [0] * body.dim
            row[expr.body.dim + t] = 1
            selector_rows.append(row)
        nparams_new = write.affines[0].nparams if write.affines else 1
        write_full = AffineMap(
            write.matrix + tuple(tuple(r) for r in selector_rows),
            write.affines + tuple(ParamAffine.constant(0, nparams_new)
                                  for _ in range(f)))
        anchor = expr.anchor or identity_map(expr.write.out_dim,
                                             expr.write.affines[0].nparams)
        anchor_lifted = _lift_map(anchor, f)
        anchor_full = AffineMap(
            anchor_lifted.matrix + _free_selector(base_dim, f, nparams_new).matrix,
            anchor_lifted.affines + tuple(ParamAffine.constant(0, nparams_new)
                                          for _ in range(f)))
        return Reduce(expr.op, body, write_full, _lift_map(expr.read, f),
                      expr.source, anchor_full)
    if isinstance(expr, FractalLeaf):
        nparams_old = expr.node.triangle.nparams
        proj = expr.instance_proj
        new_rows = _free_selector(base_dim, f, nparams_old - f).matrix
        if proj is None:
            proj_new = affine_map([list(r) for r in new_rows],
                                  nparams_old - f)
        else:
            lifted = _lift_map(proj, f)
            proj_new = AffineMap(tuple(new_rows) + lifted.matrix,
                                 tuple(ParamAffine.constant(0, nparams_old - f)
                                       for _ in range(f)) + lifted.affines)
        return FractalLeaf(expr.node, proj_new)
    raise EngineError(f"cannot lift expression {type(expr).__name__}")


def _lift_equation(eq: Equation, f: int, free_domain: Polyhedron) -> Equation:
    base_dim = eq.base.dim
    base = _lift_poly(eq.base, f, free_domain)
    nparams_new = base.nparams
    branches = []
    for br in eq.branches:
        guard = _lift_poly(br.guard, f, free_domain)
        branches.append(Branch(guard, _lift_expr(br.expr, f, base_dim,
                                                 nparams_new)))
    order = None
    if eq.order_vector is not None:
        order = tuple(eq.order_vector)
    write = _lift_map(eq.write, f)
    return Equation(eq.var, base, write, tuple(branches), order)


# ---------------------------------------------------------------------------
# Public driver
# ---------------------------------------------------------------------------

def simplify_max(r: Reduction, fractal_threshold: int = DEFAULT_FRACTAL_THRESHOLD,
                 memoize: bool = True, output: str = "Y",
                 require_triangle: bool = False
                 ) -> tuple[Decision, EquationProgram, CostVector]:
    """Choose and realize an optimal simplification plan for the reduction."""
    ctx = EngineContext(fractal_threshold=fractal_threshold, memoize=memoize)
    red = drop_equalities(r)
    if require_triangle:
        view = pin_reduction(red)
        if not (view.reduction.d == 2 and is_simplex(view.reduction.body)):
            raise UnsupportedInputError("fractal simplification needs a triangle")
    decision = search(red, ctx)
    decision = Decision(decision.plan,
                        CostVector(decision.cost.degree, decision.cost.pieces,
                                   ctx.faces_seen))
    sink = EquationSink()
    realize(decision, red, output, ctx, sink)
    program = EquationProgram(tuple(sink.equations), output=output,
                              inputs=(r.source,))
    return decision, program, decision.cost


def simplify_union(original: Reduction, pieces: Sequence[Reduction],
                   fractal_threshold: int = DEFAULT_FRACTAL_THRESHOLD,
                   output: str = "Y"
                   ) -> tuple[list[Decision], EquationProgram, CostVector]:
    """Simplify each piece of a disjoint cover independently and branch the
    answer equation over the projected pieces (overlaps combine)."""
    ctx = EngineContext(fractal_threshold=fractal_threshold)
    sink = EquationSink()
    sources = []
    decisions = []
    cost = CostVector(_growth(projection_image(original.body, original.write)),
                      1, 0)
    for piece in pieces:
        piece = drop_equalities(piece)
        decision = search(piece, ctx)
        decisions.append(decision)
        var = ctx.fresh("U")
        answers = realize(decision, piece, var, ctx, sink)
        nparams = original.body.nparams
        sources.append((answers, Ref(var, identity_map(answers.dim, nparams))))
        cost = _cost_max(cost, decision.cost)
    base = projection_image(original.body, original.write)
    branches = combine_source_branches(base, sources, original.op)
    sink.add(Equation(output, base,
                      identity_map(base.dim, original.body.nparams),
                      tuple(branches)))
    program = EquationProgram(tuple(sink.equations), output=output,
                              inputs=(original.source,))
    cost = CostVector(cost.degree, cost.pieces, ctx.faces_seen)
    return decisions, program, cost


def candidate_set(r: Reduction) -> dict:
    """The Algorithm-1 candidate sets: admissible single-step labelings,
    decomposition target spaces, and (only when both are empty) SPB/SPI
    splits."""
    red = drop_equalities(r)
    view = pin_reduction(red)
    pinned = view.reduction
    analysis = analyze_face(pinned)
    singles = [l for l in admissible_labelings(pinned, analysis.labelings,
                                               analysis.classes)
               if any(x != 0 for x in _labeling_delta(pinned, l))]
    residual_faces = [fc.facet for fc in analysis.classes if fc.residual]
    decomps = decomposition_candidates(pinned, residual_faces)
    splits = []
    if not singles and not decomps:
        if pinned.d == 2 or is_simplex(pinned.body):
            splits = spb_spi_candidates(pinned)
    return {"single_steps": singles, "decompositions": decomps,
            "splits": splits}


# ---------------------------------------------------------------------------
# Program cost
# ---------------------------------------------------------------------------

def cost_of(program: EquationProgram) -> CostVector:
    """Degree = the maximum growth over all branch guards and Reduce bodies
    (point counts as polynomials in the size parameter); fractal leaves
    contribute degree 1."""
    degree = 0
    pieces = 0
    for eq in program.equations:
        for br in eq.branches:
            pieces += 1
            if isinstance(br.expr, EmptyValue):
                continue
            degree = max(degree, _growth(br.guard))
            for node in _walk_expr(br.expr):
                if isinstance(node, Reduce):
                    degree = max(degree, _growth(node.body))
                elif isinstance(node, FractalLeaf):
                    degree = max(degree, 1)
    return CostVector(degree, pieces, 0)


def _walk_expr(expr: Expr):
    yield expr
    if isinstance(expr, (Combine, InverseCombine)):
        yield from _walk_expr(expr.left)
        yield from _walk_expr(expr.right)
