"""The program transformations: single-step simplification along a reuse
vector, reduction decomposition, split reduction, simplex-preserving strong
boundary / invariant (SPB/SPI) split construction, and recursive fractal
simplification of 2D triangles.

Single-step simplification is defined set-theoretically: translating the body
D along a reuse vector rho leaves an entry region D \\ (D + rho) contributing
with the operator and an exit region (D + rho) \\ D contributing with its
inverse (only where the exit maps to answers that are actually needed).
Semantic equivalence to the input reduction is the normative contract and is
enforced by the oracle in the test suite.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from fractions import Fraction as Q
from typing import Optional, Sequence

from .classify import FaceAnalysis, Labeling, analyze_face
from .numerics import (
    IntVec,
    LinearSubspace,
    ParamAffine,
    intersect_subspaces,
    null_space,
    primitive,
    subspace,
    sum_subspaces,
    unimodular_with_columns,
)
from .polyhedra import (
    Constraint,
    DegenerateSplitError,
    Face,
    FaceLattice,
    ParamVertex,
    Polyhedron,
    UnsupportedInputError,
    build_face_lattice,
    constraint,
    enumerate_vertices,
    image,
    is_simplex,
    polyhedron,
    preimage,
    set_difference,
    split_by_hyperplane,
)
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
from .reduction import (
    AffineMap,
    Reduction,
    affine_map,
    drop_equalities,
    identity_map,
    make_reduction,
    projection_image,
)

DEFAULT_FRACTAL_THRESHOLD = 4
MAX_STRIP_LAYERS = 6


class NonAdmissibleLabelingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Single-step simplification
# ---------------------------------------------------------------------------

@dataclass
class SingleStepParts:
    """The geometric pieces of one single-step simplification; entry and exit
    pieces carry their position in the difference decomposition so a plan
    derived on one twin of the reduction can be replayed on another."""

    reduction: Reduction
    rho: IntVec
    delta: IntVec
    answers: Polyhedron
    rec_guard: Polyhedron
    init_guards: list[Polyhedron]
    entry_pieces: list[tuple[int, Polyhedron]]
    exit_pieces: list[tuple[int, Polyhedron]]


def single_step_parts(r: Reduction, labeling: Labeling) -> SingleStepParts:
    from .polyhedra import set_difference_indexed

    rho = labeling.witness
    if not r.op.has_inverse and not labeling.admissible_without_inverse:
        raise NonAdmissibleLabelingError(
            "labeling puts a minus on a facet that is not a strong boundary")
    delta = r.write.apply_vector(rho)
    if all(x == 0 for x in delta):
        raise UnsupportedInputError(
            "reuse vector lies in the write kernel (reuse within one answer)")
    shifted = r.body.translate(rho)
    entry = set_difference_indexed(r.body, shifted)
    exit_raw = set_difference_indexed(shifted, r.body)
    answers = r.answers()
    exit_pieces = []
    for pos, piece in exit_raw:
        restricted = piece.intersect(
            preimage(answers, r.write.matrix, r.write.affines, r.d))
        if not restricted.is_empty():
            exit_pieces.append((pos, restricted))
    if exit_pieces and not r.op.has_inverse:
        raise NonAdmissibleLabelingError(
            "exit region reaches needed answers but the operator has no inverse")
    shift_ans = answers.translate(delta)
    rec_guard = answers.intersect(shift_ans)
    init_guards = [g for g in set_difference(answers, shift_ans).pieces
                   if not g.is_empty()]
    return SingleStepParts(r, rho, delta, answers, rec_guard, init_guards,
                           entry, exit_pieces)


def _reduce_expr(r: Reduction, piece: Polyhedron) -> Reduce:
    return Reduce(r.op, piece, r.write, r.read, r.source)


def _visible(piece: Polyhedron, r: Reduction, guard: Polyhedron) -> bool:
    return not projection_image(piece, r.write).intersect(guard).is_empty()


def assemble_single_step(r: Reduction, parts: SingleStepParts, var: str,
                         piece_expr) -> Equation:
    """Branch assembly shared by the plain public transformation and the
    engine's realization; `piece_expr(pos, piece, exit)` supplies the
    expression contributing one entry/exit piece."""
    branches: list[Branch] = []
    for g in parts.init_guards:
        expr: Optional[Expr] = None
        for pos, piece in parts.entry_pieces:
            if not _visible(piece, r, g):
                continue
            term = piece_expr(pos, piece, False)
            expr = term if expr is None else Combine(r.op, expr, term)
        if expr is None:
            raise AssertionError("initialization answers with no entry contribution")
        branches.append(Branch(g, expr))
    prev = identity_map(parts.answers.dim, r.body.nparams).then_translate(
        tuple(-x for x in parts.delta))
    expr = Ref(var, prev)
    for pos, piece in parts.entry_pieces:
        if _visible(piece, r, parts.rec_guard):
            expr = Combine(r.op, expr, piece_expr(pos, piece, False))
    for pos, piece in parts.exit_pieces:
        expr = InverseCombine(r.op, expr, piece_expr(pos, piece, True))
    branches.append(Branch(parts.rec_guard, expr))
    return Equation(var, parts.answers,
                    identity_map(parts.answers.dim, r.body.nparams),
                    tuple(branches), order_vector=parts.delta)


def single_step_simplify(r: Reduction, labeling: Labeling,
                         var: str = "Y") -> EquationProgram:
    """Rewrite the reduction as a recurrence along the labeling's witness plus
    residual reductions over the entry/exit facet strips."""
    parts = single_step_parts(r, labeling)
    eq = assemble_single_step(r, parts, var,
                              lambda pos, piece, is_exit: _reduce_expr(r, piece))
    return EquationProgram((eq,), output=var, inputs=(r.source,))


# ---------------------------------------------------------------------------
# Split reduction
# ---------------------------------------------------------------------------

def combine_source_branches(base: Polyhedron,
                            sources: Sequence[tuple[Polyhedron, Expr]],
                            op) -> list[Branch]:
    """Disjoint branches over `base` combining every source visible on each
    region (the k-piece generalization of the two-piece split equation)."""
    branches: list[Branch] = []
    regions: list[tuple[Polyhedron, tuple[int, ...]]] = [(base, ())]
    for idx, (ans, _) in enumerate(sources):
        nxt: list[tuple[Polyhedron, tuple[int, ...]]] = []
        for region, present in regions:
            inside = region.intersect(ans)
            if not inside.is_empty():
                nxt.append((inside, present + (idx,)))
            for piece in set_difference(region, ans).pieces:
                if not piece.is_empty():
                    nxt.append((piece, present))
        regions = nxt
    for region, present in regions:
        if not present:
            continue
        expr: Optional[Expr] = None
        for idx in present:
            term = sources[idx][1]
            expr = term if expr is None else Combine(op, expr, term)
        branches.append(Branch(region, expr))
    return branches


def split_reduction(r: Reduction, h: Constraint, var: str = "Y") -> EquationProgram:
    """Partition the body by a hyperplane and branch the answer equation over
    the projected pieces: overlapping answers combine both pieces."""
    piece1, piece2 = split_by_hyperplane(r.body, h)
    answers = r.answers()
    sources = [
        (projection_image(piece1, r.write), _reduce_expr(r, piece1)),
        (projection_image(piece2, r.write), _reduce_expr(r, piece2)),
    ]
    branches = combine_source_branches(answers, sources, r.op)
    eq = Equation(var, answers, identity_map(answers.dim, r.body.nparams),
                  tuple(branches))
    return EquationProgram((eq,), output=var, inputs=(r.source,))


# ---------------------------------------------------------------------------
# Reduction decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Decomposition:
    """f_p factored as f_p'' after f_p', with the inner reduction writing an
    intermediate variable consumed by the outer one."""

    inner: Reduction
    outer: Reduction
    inner_write: AffineMap      # f_p'
    outer_write: AffineMap      # f_p''
    section: AffineMap          # right inverse of f_p'


def _saturated_basis_cols(space: LinearSubspace) -> list[list[int]]:
    from .reduction import _saturated_basis

    return [list(c) for c in _saturated_basis(space)]


def decompose_reduction(r: Reduction, inner_acc: LinearSubspace,
                        intermediate: str = "Z") -> Decomposition:
    """Split the accumulation: the inner reduction accumulates along
    `inner_acc` into an intermediate variable, the outer reduces that."""
    if inner_acc.dim < 1 or inner_acc.dim >= r.a:
        raise ValueError("inner accumulation must be strictly inside the "
                         "accumulation space")
    if not r.acc_space.contains_subspace(inner_acc):
        raise ValueError("inner accumulation is not inside the accumulation space")
    d = r.d
    p = inner_acc.dim
    cols = _saturated_basis_cols(inner_acc)
    u = unimodular_with_columns(cols, d)
    if u is None:
        raise UnsupportedInputError("no unimodular completion for decomposition")
    from .numerics import _int_matrix_inverse

    uinv = _int_matrix_inverse(u)
    nparams = r.body.nparams
    f_prime = affine_map([uinv[t] for t in range(p, d)], nparams)
    section = affine_map([[u[i][p + t] for t in range(d - p)] for i in range(d)],
                         nparams)
    f_dprime = r.write.compose(section)
    inner = make_reduction(r.body, f_prime, r.read, r.op, r.source)
    outer_body = projection_image(r.body, f_prime)
    outer = make_reduction(outer_body, f_dprime,
                           identity_map(d - p, nparams), r.op, intermediate)
    return Decomposition(inner, outer, f_prime, f_dprime, section)


def choose_decomposition_targets(r: Reduction, residuals: Sequence[Face]) -> LinearSubspace:
    """Greedy inner accumulation from Lemma-style intersections: intersect the
    accumulation space with residual facet spaces while it stays nontrivial."""
    if r.a < 2:
        raise ValueError("decomposition needs at least two accumulation dimensions")
    if not residuals:
        raise ValueError("no residual facets to absorb")
    space = r.acc_space
    for face in residuals:
        cand = intersect_subspaces(space, face.linear_space())
        if cand.dim >= 1:
            space = cand
        if space.dim == 1:
            break
    if space.dim >= r.a:
        raise ValueError("residual facets did not cut the accumulation space")
    return space


def decomposition_candidates(r: Reduction, residuals: Sequence[Face]) -> list[LinearSubspace]:
    """All distinct inner accumulation spaces from intersecting the
    accumulation space with up to a-1 residual facet spaces."""
    if r.a < 2:
        return []
    seen: list[LinearSubspace] = []
    for size in range(1, r.a):
        for combo in itertools.combinations(range(len(residuals)), size):
            space = r.acc_space
            for idx in combo:
                space = intersect_subspaces(space, residuals[idx].linear_space())
            if 1 <= space.dim < r.a and not any(
                    space.basis == s.basis for s in seen):
                seen.append(space)
    return seen


# ---------------------------------------------------------------------------
# SPB / SPI split candidates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitCandidate:
    hyperplane: Constraint
    kind: str  # 'SPB' | 'SPI'
    through_face: Face


def _face_interior_point(face: Face) -> ParamVertex:
    verts = enumerate_vertices(face.as_polyhedron())
    n = len(verts)
    coords = []
    for t in range(len(verts[0])):
        acc = ParamAffine.constant(0, verts[0][t].nparams)
        for v in verts:
            acc = acc + v[t]
        coords.append(acc.scale(Q(1, n)))
    return tuple(coords)


def _hyperplane_through(face: Face, space: LinearSubspace,
                        body: Polyhedron) -> Optional[Constraint]:
    h = face.linear_space()
    span = sum_subspaces(h, space)
    if span.dim != body.dim - 1:
        return None
    normal_space = null_space([list(b) for b in span.basis], body.dim)
    if normal_space.dim != 1:
        return None
    normal = primitive(normal_space.basis[0])
    point = _face_interior_point(face)
    val = ParamAffine.constant(0, body.nparams)
    for coord, coef in zip(point, normal):
        val = val + coord.scale(coef)
    return constraint(normal, [-c for c in val.coeffs], -val.const, is_eq=True)


def spb_spi_candidates(r: Reduction,
                       lattice: Optional[FaceLattice] = None) -> list[SplitCandidate]:
    """Splitting hyperplanes obtained by extending a (d-2)-face along the
    accumulation space (SPB) or the reuse space (SPI); only hyperplanes that
    strictly separate the body are kept."""
    if lattice is None:
        lattice = build_face_lattice(r.body)
    d = r.body.affine_hull_dim()
    out: list[SplitCandidate] = []
    seen: set = set()
    for face in lattice.faces_by_dim.get(d - 2, []):
        for kind, space in (("SPB", r.acc_space), ("SPI", r.reuse_space)):
            h = _hyperplane_through(face, space, r.body)
            if h is None or (h.coeffs, h.param_coeffs, h.const) in seen:
                continue
            try:
                split_by_hyperplane(r.body, h)
            except DegenerateSplitError:
                continue
            seen.add((h.coeffs, h.param_coeffs, h.const))
            out.append(SplitCandidate(h, kind, face))
    out.sort(key=lambda c: (c.kind, c.hyperplane.coeffs, c.hyperplane.param_coeffs,
                            c.hyperplane.const))
    return out


# ---------------------------------------------------------------------------
# Strip layering (entry/exit regions to lower-dimensional reductions)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmbeddedPiece:
    """A strip piece re-embedded onto its affine hull."""

    body: Polyhedron
    write: AffineMap
    read: AffineMap


def strip_layers(piece: Polyhedron, write: AffineMap, read: AffineMap) -> list[EmbeddedPiece]:
    """Turn a facet strip into one embedded piece per unit-width lattice
    layer, composing the maps with the embedding."""
    if piece.equalities:
        return [_embed(piece, write, read)]
    pair = _constant_width_pair(piece)
    if pair is None:
        return [EmbeddedPiece(piece, write, read)]
    low, width = pair
    out = []
    for t in range(width + 1):
        layer_eq = constraint(low.coeffs, low.param_coeffs, low.const - t, is_eq=True)
        layer = piece.with_constraints([layer_eq])
        if not layer.is_empty():
            out.append(_embed(layer, write, read))
    return out


def _constant_width_pair(piece: Polyhedron) -> Optional[tuple[Constraint, int]]:
    ineqs = piece.inequalities
    best: Optional[tuple[Constraint, int]] = None
    for a, b in itertools.combinations(ineqs, 2):
        if a.coeffs != tuple(-x for x in b.coeffs):
            continue
        if any(pa + pb != 0 for pa, pb in zip(a.param_coeffs, b.param_coeffs)):
            continue
        width = a.const + b.const
        if 0 <= width <= MAX_STRIP_LAYERS and (best is None or width < best[1]):
            # a bounds the form below (form >= -a.const); layer along it.
            best = (a, width)
    return best


def _embed(body: Polyhedron, write: AffineMap, read: AffineMap) -> EmbeddedPiece:
    from .reduction import SUM, Reduction

    probe = Reduction(body, write, read, SUM, write.kernel(), read.kernel())
    embedded = drop_equalities(probe)
    return EmbeddedPiece(embedded.body, embedded.write, embedded.read)


# ---------------------------------------------------------------------------
# 2D fractal simplification of triangles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScanSpec:
    piece: Polyhedron
    direction: int  # +1 forward along the reuse axis, -1 backward


@dataclass(frozen=True)
class FractalNode:
    """Self-similar recursion on a triangle with an uncovered corner: at each
    level two axis cuts peel off two right triangles (a backward and a
    forward scan) and leave a homothetically scaled copy."""

    corner: ParamVertex
    v1: ParamVertex
    v2: ParamVertex
    scale: Q
    scale_exact: bool
    threshold: int
    triangle: Polyhedron
    region: Polyhedron
    write: AffineMap
    read: AffineMap
    source: str
    op: object
    cut_axis: int
    corner_low: bool
    forward_scan: Optional[ScanSpec]
    backward_scan: Optional[ScanSpec]


@dataclass(frozen=True)
class ScanCase:
    labeling: Labeling


@dataclass(frozen=True)
class SplitCase:
    """One axis-parallel cut through the vertex where the two anchor
    constraints meet (constraints name the vertex so the cut can be replayed
    on an unpinned twin of the analyzed body)."""

    cut_axis: int
    anchor: tuple[Constraint, Constraint]
    kind: str


@dataclass(frozen=True)
class FractalCase:
    """Uncovered-corner recursion: corner = res_near ∩ res_far; the first cut
    runs through the far vertex on res_near, the second through that line's
    crossing of res_far."""

    non_res: Constraint
    res_near: Constraint
    res_far: Constraint
    cut_axis: int
    corner_low: bool


TriangleCase = object


def axis_cut(point: ParamVertex, axis: int, nparams: int) -> Constraint:
    """The hyperplane {x_axis = point[axis]} (canonical sign: positive axis
    coefficient)."""
    coeffs = [0, 0]
    coeffs[axis] = 1
    aff = point[axis]
    return constraint(coeffs, [-c for c in aff.coeffs], -aff.const, is_eq=True)


def oriented_split(body: Polyhedron, cut: Constraint,
                   boundary_low: bool) -> tuple[Polyhedron, Polyhedron]:
    """Partition into (low, high) pieces of the cut hyperplane; the lattice
    points on the cut itself go to the low piece when `boundary_low`."""
    if boundary_low:
        low = body.with_constraints([constraint(
            [-c for c in cut.coeffs], [-c for c in cut.param_coeffs], -cut.const)])
        high = body.with_constraints([constraint(
            cut.coeffs, cut.param_coeffs, cut.const - 1)])
    else:
        low = body.with_constraints([constraint(
            [-c for c in cut.coeffs], [-c for c in cut.param_coeffs],
            -cut.const - 1)])
        high = body.with_constraints([constraint(
            cut.coeffs, cut.param_coeffs, cut.const)])
    if low.is_empty() or high.is_empty():
        raise DegenerateSplitError(f"hyperplane {cut} does not separate the set")
    return low, high


def solve_vertex(a: Constraint, b: Constraint) -> ParamVertex:
    from .polyhedra import _solve_param_system

    sol = _solve_param_system([a.coeffs, b.coeffs], [-a.affine(), -b.affine()], 2)
    if sol is None:
        raise UnsupportedInputError("anchor constraints do not meet in a vertex")
    return sol


def is_corner_covered(v0: ParamVertex, v1: ParamVertex, v2: ParamVertex,
                      axis: str) -> bool:
    """True iff v0's projection on the axis lies weakly between v1's and
    v2's (comparison under the sufficiently-large-parameter convention)."""
    coord = 1 if axis == "vertical" else 0
    a = v0[coord].cmp_for_large(v1[coord])
    b = v0[coord].cmp_for_large(v2[coord])
    if a is None or b is None:
        raise UnsupportedInputError("corner comparison needs a pinned instance")
    if a == 0 or b == 0:
        return True
    return a != b


def _axis_kind(c: Constraint) -> Optional[str]:
    if c.coeffs[1] == 0 and c.coeffs[0] != 0:
        return "vertical"
    if c.coeffs[0] == 0 and c.coeffs[1] != 0:
        return "horizontal"
    return None


def _vertex_of(cons_a: Constraint, cons_b: Constraint,
               nparams: int) -> Optional[ParamVertex]:
    from .polyhedra import _solve_param_system

    mat = [cons_a.coeffs, cons_b.coeffs]
    rhs = [-cons_a.affine(), -cons_b.affine()]
    return _solve_param_system(mat, rhs, 2)


def _line_through(point: ParamVertex, axis: int, nparams: int) -> Constraint:
    """The axis-parallel hyperplane {x_axis = point[axis]} as an equality."""
    coeffs = [0, 0]
    coeffs[axis] = 1
    aff = point[axis]
    return constraint(coeffs, [-c for c in aff.coeffs], -aff.const, is_eq=True)


def analyze_triangle(r: Reduction, analysis: FaceAnalysis) -> TriangleCase:
    """Case analysis for a canonical 2D triangle (reuse along axis 0,
    accumulation along axis 1)."""
    classes = analysis.classes
    residual_idx = [i for i, fc in enumerate(classes) if fc.residual]
    cons = [_facet_constraint(r.body, fc.facet, analysis.face)
            for fc in classes]
    if len(residual_idx) == 1:
        labeling = _forced_scan_labeling(r, analysis, residual_idx[0])
        return ScanCase(labeling)
    if len(residual_idx) == 3:
        # No axis-parallel edge: cut vertically through the x0-middle vertex,
        # leaving two triangles with two residual edges each.
        mid_anchor = _middle_vertex_anchor(r.body, cons)
        return SplitCase(0, mid_anchor, "SPB")
    if len(residual_idx) != 2:
        raise UnsupportedInputError(
            f"triangle with {len(residual_idx)} residual edges")
    res_a, res_b = (cons[i] for i in residual_idx)
    other_idx = next(i for i in range(len(classes)) if i not in residual_idx)
    other = cons[other_idx]
    axis = _axis_kind(other)
    if axis is None:
        raise UnsupportedInputError("non-residual edge is not axis aligned")
    corner = _vertex_of(res_a, res_b, r.body.nparams)
    if corner is None:
        raise UnsupportedInputError("residual edges do not meet in a vertex")
    verts = enumerate_vertices(r.body)
    others = [v for v in verts if not _same_vertex(v, corner)]
    if len(others) != 2:
        raise UnsupportedInputError("degenerate triangle")
    if is_corner_covered(corner, others[0], others[1], axis):
        # Vertical non-residual edge: cut horizontally through the corner
        # (an SPI split, the cut's kernel is the reuse axis); mirrored otherwise.
        cut_axis = 1 if axis == "vertical" else 0
        return SplitCase(cut_axis, (res_a, res_b),
                         "SPI" if cut_axis == 1 else "SPB")
    cut_axis = 0 if axis == "vertical" else 1
    other_axis = 1 - cut_axis
    d0 = others[0][other_axis] - corner[other_axis]
    d1 = others[1][other_axis] - corner[other_axis]
    s0, s1 = d0.sign_for_large(), d1.sign_for_large()
    if s0 is None or s1 is None or s0 != s1:
        raise UnsupportedInputError("fractal geometry needs a pinned instance")
    cmp = (d0 - d1).sign_for_large()
    if cmp is None or cmp == 0:
        raise UnsupportedInputError("fractal geometry needs a pinned instance")
    near_vertex = others[0] if (cmp < 0) == (s0 > 0) else others[1]
    res_near = _edge_through(res_a, res_b, corner, near_vertex, r.body.nparams)
    res_far = res_b if res_near is res_a else res_a
    crossing = _solve_edge_at(res_far, other_axis, near_vertex[other_axis],
                              r.body.nparams)
    corner_side = (corner[cut_axis] - crossing[cut_axis]).sign_for_large()
    if corner_side is None or corner_side == 0:
        raise UnsupportedInputError("degenerate fractal cut")
    return FractalCase(other, res_near, res_far, cut_axis, corner_side < 0)


def _middle_vertex_anchor(body: Polyhedron,
                          cons: list[Constraint]) -> tuple[Constraint, Constraint]:
    found: list[tuple[tuple[Constraint, Constraint], ParamVertex]] = []
    for a, b in itertools.combinations(cons, 2):
        v = _vertex_of(a, b, body.nparams)
        if v is None:
            continue
        ok = True
        for c in body.constraints:
            val = c.affine()
            for coord, coef in zip(v, c.coeffs):
                val = val + coord.scale(coef)
            s = val.sign_for_large()
            if s is None or (c.is_eq and s != 0) or (not c.is_eq and s < 0):
                ok = False
                break
        if ok:
            found.append(((a, b), v))
    if len(found) < 3:
        raise UnsupportedInputError("no vertices found for a three-way split")
    found.sort(key=lambda item: (item[1][0].coeffs, item[1][0].const))
    return found[len(found) // 2][0]


def _same_vertex(a: ParamVertex, b: ParamVertex) -> bool:
    return all((x - y).is_zero() for x, y in zip(a, b))


def _facet_constraint(body: Polyhedron, facet: Face, parent: Face) -> Constraint:
    new = sorted(facet.saturated - parent.saturated)
    idx = next(i for i in new if not body.constraints[i].is_eq)
    return body.constraints[idx]


def _forced_scan_labeling(r: Reduction, analysis: FaceAnalysis,
                          residual_pos: int) -> Labeling:
    from .classify import admissible_labelings

    usable = [l for l in admissible_labelings(r, analysis.labelings, analysis.classes)
              if any(x != 0 for x in r.write.apply_vector(l.witness))]
    if not usable:
        raise UnsupportedInputError("no admissible scan labeling on a right triangle")
    for l in usable:
        if l.signs[residual_pos] > 0:
            return l
    return usable[0]


def _edge_through(res_a: Constraint, res_b: Constraint, corner: ParamVertex,
                  vertex: ParamVertex, nparams: int) -> Constraint:
    for c in (res_a, res_b):
        val = c.affine()
        for coord, coef in zip(vertex, c.coeffs):
            val = val + coord.scale(coef)
        if val.sign_for_large() == 0:
            return c
    raise UnsupportedInputError("no residual edge through the far vertex")


def _solve_edge_at(edge: Constraint, fixed_axis: int, fixed_value: ParamAffine,
                   nparams: int) -> ParamVertex:
    free_axis = 1 - fixed_axis
    if edge.coeffs[free_axis] == 0:
        raise UnsupportedInputError("residual edge parallel to the cut")
    rest = edge.affine() + fixed_value.scale(edge.coeffs[fixed_axis])
    free_val = rest.scale(Q(-1, edge.coeffs[free_axis]))
    coords: list[ParamAffine] = [None, None]  # type: ignore[list-item]
    coords[fixed_axis] = fixed_value
    coords[free_axis] = free_val
    return tuple(coords)


@dataclass(frozen=True)
class FractalGeometry:
    corner: ParamVertex
    near: ParamVertex        # V1, the far-edge vertex taking the first cut
    far: ParamVertex         # V2
    crossing: ParamVertex    # V2' on the far residual edge
    outer_cut: Constraint    # recursion boundary along cut_axis
    inner_cut: Constraint    # separates the two scan pieces


def fractal_geometry(body: Polyhedron, case: FractalCase,
                     non_res: Constraint, res_near: Constraint,
                     res_far: Constraint) -> FractalGeometry:
    """Replay the fractal construction from the anchoring constraints (on the
    analyzed body or an unpinned twin with corresponding constraints)."""
    nparams = body.nparams
    other_axis = 1 - case.cut_axis
    corner = solve_vertex(res_near, res_far)
    near = solve_vertex(non_res, res_near)
    far = solve_vertex(non_res, res_far)
    crossing = _solve_edge_at(res_far, other_axis, near[other_axis], nparams)
    outer_cut = axis_cut(crossing, case.cut_axis, nparams)
    inner_cut = axis_cut(near, other_axis, nparams)
    return FractalGeometry(corner, near, far, crossing, outer_cut, inner_cut)


def build_fractal_node(r: Reduction, case: FractalCase, geo: FractalGeometry,
                       threshold: int, region: Polyhedron,
                       forward: Optional[ScanSpec],
                       backward: Optional[ScanSpec]) -> FractalNode:
    scale, exact = _similarity_scale(geo.corner, geo.near, geo.far,
                                     geo.crossing, case.cut_axis)
    return FractalNode(
        corner=geo.corner, v1=geo.near, v2=geo.far, scale=scale,
        scale_exact=exact, threshold=max(threshold, 2), triangle=r.body,
        region=region, write=r.write, read=r.read, source=r.source, op=r.op,
        cut_axis=case.cut_axis, corner_low=case.corner_low,
        forward_scan=forward, backward_scan=backward,
    )


def _similarity_scale(corner: ParamVertex, v1: ParamVertex, v2: ParamVertex,
                      crossing: ParamVertex, cut_axis: int) -> tuple[Q, bool]:
    num = crossing[cut_axis] - corner[cut_axis]
    den = v1[cut_axis] - corner[cut_axis]
    # ratio num/den when proportional as affine forms
    cross = None
    if all(c == 0 for c in den.coeffs) and den.const != 0:
        if all(c == 0 for c in num.coeffs):
            return (num.const / den.const, True)
        return (_probe_ratio(num, den), False)
    for nc, dc in zip(num.coeffs + (num.const,), den.coeffs + (den.const,)):
        if dc != 0:
            ratio = Q(nc) / Q(dc)
            if all(n == ratio * d for n, d in
                   zip(num.coeffs + (num.const,), den.coeffs + (den.const,))):
                return (ratio, True)
            break
    return (_probe_ratio(num, den), False)


def _probe_ratio(num: ParamAffine, den: ParamAffine) -> Q:
    from .polyhedra import STABILITY_PROBES

    env = [STABILITY_PROBES[0]] + [0] * (num.nparams - 1)
    d = den.evaluate(env)
    return num.evaluate(env) / d if d != 0 else Q(0)


# ---------------------------------------------------------------------------
# Standalone driver: full fractal simplification of a triangle reduction
# ---------------------------------------------------------------------------

def fractal_simplify(r: Reduction, threshold: int = DEFAULT_FRACTAL_THRESHOLD,
                     var: str = "Y") -> EquationProgram:
    """Simplify a canonical 2D triangle reduction to O(1) operator
    applications per answer: scans for right triangles, one corner cut for
    covered corners, and the recursive fractal scheme otherwise."""
    from .engine import simplify_max  # late import: the engine drives realize

    plan, program, _cost = simplify_max(r, fractal_threshold=threshold,
                                        output=var, require_triangle=True)
    return program
