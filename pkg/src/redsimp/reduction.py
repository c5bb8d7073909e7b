"""The reduction data model: operators, affine write/read maps, derived
accumulation and reuse spaces, family factoring, axis canonicalization, and
re-embedding of bodies that carry equality constraints.

A reduction is  Y[write(z)] = op-fold over z in body of X[read(z)];  the
accumulation space is the kernel of the write map and the reuse space the
kernel of the read map.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction as Q
from typing import Optional, Sequence

from .numerics import (
    IntVec,
    LinearSubspace,
    ParamAffine,
    integer_kernel_basis,
    null_space,
    rank,
    subspace,
    sum_subspaces,
    unimodular_with_columns,
)
from .polyhedra import (
    Polyhedron,
    UnsupportedInputError,
    constraint,
    image,
    polyhedron,
)


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

class _Extreme:
    """Distinguished identity sentinels for max/min."""

    def __init__(self, label: str):
        self.label = label

    def __repr__(self) -> str:
        return self.label


NEG_INF = _Extreme("-inf")
POS_INF = _Extreme("+inf")


@dataclass(frozen=True)
class Operator:
    """An associative commutative reduction operator."""

    name: str
    identity: object
    has_inverse: bool
    idempotent: bool


SUM = Operator("sum", 0, True, False)
# Division by a zero value is unsound, so product defaults to non-invertible;
# a flag re-enables inversion for inputs guaranteed nonzero.
PRODUCT = Operator("product", 1, False, False)
PRODUCT_INVERTIBLE = Operator("product", 1, True, False)
MAX = Operator("max", NEG_INF, False, True)
MIN = Operator("min", POS_INF, False, True)

OPERATORS = {"sum": SUM, "product": PRODUCT, "max": MAX, "min": MIN}


def get_operator(name: str, product_invertible: bool = False) -> Operator:
    if name not in OPERATORS:
        raise UnsupportedInputError(f"unknown operator '{name}'")
    if name == "product" and product_invertible:
        return PRODUCT_INVERTIBLE
    return OPERATORS[name]


# ---------------------------------------------------------------------------
# Affine maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineMap:
    """z -> matrix.z + affine(params), with integer matrix entries."""

    matrix: tuple[IntVec, ...]
    affines: tuple[ParamAffine, ...]

    @property
    def out_dim(self) -> int:
        return len(self.matrix)

    @property
    def in_dim(self) -> int:
        return len(self.matrix[0]) if self.matrix else 0

    def kernel(self) -> LinearSubspace:
        return null_space([list(r) for r in self.matrix], self.in_dim)

    def apply_vector(self, v: Sequence) -> tuple:
        return tuple(sum(int(a) * x for a, x in zip(row, v)) for row in self.matrix)

    def apply_point(self, z: Sequence, env: Sequence) -> tuple:
        out = []
        for row, aff in zip(self.matrix, self.affines):
            val = aff.evaluate(env) + sum(Q(a) * Q(x) for a, x in zip(row, z))
            if val.denominator != 1:
                raise ValueError("map produced a non-integer index")
            out.append(int(val))
        return tuple(out)

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """self о inner."""
        if inner.out_dim != self.in_dim:
            raise ValueError("composition dimension mismatch")
        mat = tuple(
            tuple(sum(self.matrix[r][t] * inner.matrix[t][c] for t in range(self.in_dim))
                  for c in range(inner.in_dim))
            for r in range(self.out_dim)
        )
        affs = []
        for r in range(self.out_dim):
            acc = self.affines[r]
            for t in range(self.in_dim):
                acc = acc + inner.affines[t].scale(self.matrix[r][t])
            affs.append(acc)
        return AffineMap(mat, tuple(affs))

    def then_translate(self, delta: Sequence[int]) -> "AffineMap":
        return AffineMap(
            self.matrix,
            tuple(aff + ParamAffine.constant(int(d), aff.nparams)
                  for aff, d in zip(self.affines, delta)),
        )

    def key(self) -> tuple:
        return (self.matrix, tuple((a.coeffs, a.const) for a in self.affines))


def affine_map(matrix: Sequence[Sequence[int]], nparams: int = 1,
               affines: Optional[Sequence[ParamAffine]] = None) -> AffineMap:
    mat = tuple(tuple(int(x) for x in row) for row in matrix)
    if affines is None:
        affines = tuple(ParamAffine.constant(0, nparams) for _ in mat)
    return AffineMap(mat, tuple(affines))


def identity_map(dim: int, nparams: int = 1) -> AffineMap:
    return affine_map([[1 if j == i else 0 for j in range(dim)] for i in range(dim)],
                      nparams)


def projection_image(body: Polyhedron, m: AffineMap) -> Polyhedron:
    """Image polyhedron of the body under an affine map."""
    return image(body, m.matrix, m.affines)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Reduction:
    """Y[write(z)] = fold of op over z in body of source[read(z)]."""

    body: Polyhedron
    write: AffineMap
    read: AffineMap
    op: Operator
    acc_space: LinearSubspace
    reuse_space: LinearSubspace
    source: str = "X"

    @property
    def d(self) -> int:
        return self.body.dim

    @property
    def a(self) -> int:
        return self.acc_space.dim

    @property
    def r(self) -> int:
        return self.reuse_space.dim

    def answers(self) -> Polyhedron:
        return projection_image(self.body, self.write)

    def key(self) -> tuple:
        return (self.body.key(), self.write.key(), self.read.key(),
                self.op.name, self.op.has_inverse, self.source)


def make_reduction(body: Polyhedron, write: AffineMap, read: AffineMap,
                   op: Operator, source: str = "X") -> Reduction:
    if write.in_dim != body.dim or read.in_dim != body.dim:
        raise ValueError("map dimensions do not match the body")
    if body.is_empty():
        raise ValueError("reduction body is empty")
    acc = write.kernel()
    reuse = read.kernel()
    if acc.dim == 0:
        raise ValueError("write map is full rank: nothing to reduce")
    return Reduction(body, write, read, op, acc, reuse, source)


# ---------------------------------------------------------------------------
# Family factoring (a + r < d)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IndependentFamily:
    """A reduction viewed as independent instances over free dimensions.

    `transform` maps new coordinates w = (member dims, free dims) to original
    coordinates z = transform.w; the member reduction keeps the free
    coordinates as extra symbolic parameters (appended after the size
    parameter)."""

    member: Reduction
    free_count: int
    transform: tuple[IntVec, ...]  # unimodular, columns: member then free dirs
    original: Reduction

    @property
    def free_positions(self) -> tuple[int, ...]:
        s = self.original.d - self.free_count
        return tuple(range(s, self.original.d))


def _saturated_basis(space: LinearSubspace) -> list[IntVec]:
    if space.dim == 0:
        return []
    if space.dim == space.ambient:
        return [tuple(1 if j == i else 0 for j in range(space.ambient))
                for i in range(space.ambient)]
    complement = null_space([list(b) for b in space.basis], space.ambient)
    rows = [[int(x) for x in _integerize(b)] for b in complement.basis]
    return integer_kernel_basis(rows, space.ambient)


def _integerize(vec) -> IntVec:
    from .numerics import primitive_signed

    return primitive_signed(vec)


def factor_independent(r: Reduction):
    """When a + r < d, view the reduction as a family over the complement of
    span(A ∪ R); otherwise return the reduction unchanged."""
    span = sum_subspaces(r.acc_space, r.reuse_space)
    if span.dim == r.d:
        return r
    span_cols = _saturated_basis(span)
    u = unimodular_with_columns([list(c) for c in span_cols], r.d)
    if u is None:
        raise UnsupportedInputError("no unimodular completion for family factoring")
    s = span.dim
    f = r.d - s
    # z = U w; member coordinates are w[:s], free coordinates w[s:].
    member_body, member_write, member_read = _reindex_with_free(
        r, u, member_dims=s, free_dims=f)
    member = make_reduction(member_body, member_write, member_read, r.op, r.source)
    cols = tuple(tuple(u[i][j] for i in range(r.d)) for j in range(r.d))
    return IndependentFamily(member, f, cols, r)


def _reindex_with_free(r: Reduction, u: list[list[int]], member_dims: int,
                       free_dims: int):
    d = r.d
    old_np = r.body.nparams
    new_np = old_np + free_dims

    def widen(aff: ParamAffine, extra: Sequence[Q] = ()) -> ParamAffine:
        coeffs = list(aff.coeffs) + [Q(0)] * free_dims
        for k, v in enumerate(extra):
            coeffs[old_np + k] += Q(v)
        return ParamAffine(tuple(coeffs), aff.const)

    new_cons = []
    for c in r.body.constraints:
        # coefficients over w = U^T-composed: coeff'_j = sum_i c_i * U[i][j]
        coeffs = [sum(c.coeffs[i] * u[i][j] for i in range(d)) for j in range(d)]
        member_part = coeffs[:member_dims]
        free_part = coeffs[member_dims:]
        aff = widen(c.affine(), [Q(x) for x in free_part])
        new_cons.append(constraint(member_part, aff.coeffs, aff.const, c.is_eq))
    body = polyhedron(member_dims, new_cons, nparams=new_np,
                      plb=r.body.param_lower_bound)

    def remap(m: AffineMap) -> AffineMap:
        rows = []
        affs = []
        for row, aff in zip(m.matrix, m.affines):
            coeffs = [sum(row[i] * u[i][j] for i in range(d)) for j in range(d)]
            rows.append(tuple(coeffs[:member_dims]))
            affs.append(widen(aff, [Q(x) for x in coeffs[member_dims:]]))
        return AffineMap(tuple(rows), tuple(affs))

    return body, remap(r.write), remap(r.read)


# ---------------------------------------------------------------------------
# Axis canonicalization (reuse first, accumulation last)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChangeOfBasis:
    """Unimodular reindexing z = transform.w recorded for inverse application
    at code-emission time."""

    transform: tuple[IntVec, ...]

    def is_identity(self) -> bool:
        n = len(self.transform)
        return all(self.transform[i][j] == (1 if i == j else 0)
                   for i in range(n) for j in range(n))


def canonicalize_axes(r: Reduction) -> tuple[Reduction, ChangeOfBasis]:
    """Reindex so the reuse space spans the first r axes and the accumulation
    space the last a axes (requires a + r = d and trivial intersection)."""
    from .numerics import intersect_subspaces

    if r.a + r.r != r.d:
        raise UnsupportedInputError("canonicalization requires a + r = d")
    if intersect_subspaces(r.acc_space, r.reuse_space).dim != 0:
        raise UnsupportedInputError("accumulation and reuse spaces must not overlap")
    reuse_cols = _saturated_basis(r.reuse_space)
    acc_cols = _saturated_basis(r.acc_space)
    cols = [list(c) for c in reuse_cols + acc_cols]
    u = unimodular_with_columns(cols, r.d)
    if u is None:
        raise UnsupportedInputError("no unimodular completion for canonicalization")
    cob = ChangeOfBasis(tuple(tuple(u[i][j] for j in range(r.d)) for i in range(r.d)))
    if cob.is_identity():
        return r, cob
    body, write, read = _reindex_full(r, u)
    return make_reduction(body, write, read, r.op, r.source), cob


def _reindex_full(r: Reduction, u: list[list[int]]):
    d = r.d
    new_cons = []
    for c in r.body.constraints:
        coeffs = [sum(c.coeffs[i] * u[i][j] for i in range(d)) for j in range(d)]
        new_cons.append(constraint(coeffs, c.param_coeffs, c.const, c.is_eq))
    body = polyhedron(d, new_cons, nparams=r.body.nparams,
                      plb=r.body.param_lower_bound)

    def remap(m: AffineMap) -> AffineMap:
        rows = tuple(
            tuple(sum(row[i] * u[i][j] for i in range(d)) for j in range(d))
            for row in m.matrix
        )
        return AffineMap(rows, m.affines)

    return body, remap(r.write), remap(r.read)


# ---------------------------------------------------------------------------
# Equality elimination (re-embedding onto a lower-dimensional space)
# ---------------------------------------------------------------------------

def drop_equalities(r: Reduction) -> Reduction:
    """Re-embed a reduction whose body carries equality constraints into the
    lattice of its affine hull, composing the write/read maps with the
    embedding.  Integer points are preserved bijectively."""
    eqs = r.body.equalities
    if not eqs:
        return r
    d = r.d
    lin = [list(c.coeffs) for c in eqs]
    e = rank(lin)
    kernel_cols = integer_kernel_basis(lin, d)
    u = unimodular_with_columns([list(c) for c in kernel_cols], d)
    if u is None:
        raise UnsupportedInputError("no unimodular completion for re-embedding")
    keep = d - e
    # z = U (w, v); the equalities pin v as an affine function of the params.
    t_rows = []
    t_rhs = []
    for c in eqs:
        row = [sum(c.coeffs[i] * u[i][j] for i in range(d)) for j in range(d)]
        assert all(x == 0 for x in row[:keep])
        t_rows.append(row[keep:])
        t_rhs.append(-c.affine())
    pinned = _solve_affine_system(t_rows, t_rhs, e)
    if pinned is None:
        raise UnsupportedInputError("inconsistent equality system")

    nparams = r.body.nparams

    def embed_map() -> AffineMap:
        # w -> U(w, pinned): matrix columns from U[:, :keep], affine from the rest.
        rows = []
        affs = []
        for i in range(d):
            rows.append(tuple(u[i][j] for j in range(keep)))
            acc = ParamAffine.constant(0, nparams)
            for j in range(e):
                acc = acc + pinned[j].scale(u[i][keep + j])
            affs.append(acc)
        return AffineMap(tuple(rows), tuple(affs))

    emb = embed_map()
    new_cons = []
    for c in r.body.inequalities:
        coeffs = [sum(Q(c.coeffs[i]) * Q(emb.matrix[i][j]) for i in range(d))
                  for j in range(keep)]
        aff = c.affine()
        for i in range(d):
            aff = aff + emb.affines[i].scale(c.coeffs[i])
        new_cons.append(constraint(coeffs, aff.coeffs, aff.const))
    body = polyhedron(keep, new_cons, nparams=nparams, plb=r.body.param_lower_bound)
    write = r.write.compose(emb)
    read = r.read.compose(emb)
    # Direct construction: re-embedding may legitimately yield a full-rank
    # write (a single point per answer), which the caller treats as a leaf.
    return Reduction(body, write, read, r.op, write.kernel(), read.kernel(),
                     r.source)


def _solve_affine_system(mat: list[list[int]], rhs: list[ParamAffine],
                         nvars: int) -> Optional[list[ParamAffine]]:
    """Solve mat.v = rhs for v as affine forms of the parameters."""
    rows = [[Q(x) for x in row] for row in mat]
    vals = list(rhs)
    n = len(rows)
    piv_for_col: dict[int, int] = {}
    used = [False] * n
    for col in range(nvars):
        pr = next((t for t in range(n) if not used[t] and rows[t][col] != 0), None)
        if pr is None:
            continue
        used[pr] = True
        piv_for_col[col] = pr
        inv = Q(1) / rows[pr][col]
        rows[pr] = [x * inv for x in rows[pr]]
        vals[pr] = vals[pr].scale(inv)
        for t in range(n):
            if t != pr and rows[t][col] != 0:
                f = rows[t][col]
                rows[t] = [x - f * y for x, y in zip(rows[t], rows[pr])]
                vals[t] = vals[t] - vals[pr].scale(f)
    for t in range(n):
        if not used[t] and (any(x != 0 for x in rows[t]) or not vals[t].is_zero()):
            return None
    out = []
    for col in range(nvars):
        if col in piv_for_col:
            out.append(vals[piv_for_col[col]])
        else:
            out.append(ParamAffine.constant(0, rhs[0].nparams if rhs else 1))
    return out
