"""Exact rational linear algebra: vectors, matrices, subspaces, parametric
affine forms, integer lattice utilities, and sign-constrained feasibility.

Everything here is exact.  Scalars are ``fractions.Fraction`` (aliased ``Q``),
vectors and matrices are plain tuples, and all decision procedures (rank,
kernels, feasibility) admit no rounding of any kind.  Fixed-width overflow is
impossible by construction; Python integers are unbounded.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Iterable, Optional, Sequence

Q = Fraction

Vec = tuple[Q, ...]
Mat = tuple[Vec, ...]
IntVec = tuple[int, ...]


def qv(*entries) -> Vec:
    """Build a rational vector from ints / fractions / strings."""
    return tuple(Q(e) for e in entries)


def qm(*rows) -> Mat:
    """Build a rational matrix from row iterables."""
    return tuple(tuple(Q(e) for e in row) for row in rows)


def zeros(n: int) -> Vec:
    return (Q(0),) * n


def dot(u: Sequence, v: Sequence) -> Q:
    if len(u) != len(v):
        raise ValueError(f"dot of lengths {len(u)} and {len(v)}")
    return sum((Q(a) * Q(b) for a, b in zip(u, v)), Q(0))


def vec_add(u: Vec, v: Vec) -> Vec:
    return tuple(a + b for a, b in zip(u, v))


def vec_sub(u: Vec, v: Vec) -> Vec:
    return tuple(a - b for a, b in zip(u, v))


def vec_scale(u: Vec, s) -> Vec:
    s = Q(s)
    return tuple(a * s for a in u)


def is_zero_vec(u: Sequence) -> bool:
    return all(Q(a) == 0 for a in u)


def mat_vec(m: Mat, v: Sequence) -> Vec:
    return tuple(dot(row, v) for row in m)


def primitive_signed(v: Sequence) -> IntVec:
    """Scale a rational vector to coprime integers, preserving orientation."""
    fracs = [Q(a) for a in v]
    if all(a == 0 for a in fracs):
        return tuple(0 for _ in fracs)
    denom_lcm = 1
    for a in fracs:
        denom_lcm = denom_lcm * a.denominator // gcd(denom_lcm, a.denominator)
    ints = [int(a * denom_lcm) for a in fracs]
    g = 0
    for a in ints:
        g = gcd(g, abs(a))
    return tuple(a // g for a in ints)


def primitive(v: Sequence) -> IntVec:
    """Scale a rational vector to coprime integers with the first nonzero
    component positive.  The zero vector maps to itself.

    Canonical representatives make labelings and hyperplanes deduplicable.
    """
    ints = primitive_signed(v)
    lead = next((a for a in ints if a != 0), 0)
    if lead < 0:
        ints = tuple(-a for a in ints)
    return ints


def _rref(rows: list[list[Q]]) -> tuple[list[list[Q]], list[int]]:
    """Reduced row echelon form; returns (rows, pivot column indices)."""
    rows = [list(r) for r in rows]
    nrows = len(rows)
    ncols = len(rows[0]) if nrows else 0
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        pivot_row = next((i for i in range(r, nrows) if rows[i][c] != 0), None)
        if pivot_row is None:
            continue
        rows[r], rows[pivot_row] = rows[pivot_row], rows[r]
        inv = Q(1) / rows[r][c]
        rows[r] = [x * inv for x in rows[r]]
        for i in range(nrows):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == nrows:
            break
    return rows[:r], pivots


def rank(m: Sequence[Sequence]) -> int:
    rows = [[Q(x) for x in row] for row in m]
    if not rows:
        return 0
    reduced, pivots = _rref(rows)
    return len(pivots)


@dataclass(frozen=True)
class LinearSubspace:
    """A linear subspace of Q^ambient, stored with an RREF-canonical basis.

    Two subspaces are equal iff they span the same space; the canonical basis
    makes that a structural comparison.
    """

    basis: Mat
    ambient: int

    @property
    def dim(self) -> int:
        return len(self.basis)

    def contains(self, v: Sequence) -> bool:
        if len(v) != self.ambient:
            raise ValueError("ambient dimension mismatch")
        residual = [Q(x) for x in v]
        for row in self.basis:
            lead = next(i for i in range(self.ambient) if row[i] != 0)
            if residual[lead] != 0:
                f = residual[lead] / row[lead]
                residual = [x - f * y for x, y in zip(residual, row)]
        return all(x == 0 for x in residual)

    def contains_subspace(self, other: "LinearSubspace") -> bool:
        return all(self.contains(b) for b in other.basis)


def subspace(vectors: Iterable[Sequence], ambient: int) -> LinearSubspace:
    rows = [[Q(x) for x in v] for v in vectors]
    rows = [r for r in rows if any(x != 0 for x in r)]
    if not rows:
        return LinearSubspace((), ambient)
    reduced, _ = _rref(rows)
    return LinearSubspace(tuple(tuple(r) for r in reduced), ambient)


def full_space(n: int) -> LinearSubspace:
    return subspace([[Q(1) if j == i else Q(0) for j in range(n)] for i in range(n)], n)


def trivial_space(n: int) -> LinearSubspace:
    return LinearSubspace((), n)


def null_space(m: Sequence[Sequence], ambient: Optional[int] = None) -> LinearSubspace:
    """Basis of {x : m x = 0}.  An empty matrix yields the full space.

    Satisfies rank(m) + dim(null_space(m)) = ambient.
    """
    rows = [[Q(x) for x in row] for row in m]
    if ambient is None:
        if not rows:
            raise ValueError("ambient dimension required for an empty matrix")
        ambient = len(rows[0])
    if not rows:
        return full_space(ambient)
    reduced, pivots = _rref(rows)
    free_cols = [c for c in range(ambient) if c not in pivots]
    basis = []
    for fc in free_cols:
        v = [Q(0)] * ambient
        v[fc] = Q(1)
        for r, pc in zip(reduced, pivots):
            v[pc] = -r[fc]
        basis.append(v)
    return subspace(basis, ambient)


def intersect_subspaces(u: LinearSubspace, v: LinearSubspace) -> LinearSubspace:
    """Basis of u ∩ v via the kernel of the stacked basis [Bu | -Bv]."""
    if u.ambient != v.ambient:
        raise ValueError("ambient dimension mismatch")
    if u.dim == 0 or v.dim == 0:
        return trivial_space(u.ambient)
    # Columns are coefficients (alpha, beta) with Bu^T alpha = Bv^T beta.
    ncols = u.dim + v.dim
    rows = []
    for coord in range(u.ambient):
        rows.append([u.basis[i][coord] for i in range(u.dim)]
                    + [-v.basis[j][coord] for j in range(v.dim)])
    ker = null_space(rows, ncols)
    vectors = []
    for coeff in ker.basis:
        vec = [Q(0)] * u.ambient
        for i in range(u.dim):
            vec = [x + coeff[i] * y for x, y in zip(vec, u.basis[i])]
        vectors.append(vec)
    return subspace(vectors, u.ambient)


def sum_subspaces(u: LinearSubspace, v: LinearSubspace) -> LinearSubspace:
    if u.ambient != v.ambient:
        raise ValueError("ambient dimension mismatch")
    return subspace(list(u.basis) + list(v.basis), u.ambient)


def subspaces_equal(u: LinearSubspace, v: LinearSubspace) -> bool:
    return u.contains_subspace(v) and v.contains_subspace(u)


def solve(m: Sequence[Sequence], rhs: Sequence) -> Optional[Vec]:
    """One exact solution of m x = rhs, or None if inconsistent.

    Free variables are set to zero.
    """
    rows = [[Q(x) for x in row] + [Q(b)] for row, b in zip(m, rhs)]
    if not rows:
        return ()
    ncols = len(rows[0]) - 1
    reduced, pivots = _rref(rows)
    for row in reduced:
        if all(x == 0 for x in row[:-1]) and row[-1] != 0:
            return None
    x = [Q(0)] * ncols
    for row, pc in zip(reduced, pivots):
        if pc == ncols:
            return None
        x[pc] = row[-1]
    return tuple(x)


# ---------------------------------------------------------------------------
# Parametric affine forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamAffine:
    """An affine form c0 + sum_k coeffs[k] * param_k, exact rationals.

    Parameter 0 is always the size parameter.  Extra parameters appear when a
    reduction family is analyzed with its independent dimensions held
    symbolic; ordering questions are only decidable once at most the size
    parameter remains (`sign_for_large`).
    """

    coeffs: tuple[Q, ...]
    const: Q

    @staticmethod
    def constant(c, nparams: int = 1) -> "ParamAffine":
        return ParamAffine((Q(0),) * nparams, Q(c))

    @staticmethod
    def param(k: int = 0, nparams: int = 1, scale=1) -> "ParamAffine":
        coeffs = [Q(0)] * nparams
        coeffs[k] = Q(scale)
        return ParamAffine(tuple(coeffs), Q(0))

    @property
    def nparams(self) -> int:
        return len(self.coeffs)

    def __add__(self, other):
        other = _coerce(other, self.nparams)
        return ParamAffine(tuple(a + b for a, b in zip(self.coeffs, other.coeffs)),
                           self.const + other.const)

    def __sub__(self, other):
        other = _coerce(other, self.nparams)
        return ParamAffine(tuple(a - b for a, b in zip(self.coeffs, other.coeffs)),
                           self.const - other.const)

    def __neg__(self):
        return ParamAffine(tuple(-a for a in self.coeffs), -self.const)

    def scale(self, s) -> "ParamAffine":
        s = Q(s)
        return ParamAffine(tuple(a * s for a in self.coeffs), self.const * s)

    def is_zero(self) -> bool:
        return self.const == 0 and all(a == 0 for a in self.coeffs)

    def evaluate(self, values: Sequence) -> Q:
        if len(values) != self.nparams:
            raise ValueError("parameter count mismatch")
        return self.const + sum((a * Q(v) for a, v in zip(self.coeffs, values)), Q(0))

    def substitute_param(self, k: int, replacement: "ParamAffine") -> "ParamAffine":
        """Replace parameter k by an affine form over the same parameter list
        (whose k-th coefficient must be zero)."""
        if replacement.coeffs[k] != 0:
            raise ValueError("substitution must eliminate the parameter")
        c = self.coeffs[k]
        base = ParamAffine(tuple(a if i != k else Q(0) for i, a in enumerate(self.coeffs)),
                           self.const)
        return base + replacement.scale(c)

    def sign_for_large(self) -> Optional[int]:
        """Sign for all sufficiently large values of parameter 0, or None if
        extra parameters make the question ill-posed."""
        if any(a != 0 for a in self.coeffs[1:]):
            return None
        lead = self.coeffs[0]
        if lead > 0:
            return 1
        if lead < 0:
            return -1
        return (self.const > 0) - (self.const < 0)

    def cmp_for_large(self, other) -> Optional[int]:
        return (self - _coerce(other, self.nparams)).sign_for_large()


def _coerce(x, nparams: int) -> ParamAffine:
    if isinstance(x, ParamAffine):
        if x.nparams != nparams:
            raise ValueError("parameter count mismatch")
        return x
    return ParamAffine.constant(Q(x), nparams)


# ---------------------------------------------------------------------------
# Integer lattice utilities
# ---------------------------------------------------------------------------

def _column_hnf(m: list[list[int]]) -> tuple[list[list[int]], list[list[int]]]:
    """Column-style Hermite reduction: returns (h, g) with m @ g = h, where g
    is unimodular and h has its nonzero columns first in echelon form."""
    nrows = len(m)
    ncols = len(m[0]) if nrows else 0
    h = [list(row) for row in m]
    g = [[1 if i == j else 0 for j in range(ncols)] for i in range(ncols)]

    def col(j):
        return [h[i][j] for i in range(nrows)]

    def combine_cols(j, k, a, b, c, d):
        # (col_j, col_k) <- (a*col_j + b*col_k, c*col_j + d*col_k)
        for mat, rows in ((h, nrows), (g, ncols)):
            for i in range(rows):
                x, y = mat[i][j], mat[i][k]
                mat[i][j] = a * x + b * y
                mat[i][k] = c * x + d * y

    pivot_col = 0
    for row in range(nrows):
        if pivot_col >= ncols:
            break
        nz = [j for j in range(pivot_col, ncols) if h[row][j] != 0]
        if not nz:
            continue
        j0 = nz[0]
        for j in nz[1:]:
            a, b = h[row][j0], h[row][j]
            g0 = _ext_gcd(a, b)
            u, v, gg = g0
            # new col j0 gets gcd, col j gets zero
            combine_cols(j0, j, u, v, -(b // gg), a // gg)
        if j0 != pivot_col:
            for mat, rows in ((h, nrows), (g, ncols)):
                for i in range(rows):
                    mat[i][j0], mat[i][pivot_col] = mat[i][pivot_col], mat[i][j0]
        if h[row][pivot_col] < 0:
            for mat, rows in ((h, nrows), (g, ncols)):
                for i in range(rows):
                    mat[i][pivot_col] = -mat[i][pivot_col]
        pivot_col += 1
    return h, g


def _ext_gcd(a: int, b: int) -> tuple[int, int, int]:
    """(u, v, g) with u*a + v*b = g = gcd(a, b), g > 0."""
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r != 0:
        qt = old_r // r
        old_r, r = r, old_r - qt * r
        old_s, s = s, old_s - qt * s
        old_t, t = t, old_t - qt * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_s, old_t, old_r


def integer_kernel_basis(m: Sequence[Sequence[int]], ncols: int) -> list[IntVec]:
    """Lattice basis of {x in Z^ncols : m x = 0}.  Kernel lattices are
    saturated, so the result is also a rational basis of the kernel."""
    rows = [list(int(x) for x in row) for row in m]
    if not rows:
        return [tuple(1 if j == i else 0 for j in range(ncols)) for i in range(ncols)]
    h, g = _column_hnf(rows)
    r = rank(rows)
    return [tuple(g[i][j] for i in range(ncols)) for j in range(r, ncols)]


def _int_matrix_inverse(m: list[list[int]]) -> list[list[int]]:
    """Inverse of a unimodular integer matrix, exact."""
    n = len(m)
    aug = [[Q(m[i][j]) for j in range(n)] + [Q(1) if j == i else Q(0) for j in range(n)]
           for i in range(n)]
    reduced, pivots = _rref(aug)
    if pivots != list(range(n)):
        raise ValueError("matrix is singular")
    inv = [[reduced[i][n + j] for j in range(n)] for i in range(n)]
    out = []
    for row in inv:
        int_row = []
        for x in row:
            if x.denominator != 1:
                raise ValueError("matrix is not unimodular")
            int_row.append(int(x))
        out.append(int_row)
    return out


def unimodular_with_columns(cols: Sequence[Sequence[int]], n: int) -> Optional[list[list[int]]]:
    """A unimodular n x n integer matrix whose first len(cols) columns are
    exactly `cols`, or None when the columns do not form a saturated lattice
    basis (no completion exists)."""
    k = len(cols)
    if k == 0:
        return [[1 if j == i else 0 for j in range(n)] for i in range(n)]
    vt = [list(int(c[i]) for i in range(n)) for c in cols]  # k x n
    if rank(vt) != k:
        return None
    h, g = _column_hnf(vt)
    t = [[h[i][j] for j in range(k)] for i in range(k)]
    det = _det_int(t)
    if det not in (1, -1):
        return None
    ginv = _int_matrix_inverse(g)
    # U = (g^{-1})^T . blockdiag(t^T, I); then U[:, :k] = cols.
    u = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if j < k:
                u[i][j] = sum(ginv[a][i] * t[j][a] for a in range(k))
            else:
                u[i][j] = ginv[j][i]
    for j in range(k):
        for i in range(n):
            if u[i][j] != cols[j][i]:
                raise AssertionError("unimodular completion construction failed")
    return u


def _det_int(m: list[list[int]]) -> int:
    n = len(m)
    rows = [[Q(x) for x in row] for row in m]
    det = Q(1)
    for c in range(n):
        pivot = next((i for i in range(c, n) if rows[i][c] != 0), None)
        if pivot is None:
            return 0
        if pivot != c:
            rows[c], rows[pivot] = rows[pivot], rows[c]
            det = -det
        det *= rows[c][c]
        inv = Q(1) / rows[c][c]
        for i in range(c + 1, n):
            f = rows[i][c] * inv
            if f != 0:
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[c])]
    assert det.denominator == 1
    return int(det)


# ---------------------------------------------------------------------------
# Linear feasibility with sign constraints
# ---------------------------------------------------------------------------

def _fm_sample_point(ineqs: list[tuple[list[Q], Q]], nvars: int) -> Optional[list[Q]]:
    """A rational point satisfying all rows coeffs . x + const >= 0, or None.

    Plain Fourier-Motzkin with back-substitution; exact and complete for the
    small systems used here.
    """
    systems = [ineqs]
    current = ineqs
    for var in range(nvars - 1, 0, -1):
        nxt: list[tuple[list[Q], Q]] = []
        pos = [r for r in current if r[0][var] > 0]
        neg = [r for r in current if r[0][var] < 0]
        zero = [r for r in current if r[0][var] == 0]
        nxt.extend(zero)
        for p in pos:
            for q in neg:
                a, b = p[0][var], -q[0][var]
                coeffs = [b * x + a * y for x, y in zip(p[0], q[0])]
                const = b * p[1] + a * q[1]
                coeffs[var] = Q(0)
                nxt.append((coeffs, const))
        current = nxt
        systems.append(current)
    # Solve for var 0 from the last system, then walk back up.
    values: list[Q] = [Q(0)] * nvars
    for var in range(nvars):
        system = systems[nvars - 1 - var]
        lo: Optional[Q] = None
        hi: Optional[Q] = None
        for coeffs, const in system:
            c = coeffs[var]
            rest = const + sum((coeffs[j] * values[j] for j in range(var)), Q(0))
            if c == 0:
                if rest < 0:
                    return None
            elif c > 0:
                bound = -rest / c
                lo = bound if lo is None or bound > lo else lo
            else:
                bound = -rest / c  # negative c flips to an upper bound
                hi = bound if hi is None or bound < hi else hi
        if lo is not None and hi is not None:
            if lo > hi:
                return None
            values[var] = (lo + hi) / 2
        elif lo is not None:
            values[var] = lo
        elif hi is not None:
            values[var] = hi
        else:
            values[var] = Q(0)
    return values


def feasible_sign_system(zeros: Sequence[Sequence],
                         positives: Sequence[Sequence],
                         negatives: Sequence[Sequence],
                         within: LinearSubspace) -> Optional[IntVec]:
    """A primitive integer vector rho in `within` with rho.z = 0, rho.p > 0,
    rho.n < 0 for the given vector families, or None when infeasible.

    Strict inequalities are homogenized to >= 1; cones are scale invariant so
    this is exact.  The returned witness is re-checked against the requested
    sign pattern before being handed out.
    """
    k = within.dim
    n = within.ambient
    for group in (zeros, positives, negatives):
        for vec in group:
            if len(vec) != n:
                raise ValueError("ambient dimension mismatch")
    if k == 0:
        return None
    basis = within.basis

    def lam_row(target: Sequence) -> list[Q]:
        return [dot(b, target) for b in basis]

    if not positives and not negatives:
        space = within
        for z in zeros:
            space = intersect_subspaces(space, null_space([list(z)], n))
        if space.dim == 0:
            return None
        witness = primitive_signed(space.basis[0])
    else:
        rows: list[tuple[list[Q], Q]] = []
        for z in zeros:
            r = lam_row(z)
            rows.append((r, Q(0)))
            rows.append(([-x for x in r], Q(0)))
        for p in positives:
            rows.append((lam_row(p), Q(-1)))
        for v in negatives:
            rows.append(([-x for x in lam_row(v)], Q(-1)))
        lam = _fm_sample_point(rows, k)
        if lam is None:
            return None
        rho = [Q(0)] * n
        for coeff, b in zip(lam, basis):
            rho = [x + coeff * y for x, y in zip(rho, b)]
        witness = primitive_signed(rho)

    # Self-consistency: a returned witness must reproduce the requested signs.
    for z in zeros:
        assert dot(witness, z) == 0
    for p in positives:
        assert dot(witness, p) > 0
    for v in negatives:
        assert dot(witness, v) < 0
    return witness
