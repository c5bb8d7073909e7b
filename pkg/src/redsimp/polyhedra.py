"""Parametric integer polyhedra over d index dimensions and one growing size
parameter: constraints, faces, the face lattice, parametric vertices, simplex
tests, hyperplane splits, exact projection, set difference, and fan
triangulation for low dimensions.

Combinatorial questions ("is this empty / saturated / redundant for all
sufficiently large N") are answered by exact Fourier-Motzkin elimination with
parametric affine constants.  Concrete questions (point enumeration, counts)
take explicit parameter values.  All coefficients are integers after
normalization; arithmetic never rounds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil, floor, gcd
from typing import Iterable, Iterator, Optional, Sequence

from .numerics import (
    IntVec,
    LinearSubspace,
    ParamAffine,
    Q,
    intersect_subspaces,
    null_space,
    primitive,
    rank,
    subspace,
)


class EmptyPolyhedronError(ValueError):
    pass


class UnboundedPolyhedronError(ValueError):
    pass


class UnsupportedInputError(ValueError):
    """Input is outside the supported class (e.g. parametric structure that is
    not stable in the size parameter)."""


class DegenerateSplitError(ValueError):
    """A splitting hyperplane left one side empty for all large N."""


# Probe values at which the symbolic combinatorial structure is re-derived
# and compared; a mismatch means the face structure is not stable in N.
STABILITY_PROBES = (8, 13)


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class Constraint:
    """A normalized affine constraint  coeffs.z + param_coeffs.params + const
    (>= 0 | = 0)  with coprime integer coefficients."""

    coeffs: IntVec
    param_coeffs: IntVec
    const: int
    is_eq: bool

    @property
    def dim(self) -> int:
        return len(self.coeffs)

    def affine(self) -> ParamAffine:
        return ParamAffine(tuple(Q(c) for c in self.param_coeffs), Q(self.const))

    def evaluate(self, point: Sequence, env: Sequence) -> Q:
        total = Q(self.const)
        total += sum((Q(c) * Q(x) for c, x in zip(self.coeffs, point)), Q(0))
        total += sum((Q(c) * Q(v) for c, v in zip(self.param_coeffs, env)), Q(0))
        return total

    def holds(self, point: Sequence, env: Sequence) -> bool:
        v = self.evaluate(point, env)
        return v == 0 if self.is_eq else v >= 0

    def negate_strictly(self) -> "Constraint":
        """Integer complement of an inequality: not(e >= 0)  <=>  -e - 1 >= 0."""
        if self.is_eq:
            raise ValueError("cannot negate an equality into one inequality")
        return constraint(
            [-c for c in self.coeffs], [-c for c in self.param_coeffs], -self.const - 1
        )

    def shifted(self, delta: int) -> "Constraint":
        return constraint(self.coeffs, self.param_coeffs, self.const + delta, self.is_eq)

    def __str__(self) -> str:
        names = _dim_names(self.dim)
        terms = []
        for c, n in list(zip(self.coeffs, names)) + [
            (p, f"N{k}" if k else "N") for k, p in enumerate(self.param_coeffs)
        ]:
            if c == 0:
                continue
            if c == 1:
                terms.append(f"+{n}")
            elif c == -1:
                terms.append(f"-{n}")
            else:
                terms.append(f"{c:+d}{n}")
        if self.const or not terms:
            terms.append(f"{self.const:+d}")
        body = "".join(terms).lstrip("+")
        return f"{body} {'=' if self.is_eq else '>='} 0"


def _dim_names(d: int) -> list[str]:
    base = ["i", "j", "k", "l", "m", "n2", "o", "p2"]
    if d <= len(base):
        return base[:d]
    return [f"x{t}" for t in range(d)]


def constraint(coeffs: Sequence, param_coeffs: Sequence, const, is_eq: bool = False) -> Constraint:
    """Normalize to coprime integers; equalities get a canonical sign."""
    entries = [Q(x) for x in coeffs] + [Q(x) for x in param_coeffs] + [Q(const)]
    denom_lcm = 1
    for e in entries:
        denom_lcm = denom_lcm * e.denominator // gcd(denom_lcm, e.denominator)
    ints = [int(e * denom_lcm) for e in entries]
    g = 0
    for v in ints:
        g = gcd(g, abs(v))
    if g > 1:
        ints = [v // g for v in ints]
    if is_eq:
        lead = next((v for v in ints if v != 0), 0)
        if lead < 0:
            ints = [-v for v in ints]
    d = len(coeffs)
    np = len(param_coeffs)
    return Constraint(tuple(ints[:d]), tuple(ints[d:d + np]), ints[-1], is_eq)


# ---------------------------------------------------------------------------
# Fourier-Motzkin machinery (rows: coeffs, param_coeffs, const, strict)
# ---------------------------------------------------------------------------

_Row = tuple[tuple[int, ...], tuple[int, ...], int, bool]


def _row_from_constraint(c: Constraint) -> list[_Row]:
    if c.is_eq:
        return [
            (c.coeffs, c.param_coeffs, c.const, False),
            (tuple(-x for x in c.coeffs), tuple(-x for x in c.param_coeffs), -c.const, False),
        ]
    return [(c.coeffs, c.param_coeffs, c.const, False)]


def _normalize_row(coeffs, params, const, strict) -> _Row:
    g = 0
    for v in itertools.chain(coeffs, params, (const,)):
        g = gcd(g, abs(v))
    if g > 1:
        coeffs = tuple(v // g for v in coeffs)
        params = tuple(v // g for v in params)
        const = const // g
    return (tuple(coeffs), tuple(params), const, strict)


def _fm_eliminate(rows: list[_Row], var: int) -> list[_Row]:
    pos, neg, zero = [], [], []
    for r in rows:
        c = r[0][var]
        if c > 0:
            pos.append(r)
        elif c < 0:
            neg.append(r)
        else:
            zero.append(r)
    out = list(zero)
    for p in pos:
        for q in neg:
            a, b = p[0][var], -q[0][var]
            coeffs = tuple(b * x + a * y for x, y in zip(p[0], q[0]))
            params = tuple(b * x + a * y for x, y in zip(p[1], q[1]))
            const = b * p[2] + a * q[2]
            out.append(_normalize_row(coeffs, params, const, p[3] or q[3]))
    return out


def _row_sign_for_large(params: tuple[int, ...], const: int) -> Optional[int]:
    if any(v != 0 for v in params[1:]):
        return None
    if params[0] > 0:
        return 1
    if params[0] < 0:
        return -1
    return (const > 0) - (const < 0)


def _system_empty_for_large(rows: list[_Row], dim: int) -> bool:
    """True when the rational relaxation is empty for all sufficiently large
    values of the size parameter.  Ambiguous multi-parameter signs count as
    "not provably empty" (the engine substitutes extra parameters first)."""
    current = rows
    for var in range(dim - 1, -1, -1):
        reduced = []
        for coeffs, params, const, strict in current:
            if all(c == 0 for c in coeffs):
                sign = _row_sign_for_large(params, const)
                if sign is None:
                    continue
                if sign < 0 or (sign == 0 and strict):
                    return True
            else:
                reduced.append((coeffs, params, const, strict))
        current = _fm_eliminate(reduced, var)
    for coeffs, params, const, strict in current:
        sign = _row_sign_for_large(params, const)
        if sign is None:
            continue
        if sign < 0 or (sign == 0 and strict):
            return True
    return False


def _constraints_empty(constraints: Iterable[Constraint], dim: int,
                       extra: Iterable[_Row] = ()) -> bool:
    """Empty at every instance: extra (non-size) parameters are eliminated
    existentially alongside the dimensions, leaving size-parameter rows."""
    rows: list[_Row] = []
    nparams = None
    for c in constraints:
        rows.extend(_row_from_constraint(c))
    rows.extend(extra)
    if rows:
        nparams = len(rows[0][1])
    if nparams is None:
        return False
    if nparams > 1:
        lifted = []
        for coeffs, params, const, strict in rows:
            lifted.append((tuple(coeffs) + tuple(params[1:]),
                           (params[0],), const, strict))
        return _system_empty_for_large(lifted, dim + nparams - 1)
    return _system_empty_for_large(rows, dim)


# ---------------------------------------------------------------------------
# Polyhedron
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Polyhedron:
    """An integer polyhedron {z in Z^dim : all constraints hold}, parametric
    in one growing size parameter (index 0) plus any symbolic instance
    parameters appended by family factoring.

    Redundant constraints are removed and implicit equalities are made
    explicit on construction; equalities sort before inequalities.
    """

    dim: int
    nparams: int
    constraints: tuple[Constraint, ...]
    param_lower_bound: int = 0

    @property
    def equalities(self) -> tuple[Constraint, ...]:
        return tuple(c for c in self.constraints if c.is_eq)

    @property
    def inequalities(self) -> tuple[Constraint, ...]:
        return tuple(c for c in self.constraints if not c.is_eq)

    def is_empty(self) -> bool:
        return _constraints_empty(self.constraints, self.dim)

    def affine_hull_dim(self) -> int:
        if self.is_empty():
            return -1
        eq_normals = [c.coeffs for c in self.equalities]
        return self.dim - rank(eq_normals) if eq_normals else self.dim

    def with_constraints(self, extra: Sequence[Constraint]) -> "Polyhedron":
        return polyhedron(self.dim, list(self.constraints) + list(extra),
                          nparams=self.nparams, plb=self.param_lower_bound)

    def translate(self, vec: Sequence[int]) -> "Polyhedron":
        """The set {z : z - vec in self} (translation by an integer vector)."""
        if len(vec) != self.dim:
            raise ValueError("dimension mismatch")
        moved = [
            constraint(
                c.coeffs,
                c.param_coeffs,
                c.const - sum(a * int(v) for a, v in zip(c.coeffs, vec)),
                c.is_eq,
            )
            for c in self.constraints
        ]
        return Polyhedron(self.dim, self.nparams, tuple(moved), self.param_lower_bound)

    def intersect(self, other: "Polyhedron") -> "Polyhedron":
        if other.dim != self.dim or other.nparams != self.nparams:
            raise ValueError("dimension mismatch")
        return polyhedron(
            self.dim,
            list(self.constraints) + list(other.constraints),
            nparams=self.nparams,
            plb=max(self.param_lower_bound, other.param_lower_bound),
        )

    def contains_point(self, point: Sequence, env: Sequence) -> bool:
        return all(c.holds(point, env) for c in self.constraints)

    def substitute_param(self, k: int, replacement: ParamAffine) -> "Polyhedron":
        """Substitute parameter k by an affine form in the other parameters
        (used to pin family parameters to generic values for analysis)."""
        out = []
        for c in self.constraints:
            aff = c.affine().substitute_param(k, replacement)
            out.append(constraint(c.coeffs, aff.coeffs, aff.const, c.is_eq))
        return polyhedron(self.dim, out, nparams=self.nparams, plb=self.param_lower_bound)

    def key(self) -> tuple:
        return (self.dim, self.nparams, self.constraints)

    def __str__(self) -> str:
        return "{ " + " and ".join(str(c) for c in self.constraints) + " }"


def polyhedron(dim: int, constraints_in: Iterable[Constraint], nparams: int = 1,
               plb: int = 0, simplify: bool = True) -> Polyhedron:
    cons = list(dict.fromkeys(constraints_in))
    for c in cons:
        if c.dim != dim or len(c.param_coeffs) != nparams:
            raise ValueError("constraint shape mismatch")
    if simplify:
        cons = _simplify_constraints(cons, dim)
    cons.sort(key=lambda c: (not c.is_eq, c.coeffs, c.param_coeffs, c.const))
    return Polyhedron(dim, nparams, tuple(cons), plb)


def empty_polyhedron(dim: int, nparams: int = 1) -> Polyhedron:
    false_c = constraint((0,) * dim, (0,) * nparams, -1)
    return Polyhedron(dim, nparams, (false_c,), 0)


def universe(dim: int, nparams: int = 1, plb: int = 0) -> Polyhedron:
    return Polyhedron(dim, nparams, (), plb)


def _simplify_constraints(cons: list[Constraint], dim: int) -> list[Constraint]:
    out: list[Constraint] = []
    for c in cons:
        if all(x == 0 for x in c.coeffs):
            sign = _row_sign_for_large(c.param_coeffs, c.const)
            if c.is_eq:
                if sign == 0 and all(v == 0 for v in c.param_coeffs):
                    continue  # 0 = 0
                out.append(c)  # parametric equality on params alone: keep
            else:
                if sign is not None and sign >= 0 and all(v == 0 for v in c.param_coeffs[1:]):
                    if c.param_coeffs[0] == 0:
                        continue  # constant tautology
                out.append(c)
        else:
            out.append(c)
    cons = out
    if _constraints_empty(cons, dim):
        return [constraint((0,) * dim, (0,) * (len(cons[0].param_coeffs) if cons else 1), -1)] \
            if cons else cons
    # Implicit equalities: an inequality whose positive side is never reached.
    upgraded = []
    for idx, c in enumerate(cons):
        if c.is_eq:
            upgraded.append(c)
            continue
        others = cons[:idx] + cons[idx + 1:]
        strictly_pos: _Row = (c.coeffs, c.param_coeffs, c.const, True)
        if _constraints_empty(others + [c], c.dim, extra=[strictly_pos]):
            upgraded.append(constraint(c.coeffs, c.param_coeffs, c.const, True))
        else:
            upgraded.append(c)
    cons = list(dict.fromkeys(upgraded))
    # Redundancy: drop inequalities implied by the rest (rationally, for
    # large N); keep anything ambiguous.
    changed = True
    while changed:
        changed = False
        for idx, c in enumerate(cons):
            if c.is_eq:
                continue
            others = cons[:idx] + cons[idx + 1:]
            neg: _Row = (tuple(-x for x in c.coeffs), tuple(-x for x in c.param_coeffs),
                         -c.const, True)
            if _constraints_empty(others, c.dim, extra=[neg]):
                cons = others
                changed = True
                break
    # Redundant equalities (implied by the others).
    changed = True
    while changed:
        changed = False
        for idx, c in enumerate(cons):
            if not c.is_eq:
                continue
            others = cons[:idx] + cons[idx + 1:]
            pos: _Row = (c.coeffs, c.param_coeffs, c.const, True)
            neg: _Row = (tuple(-x for x in c.coeffs), tuple(-x for x in c.param_coeffs),
                         -c.const, True)
            if _constraints_empty(others, c.dim, extra=[pos]) and \
               _constraints_empty(others, c.dim, extra=[neg]):
                cons = others
                changed = True
                break
    return cons


# ---------------------------------------------------------------------------
# Faces and the face lattice
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Face:
    """A face of `parent`, identified by the maximal set of effectively
    saturated constraint indices."""

    parent: Polyhedron
    saturated: frozenset[int]
    dim: int

    def as_polyhedron(self) -> Polyhedron:
        cons = [
            constraint(c.coeffs, c.param_coeffs, c.const, True) if i in self.saturated else c
            for i, c in enumerate(self.parent.constraints)
        ]
        return polyhedron(self.parent.dim, cons, nparams=self.parent.nparams,
                          plb=self.parent.param_lower_bound)

    def linear_space(self) -> LinearSubspace:
        """Null space of the saturated constraints' linear parts (H in the
        facet classification tests)."""
        normals = [self.parent.constraints[i].coeffs for i in self.saturated]
        normals += [c.coeffs for c in self.parent.equalities]
        if not normals:
            from .numerics import full_space

            return full_space(self.parent.dim)
        return null_space(normals, self.parent.dim)

    def label(self) -> str:
        eq_count = len(self.parent.equalities)
        shown = sorted(i + 1 - eq_count for i in self.saturated
                       if not self.parent.constraints[i].is_eq)
        return "{" + ",".join(str(i) for i in shown) + "}"


@dataclass
class FaceLattice:
    polyhedron: Polyhedron
    faces_by_dim: dict[int, list[Face]]
    children: dict[frozenset[int], list[Face]]

    @property
    def top(self) -> Face:
        return self.faces_by_dim[max(self.faces_by_dim)][0]

    def all_faces(self) -> list[Face]:
        return [f for d in sorted(self.faces_by_dim, reverse=True)
                for f in self.faces_by_dim[d]]

    def facets_of(self, face: Face) -> list[Face]:
        return self.children.get(face.saturated, [])

    def face_counts(self) -> dict[int, int]:
        return {d: len(fs) for d, fs in self.faces_by_dim.items()}


def _saturation_closure(p: Polyhedron, sat: frozenset[int]) -> Optional[frozenset[int]]:
    """Maximal set of constraints effectively saturated once `sat` is forced
    to equality; None when that face is empty."""
    rows: list[_Row] = []
    for i, c in enumerate(p.constraints):
        if i in sat or c.is_eq:
            rows.extend(_row_from_constraint(
                constraint(c.coeffs, c.param_coeffs, c.const, True)))
        else:
            rows.extend(_row_from_constraint(c))
    if _system_empty_for_large(rows, p.dim):
        return None
    closure = set(sat)
    for i, c in enumerate(p.constraints):
        if i in closure or c.is_eq:
            continue
        strictly_pos: _Row = (c.coeffs, c.param_coeffs, c.const, True)
        if _system_empty_for_large(rows + [strictly_pos], p.dim):
            closure.add(i)
    return frozenset(closure)


def _face_dim(p: Polyhedron, sat: frozenset[int]) -> int:
    normals = [p.constraints[i].coeffs for i in sat]
    normals += [c.coeffs for c in p.equalities]
    if not normals:
        return p.dim
    return p.dim - rank(normals)


def build_face_lattice(p: Polyhedron) -> FaceLattice:
    """All faces of all dimensions, with the covering (facet-of) relation.

    The combinatorial structure is derived symbolically and re-checked at the
    stability probe values; a mismatch raises UnsupportedInputError.
    """
    if p.is_empty():
        raise EmptyPolyhedronError("cannot build the face lattice of an empty set")
    eq_indices = frozenset(i for i, c in enumerate(p.constraints) if c.is_eq)
    top_sat = _saturation_closure(p, eq_indices)
    if top_sat is None:
        raise EmptyPolyhedronError("polyhedron empty under its own equalities")
    top = Face(p, top_sat, _face_dim(p, top_sat))
    faces: dict[frozenset[int], Face] = {top.saturated: top}
    children: dict[frozenset[int], list[Face]] = {}
    frontier = [top]
    while frontier:
        nxt: list[Face] = []
        for face in frontier:
            if face.dim == 0:
                continue
            kid_sets: list[frozenset[int]] = []
            for i in range(len(p.constraints)):
                if i in face.saturated:
                    continue
                closure = _saturation_closure(p, face.saturated | {i})
                if closure is None or closure in kid_sets:
                    continue
                kid_sets.append(closure)
            for sat in kid_sets:
                if sat not in faces:
                    kid = Face(p, sat, _face_dim(p, sat))
                    faces[sat] = kid
                    nxt.append(kid)
                kid = faces[sat]
                if kid.dim == face.dim - 1:
                    children.setdefault(face.saturated, []).append(kid)
        frontier = nxt
    by_dim: dict[int, list[Face]] = {}
    for f in faces.values():
        by_dim.setdefault(f.dim, []).append(f)
    for d in by_dim:
        by_dim[d].sort(key=lambda f: sorted(f.saturated))
    for sat in children:
        children[sat].sort(key=lambda f: sorted(f.saturated))
    lattice = FaceLattice(p, by_dim, children)
    _check_probe_stability(lattice)
    return lattice


def _check_probe_stability(lattice: FaceLattice) -> None:
    p = lattice.polyhedron
    if p.nparams != 1:
        return  # instance parameters are pinned before lattices are built
    # The symbolic derivation is asserted stable by realizing every face at
    # two concrete parameter values.
    for face in lattice.all_faces():
        fp = face.as_polyhedron()
        for probe in STABILITY_PROBES:
            if not _feasible_at(fp, probe):
                raise UnsupportedInputError(
                    f"face structure is not stable at N={probe}: {face.label()}")


def _feasible_at(p: Polyhedron, n_value: int) -> bool:
    rows: list[_Row] = []
    for c in p.constraints:
        aff = c.const + c.param_coeffs[0] * n_value
        base = constraint(c.coeffs, (0,) * p.nparams, aff, c.is_eq)
        rows.extend(_row_from_constraint(base))
    return not _system_empty_for_large(rows, p.dim)


def facet_normal(lattice: FaceLattice, parent: Face, facet: Face) -> IntVec:
    """Inward-pointing normal: linear part of the newly saturated constraint,
    oriented so the parent side satisfies expr >= 0."""
    new = facet.saturated - parent.saturated
    if facet.dim != parent.dim - 1 or not new:
        raise ValueError("not a facet of the given face")
    # Any newly saturated non-equality constraint works; pick deterministically.
    candidates = [i for i in sorted(new) if not lattice.polyhedron.constraints[i].is_eq]
    if not candidates:
        raise ValueError("facet saturates only equalities")
    return lattice.polyhedron.constraints[candidates[0]].coeffs


# ---------------------------------------------------------------------------
# Vertices, boundedness, simplex test
# ---------------------------------------------------------------------------

ParamVertex = tuple[ParamAffine, ...]


def is_bounded(p: Polyhedron) -> bool:
    """Bounded for large N: the recession cone {C z >= 0} is trivial."""
    rows = [(c.coeffs, (0,) * p.nparams, 0, False) for c in p.constraints]
    rows += [(tuple(-x for x in c.coeffs), (0,) * p.nparams, 0, False)
             for c in p.constraints if c.is_eq]
    for k in range(p.dim):
        for sign in (1, -1):
            probe_row: _Row = (
                tuple((sign if t == k else 0) for t in range(p.dim)),
                (0,) * p.nparams, -1, False)
            if not _system_empty_for_large(rows + [probe_row], p.dim):
                return False
    return True


def _solve_param_system(mat: list[Sequence[int]], rhs: list[ParamAffine],
                        dim: int) -> Optional[ParamVertex]:
    """Unique solution of mat.z = rhs with parametric right-hand sides."""
    if rank(mat) != dim:
        return None
    aug = [[Q(x) for x in row] for row in mat]
    vals = list(rhs)
    n = len(aug)
    # Forward elimination with the affine forms carried through.
    piv_rows: list[int] = []
    used = [False] * n
    for col in range(dim):
        pr = next((r for r in range(n) if not used[r] and aug[r][col] != 0), None)
        if pr is None:
            return None
        used[pr] = True
        piv_rows.append(pr)
        inv = Q(1) / aug[pr][col]
        aug[pr] = [x * inv for x in aug[pr]]
        vals[pr] = vals[pr].scale(inv)
        for r in range(n):
            if r != pr and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[pr])]
                vals[r] = vals[r] - vals[pr].scale(f)
    for r in range(n):
        if not used[r]:
            if any(x != 0 for x in aug[r]) or not vals[r].is_zero():
                return None
    coords = [None] * dim
    for col, pr in enumerate(piv_rows):
        coords[col] = vals[pr]
    return tuple(coords)


def enumerate_vertices(p: Polyhedron) -> list[ParamVertex]:
    """All 0-faces as parametric coordinates, valid for all large N."""
    if p.is_empty():
        raise EmptyPolyhedronError("no vertices of an empty set")
    if not is_bounded(p):
        raise UnboundedPolyhedronError("vertex enumeration requires a bounded set")
    cons = p.constraints
    eqs = [i for i, c in enumerate(cons) if c.is_eq]
    ineqs = [i for i, c in enumerate(cons) if not c.is_eq]
    need = p.dim - len(eqs)
    vertices: list[ParamVertex] = []
    seen: set[tuple] = set()
    for subset in itertools.combinations(ineqs, max(need, 0)):
        chosen = list(eqs) + list(subset)
        mat = [cons[i].coeffs for i in chosen]
        rhs = [-cons[i].affine() for i in chosen]
        sol = _solve_param_system(mat, rhs, p.dim)
        if sol is None:
            continue
        ok = True
        for c in cons:
            val = c.affine()
            for coord, coeff in zip(sol, c.coeffs):
                val = val + coord.scale(coeff)
            sign = val.sign_for_large()
            if sign is None:
                raise UnsupportedInputError(
                    "vertex feasibility depends on unresolved instance parameters")
            if c.is_eq and sign != 0:
                ok = False
                break
            if not c.is_eq and sign < 0:
                ok = False
                break
        if not ok:
            continue
        key = tuple((c.coeffs, c.const) for c in sol)
        if key not in seen:
            seen.add(key)
            vertices.append(sol)
    vertices.sort(key=lambda v: tuple((c.coeffs, c.const) for c in v))
    return vertices


def is_simplex(p: Polyhedron) -> bool:
    """True iff p has exactly dim+1 affinely independent vertices (checked at
    the two probe values of N)."""
    d = p.affine_hull_dim()
    verts = enumerate_vertices(p)
    if len(verts) != d + 1:
        return False
    for probe in STABILITY_PROBES:
        env = [probe] + [0] * (p.nparams - 1)
        pts = [[c.evaluate(env) for c in v] for v in verts]
        diffs = [[x - y for x, y in zip(pt, pts[0])] for pt in pts[1:]]
        if rank(diffs) != d:
            return False
    return True


def growth_degree(p: Polyhedron) -> int:
    """Degree of the integer point count of p as a polynomial in N: the
    dimension of the convex hull of the vertices' N-coefficient vectors."""
    if p.is_empty():
        return -1
    verts = enumerate_vertices(p)
    lead = [[c.coeffs[0] for c in v] for v in verts]
    diffs = [[x - y for x, y in zip(v, lead[0])] for v in lead[1:]]
    return rank(diffs) if diffs else 0


# ---------------------------------------------------------------------------
# Splitting, projection, difference
# ---------------------------------------------------------------------------

def split_by_hyperplane(p: Polyhedron, h: Constraint) -> tuple[Polyhedron, Polyhedron]:
    """Partition p by the hyperplane h = 0 into {h <= -1} and {h >= 0}.

    The hyperplane must have points of p strictly on both sides; a supporting
    hyperplane is a degenerate (vacuous) split.
    """
    if not h.is_eq:
        raise ValueError("splitting hyperplane must be an equality constraint")
    below = constraint([-c for c in h.coeffs], [-c for c in h.param_coeffs], -h.const - 1)
    above = constraint(h.coeffs, h.param_coeffs, h.const)
    strictly_above = constraint(h.coeffs, h.param_coeffs, h.const - 1)
    piece1 = p.with_constraints([below])
    piece2 = p.with_constraints([above])
    if piece1.is_empty() or p.with_constraints([strictly_above]).is_empty():
        raise DegenerateSplitError(f"hyperplane {h} does not separate the set")
    return piece1, piece2


@dataclass(frozen=True)
class PolyUnion:
    """A finite disjoint union of polyhedra."""

    pieces: tuple[Polyhedron, ...]

    def is_empty(self) -> bool:
        return all(pc.is_empty() for pc in self.pieces)


def set_difference_indexed(a: Polyhedron, b: Polyhedron) -> list[tuple[int, Polyhedron]]:
    """Disjoint pieces of a \\ b with their position in the disjointification
    (one position per negated constraint of b, in stored order)."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    pieces: list[tuple[int, Polyhedron]] = []
    kept: list[Constraint] = []
    expanded: list[Constraint] = []
    for c in b.constraints:
        if c.is_eq:
            expanded.append(constraint(c.coeffs, c.param_coeffs, c.const))
            expanded.append(constraint([-x for x in c.coeffs],
                                       [-x for x in c.param_coeffs], -c.const))
        else:
            expanded.append(c)
    for pos, c in enumerate(expanded):
        piece = a.with_constraints(kept + [c.negate_strictly()])
        if not piece.is_empty():
            pieces.append((pos, piece))
        kept.append(c)
    return pieces


def set_difference(a: Polyhedron, b: Polyhedron) -> PolyUnion:
    """Integer points of a not in b, as a disjoint union: negate b's
    constraints one at a time in stored order."""
    return PolyUnion(tuple(piece for _, piece in set_difference_indexed(a, b)))


def image(p: Polyhedron, matrix: Sequence[Sequence[int]],
          affines: Sequence[ParamAffine]) -> Polyhedron:
    """Exact image {M z + a : z in p} by Fourier-Motzkin elimination of the
    source coordinates (integer-point exact for the canonicalized maps in
    scope)."""
    out_dim = len(matrix)
    rows: list[_Row] = []
    # Coordinates: (y_0..y_{out-1}, z_0..z_{dim-1}); eliminate the z block.
    for c in p.constraints:
        coeffs = (0,) * out_dim + c.coeffs
        rows.extend(_row_from_constraint(
            constraint(coeffs, c.param_coeffs, c.const, c.is_eq)))
    for t in range(out_dim):
        coeffs = tuple((1 if u == t else 0) for u in range(out_dim)) + \
            tuple(-int(x) for x in matrix[t])
        aff = affines[t]
        eq = constraint(coeffs, tuple(-x for x in aff.coeffs), -aff.const, True)
        rows.extend(_row_from_constraint(eq))
    total = out_dim + p.dim
    for var in range(total - 1, out_dim - 1, -1):
        rows = _fm_eliminate(rows, var)
    cons: list[Constraint] = []
    for coeffs, params, const, strict in rows:
        head = coeffs[:out_dim]
        if all(c == 0 for c in coeffs):
            sign = _row_sign_for_large(params, const)
            if sign is not None and sign < 0:
                return empty_polyhedron(out_dim, p.nparams)
            continue
        if strict:
            cons.append(constraint(head, params, const - 1))
        else:
            cons.append(constraint(head, params, const))
    return polyhedron(out_dim, cons, nparams=p.nparams, plb=p.param_lower_bound)


def preimage(p: Polyhedron, matrix: Sequence[Sequence[int]],
             affines: Sequence[ParamAffine], src_dim: int) -> Polyhedron:
    """The set {z : M z + a in p}."""
    cons = []
    for c in p.constraints:
        coeffs = [Q(0)] * src_dim
        aff = c.affine()
        for out_idx, coef in enumerate(c.coeffs):
            if coef == 0:
                continue
            for s in range(src_dim):
                coeffs[s] += Q(coef) * Q(matrix[out_idx][s])
            aff = aff + affines[out_idx].scale(coef)
        cons.append(constraint(coeffs, aff.coeffs, aff.const, c.is_eq))
    return polyhedron(src_dim, cons, nparams=p.nparams, plb=p.param_lower_bound)


# ---------------------------------------------------------------------------
# Concrete integer point enumeration
# ---------------------------------------------------------------------------

def _concrete_rows(p: Polyhedron, env: Sequence[int]) -> list[tuple[tuple[int, ...], int, bool]]:
    rows = []
    for c in p.constraints:
        const = c.const + sum(a * int(v) for a, v in zip(c.param_coeffs, env))
        rows.append((c.coeffs, const, c.is_eq))
    return rows


def integer_points(p: Polyhedron, env: Sequence[int]) -> Iterator[tuple[int, ...]]:
    """Enumerate integer points at concrete parameter values, lexicographic."""
    base = _concrete_rows(p, env)
    ineqs: list[tuple[tuple[int, ...], int]] = []
    for coeffs, const, is_eq in base:
        ineqs.append((coeffs, const))
        if is_eq:
            ineqs.append((tuple(-x for x in coeffs), -const))
    systems: list[list[tuple[tuple[int, ...], int]]] = [ineqs]
    current = ineqs
    for var in range(p.dim - 1, 0, -1):
        pos = [r for r in current if r[0][var] > 0]
        neg = [r for r in current if r[0][var] < 0]
        zero = [r for r in current if r[0][var] == 0]
        nxt = list(zero)
        for pr in pos:
            for nr in neg:
                a, b = pr[0][var], -nr[0][var]
                coeffs = tuple(b * x + a * y for x, y in zip(pr[0], nr[0]))
                const = b * pr[1] + a * nr[1]
                nxt.append((coeffs, const))
        current = nxt
        systems.append(current)
    point = [0] * p.dim

    def bounds(depth: int) -> Optional[tuple[int, int]]:
        lo: Optional[Fraction] = None
        hi: Optional[Fraction] = None
        for coeffs, const in systems[p.dim - 1 - depth]:
            c = coeffs[depth]
            rest = const + sum(coeffs[t] * point[t] for t in range(depth))
            if c == 0:
                if rest < 0:
                    return None
            elif c > 0:
                b = Fraction(-rest, c)
                lo = b if lo is None or b > lo else lo
            else:
                b = Fraction(-rest, c)
                hi = b if hi is None or b < hi else hi
        if lo is None or hi is None:
            raise UnboundedPolyhedronError("point enumeration needs bounded sets")
        lo_i, hi_i = ceil(lo), floor(hi)
        return (lo_i, hi_i) if lo_i <= hi_i else (1, 0)

    def rec(depth: int) -> Iterator[tuple[int, ...]]:
        rng = bounds(depth)
        if rng is None:
            return
        for v in range(rng[0], rng[1] + 1):
            point[depth] = v
            if depth == p.dim - 1:
                pt = tuple(point)
                if all((sum(c * x for c, x in zip(coeffs, pt)) + const) == 0 if is_eq
                       else (sum(c * x for c, x in zip(coeffs, pt)) + const) >= 0
                       for coeffs, const, is_eq in base):
                    yield pt
            else:
                yield from rec(depth + 1)

    if p.dim == 0:
        if all((const == 0 if is_eq else const >= 0) for _, const, is_eq in base):
            yield ()
        return
    yield from rec(0)


def count_points(p: Polyhedron, env: Sequence[int]) -> int:
    return sum(1 for _ in integer_points(p, env))


# ---------------------------------------------------------------------------
# Triangulation
# ---------------------------------------------------------------------------

def _direction_between(a: ParamVertex, b: ParamVertex) -> Optional[IntVec]:
    """Constant (N-independent) direction of the segment a->b, or None."""
    deltas = [y - x for x, y in zip(a, b)]
    mat = [[d.coeffs[0], d.const] for d in deltas]
    if rank(mat) > 1:
        return None
    lead = next((d for d in deltas if not d.is_zero()), None)
    if lead is None:
        return None
    vec = []
    if lead.coeffs[0] != 0:
        vec = [d.coeffs[0] for d in deltas]
        if any(d.const * lead.coeffs[0] != d.coeffs[0] * lead.const for d in deltas):
            return None
    else:
        vec = [d.const for d in deltas]
        if any(d.coeffs[0] != 0 for d in deltas):
            return None
    return primitive(vec)


def _edge_constraint_2d(a: ParamVertex, b: ParamVertex, inside: ParamVertex) -> Constraint:
    direction = _direction_between(a, b)
    if direction is None:
        raise UnsupportedInputError(
            "triangulation chord direction varies with the size parameter")
    normal = (-direction[1], direction[0])
    aff = a[0].scale(normal[0]) + a[1].scale(normal[1])
    value_at_inside = inside[0].scale(normal[0]) + inside[1].scale(normal[1]) - aff
    sign = value_at_inside.sign_for_large()
    if sign == 0 or sign is None:
        raise UnsupportedInputError("degenerate triangle in triangulation")
    if sign < 0:
        normal = (-normal[0], -normal[1])
        aff = -aff
    return constraint(normal, [-c for c in aff.coeffs], -aff.const)


def triangulate(p: Polyhedron) -> list[Polyhedron]:
    """Disjoint simplices covering p exactly: fan construction from the
    lexicographically smallest vertex.  Supported for dim <= 3 (any simplex
    passes through unchanged)."""
    if is_simplex(p):
        return [p]
    d = p.affine_hull_dim()
    if d > 3:
        raise UnsupportedInputError("triangulation is limited to dimension <= 3")
    if d == 2:
        return _triangulate_2d(p)
    if d == 3:
        return _triangulate_3d(p)
    raise UnsupportedInputError(f"cannot triangulate a {d}-dimensional set")


def _hull_order_2d(verts: list[ParamVertex], probe: int) -> list[int]:
    import functools

    pts = [(v[0].evaluate([probe] + [0] * (len(v[0].coeffs) - 1)),
            v[1].evaluate([probe] + [0] * (len(v[1].coeffs) - 1))) for v in verts]
    start = min(range(len(pts)), key=lambda i: (pts[i][1], pts[i][0]))
    sx, sy = pts[start]
    rest = [i for i in range(len(pts)) if i != start]

    def cross(o, a, b):
        return (pts[a][0] - pts[o][0]) * (pts[b][1] - pts[o][1]) - \
               (pts[a][1] - pts[o][1]) * (pts[b][0] - pts[o][0])

    def cmp(i, j):
        c = cross(start, i, j)
        if c > 0:
            return -1
        if c < 0:
            return 1
        di = (pts[i][0] - sx) ** 2 + (pts[i][1] - sy) ** 2
        dj = (pts[j][0] - sx) ** 2 + (pts[j][1] - sy) ** 2
        return -1 if di < dj else (1 if di > dj else 0)

    rest.sort(key=functools.cmp_to_key(cmp))
    return [start] + rest


def _triangulate_2d(p: Polyhedron) -> list[Polyhedron]:
    verts = enumerate_vertices(p)
    order = _hull_order_2d(verts, STABILITY_PROBES[0])
    order2 = _hull_order_2d(verts, STABILITY_PROBES[1])
    if order != order2:
        raise UnsupportedInputError("hull ordering is not stable in N")
    fan = [verts[i] for i in order]
    v0 = fan[0]
    pieces: list[Polyhedron] = []
    for t in range(1, len(fan) - 1):
        a, b = fan[t], fan[t + 1]
        tri_cons = [
            _edge_constraint_2d(v0, a, b),
            _edge_constraint_2d(a, b, v0),
            _edge_constraint_2d(b, v0, a),
        ]
        if t > 1:
            # Half-open along the shared chord v0->a: leave it to the
            # previous piece, keep this one strictly past the chord.
            shared = _edge_constraint_2d(v0, a, b)
            tri_cons[0] = shared.shifted(-1)
        pieces.append(p.with_constraints(tri_cons))
    return [pc for pc in pieces if not pc.is_empty()]


def _triangulate_3d(p: Polyhedron) -> list[Polyhedron]:
    lattice = build_face_lattice(p)
    verts = enumerate_vertices(p)
    v0 = verts[0]

    def vertex_on_face(face: Face, v: ParamVertex) -> bool:
        for i in face.saturated:
            c = p.constraints[i]
            val = c.affine()
            for coord, coef in zip(v, c.coeffs):
                val = val + coord.scale(coef)
            if val.sign_for_large() != 0:
                return False
        return True

    pieces: list[Polyhedron] = []
    walls: list[Constraint] = []
    for face in lattice.faces_by_dim.get(p.affine_hull_dim() - 1, []):
        if vertex_on_face(face, v0):
            continue
        face_poly = face.as_polyhedron()
        for tri in triangulate(face_poly):
            tri_verts = enumerate_vertices(tri)
            cons: list[Constraint] = list(tri.equalities)
            # Side walls through v0 and each edge of the base triangle.
            for e1, e2 in itertools.combinations(range(len(tri_verts)), 2):
                other = next(t for t in range(len(tri_verts)) if t not in (e1, e2))
                wall = _wall_constraint_3d(v0, tri_verts[e1], tri_verts[e2],
                                           tri_verts[other])
                cons.append(wall)
            piece = p.with_constraints(cons)
            adjusted: list[Constraint] = []
            for c in piece.constraints:
                flipped = constraint([-x for x in c.coeffs],
                                     [-x for x in c.param_coeffs], -c.const, c.is_eq)
                if not c.is_eq and any(w == c or w == flipped for w in walls):
                    adjusted.append(c.shifted(-1))
                else:
                    adjusted.append(c)
            piece = polyhedron(p.dim, adjusted, nparams=p.nparams,
                               plb=p.param_lower_bound)
            if not piece.is_empty():
                pieces.append(piece)
                for c in piece.inequalities:
                    walls.append(c)
    return pieces


def _wall_constraint_3d(apex: ParamVertex, a: ParamVertex, b: ParamVertex,
                        inside: ParamVertex) -> Constraint:
    d1 = _direction_between(apex, a)
    d2 = _direction_between(apex, b)
    if d1 is None or d2 is None:
        raise UnsupportedInputError(
            "triangulation wall direction varies with the size parameter")
    normal = (
        d1[1] * d2[2] - d1[2] * d2[1],
        d1[2] * d2[0] - d1[0] * d2[2],
        d1[0] * d2[1] - d1[1] * d2[0],
    )
    if all(x == 0 for x in normal):
        raise UnsupportedInputError("degenerate wall in triangulation")
    normal = primitive(normal)
    aff = apex[0].scale(normal[0]) + apex[1].scale(normal[1]) + apex[2].scale(normal[2])
    value_inside = (inside[0].scale(normal[0]) + inside[1].scale(normal[1]) +
                    inside[2].scale(normal[2]) - aff)
    sign = value_inside.sign_for_large()
    if sign == 0 or sign is None:
        raise UnsupportedInputError("degenerate wall in triangulation")
    if sign < 0:
        normal = tuple(-x for x in normal)
        aff = -aff
    return constraint(normal, [-c for c in aff.coeffs], -aff.const)


# ---------------------------------------------------------------------------
# DOT emission
# ---------------------------------------------------------------------------

def lattice_to_dot(lattice: FaceLattice) -> str:
    """Graphviz rendering of the face lattice; node labels list the saturated
    constraint indices (1-based over the inequalities)."""
    lines = ["digraph face_lattice {", "  rankdir=TB;"]
    ids: dict[frozenset[int], str] = {}
    for face in lattice.all_faces():
        ids[face.saturated] = f"f{len(ids)}"
        lines.append(f'  {ids[face.saturated]} [label="{face.label()}"];')
    for face in lattice.all_faces():
        for kid in lattice.facets_of(face):
            lines.append(f"  {ids[face.saturated]} -> {ids[kid.saturated]};")
    lines.append("}")
    return "\n".join(lines) + "\n"
