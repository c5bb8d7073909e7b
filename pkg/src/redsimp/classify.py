"""Facet classification and labeling enumeration.

A facet of the reduction body is a strong/weak boundary according to how much
of the accumulation space its linear space contains, a strong/weak invariant
according to how much of the reuse space it contains, and residual when it is
neither a strong boundary nor a strong invariant.  Each feasible assignment
of signs (the sign of rho . normal per facet) is an equivalence class of
reuse vectors; we enumerate them exhaustively with an exact feasibility check
and keep one primitive witness per class.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

from .numerics import IntVec, LinearSubspace, intersect_subspaces, feasible_sign_system
from .polyhedra import Face, FaceLattice, UnsupportedInputError, build_face_lattice, facet_normal
from .reduction import Reduction

MAX_FACETS = 12

PLUS, ZERO, MINUS = 1, 0, -1

# Candidate signs in enumeration order; the order fixes the lexicographic
# order of labelings and therefore all downstream tie-breaking.
_SIGN_ORDER = (PLUS, ZERO, MINUS)


class EmptyReuseError(ValueError):
    pass


@dataclass(frozen=True)
class FacetClass:
    facet: Face
    boundary: str   # 'strong' | 'weak' | 'none'
    invariant: str  # 'strong' | 'weak' | 'none'
    residual: bool


@dataclass(frozen=True)
class Labeling:
    """One equivalence class of reuse vectors: a sign per facet plus a
    primitive witness inducing exactly those signs."""

    signs: tuple[int, ...]
    witness: IntVec
    admissible_without_inverse: bool

    def sign_of(self, idx: int) -> int:
        return self.signs[idx]

    def negated_signs(self) -> tuple[int, ...]:
        return tuple(-s for s in self.signs)


@dataclass
class FaceAnalysis:
    """Classification and labelings of one face's facets, in a fixed order."""

    reduction: Reduction
    face: Face
    facets: list[Face]
    normals: list[IntVec]
    classes: list[FacetClass]
    labelings: list[Labeling]


def _grade(space_within: LinearSubspace, facet_space: LinearSubspace) -> str:
    inner = intersect_subspaces(space_within, facet_space)
    if inner.dim == space_within.dim:
        return "strong"
    if inner.dim > 0:
        return "weak"
    return "none"


def classify_facets(r: Reduction, face: Optional[Face] = None,
                    lattice: Optional[FaceLattice] = None) -> list[FacetClass]:
    """Classify the facets of `face` (default: the whole body) by the rank
    tests on the accumulation and reuse spaces restricted to the face."""
    if lattice is None:
        lattice = build_face_lattice(r.body)
    if face is None:
        face = lattice.top
    h = face.linear_space()
    acc = intersect_subspaces(r.acc_space, h)
    reuse = intersect_subspaces(r.reuse_space, h)
    out = []
    for facet in lattice.facets_of(face):
        hg = facet.linear_space()
        boundary = _grade(acc, hg)
        invariant = _grade(reuse, hg)
        out.append(FacetClass(facet, boundary, invariant,
                              residual=(boundary != "strong" and invariant != "strong")))
    return out


def analyze_face(r: Reduction, face: Optional[Face] = None,
                 lattice: Optional[FaceLattice] = None) -> FaceAnalysis:
    if lattice is None:
        lattice = build_face_lattice(r.body)
    if face is None:
        face = lattice.top
    classes = classify_facets(r, face, lattice)
    facets = [fc.facet for fc in classes]
    normals = [facet_normal(lattice, face, g) for g in facets]
    reuse = intersect_subspaces(r.reuse_space, face.linear_space())
    if reuse.dim == 0:
        raise EmptyReuseError("no reuse within the face")
    labelings = _enumerate(normals, classes, reuse)
    return FaceAnalysis(r, face, facets, normals, classes, labelings)


def _enumerate(normals: list[IntVec], classes: list[FacetClass],
               reuse: LinearSubspace) -> list[Labeling]:
    m = len(normals)
    if m > MAX_FACETS:
        raise UnsupportedInputError(f"too many facets to enumerate labelings ({m})")
    options = []
    for fc in classes:
        # Strong invariants are orthogonal to every reuse vector.
        options.append((ZERO,) if fc.invariant == "strong" else _SIGN_ORDER)
    out = []
    for signs in itertools.product(*options):
        witness = feasible_sign_system(
            zeros=[normals[i] for i in range(m) if signs[i] == ZERO],
            positives=[normals[i] for i in range(m) if signs[i] == PLUS],
            negatives=[normals[i] for i in range(m) if signs[i] == MINUS],
            within=reuse,
        )
        if witness is None:
            continue
        admissible = all(signs[i] != MINUS or classes[i].boundary == "strong"
                         for i in range(m))
        out.append(Labeling(signs, witness, admissible))
    return out


def enumerate_labelings(r: Reduction, face: Optional[Face] = None,
                        lattice: Optional[FaceLattice] = None) -> list[Labeling]:
    """Exactly the feasible sign vectors over the face's facets, each with a
    primitive witness, in lexicographic (+, 0, -) order."""
    return analyze_face(r, face, lattice).labelings


def admissible_labelings(r: Reduction, labelings: list[Labeling],
                         classes: Optional[list[FacetClass]] = None) -> list[Labeling]:
    """Labelings a single-step simplification may use.

    With an invertible operator, any labeling touching a residual facet
    works.  Without one, every minus-labeled facet must be a strong boundary
    (its removed answers are never needed); the enumeration is closed under
    negation, so the globally negated variant of a usable labeling is already
    present.
    """
    if r.op.has_inverse:
        if classes is None:
            classes = classify_facets(r)
        residual_idx = [i for i, fc in enumerate(classes) if fc.residual]
        return [l for l in labelings
                if any(l.signs[i] != ZERO for i in residual_idx)]
    return [l for l in labelings if l.admissible_without_inverse]
