"""The reduction description language: a minimal block syntax mirroring the
reduction form (domain, write map, read map, operator), with positioned parse
errors and a canonical pretty-printer that round-trips.

    reduction NAME {
      param N >= 1;
      domain [i, j] : 0 <= j and j <= i and i <= N;
      write [i, j] -> [i];
      read [i, j] -> [j];
      op max;
    }
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction as Q
from typing import Optional

from .numerics import ParamAffine
from .polyhedra import Constraint, Polyhedron, constraint, polyhedron
from .reduction import AffineMap, Reduction, affine_map, get_operator, make_reduction


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class ReductionSpec:
    name: str
    param: str
    param_lower_bound: int
    indices: tuple[str, ...]
    constraints: tuple[Constraint, ...]
    write: AffineMap
    read: AffineMap
    op_name: str

    def to_reduction(self, product_invertible: bool = False) -> Reduction:
        body = polyhedron(len(self.indices), list(self.constraints),
                          plb=self.param_lower_bound)
        op = get_operator(self.op_name, product_invertible)
        return make_reduction(body, self.write, self.read, op)


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<num>\d+)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<arrow>->)
  | (?P<cmp><=|>=|=|<|>)
  | (?P<sym>[{}\[\],:;*+-])
""", re.VERBOSE)


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line = 1
    col = 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        frag = m.group()
        if kind != "ws":
            tokens.append(_Token(kind, frag, line, col))
        newlines = frag.count("\n")
        if newlines:
            line += newlines
            col = len(frag) - frag.rfind("\n")
        else:
            col += len(frag)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.next()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text!r}",
                             tok.line, tok.col)
        return tok

    def expect_name(self) -> _Token:
        tok = self.next()
        if tok.kind != "name":
            raise ParseError(f"expected an identifier, found {tok.text!r}",
                             tok.line, tok.col)
        return tok

    def expect_int(self) -> int:
        sign = 1
        tok = self.next()
        if tok.text == "-":
            sign = -1
            tok = self.next()
        if tok.kind != "num":
            raise ParseError(f"expected an integer, found {tok.text!r}",
                             tok.line, tok.col)
        return sign * int(tok.text)


def parse_spec(text: str) -> ReductionSpec:
    """Parse a .red file; raises ParseError with line/column on bad input."""
    p = _Parser(text)
    p.expect("reduction")
    name = p.expect_name().text
    p.expect("{")
    p.expect("param")
    param = p.expect_name().text
    p.expect(">=")
    plb = p.expect_int()
    p.expect(";")
    p.expect("domain")
    indices = _parse_index_list(p)
    p.expect(":")
    scope = {n: i for i, n in enumerate(indices)}
    cons = _parse_conjunction(p, scope, param)
    p.expect(";")
    p.expect("write")
    write = _parse_map(p, indices, param)
    p.expect(";")
    p.expect("read")
    read = _parse_map(p, indices, param)
    p.expect(";")
    p.expect("op")
    op_tok = p.expect_name()
    if op_tok.text not in ("sum", "product", "max", "min"):
        raise ParseError(f"unknown operator {op_tok.text!r}",
                         op_tok.line, op_tok.col)
    p.expect(";")
    p.expect("}")
    tok = p.peek()
    if tok.kind != "eof":
        raise ParseError(f"trailing input {tok.text!r}", tok.line, tok.col)
    return ReductionSpec(name, param, plb, tuple(indices), tuple(cons),
                         write, read, op_tok.text)


def _parse_index_list(p: _Parser) -> list[str]:
    p.expect("[")
    names = [p.expect_name().text]
    while p.peek().text == ",":
        p.next()
        names.append(p.expect_name().text)
    p.expect("]")
    if len(set(names)) != len(names):
        tok = p.peek()
        raise ParseError("duplicate index name", tok.line, tok.col)
    return names


def _parse_affine(p: _Parser, scope: dict[str, int], param: str):
    """Returns (index coefficient list, param coefficient, constant)."""
    coeffs = [0] * len(scope)
    pcoeff = 0
    const = 0
    sign = 1
    first = True
    while True:
        tok = p.peek()
        if tok.text in ("+", "-"):
            sign = 1 if tok.text == "+" else -1
            p.next()
        elif not first:
            break
        tok = p.next()
        if tok.kind == "num":
            value = int(tok.text)
            if p.peek().text == "*":
                p.next()
                tok2 = p.expect_name()
                coeffs, pcoeff = _apply_var(tok2, scope, param, coeffs, pcoeff,
                                            sign * value)
            elif p.peek().kind == "name":
                tok2 = p.next()
                coeffs, pcoeff = _apply_var(tok2, scope, param, coeffs, pcoeff,
                                            sign * value)
            else:
                const += sign * value
        elif tok.kind == "name":
            coeffs, pcoeff = _apply_var(tok, scope, param, coeffs, pcoeff, sign)
        else:
            raise ParseError(f"expected a term, found {tok.text!r}",
                             tok.line, tok.col)
        sign = 1
        first = False
        if p.peek().text not in ("+", "-"):
            break
    return coeffs, pcoeff, const


def _apply_var(tok, scope: dict[str, int], param: str, coeffs: list[int],
               pcoeff: int, value: int):
    if tok.text in scope:
        coeffs = list(coeffs)
        coeffs[scope[tok.text]] += value
        return coeffs, pcoeff
    if tok.text == param:
        return coeffs, pcoeff + value
    raise ParseError(f"unknown identifier {tok.text!r}", tok.line, tok.col)


def _parse_conjunction(p: _Parser, scope: dict[str, int],
                       param: str) -> list[Constraint]:
    out: list[Constraint] = []
    while True:
        out.extend(_parse_comparison_chain(p, scope, param))
        if p.peek().text == "and":
            p.next()
            continue
        break
    return out


def _parse_comparison_chain(p: _Parser, scope, param) -> list[Constraint]:
    """a <= b <= c style chains become one constraint per adjacent pair."""
    sides = [_parse_affine(p, scope, param)]
    rels = []
    while p.peek().kind == "cmp":
        rels.append(p.next().text)
        sides.append(_parse_affine(p, scope, param))
    if not rels:
        tok = p.peek()
        raise ParseError("expected a comparison", tok.line, tok.col)
    cons = []
    for (lc, lp, lk), rel, (rc, rp, rk) in zip(sides, rels, sides[1:]):
        diff_c = [r - l for l, r in zip(lc, rc)]
        diff_p = rp - lp
        diff_k = rk - lk
        if rel == "=":
            cons.append(constraint(diff_c, [diff_p], diff_k, is_eq=True))
        elif rel in ("<=", "<"):
            slack = -1 if rel == "<" else 0
            cons.append(constraint(diff_c, [diff_p], diff_k + slack))
        else:
            slack = -1 if rel == ">" else 0
            cons.append(constraint([-x for x in diff_c], [-diff_p],
                                   -diff_k + slack))
    return cons


def _parse_map(p: _Parser, indices: list[str], param: str) -> AffineMap:
    got = _parse_index_list(p)
    if list(got) != list(indices):
        tok = p.peek()
        raise ParseError(
            f"map must be written over the domain indices {list(indices)}",
            tok.line, tok.col)
    p.expect("->")
    p.expect("[")
    scope = {n: i for i, n in enumerate(indices)}
    rows = []
    affs = []
    while True:
        coeffs, pcoeff, const = _parse_affine(p, scope, param)
        rows.append(coeffs)
        affs.append(ParamAffine((Q(pcoeff),), Q(const)))
        if p.peek().text == ",":
            p.next()
            continue
        break
    p.expect("]")
    return AffineMap(tuple(tuple(r) for r in rows), tuple(affs))


# ---------------------------------------------------------------------------
# Pretty printing (canonical; parse(pretty_print(s)) == s)
# ---------------------------------------------------------------------------

def _affine_str(coeffs, pcoeff, const, indices, param) -> str:
    terms = []
    for c, n in list(zip(coeffs, indices)) + [(pcoeff, param)]:
        if c == 0:
            continue
        if c == 1:
            terms.append(f"+ {n}")
        elif c == -1:
            terms.append(f"- {n}")
        else:
            terms.append(f"{'+' if c > 0 else '-'} {abs(c)}*{n}")
    if const or not terms:
        terms.append(f"{'+' if const >= 0 else '-'} {abs(const)}")
    text = " ".join(terms)
    if text.startswith("+ "):
        text = text[2:]
    elif text.startswith("- "):
        text = "-" + text[2:]
    return text


def pretty_print(spec: ReductionSpec) -> str:
    indices = list(spec.indices)
    lines = [f"reduction {spec.name} {{"]
    lines.append(f"  param {spec.param} >= {spec.param_lower_bound};")
    parts = []
    for c in spec.constraints:
        lhs = _affine_str(c.coeffs, c.param_coeffs[0], c.const, indices, spec.param)
        parts.append(f"{lhs} {'=' if c.is_eq else '>='} 0")
    lines.append(f"  domain [{', '.join(indices)}] : {' and '.join(parts)};")
    for label, m in (("write", spec.write), ("read", spec.read)):
        outs = []
        for row, aff in zip(m.matrix, m.affines):
            outs.append(_affine_str(row, int(aff.coeffs[0]), int(aff.const),
                                    indices, spec.param))
        lines.append(f"  {label} [{', '.join(indices)}] -> [{', '.join(outs)}];")
    lines.append(f"  op {spec.op_name};")
    lines.append("}")
    return "\n".join(lines) + "\n"
