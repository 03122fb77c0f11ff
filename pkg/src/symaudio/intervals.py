"""Strict intervals over a finite linear order and coarse accessibility relations.

An interval (x, y) with 0 <= x < y <= T covers the points x+1 .. y of a series
of T points.  Seven named relations plus the global relation G connect pairs of
intervals; formulas combine atoms (see logiset.Atom) with boolean connectives
and the modal operators <R> / [R].
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

Interval = tuple  # (x, y), ints

# Canonical order, also the tie-break order used by the tree learner.
RELATIONS = ("Id", "L", "Linv", "AO", "AOinv", "DBE", "DBEinv", "G")
REL_ORDER = {name: i for i, name in enumerate(RELATIONS)}

INVERSE = {
    "Id": "Id", "G": "G",
    "L": "Linv", "Linv": "L",
    "AO": "AOinv", "AOinv": "AO",
    "DBE": "DBEinv", "DBEinv": "DBE",
}


def enumerate_intervals(T):
    """All strict intervals over 0..T in lexicographic order."""
    if T < 1:
        raise ValueError(f"domain length must be >= 1, got {T}")
    return [(x, y) for x in range(T) for y in range(x + 1, T + 1)]


@lru_cache(maxsize=None)
def _all_intervals(T):
    return tuple(enumerate_intervals(T))


def relates(rel, w, v):
    """True iff interval v is reachable from interval w under rel.

    L: v strictly later, AO: meets or properly overlaps on the right,
    DBE: v is a proper part of w (during, begins or ends), G: any interval.
    *inv relations mirror their base relation.
    """
    wx, wy = w
    vx, vy = v
    if rel == "Id":
        return v == w
    if rel == "L":
        return wy < vx
    if rel == "Linv":
        return vy < wx
    if rel == "AO":
        return wy == vx or (wx < vx < wy < vy)
    if rel == "AOinv":
        return vy == wx or (vx < wx < vy < wy)
    if rel == "DBE":
        return wx <= vx and vy <= wy and v != w
    if rel == "DBEinv":
        return vx <= wx and wy <= vy and v != w
    if rel == "G":
        return True
    raise ValueError(f"unknown relation {rel!r}")


@lru_cache(maxsize=None)
def accessible(rel, w, T):
    """Intervals reachable from w under rel, in lexicographic order."""
    return tuple(v for v in _all_intervals(T) if relates(rel, w, v))


# --- formulas ---------------------------------------------------------------

@dataclass(frozen=True)
class Not:
    sub: object


@dataclass(frozen=True)
class And:
    parts: tuple  # empty tuple is the constant "true"


@dataclass(frozen=True)
class Or:
    parts: tuple


@dataclass(frozen=True)
class Diamond:
    rel: str
    sub: object


@dataclass(frozen=True)
class Box:
    rel: str
    sub: object


def check(phi, inst, w):
    """Satisfaction of phi on instance inst at interval w, by recursion.

    Atoms are any leaf object the instance can evaluate (inst.eval_atom).
    <R> is an existential sweep over accessible(R, w), [R] a universal one.
    """
    T = inst.T
    if isinstance(phi, Not):
        return not check(phi.sub, inst, w)
    if isinstance(phi, And):
        return all(check(p, inst, w) for p in phi.parts)
    if isinstance(phi, Or):
        return any(check(p, inst, w) for p in phi.parts)
    if isinstance(phi, Diamond):
        return any(check(phi.sub, inst, v) for v in accessible(phi.rel, w, T))
    if isinstance(phi, Box):
        return all(check(phi.sub, inst, v) for v in accessible(phi.rel, w, T))
    return inst.eval_atom(phi, w)


# --- text syntax ------------------------------------------------------------
#
# atom       ::=  fn '(' attr ')' op number      op in {'>=', '<='}
# unary      ::=  '!' unary | '<R>' unary | '[R]' unary | '(' formula ')'
#                 | atom | 'true'
# conj       ::=  unary ('&' unary)*
# formula    ::=  conj ('|' conj)*

def format_formula(phi, attr_names):
    if isinstance(phi, Not):
        return f"!({format_formula(phi.sub, attr_names)})"
    if isinstance(phi, And):
        if not phi.parts:
            return "true"
        return " & ".join(_wrap_binary(p, attr_names, Or) for p in phi.parts)
    if isinstance(phi, Or):
        if not phi.parts:
            return "true"
        return " | ".join(_wrap_binary(p, attr_names, And) for p in phi.parts)
    if isinstance(phi, Diamond):
        return f"<{phi.rel}>({format_formula(phi.sub, attr_names)})"
    if isinstance(phi, Box):
        return f"[{phi.rel}]({format_formula(phi.sub, attr_names)})"
    # atom
    return f"{phi.fn}({attr_names[phi.attr]}) {phi.op} {_fmt_num(phi.threshold)}"


def _wrap_binary(p, attr_names, other):
    text = format_formula(p, attr_names)
    if isinstance(p, (And, Or)) and p.parts:
        return f"({text})"
    return text


def _fmt_num(x):
    return repr(float(x))


_TOKEN = re.compile(
    r"\s*(?:(?P<mod><[A-Za-z]+>|\[[A-Za-z]+\])"
    r"|(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op><=|>=)"
    r"|(?P<sym>[()!&|]))"
)


def _tokenize(text):
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ValueError(f"bad formula syntax at {text[pos:pos + 20]!r}")
        pos = m.end()
        for kind in ("mod", "num", "name", "op", "sym"):
            if m.group(kind) is not None:
                out.append((kind, m.group(kind)))
                break
    return out


def parse_formula(text, attr_names):
    """Parse the textual syntax back into a formula over named attributes."""
    from .logiset import FEATURE_FNS, Atom

    name_index = {n: i for i, n in enumerate(attr_names)}
    toks = _tokenize(text)
    pos = [0]

    def peek():
        return toks[pos[0]] if pos[0] < len(toks) else (None, None)

    def take(kind=None, value=None):
        k, v = peek()
        if k is None or (kind and k != kind) or (value and v != value):
            raise ValueError(f"bad formula syntax near token {v!r}")
        pos[0] += 1
        return v

    def unary():
        k, v = peek()
        if k == "sym" and v == "!":
            take()
            return Not(unary())
        if k == "mod":
            take()
            rel = v[1:-1]
            if rel not in RELATIONS:
                raise ValueError(f"unknown relation {rel!r}")
            cls = Diamond if v[0] == "<" else Box
            return cls(rel, unary())
        if k == "sym" and v == "(":
            take()
            f = formula()
            take("sym", ")")
            return f
        if k == "name" and v == "true":
            take()
            return And(())
        # atom: fn ( attr ) op number
        fn = take("name")
        if fn not in FEATURE_FNS:
            raise ValueError(f"unknown feature function {fn!r}")
        take("sym", "(")
        attr = take("name")
        if attr not in name_index:
            raise ValueError(f"unknown attribute {attr!r}")
        take("sym", ")")
        op = take("op")
        num = float(take("num"))
        return Atom(fn=fn, attr=name_index[attr], op=op, threshold=num)

    def conj():
        parts = [unary()]
        while peek() == ("sym", "&"):
            take()
            parts.append(unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def formula():
        parts = [conj()]
        while peek() == ("sym", "|"):
            take()
            parts.append(conj())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    out = formula()
    if pos[0] != len(toks):
        raise ValueError("trailing tokens in formula")
    return out
