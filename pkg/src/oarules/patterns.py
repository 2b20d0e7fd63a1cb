"""Literals, patterns and Or-of-Ands models.

A literal is a closed numeric range on one attribute or an equality with
one category. A pattern is a conjunction of literals (at most one per
attribute) and a model predicts 1 iff at least one of its patterns holds.

Rows are plain mappings from attribute name to value; a missing value is
``None`` (or NaN) and never satisfies a literal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, ParseError

INF = math.inf
PROVENANCES = ("ooax", "ooa", "converted")


def exact(x) -> Fraction:
    """Rational value of a regularization constant as the user wrote it (0.01 -> 1/100)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x))).limit_denominator(10**9)


def _missing(v) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v))


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class CategoricalLiteral:
    attr: str
    value: str

    kind = "categorical"

    def matches(self, v) -> bool:
        return not _missing(v) and str(v) == self.value

    def mask(self, d) -> np.ndarray:
        a = d.schema.attribute(self.attr)
        if a.is_numeric:
            raise DataError(f"categorical literal on numeric attribute {self.attr!r}")
        col = d.columns[d.schema.index(self.attr)]
        try:
            code = a.categories.index(self.value)
        except ValueError:
            return np.zeros(col.shape, dtype=bool)
        return col == code

    def is_substantive(self, attribute=None) -> bool:
        return True

    def intersect(self, other):
        return self if other == self else None

    def sort_key(self):
        return (self.attr, 1, self.value, "")

    def text(self) -> str:
        return f"{self.attr} = {self.value}"


@dataclass(frozen=True)
class NumericLiteral:
    """``lower <= x <= upper``; an infinite side is unbounded."""

    attr: str
    lower: float = -INF
    upper: float = INF

    kind = "numeric"

    def __post_init__(self):
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        if math.isnan(self.lower) or math.isnan(self.upper) or self.lower > self.upper:
            raise DataError(f"empty or invalid range on {self.attr!r}: [{self.lower}, {self.upper}]")

    @property
    def lower_active(self) -> bool:
        return self.lower != -INF

    @property
    def upper_active(self) -> bool:
        return self.upper != INF

    def matches(self, v) -> bool:
        if _missing(v):
            return False
        v = float(v)
        return self.lower <= v <= self.upper

    def mask(self, d) -> np.ndarray:
        a = d.schema.attribute(self.attr)
        if not a.is_numeric:
            raise DataError(f"numeric literal on categorical attribute {self.attr!r}")
        col = d.columns[d.schema.index(self.attr)]
        with np.errstate(invalid="ignore"):
            return (col >= self.lower) & (col <= self.upper)

    def is_substantive(self, attribute=None) -> bool:
        """Excludes some admissible value; relative to [L_j, U_j] when an attribute is given."""
        if attribute is None or attribute.lower is None:
            return self.lower_active or self.upper_active
        return self.lower > attribute.lower or self.upper < attribute.upper

    def normalized(self, attribute) -> "NumericLiteral":
        """Drop sides that sit at or beyond the attribute's observed range."""
        lo = -INF if attribute.lower is not None and self.lower <= attribute.lower else self.lower
        hi = INF if attribute.upper is not None and self.upper >= attribute.upper else self.upper
        return NumericLiteral(self.attr, lo, hi)

    def intersect(self, other):
        if not isinstance(other, NumericLiteral) or other.attr != self.attr:
            return None
        lo, hi = max(self.lower, other.lower), min(self.upper, other.upper)
        return NumericLiteral(self.attr, lo, hi) if lo <= hi else None

    def sort_key(self):
        return (self.attr, 0, self.lower, self.upper)

    def text(self) -> str:
        if self.lower_active and self.upper_active or not (self.lower_active or self.upper_active):
            return f"{_fmt(self.lower)} <= {self.attr} <= {_fmt(self.upper)}"
        if self.upper_active:
            return f"{self.attr} <= {_fmt(self.upper)}"
        return f"{self.attr} >= {_fmt(self.lower)}"


Literal = CategoricalLiteral | NumericLiteral


def matches(lit: Literal, x: Mapping) -> bool:
    return lit.matches(x.get(lit.attr))


def conjoin(literals: Iterable[Literal]) -> "Pattern | None":
    """Conjunction of literals with same-attribute literals merged; None if contradictory."""
    by_attr: dict[str, Literal] = {}
    for lit in literals:
        prev = by_attr.get(lit.attr)
        if prev is None:
            by_attr[lit.attr] = lit
            continue
        if prev.kind != lit.kind:
            raise DataError(f"attribute {lit.attr!r} used as both numeric and categorical")
        merged = prev.intersect(lit)
        if merged is None:
            return None
        by_attr[lit.attr] = merged
    return Pattern(by_attr.values())


@dataclass(frozen=True)
class Pattern:
    literals: frozenset

    def __init__(self, literals: Iterable[Literal] = ()):
        lits = frozenset(literals)
        attrs = [lit.attr for lit in lits]
        if len(set(attrs)) != len(attrs):
            raise DataError("a pattern holds at most one literal per attribute")
        object.__setattr__(self, "literals", lits)

    @property
    def length(self) -> int:
        return sum(1 for lit in self.literals if lit.is_substantive())

    def __len__(self) -> int:
        return len(self.literals)

    @property
    def attrs(self) -> frozenset:
        return frozenset(lit.attr for lit in self.literals)

    def sorted_literals(self) -> list:
        return sorted(self.literals, key=lambda lit: lit.sort_key())

    def sort_key(self):
        return tuple(lit.sort_key() for lit in self.sorted_literals())

    def satisfies(self, x: Mapping) -> bool:
        return all(lit.matches(x.get(lit.attr)) for lit in self.literals)

    def mask(self, d) -> np.ndarray:
        m = np.ones(d.n, dtype=bool)
        for lit in self.literals:
            m &= lit.mask(d)
        return m

    def text(self) -> str:
        if not self.literals:
            return "(TRUE)"
        return "(" + " AND ".join(lit.text() for lit in self.sorted_literals()) + ")"

    def __repr__(self):
        return f"Pattern{self.text()}"


def satisfies(z: Pattern, x: Mapping) -> bool:
    return z.satisfies(x)


@dataclass(frozen=True)
class OAModel:
    """The classifier f_A: predict 1 iff some pattern in A is satisfied."""

    patterns: tuple
    c1: float = 0.0
    c2: float = 0.0
    cap: int = 5
    provenance: str = "ooax"

    def __post_init__(self):
        pats = sorted(set(self.patterns), key=lambda z: (z.length, z.sort_key()))
        object.__setattr__(self, "patterns", tuple(pats))
        if self.cap < 1:
            raise ValueError("pattern cap must be positive")
        if len(pats) > self.cap:
            raise ValueError(f"{len(pats)} patterns exceed the cap of {self.cap}")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("regularization constants must be nonnegative")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.degenerate and self.provenance != "converted":
            raise ValueError("only converted models may hold the empty (always-true) pattern")

    @property
    def degenerate(self) -> bool:
        return any(not z.literals for z in self.patterns)

    @property
    def n_patterns(self) -> int:
        return len(self.patterns)

    @property
    def n_literals(self) -> int:
        return sum(z.length for z in self.patterns)

    @property
    def average_length(self) -> float:
        return self.n_literals / self.n_patterns if self.patterns else 0.0

    def predict(self, x: Mapping) -> int:
        return int(any(z.satisfies(x) for z in self.patterns))

    def predict_dataset(self, d) -> np.ndarray:
        out = np.zeros(d.n, dtype=bool)
        for z in self.patterns:
            out |= z.mask(d)
        return out.astype(np.int8)


def predict(m: OAModel, x: Mapping) -> int:
    return m.predict(x)


def support(z: Pattern, d) -> tuple[int, int]:
    """(positive support, negative support) of ``z`` over ``d``."""
    if d.n == 0:
        return 0, 0
    m = z.mask(d)
    pos = int((m & d.positive).sum())
    return pos, int(m.sum()) - pos


def error_count(m: OAModel, d) -> int:
    """Positives predicted 0 plus negatives predicted 1."""
    pred = m.predict_dataset(d).astype(bool)
    return int((d.positive & ~pred).sum() + (~d.positive & pred).sum())


def objective_terms(m: OAModel, d) -> tuple[int, int, int]:
    return error_count(m, d), m.n_literals, m.n_patterns


def objective(m: OAModel, d) -> float:
    """L(A) = errors/N + C1 * total literals + C2 * number of patterns."""
    if d.n < 1:
        raise ValueError("objective needs at least one example")
    errors, lits, pats = objective_terms(m, d)
    return errors / d.n + m.c1 * lits + m.c2 * pats


# ---------------------------------------------------------------------------
# coverage


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack each row of a boolean matrix into uint64 words (little bit order)."""
    bits = np.atleast_2d(np.asarray(bits, dtype=bool))
    rows, width = bits.shape
    words = max(1, -(-width // 64))
    padded = np.zeros((rows, words * 64), dtype=bool)
    padded[:, :width] = bits
    return np.packbits(padded, axis=1, bitorder="little").view(np.uint64).reshape(rows, words)


@dataclass(frozen=True, eq=False)
class CoverageMatrix:
    """W: bits[n, k] is set iff example n satisfies candidate pattern k."""

    bits: np.ndarray
    lengths: np.ndarray
    labels: np.ndarray
    patterns: tuple = ()

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.shape[0] != len(self.labels) or bits.shape[1] != len(self.lengths):
            raise ValueError("coverage matrix dimensions are inconsistent")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "lengths", np.asarray(self.lengths, dtype=np.int64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int8))

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    @property
    def k(self) -> int:
        return self.bits.shape[1]

    @property
    def n_pos(self) -> int:
        return int((self.labels == 1).sum())

    def packed(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-pattern coverage of the positive rows and of the negative rows, as packed words."""
        pos = self.labels == 1
        return pack_bits(self.bits[pos].T), pack_bits(self.bits[~pos].T)

    def support(self, k: int) -> tuple[int, int]:
        col = self.bits[:, k]
        pos = int((col & (self.labels == 1)).sum())
        return pos, int(col.sum()) - pos


def coverage_matrix(P: Sequence[Pattern], d) -> CoverageMatrix:
    P = tuple(P)
    bits = np.zeros((d.n, len(P)), dtype=bool)
    for k, z in enumerate(P):
        bits[:, k] = z.mask(d)
    return CoverageMatrix(bits, [z.length for z in P], d.labels, P)


# ---------------------------------------------------------------------------
# text and structured serialization

_EMPTY = "IF (FALSE)"
_TAIL = "THEN 1 ELSE 0"


def serialize(m: OAModel) -> str:
    if not m.patterns:
        return f"{_EMPTY}\n{_TAIL}"
    lines = []
    for i, z in enumerate(m.patterns):
        lines.append(("IF " if i == 0 else "OR ") + z.text())
    lines.append(_TAIL)
    return "\n".join(lines)


def _parse_real(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ParseError("expected a real number", lineno, tok) from None


def _parse_literal(text: str, lineno: int) -> Literal:
    toks = text.split()
    if len(toks) == 3:
        name, op, val = toks
        if op == "=":
            return CategoricalLiteral(name, val)
        if op == "<=":
            return NumericLiteral(name, upper=_parse_real(val, lineno))
        if op == ">=":
            return NumericLiteral(name, lower=_parse_real(val, lineno))
        raise ParseError("unknown operator", lineno, op)
    if len(toks) == 5:
        lo, op1, name, op2, hi = toks
        for op in (op1, op2):
            if op != "<=":
                raise ParseError("expected '<='", lineno, op)
        return NumericLiteral(name, _parse_real(lo, lineno), _parse_real(hi, lineno))
    raise ParseError("malformed literal", lineno, text)


def _parse_group(body: str, lineno: int) -> Pattern:
    body = body.strip()
    if not (body.startswith("(") and body.endswith(")")):
        raise ParseError("pattern must be parenthesized", lineno, body)
    inner = body[1:-1].strip()
    if inner == "TRUE":
        return Pattern()
    if not inner:
        raise ParseError("empty pattern", lineno, body)
    lits = [_parse_literal(part, lineno) for part in inner.split(" AND ")]
    try:
        return Pattern(lits)
    except DataError as exc:
        raise ParseError(str(exc), lineno) from None


def parse(text: str, *, c1: float = 0.0, c2: float = 0.0, cap: int | None = None,
          provenance: str | None = None) -> OAModel:
    """Inverse of :func:`serialize`. Parameters absent from the text format are keyword args."""
    lines = []
    for i, ln in enumerate(text.splitlines(), 1):
        ln = ln.strip()
        # the one-line form "IF (..) OR (..) THEN 1 ELSE 0" is accepted too
        tail = ln.endswith(" " + _TAIL)
        if tail:
            ln = ln[:-len(_TAIL)].strip()
        lines += [(i, part) for part in ln.replace(") OR (", ")\nOR (").split("\n") if part]
        if tail:
            lines.append((i, _TAIL))
    if not lines:
        raise ParseError("empty model text")
    tail_no, tail = lines[-1]
    if tail != _TAIL:
        raise ParseError(f"expected {_TAIL!r}", tail_no, tail)
    body = lines[:-1]
    if not body:
        raise ParseError("missing IF line", tail_no)
    pats: list[Pattern] = []
    if len(body) == 1 and body[0][1] == _EMPTY:
        body = []
    for idx, (lineno, ln) in enumerate(body):
        kw, _, rest = ln.partition(" ")
        want = "IF" if idx == 0 else "OR"
        if kw != want:
            raise ParseError(f"expected {want}", lineno, kw)
        pats.append(_parse_group(rest, lineno))
    if provenance is None:
        provenance = "converted" if any(not z.literals for z in pats) else "ooax"
    return OAModel(tuple(pats), c1, c2, cap if cap is not None else max(5, len(pats)), provenance)


def literal_to_dict(lit: Literal) -> dict:
    if isinstance(lit, CategoricalLiteral):
        return {"attr": lit.attr, "kind": "categorical", "value": lit.value}
    return {"attr": lit.attr, "kind": "numeric",
            "lower": None if not lit.lower_active else lit.lower,
            "upper": None if not lit.upper_active else lit.upper}


def literal_from_dict(obj: Mapping) -> Literal:
    if obj["kind"] == "categorical":
        return CategoricalLiteral(obj["attr"], obj["value"])
    lo, hi = obj.get("lower"), obj.get("upper")
    return NumericLiteral(obj["attr"], -INF if lo is None else lo, INF if hi is None else hi)


def to_dict(m: OAModel) -> dict:
    return {
        "patterns": [[literal_to_dict(l) for l in z.sorted_literals()] for z in m.patterns],
        "c1": m.c1, "c2": m.c2, "cap": m.cap, "provenance": m.provenance,
    }


def from_dict(obj: Mapping) -> OAModel:
    pats = tuple(Pattern(literal_from_dict(l) for l in lits) for lits in obj["patterns"])
    return OAModel(pats, obj["c1"], obj["c2"], obj["cap"], obj["provenance"])


def to_json(m: OAModel) -> str:
    return json.dumps(to_dict(m), indent=2)


def from_json(text: str) -> OAModel:
    return from_dict(json.loads(text))


def load_model(text: str) -> OAModel:
    """Read either serialization, recognised by its first character."""
    return from_json(text) if text.lstrip().startswith("{") else parse(text)
