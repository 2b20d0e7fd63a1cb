"""Trees and forests as OA models; efficient pattern sets and VC dimension.

A decision tree is an OA model in disguise: each path to a positive leaf
is a conjunction, and the tree predicts 1 iff one of those conjunctions
holds. A forest's majority vote is likewise a disjunction, over every
choice of a strict majority of trees, of conjunctions of one positive path
from each chosen tree.

On a finite domain of binary attributes, the largest "efficient" subset of
a pattern pool (every member covers a point no other member covers) can be
compared against a brute-force VC dimension computed from shattering.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset import CATEGORICAL, Attribute, Dataset, Schema
from .errors import GuardError, ParseError
from .patterns import (CategoricalLiteral, NumericLiteral, OAModel, Pattern, conjoin)

FOREST_GUARD = 10**6
DOMAIN_GUARD = 20
EFFICIENT_GUARD = 20
VC_PATTERN_GUARD = 12
VC_DOMAIN_GUARD = 10


# ---------------------------------------------------------------------------
# trees


@dataclass(frozen=True)
class Leaf:
    label: int


@dataclass(frozen=True)
class NumericSplit:
    """x <= threshold goes to ``low``, x > threshold to ``high``."""

    attr: str
    threshold: float
    low: object
    high: object


@dataclass(frozen=True)
class CategoricalSplit:
    """One child per listed category; other or missing values predict 0."""

    attr: str
    branches: tuple  # ((category, child), ...)


@dataclass(frozen=True)
class DecisionTree:
    root: object

    def predict(self, x: Mapping) -> int:
        node = self.root
        while not isinstance(node, Leaf):
            v = x.get(node.attr)
            if v is None or (isinstance(v, float) and math.isnan(v)):
                return 0
            if isinstance(node, NumericSplit):
                node = node.low if float(v) <= node.threshold else node.high
            else:
                for cat, child in node.branches:
                    if str(v) == cat:
                        node = child
                        break
                else:
                    return 0
        return node.label

    def paths(self):
        """(literals, label) for every root-to-leaf path."""
        out = []

        def walk(node, lits):
            if isinstance(node, Leaf):
                out.append((lits, node.label))
            elif isinstance(node, NumericSplit):
                walk(node.low, lits + [NumericLiteral(node.attr, upper=node.threshold)])
                walk(node.high, lits + [NumericLiteral(
                    node.attr, lower=float(np.nextafter(node.threshold, math.inf)))])
            else:
                for cat, child in node.branches:
                    walk(child, lits + [CategoricalLiteral(node.attr, cat)])

        walk(self.root, [])
        return out

    def n_positive_leaves(self) -> int:
        return sum(1 for _, label in self.paths() if label == 1)


@dataclass(frozen=True)
class Forest:
    trees: tuple

    def __post_init__(self):
        if not self.trees:
            raise ValueError("a forest needs at least one tree")

    @property
    def majority(self) -> int:
        return len(self.trees) // 2 + 1

    def predict(self, x: Mapping) -> int:
        return int(sum(t.predict(x) for t in self.trees) >= self.majority)


def _positive_patterns(t: DecisionTree) -> list[Pattern]:
    pats = []
    for lits, label in t.paths():
        if label != 1:
            continue
        z = conjoin(lits)
        if z is None:
            raise ValueError("invalid tree: a path to a positive leaf is contradictory: "
                             + " AND ".join(lit.text() for lit in lits))
        pats.append(z)
    return pats


def _converted(patterns: Sequence[Pattern]) -> OAModel:
    return OAModel(tuple(patterns), cap=max(1, len(patterns)), provenance="converted")


def tree_to_oa(t: DecisionTree) -> OAModel:
    """One pattern per positive leaf: the conjunction of the tests on its path."""
    return _converted(_positive_patterns(t))


def forest_bound(f: Forest) -> int:
    """Sum over strict-majority tree subsets of the product of their positive-leaf counts."""
    counts = [t.n_positive_leaves() for t in f.trees]
    return sum(math.prod(c) for c in itertools.combinations(counts, f.majority))


def forest_to_oa(f: Forest, guard: int = FOREST_GUARD) -> OAModel:
    """Conjoin one positive path from each tree of every strict-majority subset, then simplify."""
    bound = forest_bound(f)
    if bound > guard:
        raise GuardError(f"forest conversion would form {bound} conjunctions (guard {guard})")
    per_tree = [_positive_patterns(t) for t in f.trees]
    found = []
    for group in itertools.combinations(per_tree, f.majority):
        for pick in itertools.product(*group):
            found.append([lit for z in pick for lit in z.literals])
    return _converted(simplify(found))


def simplify(patterns: Iterable) -> list[Pattern]:
    """Drop contradictory conjunctions and any whose literals include another's.

    Items may be Patterns or plain literal collections; literals on one
    attribute are merged first.
    """
    merged = []
    for item in patterns:
        lits = item.literals if isinstance(item, Pattern) else item
        z = conjoin(lits)
        if z is not None:
            merged.append(z)
    unique = sorted(set(merged), key=lambda z: (len(z.literals), z.sort_key()))
    kept: list[Pattern] = []
    for z in unique:
        if not any(k.literals <= z.literals for k in kept):
            kept.append(z)
    return kept


# tree text format ---------------------------------------------------------


def format_tree(t: DecisionTree, indent: str = "  ") -> str:
    lines = []

    def walk(node, depth):
        pad = indent * depth
        if isinstance(node, Leaf):
            lines.append(f"{pad}leaf {node.label}")
        elif isinstance(node, NumericSplit):
            lines.append(f"{pad}split {node.attr} <= {node.threshold!r}")
            walk(node.low, depth + 1)
            walk(node.high, depth + 1)
        else:
            lines.append(f"{pad}split {node.attr} = " + "|".join(c for c, _ in node.branches))
            for _, child in node.branches:
                walk(child, depth + 1)

    walk(t.root, 0)
    return "\n".join(lines) + "\n"


def format_forest(f: Forest) -> str:
    return "---\n".join(format_tree(t) for t in f.trees)


def _parse_nodes(lines: list[tuple[int, int, str]]):
    pos = 0

    def node(expected_indent: int | None):
        nonlocal pos
        if pos >= len(lines):
            raise ParseError("tree ends before all children are given",
                             line=lines[-1][0] if lines else None)
        lineno, indent, text = lines[pos]
        if expected_indent is not None and indent != expected_indent:
            raise ParseError("unexpected indentation", line=lineno, token=text.split()[0])
        pos += 1
        parts = text.split()
        if parts[0] == "leaf":
            if len(parts) != 2 or parts[1] not in ("0", "1"):
                raise ParseError("leaf label must be 0 or 1", line=lineno,
                                 token=parts[1] if len(parts) > 1 else parts[0])
            return Leaf(int(parts[1]))
        if parts[0] != "split" or len(parts) != 4:
            raise ParseError("expected 'split <attr> <op> <value>' or 'leaf <0|1>'",
                             line=lineno, token=parts[0])
        _, attr, op, value = parts
        child_indent = lines[pos][1] if pos < len(lines) else indent + 1
        if child_indent <= indent:
            raise ParseError("split has no children", line=lineno, token=attr)
        if op == "<=":
            try:
                t = float(value)
            except ValueError:
                raise ParseError("threshold is not a number", line=lineno, token=value) from None
            return NumericSplit(attr, t, node(child_indent), node(child_indent))
        if op == "=":
            cats = value.split("|")
            if len(set(cats)) != len(cats) or not all(cats):
                raise ParseError("categories must be distinct and non-empty",
                                 line=lineno, token=value)
            return CategoricalSplit(attr, tuple((c, node(child_indent)) for c in cats))
        raise ParseError("unknown split operator", line=lineno, token=op)

    root = node(None)
    if pos != len(lines):
        raise ParseError("text after the end of the tree", line=lines[pos][0],
                         token=lines[pos][2].split()[0])
    return root


def _tree_lines(text: str, first_line: int = 1):
    out = []
    for i, raw in enumerate(text.splitlines()):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        out.append((first_line + i, len(raw) - len(raw.lstrip()), raw.strip()))
    return out


def parse_tree(text: str) -> DecisionTree:
    lines = _tree_lines(text)
    if not lines:
        raise ParseError("empty tree")
    return DecisionTree(_parse_nodes(lines))


def parse_forest(text: str) -> Forest:
    """Trees separated by lines holding only ``---``."""
    trees, chunk, start = [], [], 1
    for i, raw in enumerate(text.splitlines() + ["---"], 1):
        if raw.strip() == "---":
            lines = _tree_lines("\n".join(chunk), start)
            if lines:
                trees.append(DecisionTree(_parse_nodes(lines)))
            chunk, start = [], i + 1
        else:
            chunk.append(raw)
    if not trees:
        raise ParseError("no trees found")
    return Forest(tuple(trees))


# fixture tree learner -----------------------------------------------------


def _entropy(labels: np.ndarray) -> float:
    if labels.size == 0:
        return 0.0
    p = float(np.mean(labels))
    return -sum(q * math.log2(q) for q in (p, 1 - p) if q > 0)


def _majority(labels: np.ndarray) -> int:
    # ties go to 0
    return int(labels.sum() * 2 > labels.size)


def fit_fixture_tree(d: Dataset, max_depth: int) -> DecisionTree:
    """Greedy information-gain tree; only meant to produce conversion inputs."""
    y = d.positive.astype(np.int8)

    def grow(rows: np.ndarray, depth: int):
        labels = y[rows]
        if depth >= max_depth or labels.size == 0 or labels.min() == labels.max():
            return Leaf(_majority(labels))
        base = _entropy(labels)
        best = None
        for j, a in enumerate(d.schema.attributes):
            col = d.columns[j][rows]
            if a.is_numeric:
                ok = ~np.isnan(col)
                vals = np.unique(col[ok])
                for lo, hi in zip(vals[:-1], vals[1:]):
                    t = (lo + hi) / 2.0
                    parts = [rows[ok & (col <= t)], rows[ok & (col > t)]]
                    gain = base - sum(p.size / rows.size * _entropy(y[p]) for p in parts)
                    if best is None or gain > best[0] + 1e-12:
                        best = (gain, j, t, parts)
            else:
                present = [c for c in range(a.n_categories) if (col == c).any()]
                if len(present) < 2:
                    continue
                parts = [rows[col == c] for c in range(a.n_categories)]
                gain = base - sum(p.size / rows.size * _entropy(y[p]) for p in parts)
                if best is None or gain > best[0] + 1e-12:
                    best = (gain, j, None, parts)
        if best is None or best[0] <= 1e-12:
            return Leaf(_majority(labels))
        _, j, t, parts = best
        a = d.schema.attributes[j]
        kids = [grow(p, depth + 1) if p.size else Leaf(_majority(labels)) for p in parts]
        if t is not None:
            return NumericSplit(a.name, float(t), kids[0], kids[1])
        return CategoricalSplit(a.name, tuple(zip(a.categories, kids)))

    return DecisionTree(grow(np.arange(d.n), 0))


# ---------------------------------------------------------------------------
# finite binary domains


class FiniteDomain:
    """All 2^J assignments of J binary attributes x1..xJ with values "0"/"1"."""

    def __init__(self, j: int, guard: int = DOMAIN_GUARD):
        if j < 0:
            raise ValueError("number of attributes must be nonnegative")
        if j > guard:
            raise GuardError(f"a domain of {j} binary attributes exceeds the guard of {guard}")
        self.j = j
        self.names = [f"x{i + 1}" for i in range(j)]
        self.schema = Schema(tuple(Attribute(n, CATEGORICAL, ("0", "1")) for n in self.names),
                             "y", "1")
        codes = (np.arange(2**j)[:, None] >> np.arange(j)[None, :]) & 1
        self.points = codes.astype(np.int64)
        self.dataset = Dataset(self.schema, [codes[:, i] for i in range(j)],
                               -np.ones(2**j, dtype=np.int8))

    @property
    def size(self) -> int:
        return 2**self.j

    def row(self, p: int) -> dict:
        return {n: str(int(v)) for n, v in zip(self.names, self.points[p])}

    def support(self, z: Pattern) -> int:
        """Points satisfying z, as an integer bit set."""
        for lit in z.literals:
            if not isinstance(lit, CategoricalLiteral) or lit.attr not in self.names:
                raise ValueError(f"literal {lit.text()} is not over this binary domain")
        m = z.mask(self.dataset)
        return int.from_bytes(np.packbits(m, bitorder="little").tobytes(), "little")


def is_efficient_set(patterns: Sequence[Pattern], dom: FiniteDomain) -> bool:
    """Every member covers some point that no other member covers."""
    masks = [dom.support(z) for z in patterns]
    for i, m in enumerate(masks):
        rest = 0
        for k, o in enumerate(masks):
            if k != i:
                rest |= o
        if not m & ~rest:
            return False
    return True


def max_efficient_set(patterns: Sequence[Pattern], dom: FiniteDomain,
                      guard: int = EFFICIENT_GUARD) -> list[int]:
    """Indices of a largest efficient subset; lexicographically first among the largest.

    Subsets of efficient sets are efficient, so the search only extends
    efficient sets, visiting them in lexicographic order.
    """
    if len(patterns) > guard:
        raise GuardError(f"{len(patterns)} patterns exceed the efficient-set guard of {guard}")
    masks = [dom.support(z) for z in patterns]
    n = len(masks)
    best: list[int] = []

    def extend(chosen: list[int], private: list[int], union: int, start: int):
        nonlocal best
        if len(chosen) > len(best):
            best = list(chosen)
        for i in range(start, n):
            if len(chosen) + (n - i) <= len(best):
                return
            m = masks[i]
            own = m & ~union
            if not own:
                continue
            kept = [p & ~m for p in private]
            if not all(kept):
                continue
            extend(chosen + [i], kept + [own], union | m, i + 1)

    extend([], [], 0, 0)
    return best


def vc_dim_bruteforce(patterns: Sequence[Pattern], dom: FiniteDomain,
                      max_patterns: int = VC_PATTERN_GUARD, max_j: int = VC_DOMAIN_GUARD) -> int:
    """Largest number of domain points shattered by OA models built from subsets of the pool."""
    if len(patterns) > max_patterns or dom.j > max_j:
        raise GuardError(f"VC enumeration is limited to {max_patterns} patterns and "
                         f"{max_j} attributes (got {len(patterns)} and {dom.j})")
    masks = [dom.support(z) for z in patterns]
    # every labeling an OA model over the pool can produce, as a point bit set
    realizable = {0}
    for m in masks:
        realizable |= {r | m for r in realizable}
    # points covered by the same patterns always get the same label, and a
    # point covered by none is always 0, so one representative per
    # non-empty coverage signature suffices
    reps = {}
    for p in range(dom.size):
        sig = tuple((m >> p) & 1 for m in masks)
        if any(sig) and sig not in reps:
            reps[sig] = p
    points = sorted(reps.values())
    labels = list(realizable)
    best = 0

    def shattered(bits: int, h: int) -> bool:
        return len({r & bits for r in labels}) == 1 << h

    def extend(bits: int, h: int, start: int):
        nonlocal best
        best = max(best, h)
        if (1 << (h + 1)) > len(labels):
            return
        for i in range(start, len(points)):
            if h + (len(points) - i) <= best:
                return
            nb = bits | (1 << points[i])
            if shattered(nb, h + 1):
                extend(nb, h + 1, i + 1)

    extend(0, 0, 0)
    return best
