"""FP-growth over binarized rows.

Transactions are sets of binarized column ids. Itemsets that put two
literals on the same attribute are never generated: while growing a
suffix, items whose attribute already appears in it are dropped from the
conditional pattern base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

from .dataset import BinarizedDataset
from .patterns import Pattern

POSITIVES = "positives"
ALL_ROWS = "all"
DEFAULT_MIN_SUPPORT = 0.05
DEFAULT_MAX_LEN = 3


class FPNode:
    __slots__ = ("item", "count", "parent", "children")

    def __init__(self, item, parent):
        self.item = item
        self.count = 0
        self.parent = parent
        self.children: dict = {}

    def path(self) -> list:
        """Items from just below the root down to this node's parent."""
        out = []
        node = self.parent
        while node is not None and node.item is not None:
            out.append(node.item)
            node = node.parent
        out.reverse()
        return out


class FPTree:
    def __init__(self, order: dict):
        self.root = FPNode(None, None)
        self.order = order  # item -> rank; lower rank = more frequent
        self.header: dict = {item: [] for item in order}

    def insert(self, items: Sequence, count: int = 1):
        node = self.root
        for item in items:
            child = node.children.get(item)
            if child is None:
                child = FPNode(item, node)
                node.children[item] = child
                self.header[item].append(child)
            child.count += count
            node = child

    def item_count(self, item) -> int:
        return sum(n.count for n in self.header[item])

    @property
    def items(self) -> list:
        return sorted(self.order, key=self.order.__getitem__)

    def is_empty(self) -> bool:
        return not self.root.children


def _build(weighted: Iterable[tuple[Sequence, int]], min_count: int) -> FPTree:
    weighted = list(weighted)
    freq: dict = {}
    for items, c in weighted:
        for it in items:
            freq[it] = freq.get(it, 0) + c
    kept = [it for it, f in freq.items() if f >= min_count]
    kept.sort(key=lambda it: (-freq[it], it))
    order = {it: r for r, it in enumerate(kept)}
    tree = FPTree(order)
    for items, c in weighted:
        path = sorted((it for it in set(items) if it in order), key=order.__getitem__)
        if path:
            tree.insert(path, c)
    return tree


def build_fptree(transactions: Iterable[Iterable[Hashable]], min_count: int) -> FPTree:
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    return _build(((tuple(t), 1) for t in transactions), min_count)


def fpgrowth(transactions: Iterable[Iterable[Hashable]], min_count: int, max_len: int,
             conflict: Callable[[Hashable], Hashable] | None = None) -> dict:
    """All itemsets with support >= min_count and size <= max_len, mapped to their counts.

    ``conflict`` maps an item to a key; items sharing a key never co-occur
    in a returned itemset.
    """
    if min_count < 1 or max_len < 1:
        raise ValueError("min_count and max_len must be >= 1")
    key = conflict or (lambda it: it)
    out: dict = {}

    def grow(tree: FPTree, suffix: tuple, used: frozenset):
        for item in reversed(tree.items):
            chain = tree.header[item]
            count = sum(n.count for n in chain)
            if count < min_count:
                continue
            itemset = suffix + (item,)
            out[frozenset(itemset)] = count
            if len(itemset) >= max_len:
                continue
            now_used = used | {key(item)}
            base = []
            for node in chain:
                path = [it for it in node.path() if key(it) not in now_used]
                if path:
                    base.append((path, node.count))
            if base:
                sub = _build(base, min_count)
                if not sub.is_empty():
                    grow(sub, itemset, now_used)

    grow(build_fptree(transactions, min_count), (), frozenset())
    return out


@dataclass(frozen=True)
class MinedPattern:
    itemset: tuple[int, ...]
    count: int

    def pattern(self, b: BinarizedDataset) -> Pattern:
        return Pattern(b.columns[i] for i in self.itemset)


def min_count_for(min_support: float, n_transactions: int) -> int:
    # the small slack absorbs float noise such as 0.07 * 100 = 7.000000000000001
    return max(1, math.ceil(min_support * n_transactions - 1e-9))


def transactions_of(b: BinarizedDataset, scope: str = POSITIVES) -> list[tuple[int, ...]]:
    if scope == POSITIVES:
        rows = b.bits[b.origin.positive]
    elif scope == ALL_ROWS:
        rows = b.bits
    else:
        raise ValueError(f"unknown mining scope {scope!r}")
    return [tuple(np.flatnonzero(r).tolist()) for r in rows]


def mine(b: BinarizedDataset, min_support: float = DEFAULT_MIN_SUPPORT,
         max_len: int = DEFAULT_MAX_LEN, scope: str = POSITIVES) -> list[MinedPattern]:
    """Frequent conflict-free itemsets, ordered by size then item ids."""
    if not 0 < min_support <= 1:
        raise ValueError("min_support must lie in (0, 1]")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    trans = transactions_of(b, scope)
    if not trans:
        return []
    attr_of = b.attribute_of()
    found = fpgrowth(trans, min_count_for(min_support, len(trans)), max_len,
                     conflict=attr_of.__getitem__)
    mined = [MinedPattern(tuple(sorted(s)), c) for s, c in found.items()]
    mined.sort(key=lambda m: (len(m.itemset), m.itemset))
    return mined


def effective_min_support(user_min: float, c1: float, c2: float, n: int,
                          n_transactions: int, scope: str = POSITIVES) -> float:
    """Raise the support fraction to the positive-support floor (C1 + C2) * N.

    Patterns below that floor can always be dropped from a model without
    increasing the objective, so they need not be mined.
    """
    if c1 < 0 or c2 < 0:
        raise ValueError("regularization constants must be nonnegative")
    if scope != POSITIVES or n_transactions == 0:
        return user_min
    return max(user_min, (c1 + c2) * n / n_transactions)


def write_mined(mined: Sequence[MinedPattern], b: BinarizedDataset) -> str:
    """One itemset per line: ``count<TAB>lit,lit,...``."""
    lines = []
    for m in mined:
        lits = ",".join(b.columns[i].text() for i in m.itemset)
        lines.append(f"{m.count}\t{lits}")
    return "\n".join(lines) + ("\n" if lines else "")
