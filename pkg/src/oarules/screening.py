"""Candidate screening: information-gain scores, support-bound pruning, top-K cut."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .patterns import Pattern, exact, support

DEFAULT_TOP_K = 2000
DEFAULT_GAMMA = 0.01


@dataclass(frozen=True)
class ScreeningConfig:
    gamma: float = DEFAULT_GAMMA
    top_k: int = DEFAULT_TOP_K
    c1: float = 0.0
    c2: float = 0.0

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.gamma < 0 or self.c1 < 0 or self.c2 < 0:
            raise ValueError("gamma, c1 and c2 must be nonnegative")


@dataclass(frozen=True)
class ScoredPattern:
    pattern: Pattern
    supp_pos: int
    supp_neg: int
    info_gain: float
    score: float

    @property
    def length(self) -> int:
        return self.pattern.length

    def text(self) -> str:
        return (f"{self.score!r}\t{self.info_gain!r}\t{self.length}\t"
                f"{self.supp_pos}\t{self.supp_neg}\t{self.pattern.text()}")


def entropy(pos, neg):
    """Binary entropy in bits of class counts; 0 log 0 = 0. Works elementwise on arrays."""
    pos, neg = np.broadcast_arrays(np.asarray(pos, dtype=np.float64),
                                   np.asarray(neg, dtype=np.float64))
    tot = pos + neg
    out = np.zeros(pos.shape)
    for part in (pos, neg):
        p = np.divide(part, tot, out=np.zeros(pos.shape), where=tot > 0)
        out -= p * np.log2(p, out=np.zeros(pos.shape), where=p > 0)
    return out


def info_gain_counts(supp_pos, supp_neg, n_pos: int, n_neg: int):
    """H(S) - H(S|z) over the two-cell split {satisfies z, does not}."""
    supp_pos = np.asarray(supp_pos, dtype=np.float64)
    supp_neg = np.asarray(supp_neg, dtype=np.float64)
    n = n_pos + n_neg
    if n == 0:
        return np.zeros(np.broadcast(supp_pos, supp_neg).shape)
    s = supp_pos + supp_neg
    h = entropy(n_pos, n_neg)
    cond = (s / n) * entropy(supp_pos, supp_neg) \
        + ((n - s) / n) * entropy(n_pos - supp_pos, n_neg - supp_neg)
    return np.clip(h - cond, 0.0, float(h))


def info_gain(z: Pattern, d) -> float:
    if d.n < 1:
        raise ValueError("information gain needs at least one example")
    p, q = support(z, d)
    return float(info_gain_counts(p, q, d.n_pos, d.n_neg))


def score(z: Pattern, d, gamma: float) -> float:
    return info_gain(z, d) - gamma * z.length


def score_counts(patterns: Sequence[Pattern], supp_pos, supp_neg, n_pos: int, n_neg: int,
                 gamma: float) -> list[ScoredPattern]:
    """Score patterns whose supports are already known."""
    gains = info_gain_counts(supp_pos, supp_neg, n_pos, n_neg)
    return [ScoredPattern(z, int(p), int(q), float(g), float(g) - gamma * z.length)
            for z, p, q, g in zip(patterns, supp_pos, supp_neg, np.atleast_1d(gains))]


def score_all(patterns: Sequence[Pattern], d, gamma: float) -> list[ScoredPattern]:
    sp = [support(z, d) for z in patterns]
    return score_counts(patterns, [p for p, _ in sp], [q for _, q in sp], d.n_pos, d.n_neg, gamma)


def support_bounds(n: int, n_pos: int, c1: float, c2: float):
    """(positive-support floor, negative-support ceiling) as exact rationals."""
    reg = (exact(c1) + exact(c2)) * n
    return reg, n_pos - reg


def prune(patterns: Sequence, d, c1: float, c2: float):
    """Drop candidates that can never belong to an optimal model.

    A pattern with positive support <= (C1 + C2) N can be removed from any
    model without raising the objective; a pattern with negative support
    above N+ - N (C1 + C2) makes a model worse than the empty one. Items
    may be Patterns or ScoredPatterns. Returns (kept, drop counts per rule).
    """
    floor, ceiling = support_bounds(d.n, d.n_pos, c1, c2)
    kept, report = [], {"positive_floor": 0, "negative_ceiling": 0}
    for item in patterns:
        if isinstance(item, ScoredPattern):
            p, q = item.supp_pos, item.supp_neg
        else:
            p, q = support(item, d)
        if p <= floor:
            report["positive_floor"] += 1
        elif q > ceiling:
            report["negative_ceiling"] += 1
        else:
            kept.append(item)
    return kept, report


def _rank_key(sp: ScoredPattern):
    return (-sp.score, sp.length, -sp.supp_pos, sp.pattern.sort_key())


def select_top(scored: Sequence[ScoredPattern], top_k: int) -> list[ScoredPattern]:
    """Highest scores first; ties go to shorter, then better-supported, then lexicographically first."""
    return sorted(scored, key=_rank_key)[:top_k]


def screen(patterns: Sequence[Pattern], d, config: ScreeningConfig) -> tuple[list[ScoredPattern], dict]:
    scored = score_all(patterns, d, config.gamma)
    kept, report = prune(scored, d, config.c1, config.c2)
    return select_top(kept, config.top_k), report
