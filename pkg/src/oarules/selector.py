"""Exact pattern selection by branch-and-bound.

Given a coverage matrix W over candidate patterns, choose a subset A
(|A| <= cap) minimizing

    f(A) = (#positives covered by no pattern in A + #negatives covered by A) / N
           + C1 * sum of lengths + C2 * |A|.

Costs are carried as integers: with C1 and C2 read as exact rationals and D
the least common denominator, N * D * f(A) is an integer. Ties are broken
toward fewer patterns and then the lexicographically smallest sorted
index tuple, so the optimum is unique and reproducible.

The search walks the subset-enumeration tree in a fixed branching order
(candidates ranked by their value as a first pick). A node is a chosen
set S; its children add one candidate ranked after the last one added.
Pruning rules, each of which preserves the tie-broken optimum:

* dominance: candidate j is dropped if some k < j covers a superset of
  j's positives, a subset of its negatives, and costs no more;
* pay-off: in the subtree of S, a candidate whose new positive coverage
  (relative to S) does not pay for its own regularization is never part
  of the optimum, since removing it would not increase f;
* bounds: adding t more patterns lowers the positive errors by at most
  the sum of their individual gains and raises the negative errors by at
  least the mean of their individual new negatives. A second bound groups
  candidates by how many new negatives they bring: if the worst added
  pattern brings v, positives that no candidate with at most v new
  negatives reaches stay errors.

Pairwise dominance over a fixed candidate pool can be computed once and
passed in as index pairs (``SelectionProblem.dominance``) when many solves
share it.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .patterns import CoverageMatrix, exact

DEFAULT_CAP = 5
DEFAULT_TIME_LIMIT = 60.0
BRUTE_FORCE_LIMIT = 20
_CHECK_EVERY = 4096


def default_cap(n_pos: int, n: int, c1: float, c2: float, limit: int = DEFAULT_CAP) -> int:
    """min(limit, floor((N+/N) / (C1 + C2))); 0 means the empty model is optimal."""
    reg = exact(c1) + exact(c2)
    if reg == 0 or n == 0:
        return limit
    return min(limit, math.floor(Fraction(n_pos, n) / reg))


@dataclass(frozen=True, eq=False)
class SelectionProblem:
    coverage: CoverageMatrix
    c1: float
    c2: float
    cap: int = DEFAULT_CAP
    time_limit: float = DEFAULT_TIME_LIMIT
    node_limit: int | None = None
    # optional precomputed dominance_pairs over the coverage columns, for
    # callers that solve many problems over one candidate pool
    dominance: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.node_limit is not None and self.node_limit < 1:
            raise ValueError("node_limit must be positive")
        if self.cap < 1:
            raise ValueError("pattern cap must be >= 1")
        k = self.coverage.k
        if self.dominance is not None:
            i, j = self.dominance
            if len(i) != len(j) or (len(i) and max(i.max(), j.max()) >= k):
                raise ValueError("dominance pairs do not match the coverage columns")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1 and c2 must be nonnegative")

    @property
    def n(self) -> int:
        return self.coverage.n

    @property
    def k(self) -> int:
        return self.coverage.k


@dataclass(frozen=True)
class Solution:
    chosen: tuple
    objective: float
    errors: int
    n_literals: int
    n_patterns: int
    proven_optimal: bool
    gap: float
    nodes: int = 0
    runtime: float = 0.0
    history: tuple = field(default=(), repr=False)

    def stats_text(self) -> str:
        return "\n".join([
            f"objective={self.objective!r}",
            f"gap={self.gap!r}",
            f"nodes={self.nodes}",
            f"runtime={self.runtime:.3f}",
            f"optimal={str(self.proven_optimal).lower()}",
        ])


def _popcount(words: np.ndarray) -> np.ndarray:
    return np.bitwise_count(words).sum(axis=-1, dtype=np.int64)


class Reduced:
    """The selection problem with the error variables eliminated.

    For a chosen set the errors are fixed: a positive row is an error iff
    no chosen pattern covers it, a negative row iff some chosen pattern does.
    """

    def __init__(self, problem: SelectionProblem):
        cov = problem.coverage
        self.problem = problem
        self.n = cov.n
        self.n_pos = cov.n_pos
        self.cap = problem.cap
        c1, c2 = exact(problem.c1), exact(problem.c2)
        self.scale = math.lcm(c1.denominator, c2.denominator)
        unit1 = int(c1 * self.scale) * self.n
        unit2 = int(c2 * self.scale) * self.n
        reg = [unit1 * int(l) + unit2 for l in cov.lengths]
        worst = self.scale * (self.n + 1) + self.cap * max(reg, default=0)
        dtype = np.int64 if worst < 2**60 else object
        self.reg = np.array(reg, dtype=dtype)
        self.lengths = cov.lengths
        self.pos, self.neg = cov.packed()
        pos_rows = cov.labels == 1
        self.pos_all = _pack_vector(np.ones(int(pos_rows.sum()), dtype=bool), self.pos.shape[1])
        self.neg_all = _pack_vector(np.ones(int((~pos_rows).sum()), dtype=bool), self.neg.shape[1])

    @property
    def k(self) -> int:
        return len(self.reg)

    def unit(self) -> int:
        return self.n * self.scale

    def state(self, chosen: Sequence[int]):
        covered_pos = np.zeros_like(self.pos_all)
        covered_neg = np.zeros_like(self.neg_all)
        for k in chosen:
            covered_pos |= self.pos[k]
            covered_neg |= self.neg[k]
        return self.pos_all & ~covered_pos, covered_neg

    def errors(self, chosen: Sequence[int]) -> int:
        unc, covneg = self.state(chosen)
        return int(_popcount(unc)) + int(_popcount(covneg))

    def cost(self, chosen: Sequence[int]) -> int:
        return self.scale * self.errors(chosen) + int(sum(int(self.reg[k]) for k in chosen))

    def value(self, chosen: Sequence[int]) -> float:
        """f(zeta) for the pattern indices in ``chosen``."""
        return float(Fraction(self.cost(chosen), self.unit()))

    def solution(self, chosen, proven: bool, gap_cost: int, nodes=0, runtime=0.0,
                 history=()) -> Solution:
        chosen = tuple(sorted(int(k) for k in chosen))
        return Solution(
            chosen=chosen,
            objective=self.value(chosen),
            errors=self.errors(chosen),
            n_literals=int(sum(int(self.lengths[k]) for k in chosen)),
            n_patterns=len(chosen),
            proven_optimal=proven,
            gap=float(Fraction(gap_cost, self.unit())),
            nodes=nodes,
            runtime=runtime,
            history=tuple(history),
        )


def _pack_vector(bits: np.ndarray, words: int) -> np.ndarray:
    padded = np.zeros(words * 64, dtype=bool)
    padded[:bits.size] = bits
    return np.packbits(padded, bitorder="little").view(np.uint64).copy()


def reduce(problem: SelectionProblem) -> Reduced:
    return Reduced(problem)


def lower_bound(problem: SelectionProblem | Reduced, prefix: Sequence[bool]) -> float:
    """Bound on f over all completions of a partial assignment.

    ``prefix[k]`` fixes zeta_k for the first len(prefix) patterns; the rest
    are free. Counts negatives already covered by chosen patterns, plus
    positives that no chosen or free pattern covers, plus the chosen
    patterns' regularization.
    """
    red = problem if isinstance(problem, Reduced) else Reduced(problem)
    chosen = [k for k, on in enumerate(prefix) if on]
    free = range(len(prefix), red.k)
    unc, covneg = red.state(chosen)
    reach = np.zeros_like(unc)
    for k in free:
        reach |= red.pos[k]
    never = int(_popcount(unc & ~reach))
    cost = red.scale * (never + int(_popcount(covneg))) + int(sum(int(red.reg[k]) for k in chosen))
    return float(Fraction(cost, red.unit()))


def greedy_warm_start(problem: SelectionProblem | Reduced) -> Solution:
    """Add the best-improving pattern until none improves or the cap is reached."""
    red = problem if isinstance(problem, Reduced) else Reduced(problem)
    chosen: list[int] = []
    unc, covneg = red.state(())
    cost = red.cost(())
    history = [cost]
    while len(chosen) < red.cap and red.k:
        gain = _popcount(red.pos & unc)
        newneg = _popcount(red.neg & ~covneg)
        delta = red.reg + red.scale * (newneg - gain)
        delta = np.array(delta, dtype=object) if delta.dtype == object else delta
        if chosen:
            delta[chosen] = max(0, int(np.max(delta))) + 1
        k = int(np.argmin(delta))
        if delta[k] >= 0:
            break
        chosen.append(k)
        unc &= ~red.pos[k]
        covneg |= red.neg[k]
        cost += int(delta[k])
        history.append(cost)
    root = lower_bound(red, ())
    value = red.value(chosen)
    sol = red.solution(chosen, False, 0, history=[float(Fraction(c, red.unit())) for c in history])
    return _replace_gap(sol, max(0.0, value - root))


def _replace_gap(sol: Solution, gap: float) -> Solution:
    from dataclasses import replace
    return replace(sol, gap=gap)


def coverage_dominance(pos: np.ndarray, neg: np.ndarray, block: int = 256) -> np.ndarray:
    """dom[i, j]: column i covers every positive row column j covers and no negative row j misses.

    ``pos`` and ``neg`` are packed per-column coverage words as returned by
    CoverageMatrix.packed(). Counts screen the pairs before the bitwise
    subset tests.
    """
    k = pos.shape[0]
    cp, cn = _popcount(pos), _popcount(neg)
    dom = np.zeros((k, k), dtype=bool)
    for start in range(0, k, block):
        rows = np.arange(start, min(start + block, k))
        maybe = (cp[rows, None] >= cp[None, :]) & (cn[rows, None] <= cn[None, :])
        r, j = np.nonzero(maybe)
        i = rows[r]
        ok = ~np.any(pos[j] & ~pos[i], axis=1) & ~np.any(neg[i] & ~neg[j], axis=1)
        dom[i[ok], j[ok]] = True
    return dom


def dominance_pairs(pos: np.ndarray, neg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays (i, j), i != j, of every pair where column i dominates column j."""
    i, j = np.nonzero(coverage_dominance(pos, neg))
    off = i != j
    return i[off], j[off]


def _dominance_filter(red: Reduced, idx: np.ndarray) -> np.ndarray:
    """Drop j when an earlier candidate covers at least its positives, at most its negatives, for no more cost.

    Dominance is transitive, so testing against every earlier candidate
    keeps the same set as testing against earlier survivors only.
    """
    idx = np.asarray(idx, dtype=np.int64)
    pre = red.problem.dominance
    if pre is None:
        a, b = dominance_pairs(red.pos[idx], red.neg[idx])
        a, b = idx[a], idx[b]
    else:
        a, b = pre
    # rank of each candidate in idx, -1 when absent
    rank = np.full(red.problem.k, -1, dtype=np.int64)
    rank[idx] = np.arange(idx.size)
    ra, rb = rank[a], rank[b]
    hit = (ra >= 0) & (ra < rb) & (red.reg[a] <= red.reg[b])
    dominated = np.zeros(idx.size, dtype=bool)
    dominated[rb[hit]] = True
    return idx[~dominated]


def _sum_smallest(vals: np.ndarray, t: int):
    if t >= vals.size:
        return vals.sum()
    return np.partition(vals, t - 1)[:t].sum()


def _levels(new_pos: np.ndarray, g: np.ndarray, nn: np.ndarray):
    """Group candidates by new negative coverage.

    For each distinct level v returns v, the uncovered positives reachable
    by candidates with at most v new negatives (as words and as a count),
    and the largest single gain among them.
    """
    order = np.argsort(nn, kind="stable")
    nn_s = nn[order]
    words = np.bitwise_or.accumulate(new_pos[order], axis=0)
    best = np.maximum.accumulate(g[order])
    ends = np.append(nn_s[1:] != nn_s[:-1], True)
    words = words[ends]
    return nn_s[ends], words, _popcount(words), best[ends]


def _level_bound(levels, t: int, uncovered: int, reg_t, D: int) -> int:
    """Least cost change from adding any t candidates.

    If the most negative-heavy of them adds v negatives, every positive not
    reachable at level v stays an error, and at most t times the best gain is
    recovered.
    """
    nn, _, reach, best = levels
    left = np.maximum(0, uncovered - np.minimum(reach, t * best))
    return int(np.min(D * (nn + left))) + int(reg_t) - D * uncovered


def _child_level_bound(levels, child_pos: np.ndarray, nn: np.ndarray, reg_sorted,
                       depth: int, D: int) -> np.ndarray:
    """Per child, least cost change from adding up to ``depth`` more candidates.

    Positives those candidates gain beyond the child lie in the reachable
    set of their negative level, outside the child's own coverage; their
    new negatives beyond the child number at least the level minus the
    child's new negatives.
    """
    lv_nn, words, _, best = levels
    outside = _popcount(words[None, :, :] & ~child_pos[:, None, :])
    negs = D * np.maximum(0, lv_nn[None, :] - nn[:, None])
    out = np.zeros(len(nn), dtype=np.int64)
    for t in range(1, depth + 1):
        gain = np.minimum(outside, t * best[None, :])
        val = int(reg_sorted[:t].sum()) + negs - D * gain
        out = np.minimum(out, val.min(axis=1))
    return out


def solve(problem: SelectionProblem) -> Solution:
    """Minimize f exactly; on timeout return the incumbent with its optimality gap."""
    start = time.perf_counter()
    red = Reduced(problem)
    if red.k == 0:
        return red.solution((), True, 0)
    D = red.scale
    cap = red.cap

    # root filters: pay-off against the empty set, then dominance
    gain0 = _popcount(red.pos)
    neg0 = _popcount(red.neg)
    cand = np.flatnonzero(D * gain0 > red.reg)
    cand = _dominance_filter(red, cand)
    delta0 = red.reg[cand] + D * (neg0[cand] - gain0[cand])
    order = cand[np.lexsort((cand, np.asarray(delta0, dtype=float)))] if cand.size else cand

    warm = greedy_warm_start(red)
    inc_cost = red.cost(warm.chosen)
    inc = (inc_cost, len(warm.chosen), warm.chosen)
    unit = red.unit()
    history = [float(Fraction(inc_cost, unit))]

    def can_improve(bound, size_min):
        return bound < inc[0] or (bound == inc[0] and size_min <= inc[1])

    unc0, covneg0 = red.state(())
    # stack entries: (lower bound, chosen, parent uncovered, parent covered negatives,
    #                 added pattern or -1, cost, free candidates in branching order)
    stack = [(-math.inf, (), unc0, covneg0, -1, red.cost(()), order)]
    nodes = 0
    timed_out = False
    while stack:
        entry = stack.pop()
        lb, chosen, unc, covneg, added, cost, free = entry
        if not can_improve(lb, len(chosen)):
            continue
        nodes += 1
        if (problem.node_limit is not None and nodes > problem.node_limit) or (
                nodes % _CHECK_EVERY == 0 and time.perf_counter() - start > problem.time_limit):
            nodes -= 1
            stack.append(entry)
            timed_out = True
            break
        if added >= 0:
            unc = unc & ~red.pos[added]
            covneg = covneg | red.neg[added]
        key = (cost, len(chosen), tuple(sorted(chosen)))
        if key < inc:
            inc = key
            history.append(float(Fraction(cost, unit)))
        r = cap - len(chosen)
        if r == 0 or free.size == 0:
            continue
        g = _popcount(red.pos[free] & unc)
        reg = red.reg[free]
        pays = D * g > reg
        free, g, reg = free[pays], g[pays], reg[pays]
        if free.size == 0:
            continue
        nn = _popcount(red.neg[free] & ~covneg)
        levels = _levels(red.pos[free] & unc, g, nn)
        uncovered = int(_popcount(unc))
        reg_sorted = np.sort(reg)
        promising = False
        for t in range(1, min(r, free.size) + 1):
            s = _sum_smallest(t * reg - t * D * g + D * nn, t)
            bound = cost - ((-int(s)) // t)
            bound = max(bound, cost + _level_bound(levels, t, uncovered, reg_sorted[:t].sum(), D))
            if can_improve(bound, len(chosen) + t):
                promising = True
                break
        if not promising:
            continue
        child_cost = cost + reg + D * (nn - g)
        if r > 1:
            optimistic = np.minimum(reg - D * g, 0)
            after = np.minimum.accumulate(optimistic[::-1])[::-1]
            after = np.append(after[1:], 0)
            child_lb = child_cost + np.maximum((r - 1) * after,
                                               _child_level_bound(levels, red.pos[free], nn,
                                                                  reg_sorted, r - 1, D))
        else:
            child_lb = child_cost
        for i in range(free.size - 1, -1, -1):
            b = int(child_lb[i])
            if can_improve(b, len(chosen) + 1):
                stack.append((b, chosen + (int(free[i]),), unc, covneg, int(free[i]),
                              int(child_cost[i]), free[i + 1:]))

    runtime = time.perf_counter() - start
    if timed_out:
        global_lb = min([e[0] for e in stack] + [inc[0]])
        gap = inc[0] - max(global_lb, 0) if math.isfinite(global_lb) else inc[0]
        return red.solution(inc[2], False, gap, nodes, runtime, history)
    return red.solution(inc[2], True, 0, nodes, runtime, history)


def brute_force_solve(problem: SelectionProblem) -> Solution:
    """Enumerate every subset within the cap; the reference for :func:`solve`."""
    cov = problem.coverage
    K = cov.k
    if K > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force refuses {K} candidates (limit {BRUTE_FORCE_LIMIT})")
    start = time.perf_counter()
    n = cov.n
    pos_rows = {i for i in range(n) if cov.labels[i] == 1}
    masks = [{i for i in range(n) if cov.bits[i, k]} for k in range(K)]
    c1, c2 = exact(problem.c1), exact(problem.c2)
    best = None
    count = 0
    for size in range(0, min(problem.cap, K) + 1):
        for subset in itertools.combinations(range(K), size):
            count += 1
            covered = set().union(*(masks[k] for k in subset)) if subset else set()
            errors = len(pos_rows - covered) + len(covered - pos_rows)
            lits = sum(int(cov.lengths[k]) for k in subset)
            value = Fraction(errors, n) + c1 * lits + c2 * size
            key = (value, size, subset)
            if best is None or key < best[0]:
                best = (key, errors, lits)
    (value, size, subset), errors, lits = best
    return Solution(subset, float(value), errors, lits, size, True, 0.0, count,
                    time.perf_counter() - start)
