"""Training, evaluation and nested cross-validation."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dataset import Dataset, binarize, stratified_folds
from .mining import DEFAULT_MAX_LEN, DEFAULT_MIN_SUPPORT, POSITIVES, effective_min_support, mine
from .patterns import CoverageMatrix, OAModel, coverage_matrix
from .screening import DEFAULT_GAMMA, DEFAULT_TOP_K, ScoredPattern, score_counts, select_top, support_bounds
from .selector import (DEFAULT_CAP, SelectionProblem, Solution, default_cap, dominance_pairs,
                       solve)

log = logging.getLogger(__name__)

DEFAULT_GRID = (0.0001, 0.001, 0.005, 0.01, 0.05)
DEFAULT_C = 0.001
# inner tuning solves stop after this many search nodes and keep their
# incumbent; a node budget (unlike a clock) keeps tuning reproducible
DEFAULT_TUNE_NODES = 1000


@dataclass(frozen=True)
class TrainConfig:
    min_support: float = DEFAULT_MIN_SUPPORT
    max_len: int = DEFAULT_MAX_LEN
    gamma: float = DEFAULT_GAMMA
    top_k: int = DEFAULT_TOP_K
    c1: float = DEFAULT_C
    c2: float = DEFAULT_C
    cap: int = DEFAULT_CAP
    bins: int = 4
    bin_mode: str = "quantile"
    scope: str = POSITIVES
    time_limit: float = 60.0
    mode: str = "ooax"
    tune_node_limit: int | None = DEFAULT_TUNE_NODES

    def __post_init__(self):
        if not 0 < self.min_support <= 1:
            raise ValueError("min_support must lie in (0, 1]")
        if self.max_len < 1 or self.top_k < 1 or self.cap < 1 or self.bins < 1:
            raise ValueError("max_len, topk, max_patterns and bins must be >= 1")
        if self.c1 < 0 or self.c2 < 0 or self.gamma < 0:
            raise ValueError("c1, c2 and gamma must be nonnegative")
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.mode not in ("ooax", "ooa"):
            raise ValueError(f"unknown mode {self.mode!r}")


def pattern_cap(d: Dataset, cfg: TrainConfig) -> int:
    """The user cap tightened by the bound on the size of an optimal pattern set."""
    return min(cfg.cap, default_cap(d.n_pos, d.n, cfg.c1, cfg.c2, limit=cfg.cap))


def mine_candidates(d: Dataset, cfg: TrainConfig, c_floor: float | None = None) -> list[ScoredPattern]:
    """Binarize, mine and score. Independent of C1/C2 except through the support floor.

    ``c_floor`` overrides C1 + C2 in the mining threshold so one candidate
    pool can serve a whole tuning grid; per-cell pruning removes the rest.
    """
    b = binarize(d, cfg.bins, cfg.bin_mode)
    if b.n_columns == 0:
        return []
    reg = cfg.c1 + cfg.c2 if c_floor is None else c_floor
    n_trans = d.n_pos if cfg.scope == POSITIVES else d.n
    ms = min(1.0, effective_min_support(cfg.min_support, reg, 0.0, d.n, n_trans, cfg.scope))
    mined = mine(b, ms, cfg.max_len, cfg.scope)
    pats, pos, neg = [], [], []
    for m in mined:
        cover = np.logical_and.reduce(b.bits[:, list(m.itemset)], axis=1)
        p = int((cover & d.positive).sum())
        pats.append(m.pattern(b))
        pos.append(p)
        neg.append(int(cover.sum()) - p)
    return score_counts(pats, pos, neg, d.n_pos, d.n_neg, cfg.gamma)


@dataclass(frozen=True, eq=False)
class CandidatePool:
    """Mined candidates in screening rank order, with their coverage of the training rows.

    Ranking and coverage do not depend on C1/C2, so one pool serves every
    cell of a tuning grid; each cell only re-applies the support bounds.
    """

    ranked: tuple
    bits: np.ndarray
    dominance: tuple
    supp_pos: np.ndarray
    supp_neg: np.ndarray
    lengths: np.ndarray

    @classmethod
    def build(cls, d: Dataset, scored: Sequence[ScoredPattern]) -> "CandidatePool":
        ranked = tuple(select_top(scored, len(scored)))
        cov = coverage_matrix([s.pattern for s in ranked], d)
        return cls(ranked, cov.bits, dominance_pairs(*cov.packed()),
                   np.array([s.supp_pos for s in ranked], dtype=np.int64),
                   np.array([s.supp_neg for s in ranked], dtype=np.int64), cov.lengths)

    def restrict(self, keep: np.ndarray) -> tuple:
        """Dominance pairs among the kept candidates, renumbered to positions in keep."""
        pos = np.full(len(self.ranked), -1, dtype=np.int64)
        pos[keep] = np.arange(len(keep))
        a, b = pos[self.dominance[0]], pos[self.dominance[1]]
        both = (a >= 0) & (b >= 0)
        return a[both], b[both]

    def screen(self, d: Dataset, c1: float, c2: float, top_k: int):
        floor, ceiling = support_bounds(d.n, d.n_pos, c1, c2)
        # counts are integers, so comparing with the rounded-down bounds is exact
        low = self.supp_pos <= math.floor(floor)
        high = ~low & (self.supp_neg > math.floor(ceiling))
        keep = np.flatnonzero(~low & ~high)[:top_k]
        return keep, {"positive_floor": int(low.sum()), "negative_ceiling": int(high.sum())}


def fit_ooax(d: Dataset, cfg: TrainConfig, scored: Sequence[ScoredPattern] | CandidatePool | None = None,
             node_limit: int | None = None):
    """Returns (model, solution, report of screening drops)."""
    if scored is None:
        scored = mine_candidates(d, cfg)
    pool = scored if isinstance(scored, CandidatePool) else CandidatePool.build(d, scored)
    keep, report = pool.screen(d, cfg.c1, cfg.c2, cfg.top_k)
    report = dict(report, mined=len(pool.ranked), candidates=len(keep))
    cap = pattern_cap(d, cfg)
    if cap < 1 or keep.size == 0:
        model = OAModel((), cfg.c1, cfg.c2, cfg.cap)
        return model, _empty_solution(d), report
    top = [pool.ranked[i].pattern for i in keep]
    cov = CoverageMatrix(pool.bits[:, keep], pool.lengths[keep], d.labels, tuple(top))
    sol = solve(SelectionProblem(cov, cfg.c1, cfg.c2, cap, cfg.time_limit, node_limit,
                                 pool.restrict(keep)))
    model = OAModel(tuple(top[k] for k in sol.chosen), cfg.c1, cfg.c2, cfg.cap)
    return model, sol, report


def _empty_solution(d: Dataset) -> Solution:
    err = d.n_pos
    return Solution((), err / d.n if d.n else 0.0, err, 0, 0, True, 0.0)


def fit(d: Dataset, cfg: TrainConfig):
    """Train in the configured mode; returns (model, solution)."""
    if cfg.mode == "ooa":
        from .ooa_mip import solve_ooa
        return solve_ooa(d, cfg.c1, cfg.c2, pattern_cap(d, cfg), cfg.time_limit, cap=cfg.cap)
    model, sol, _ = fit_ooax(d, cfg)
    return model, sol


def accuracy(model: OAModel, d: Dataset) -> float:
    if d.n == 0:
        return float("nan")
    pred = model.predict_dataset(d).astype(bool)
    return float((pred == d.positive).mean())


def confusion(model: OAModel, d: Dataset) -> dict:
    pred = model.predict_dataset(d).astype(bool)
    pos = d.positive
    return {"tp": int((pred & pos).sum()), "fp": int((pred & ~pos).sum()),
            "tn": int((~pred & ~pos).sum()), "fn": int((~pred & pos).sum())}


@dataclass
class FoldResult:
    fold: int
    c1: float
    c2: float
    accuracy: float
    model: OAModel
    solution: Solution


@dataclass
class EvalReport:
    accuracies: list = field(default_factory=list)
    folds: list = field(default_factory=list)
    runtime: float = 0.0

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies)) if self.accuracies else float("nan")

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies)) if self.accuracies else float("nan")

    def complexity(self) -> dict:
        ms = [f.model for f in self.folds]
        if not ms:
            return {"patterns": 0.0, "average_length": 0.0, "literals": 0.0}
        return {"patterns": float(np.mean([m.n_patterns for m in ms])),
                "average_length": float(np.mean([m.average_length for m in ms])),
                "literals": float(np.mean([m.n_literals for m in ms]))}

    def text(self) -> str:
        c = self.complexity()
        lines = [f"accuracy={self.mean:.4f} ({self.std:.4f})",
                 f"patterns={c['patterns']:.2f}",
                 f"average_length={c['average_length']:.2f}",
                 f"literals={c['literals']:.2f}"]
        for f in self.folds:
            s = f.solution
            lines.append(
                f"fold={f.fold} c1={f.c1!r} c2={f.c2!r} accuracy={f.accuracy:.4f} "
                f"patterns={f.model.n_patterns} literals={f.model.n_literals} "
                f"objective={s.objective!r} gap={s.gap!r} nodes={s.nodes} "
                f"optimal={str(s.proven_optimal).lower()}")
        return "\n".join(lines)


def tune(train: Dataset, cfg: TrainConfig, grid: Sequence[tuple[float, float]], k: int, seed: int):
    """Pick (C1, C2) by inner stratified k-fold accuracy.

    Ties go to fewer mean literals, then to the earlier grid cell.
    """
    if not grid:
        raise ValueError("tuning grid is empty")
    floor = min(c1 + c2 for c1, c2 in grid)
    folds = stratified_folds(train, k, seed)
    pools = []
    for tr, _ in folds.splits():
        sub = train.subset(tr)
        pools.append((sub, CandidatePool.build(sub, mine_candidates(sub, cfg, floor))))
    best = None
    for i, (c1, c2) in enumerate(grid):
        cell = replace(cfg, c1=c1, c2=c2)
        accs, lits = [], []
        for (sub, pool), (_, te) in zip(pools, folds.splits()):
            model, _, _ = fit_ooax(sub, cell, pool, cfg.tune_node_limit)
            accs.append(accuracy(model, train.subset(te)))
            lits.append(model.n_literals)
        key = (-float(np.mean(accs)), float(np.mean(lits)), i)
        log.debug("grid c1=%s c2=%s inner accuracy %.4f", c1, c2, -key[0])
        if best is None or key < best[0]:
            best = (key, (c1, c2))
    return best[1]


def cross_validate(d: Dataset, cfg: TrainConfig, k: int = 5, seed: int = 0,
                   grid: Sequence[tuple[float, float]] | None = None) -> EvalReport:
    """Outer k-fold estimate; with a grid, C1/C2 are tuned inside each training split."""
    start = time.perf_counter()
    folds = stratified_folds(d, k, seed)
    report = EvalReport()
    for f, (tr, te) in enumerate(folds.splits()):
        train, test = d.subset(tr), d.subset(te)
        c1, c2 = cfg.c1, cfg.c2
        if grid:
            c1, c2 = tune(train, cfg, grid, max(2, k - 1), seed + 1 + f)
        cell = replace(cfg, c1=c1, c2=c2)
        model, sol = fit(train, cell)
        acc = accuracy(model, test)
        report.accuracies.append(acc)
        report.folds.append(FoldResult(f, c1, c2, acc, model, sol))
        log.info("fold %d: c1=%s c2=%s accuracy %.4f", f, c1, c2, acc)
    report.runtime = time.perf_counter() - start
    return report


def default_grid(values: Sequence[float] = DEFAULT_GRID) -> list[tuple[float, float]]:
    return [(a, b) for a in values for b in values]
