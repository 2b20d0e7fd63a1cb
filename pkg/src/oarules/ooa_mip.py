"""Direct construction of up to K pattern boxes, solved exactly at desk scale.

Every box holds, per attribute, either nothing, a closed numeric range, or
one category. The objective depends on a numeric bound only through which
rows satisfy it, so bounds are restricted to midpoints between adjacent
observed values (plus the attribute's extremes) without losing optimality.

The solver runs in two stages:

1. a depth-first walk over per-attribute literal choices enumerates every
   distinct box coverage, keeping the shortest box for each (a box must
   cover at least one positive row, and a literal that leaves coverage
   unchanged is never worth its length);
2. boxes beaten on both classes by a box no longer than themselves are
   dropped, then a branch-and-bound assigns boxes to the K slots. Slots
   are filled in one fixed rank order (best single-box value first),
   which removes the K! relabelings of one box set; empty slots come last.

:class:`MIPInstance` and :func:`check_feasibility` spell out the variable
families of the joint formulation so that a solution can be audited
constraint by constraint.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dataset import Dataset
from .errors import GuardError
from .patterns import CategoricalLiteral, NumericLiteral, OAModel, Pattern, exact, pack_bits
from .selector import Solution, coverage_dominance, default_cap

MAX_ROWS = 500
MAX_ATTRS = 12


def enumerate_thresholds(d: Dataset, j: int | str) -> np.ndarray:
    """Midpoints between adjacent distinct observed values, plus L_j and U_j."""
    j = d.schema.index(j) if isinstance(j, str) else j
    a = d.schema.attributes[j]
    if not a.is_numeric:
        raise ValueError(f"attribute {a.name!r} is not numeric")
    vals = np.unique(d.columns[j][~np.isnan(d.columns[j])])
    lo = a.lower if a.lower is not None else (vals[0] if vals.size else math.nan)
    hi = a.upper if a.upper is not None else (vals[-1] if vals.size else math.nan)
    mids = (vals[:-1] + vals[1:]) / 2.0
    return np.unique(np.concatenate([[lo], mids, [hi]]))


# ---------------------------------------------------------------------------
# variables and constraint checking


@dataclass(frozen=True)
class BoxAssignment:
    """Per box, per attribute: None (inactive), ("num", l, u) or ("cat", v)."""

    boxes: tuple

    @classmethod
    def from_patterns(cls, patterns, schema, k: int) -> "BoxAssignment":
        if len(patterns) > k:
            raise ValueError(f"{len(patterns)} patterns do not fit in {k} boxes")
        rows = []
        for z in list(patterns) + [None] * (k - len(patterns)):
            row = [None] * len(schema.attributes)
            for lit in (z.literals if z is not None else ()):
                j = schema.index(lit.attr)
                a = schema.attributes[j]
                if isinstance(lit, CategoricalLiteral):
                    row[j] = ("cat", a.categories.index(lit.value))
                else:
                    lo = a.lower if math.isinf(lit.lower) else lit.lower
                    hi = a.upper if math.isinf(lit.upper) else lit.upper
                    row[j] = ("num", float(lo), float(hi))
            rows.append(tuple(row))
        return cls(tuple(rows))

    def patterns(self, schema) -> list:
        """Decoded pattern per box; None for an empty box."""
        out = []
        for row in self.boxes:
            lits = []
            for j, ch in enumerate(row):
                if ch is None:
                    continue
                a = schema.attributes[j]
                if ch[0] == "cat":
                    lits.append(CategoricalLiteral(a.name, a.categories[ch[1]]))
                else:
                    lit = NumericLiteral(a.name, ch[1], ch[2]).normalized(a)
                    if lit.is_substantive():
                        lits.append(lit)
            out.append(Pattern(lits) if lits else None)
        return out


@dataclass(frozen=True, eq=False)
class MIPInstance:
    dataset: Dataset
    k: int
    c1: float
    c2: float

    @property
    def thresholds(self) -> dict:
        return {j: enumerate_thresholds(self.dataset, j)
                for j, a in enumerate(self.dataset.schema.attributes) if a.is_numeric}


@dataclass
class MIPVariables:
    u: np.ndarray       # K x J upper bounds (NaN for categorical)
    l: np.ndarray       # K x J lower bounds
    o: np.ndarray       # K x J x V category picks
    delta: np.ndarray   # K x J substantive flags
    uhat: np.ndarray    # N x K x J: x_nj <= u_kj
    lhat: np.ndarray    # N x K x J: x_nj >= l_kj
    ohat: np.ndarray    # N x K x J: x_nj is the picked category
    omega: np.ndarray   # N x K pattern satisfaction
    xi: np.ndarray      # N errors
    zeta: np.ndarray    # K box in use


def encode(inst: MIPInstance, a: BoxAssignment) -> MIPVariables:
    """The variable values implied by a box assignment."""
    d = inst.dataset
    attrs = d.schema.attributes
    K, J, N = inst.k, len(attrs), d.n
    V = max([x.n_categories for x in attrs if not x.is_numeric], default=1)
    if len(a.boxes) != K:
        raise ValueError(f"assignment has {len(a.boxes)} boxes, instance has {K}")
    u = np.full((K, J), np.nan)
    l = np.full((K, J), np.nan)
    o = np.zeros((K, J, V), dtype=bool)
    delta = np.zeros((K, J), dtype=bool)
    uhat = np.zeros((N, K, J), dtype=bool)
    lhat = np.zeros((N, K, J), dtype=bool)
    ohat = np.zeros((N, K, J), dtype=bool)
    for k, row in enumerate(a.boxes):
        for j, at in enumerate(attrs):
            ch = row[j]
            col = d.columns[j]
            if at.is_numeric:
                lo, hi = (at.lower, at.upper) if ch is None else (ch[1], ch[2])
                l[k, j], u[k, j] = lo, hi
                with np.errstate(invalid="ignore"):
                    uhat[:, k, j] = col <= hi
                    lhat[:, k, j] = col >= lo
                delta[k, j] = hi < at.upper or lo > at.lower
            elif ch is not None:
                o[k, j, ch[1]] = True
                ohat[:, k, j] = col == ch[1]
                delta[k, j] = True
    omega = np.ones((N, K), dtype=bool)
    for k in range(K):
        for j, at in enumerate(attrs):
            if delta[k, j]:
                sat = (uhat[:, k, j] & lhat[:, k, j]) if at.is_numeric else ohat[:, k, j]
                omega[:, k] &= sat
    zeta = delta.any(axis=1)
    omega &= zeta[None, :]
    covered = omega.any(axis=1)
    xi = np.where(d.positive, ~covered, covered)
    return MIPVariables(u, l, o, delta, uhat, lhat, ohat, omega, xi, zeta)


def check_feasibility(inst: MIPInstance, a: BoxAssignment, v: MIPVariables | None = None):
    """Audit an assignment and its variables; returns (feasible, violations)."""
    d = inst.dataset
    attrs = d.schema.attributes
    v = encode(inst, a) if v is None else v
    out: list[str] = []
    thresholds = inst.thresholds
    for k in range(inst.k):
        for j, at in enumerate(attrs):
            if at.is_numeric:
                lo, hi = v.l[k, j], v.u[k, j]
                if lo > hi:
                    out.append(f"box {k} attribute {j}: lower {lo} exceeds upper {hi}")
                for name, b in (("lower", lo), ("upper", hi)):
                    if not np.any(np.isclose(thresholds[j], b, rtol=0, atol=1e-12)):
                        out.append(f"box {k} attribute {j}: {name} bound {b} is not a candidate threshold")
                want = bool(hi < at.upper or lo > at.lower)
                col = d.columns[j]
                with np.errstate(invalid="ignore"):
                    bad_u = np.flatnonzero(v.uhat[:, k, j] != (col <= hi))
                    bad_l = np.flatnonzero(v.lhat[:, k, j] != (col >= lo))
                for n in bad_u:
                    out.append(f"uhat[n={n},k={k},j={j}] disagrees with x <= u")
                for n in bad_l:
                    out.append(f"lhat[n={n},k={k},j={j}] disagrees with x >= l")
            else:
                picks = int(v.o[k, j].sum())
                if picks > 1:
                    out.append(f"box {k} attribute {j}: {picks} categories picked")
                want = picks == 1
                if picks == 1:
                    cat = int(np.argmax(v.o[k, j]))
                    for n in np.flatnonzero(v.ohat[:, k, j] != (d.columns[j] == cat)):
                        out.append(f"ohat[n={n},k={k},j={j}] disagrees with the picked category")
            if bool(v.delta[k, j]) != want:
                out.append(f"delta[k={k},j={j}]={int(v.delta[k, j])} but the literal is "
                           f"{'substantive' if want else 'inactive'}")
        if bool(v.zeta[k]) != bool(v.delta[k].any()):
            out.append(f"zeta[k={k}]={int(v.zeta[k])} but box has "
                       f"{int(v.delta[k].sum())} substantive literals")
    for n in range(d.n):
        for k in range(inst.k):
            if not v.zeta[k]:
                if v.omega[n, k]:
                    out.append(f"omega[n={n},k={k}]=1 for an empty box")
                continue
            failing = [j for j, at in enumerate(attrs) if v.delta[k, j] and not (
                (v.uhat[n, k, j] and v.lhat[n, k, j]) if at.is_numeric else v.ohat[n, k, j])]
            if v.omega[n, k] and failing:
                out.extend(f"omega[n={n},k={k}]=1 but literal (n={n},k={k},j={j}) is unsatisfied"
                           for j in failing)
            elif not v.omega[n, k] and not failing:
                out.append(f"omega[n={n},k={k}]=0 but every literal is satisfied")
        covered = bool(v.omega[n].any())
        want = (not covered) if d.positive[n] else covered
        if bool(v.xi[n]) != want:
            out.append(f"xi[n={n}]={int(v.xi[n])} disagrees with coverage")
    return not out, out


# ---------------------------------------------------------------------------
# solver


def _bits(mask: np.ndarray) -> int:
    """A boolean row mask as an integer bit set (row n -> bit n)."""
    return int.from_bytes(np.packbits(mask, bitorder="little").tobytes(), "little")


def _literal_options(d: Dataset, j: int, cover: np.ndarray):
    """Literals on attribute j that restrict the rows in ``cover``."""
    a = d.schema.attributes[j]
    col = d.columns[j]
    if not a.is_numeric:
        for v in np.unique(col[cover & (col >= 0)]):
            yield CategoricalLiteral(a.name, a.categories[int(v)])
        return
    every = np.unique(col[~np.isnan(col)])
    if every.size < 2:
        return
    mids = (every[:-1] + every[1:]) / 2.0
    pos_of = {float(x): i for i, x in enumerate(every)}
    here = np.unique(col[cover & ~np.isnan(col)])
    for lo_i in range(here.size):
        g_lo = pos_of[float(here[lo_i])]
        lower = -math.inf if g_lo == 0 else float(mids[g_lo - 1])
        for hi_i in range(lo_i, here.size):
            g_hi = pos_of[float(here[hi_i])]
            upper = math.inf if g_hi == every.size - 1 else float(mids[g_hi])
            if math.isinf(lower) and math.isinf(upper):
                continue
            yield NumericLiteral(a.name, lower, upper)


def box_catalog(d: Dataset, deadline: float = math.inf):
    """Shortest box for every distinct coverage that includes a positive row.

    Returns (boxes, complete) where boxes is a list of (pattern, mask).
    """
    J = len(d.schema.attributes)
    pos = d.positive
    best: dict = {}
    seen: dict = {}
    complete = True

    def walk(j: int, cover: np.ndarray, lits: tuple):
        nonlocal complete
        if time.perf_counter() > deadline:
            complete = False
            return
        key = (j, cover.tobytes())
        if seen.get(key, math.inf) <= len(lits):
            return
        seen[key] = len(lits)
        if j == J:
            if lits:
                z = Pattern(lits)
                old = best.get(key[1])
                if old is None or (z.length, z.sort_key()) < (old[0].length, old[0].sort_key()):
                    best[key[1]] = (z, cover)
            return
        walk(j + 1, cover, lits)
        for lit in _literal_options(d, j, cover):
            sub = cover & lit.mask(d)
            if not (sub & pos).any() or np.array_equal(sub, cover):
                continue
            walk(j + 1, sub, lits + (lit,))

    walk(0, np.ones(d.n, dtype=bool), ())
    boxes = sorted(best.values(), key=lambda e: (e[0].length, e[0].sort_key()))
    return boxes, complete


def _undominated(boxes: list, positive: np.ndarray) -> list:
    """Drop every box that another box at most as long beats on both classes.

    Catalog coverages are distinct, so this relation is a strict partial
    order and each dropped box keeps an undominated stand-in; swapping it in
    never raises the objective.
    """
    if len(boxes) < 2:
        return boxes
    masks = np.array([mk for _, mk in boxes])
    dom = coverage_dominance(pack_bits(masks[:, positive]), pack_bits(masks[:, ~positive]))
    np.fill_diagonal(dom, False)
    lengths = np.array([z.length for z, _ in boxes])
    beaten = (dom & (lengths[:, None] <= lengths[None, :])).any(axis=0)
    return [b for b, out in zip(boxes, beaten) if not out]


def solve_ooa(d: Dataset, c1: float, c2: float, k: int | None = None,
              time_limit: float = 60.0, *, cap: int = 5, max_rows: int = MAX_ROWS,
              max_attrs: int = MAX_ATTRS):
    """Jointly choose up to k boxes minimizing the regularized error; returns (model, Solution)."""
    if d.n > max_rows or len(d.schema.attributes) > max_attrs:
        raise GuardError(
            f"direct OOA is limited to {max_rows} rows and {max_attrs} attributes "
            f"(got {d.n} rows, {len(d.schema.attributes)} attributes); use the ooax mode instead")
    if d.n < 1:
        raise ValueError("direct OOA needs at least one example")
    if k is None:
        k = default_cap(d.n_pos, d.n, c1, c2, limit=cap)
    elif k < 1:
        raise ValueError("number of boxes must be >= 1")
    start = time.perf_counter()
    deadline = start + time_limit
    cap = max(cap, k, 1)
    fc1, fc2 = exact(c1), exact(c2)
    unit = Fraction(1, d.n)
    n_pos = d.n_pos
    if k == 0:
        return (OAModel((), c1, c2, cap, "ooa"),
                Solution((), float(unit * n_pos), n_pos, 0, 0, True, 0.0, 0,
                         time.perf_counter() - start))

    boxes, complete = box_catalog(d, deadline)
    boxes = _undominated(boxes, d.positive)
    pos_all = _bits(d.positive)
    entries = [(_bits(mk), z) for z, mk in boxes]
    regs = [fc1 * z.length + fc2 for _, z in entries]

    def first_pick(i):
        c = entries[i][0]
        return unit * ((c & ~pos_all).bit_count() - (c & pos_all).bit_count()) + regs[i]

    # slots are filled in a fixed rank order, which removes the K!
    # relabelings of one box set; the most useful boxes are ranked first
    rank = sorted(range(len(entries)), key=lambda i: (first_pick(i), -entries[i][0]))
    entries = [entries[i] for i in rank]
    regs = [regs[i] for i in rank]
    covs = [c for c, _ in entries]
    pos_cov = [c & pos_all for c in covs]
    neg_cov = [c & ~pos_all for c in covs]
    m = len(entries)

    def value(chosen) -> Fraction:
        cov = 0
        for i in chosen:
            cov |= covs[i]
        errors = (pos_all & ~cov).bit_count() + (cov & ~pos_all).bit_count()
        return unit * errors + sum((regs[i] for i in chosen), Fraction(0))

    def useful(cov, start_at):
        """Boxes from start_at on whose new positives pay for their regularization."""
        unc = pos_all & ~cov
        out = []
        for i in range(start_at, m):
            gain = (pos_cov[i] & unc).bit_count()
            if gain and unit * gain > regs[i]:
                out.append((i, gain, (neg_cov[i] & ~cov).bit_count()))
        return out

    def bound(chosen, cov, cands, slots: int) -> Fraction:
        """Least value of any completion by at most ``slots`` of the candidate boxes.

        If the most negative-heavy added box brings v new negatives, positives
        that no candidate with at most v new negatives covers stay errors.
        """
        unc = pos_all & ~cov
        u = unc.bit_count()
        committed = unit * (cov & ~pos_all).bit_count() + sum((regs[i] for i in chosen), Fraction(0))
        best_b = committed + unit * u
        if slots == 0 or not cands:
            return best_b
        min_reg = min(regs[i] for i, _, _ in cands)
        levels = []
        reach, top = 0, 0
        by_neg = sorted(cands, key=lambda e: e[2])
        for idx, (i, gain, nn) in enumerate(by_neg):
            reach |= pos_cov[i]
            top = max(top, gain)
            if idx + 1 == len(by_neg) or by_neg[idx + 1][2] != nn:
                levels.append((nn, (reach & unc).bit_count(), top))
        for t in range(1, slots + 1):
            extra = min(unit * (nn + u - min(r, t * g)) for nn, r, g in levels)
            best_b = min(best_b, committed + extra + t * min_reg)
        return best_b

    def tie_key(chosen):
        return sorted(entries[i][1].sort_key() for i in chosen)

    # greedy incumbent
    chosen, cov = (), 0
    while len(chosen) < k:
        step = min(((value(chosen + (i,)), i) for i in range(m) if i not in chosen), default=None)
        if step is None or step[0] >= value(chosen):
            break
        chosen += (step[1],)
    incumbent = (tuple(sorted(chosen)), value(chosen))

    nodes = 0
    timed_out = not complete
    root = bound((), 0, useful(0, 0), k)
    stack = [((), 0, 0)]
    while stack:
        chosen, cov, nxt = stack.pop()
        nodes += 1
        if nodes % 256 == 0 and time.perf_counter() > deadline:
            timed_out = True
            break
        val = value(chosen)
        if (val, len(chosen), tie_key(chosen)) < (incumbent[1], len(incumbent[0]),
                                                  tie_key(incumbent[0])):
            incumbent = (chosen, val)
        slots = k - len(chosen)
        if slots == 0:
            continue
        cands = useful(cov, nxt)
        if bound(chosen, cov, cands, slots) > incumbent[1]:
            continue
        for i, _, _ in reversed(cands):
            stack.append((chosen + (i,), cov | covs[i], i + 1))

    chosen, val = incumbent
    pats = tuple(entries[i][1] for i in chosen)
    model = OAModel(pats, c1, c2, cap, "ooa")
    proven = not timed_out
    gap = 0.0 if proven else float(max(Fraction(0), val - root))
    cov = 0
    for i in chosen:
        cov |= covs[i]
    errors = (pos_all & ~cov).bit_count() + (cov & ~pos_all).bit_count()
    stats = Solution(tuple(chosen), float(val), errors, sum(z.length for z in pats), len(pats),
                     proven, gap, nodes, time.perf_counter() - start)
    return model, stats
