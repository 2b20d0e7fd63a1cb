import itertools
import math
import sys

import numpy as np
import pytest

from oarules.analysis import CategoricalSplit, DecisionTree, Leaf
from oarules.dataset import CATEGORICAL, NUMERIC, Attribute, Dataset, Schema, load_csv
from oarules.ooa_mip import enumerate_thresholds
from oarules.patterns import CategoricalLiteral, CoverageMatrix, NumericLiteral, Pattern

FIXTURE_CSV = "x1,x2,y\na,1.0,1\na,3.0,1\nb,2.0,-1\nb,4.0,-1\n"


@pytest.fixture
def fixture_csv(tmp_path):
    p = tmp_path / "fixture.csv"
    p.write_text(FIXTURE_CSV)
    return p


@pytest.fixture
def fixture(fixture_csv):
    return load_csv(fixture_csv)


def random_dataset(rng, n, j, n_values=4, p_missing=0.0):
    """Small mixed-type dataset with integer-valued numeric columns."""
    attrs, rows = [], [[] for _ in range(n)]
    for a in range(j):
        if rng.random() < 0.5:
            attrs.append(Attribute(f"a{a}", NUMERIC))
            vals = [float(v) for v in rng.integers(0, n_values, n)]
        else:
            cats = ("p", "q", "r")[:int(rng.integers(2, 4))]
            attrs.append(Attribute(f"a{a}", CATEGORICAL, cats))
            vals = [cats[i] for i in rng.integers(0, len(cats), n)]
        for i in range(n):
            rows[i].append(None if rng.random() < p_missing else vals[i])
    labels = [int(rng.random() < 0.5) for _ in range(n)]
    if n >= 2 and len(set(labels)) < 2:
        labels[0], labels[1] = 1, 0
    return Dataset.from_rows(Schema(tuple(attrs), "y", "1"), rows, labels)


def random_coverage(rng, max_n=60, max_k=15):
    n = int(rng.integers(1, max_n + 1))
    k = int(rng.integers(0, max_k + 1))
    bits = rng.random((n, k)) < rng.uniform(0.05, 0.7)
    if k and rng.random() < 0.3:
        bits[:, k - 1] = bits[:, 0]
    labels = np.where(rng.random(n) < 0.5, 1, -1)
    lengths = rng.integers(1, 4, k)
    return CoverageMatrix(bits, lengths, labels)


C1_CHOICES = (0.0, 0.001, 0.01, 0.02, 0.05)
C2_CHOICES = (0.0, 0.001, 0.01, 0.03)


def exhaustive_catalog(d):
    """Every box over the threshold grid, one shortest pattern per distinct coverage.

    Per attribute a box is inactive, a closed range between two candidate
    thresholds, or a single category; boxes covering no positive row are
    dropped. Built by plain product enumeration, independent of the solvers.
    """
    options = []
    for j, a in enumerate(d.schema.attributes):
        col = d.columns[j]
        opts = [(None, np.ones(d.n, dtype=bool))]
        if a.is_numeric:
            t = enumerate_thresholds(d, j)
            lo_end, hi_end = t[0], t[-1]
            for lo, hi in itertools.combinations_with_replacement(t, 2):
                if lo == lo_end and hi == hi_end:
                    continue
                lit = NumericLiteral(a.name, -math.inf if lo == lo_end else lo,
                                     math.inf if hi == hi_end else hi)
                with np.errstate(invalid="ignore"):
                    opts.append((lit, (col >= lo) & (col <= hi)))
        else:
            opts.extend((CategoricalLiteral(a.name, c), col == v) for v, c in enumerate(a.categories))
        options.append(opts)
    best = {}
    for combo in itertools.product(*options):
        lits = [lit for lit, _ in combo if lit is not None]
        if not lits:
            continue
        mask = np.logical_and.reduce([m for _, m in combo])
        if not (mask & d.positive).any():
            continue
        z = Pattern(lits)
        key = mask.tobytes()
        if key not in best or (z.length, z.sort_key()) < (best[key].length, best[key].sort_key()):
            best[key] = z
    return sorted(best.values(), key=lambda z: (z.length, z.sort_key()))


def random_binary_tree(rng, j, depth, p_leaf=0.25):
    """Categorical splits on the binary domain; an attribute is tested once per path."""

    def grow(free, d):
        if d == 0 or not free or rng.random() < p_leaf:
            return Leaf(int(rng.random() < 0.5))
        a = free[int(rng.integers(len(free)))]
        rest = [x for x in free if x != a]
        return CategoricalSplit(f"x{a + 1}", (("0", grow(rest, d - 1)), ("1", grow(rest, d - 1))))

    return DecisionTree(grow(list(range(j)), depth))


def random_binary_patterns(rng, j, count):
    out = []
    for _ in range(count):
        size = int(rng.integers(1, j + 1))
        attrs = rng.choice(j, size=size, replace=False)
        out.append(Pattern([CategoricalLiteral(f"x{int(a) + 1}", str(int(rng.integers(2)))) for a in attrs]))
    return out


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
