import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import C1_CHOICES, C2_CHOICES, random_coverage
from oarules.patterns import (CategoricalLiteral, CoverageMatrix, NumericLiteral, Pattern, coverage_matrix,
                              exact)
from oarules.selector import (SelectionProblem, brute_force_solve, default_cap, greedy_warm_start,
                              lower_bound, reduce, solve)

A = Pattern([CategoricalLiteral("x1", "a")])
LE2 = Pattern([NumericLiteral("x2", upper=2.0)])


@pytest.fixture
def fixture_problem(fixture):
    return SelectionProblem(coverage_matrix([A, LE2], fixture), 0.01, 0.02, 5)


def test_reduce_values(fixture_problem):
    red = reduce(fixture_problem)
    assert math.isclose(red.value([0]), 0.03)
    assert red.value([]) == 0.5
    assert math.isclose(red.value([0, 1]), 0.31)


def test_greedy_fixture(fixture_problem):
    g = greedy_warm_start(fixture_problem)
    assert g.chosen == (0,) and math.isclose(g.objective, 0.03)
    assert math.isclose(g.history[0] - g.history[1], 0.47)
    assert not g.proven_optimal or g.gap == 0


def test_greedy_all_harmful():
    cov = CoverageMatrix(np.array([[0], [1]], dtype=bool), [1], [1, -1])
    g = greedy_warm_start(SelectionProblem(cov, 0.01, 0.01, 5))
    assert g.chosen == () and g.objective == 0.5


def test_greedy_respects_cap():
    bits = np.array([[1, 0], [0, 1], [0, 0]], dtype=bool)
    cov = CoverageMatrix(bits, [1, 1], [1, 1, -1])
    assert len(greedy_warm_start(SelectionProblem(cov, 0.0, 0.0, 1)).chosen) == 1


def test_lower_bound_cases(fixture_problem):
    red = reduce(fixture_problem)
    assert lower_bound(red, (True, False)) == red.value([0])
    assert lower_bound(red, ()) == 0.0
    cov = CoverageMatrix(np.array([[0], [1], [0]], dtype=bool), [1], [1, 1, -1])
    assert lower_bound(SelectionProblem(cov, 0.0, 0.0), ()) >= 1 / 3


def test_solve_fixture(fixture_problem):
    s = solve(fixture_problem)
    assert s.chosen == (0,) and math.isclose(s.objective, 0.03)
    assert s.proven_optimal and s.gap == 0
    assert "objective=" in s.stats_text() and "optimal=true" in s.stats_text()


@pytest.mark.parametrize("c2, both", [(0.05, True), (0.2, False)])
def test_two_patterns_threshold(c2, both):
    # 5 positives, 5 negatives; p0 covers rows 0-3, p1 covers rows 1-4: each misses one positive
    n = 10
    bits = np.zeros((n, 2), dtype=bool)
    bits[0:4, 0] = True
    bits[1:5, 1] = True
    cov = CoverageMatrix(bits, [1, 1], [1] * 5 + [-1] * 5)
    c1 = 0.01
    s = solve(SelectionProblem(cov, c1, c2, 5))
    # adding the second pattern saves one error (1/N = 0.1) and costs c1 + c2
    assert (len(s.chosen) == 2) == (1 / n > c1 + c2) == both


def test_cap_zero_rejected(fixture):
    with pytest.raises(ValueError):
        SelectionProblem(coverage_matrix([A], fixture), 0.01, 0.02, 0)


def test_empty_candidates(fixture):
    p = SelectionProblem(coverage_matrix([], fixture), 0.01, 0.02)
    assert solve(p).chosen == () and solve(p).objective == 0.5
    assert brute_force_solve(p).chosen == ()


def test_brute_force_refuses_large():
    cov = CoverageMatrix(np.zeros((2, 21), dtype=bool), [1] * 21, [1, -1])
    with pytest.raises(ValueError):
        brute_force_solve(SelectionProblem(cov, 0.0, 0.0))


def test_default_cap():
    assert default_cap(2, 4, 0.01, 0.02) == 5
    assert default_cap(2, 4, 0.2, 0.2) == 1
    assert default_cap(2, 4, 0.3, 0.3) == 0
    assert default_cap(2, 4, 0.0, 0.0) == 5


def test_node_limit_returns_incumbent_with_gap():
    rng = np.random.default_rng(3)
    bits = rng.random((60, 15)) < 0.3
    cov = CoverageMatrix(bits, rng.integers(1, 4, 15), np.where(rng.random(60) < 0.5, 1, -1))
    p = SelectionProblem(cov, 0.0, 0.001, 5, node_limit=1)
    s = solve(p)
    assert s.nodes == 1 and s.gap >= 0
    assert s.proven_optimal == (s.gap == 0)
    assert math.isclose(s.objective, reduce(p).value(s.chosen))


# ---------------------------------------------------------------------------
# properties


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 10**6), c1=st.sampled_from(C1_CHOICES), c2=st.sampled_from(C2_CHOICES),
       cap=st.integers(1, 7))
def test_solve_matches_brute_force(seed, c1, c2, cap):
    rng = np.random.default_rng(seed)
    p = SelectionProblem(random_coverage(rng), c1, c2, cap)
    a, b = solve(p), brute_force_solve(p)
    assert a.chosen == b.chosen and a.objective == b.objective
    assert a.proven_optimal and a.gap == 0
    hist = a.history
    assert all(x >= y for x, y in zip(hist, hist[1:]))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10**6), c1=st.sampled_from(C1_CHOICES[1:]), c2=st.sampled_from(C2_CHOICES))
def test_optimal_solutions_obey_support_and_size_bounds(seed, c1, c2):
    rng = np.random.default_rng(seed)
    cov = random_coverage(rng)
    s = solve(SelectionProblem(cov, c1, c2, 15))
    reg = exact(c1) + exact(c2)
    for k in s.chosen:
        assert cov.support(k)[1] <= cov.n_pos - cov.n * reg
        assert cov.support(k)[0] > cov.n * reg
    assert len(s.chosen) <= Fraction(cov.n_pos, cov.n) / reg


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), c1=st.sampled_from(C1_CHOICES), c2=st.sampled_from(C2_CHOICES))
def test_lower_bound_is_admissible(seed, c1, c2):
    rng = np.random.default_rng(seed)
    cov = random_coverage(rng)
    p = SelectionProblem(cov, c1, c2, cov.k or 1)
    red = reduce(p)
    for _ in range(200):
        depth = int(rng.integers(0, cov.k + 1))
        prefix = tuple(bool(b) for b in rng.random(depth) < 0.4)
        tail = rng.random(cov.k - depth) < 0.4
        chosen = [k for k, on in enumerate(prefix) if on]
        chosen += [depth + k for k in np.flatnonzero(tail)]
        assert lower_bound(red, prefix) <= red.value(chosen) + 1e-12


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), c1=st.sampled_from(C1_CHOICES), c2=st.sampled_from(C2_CHOICES))
def test_precomputed_dominance_changes_nothing(seed, c1, c2):
    from oarules.selector import coverage_dominance, dominance_pairs
    rng = np.random.default_rng(seed)
    cov = random_coverage(rng)
    pos, neg = cov.packed()
    dom = coverage_dominance(pos, neg)
    for i in range(cov.k):
        for j in range(cov.k):
            pi, pj = cov.bits[:, i] & (cov.labels == 1), cov.bits[:, j] & (cov.labels == 1)
            ni, nj = cov.bits[:, i] & (cov.labels == -1), cov.bits[:, j] & (cov.labels == -1)
            assert dom[i, j] == (bool(np.all(pi >= pj)) and bool(np.all(ni <= nj)))
    a = solve(SelectionProblem(cov, c1, c2, 5))
    b = solve(SelectionProblem(cov, c1, c2, 5, dominance=dominance_pairs(pos, neg)))
    assert (a.chosen, a.objective) == (b.chosen, b.objective)
