import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import exhaustive_catalog, random_dataset
from oarules.dataset import NUMERIC, Attribute, Dataset, Schema
from oarules.errors import GuardError
from oarules.ooa_mip import (BoxAssignment, MIPInstance, box_catalog, check_feasibility, encode,
                             enumerate_thresholds, solve_ooa)
from oarules.patterns import CategoricalLiteral, NumericLiteral, OAModel, Pattern, coverage_matrix, objective
from oarules.selector import SelectionProblem, solve


def numeric_data(values, labels):
    s = Schema((Attribute("x", NUMERIC),), "y", "1")
    return Dataset.from_rows(s, [[v] for v in values], labels)


def test_thresholds_examples():
    d = numeric_data([1.0, 2.0, 3.0, 4.0], [1, 0, 1, 0])
    assert enumerate_thresholds(d, "x").tolist() == [1.0, 1.5, 2.5, 3.5, 4.0]
    assert enumerate_thresholds(numeric_data([2.0, 2.0], [1, 0]), 0).tolist() == [2.0]
    assert enumerate_thresholds(numeric_data([0.0, 1.0], [1, 0]), 0).tolist() == [0.0, 0.5, 1.0]


def test_thresholds_reject_categorical(fixture):
    with pytest.raises(ValueError):
        enumerate_thresholds(fixture, "x1")


def fixture_assignment(fixture):
    return BoxAssignment.from_patterns([Pattern([CategoricalLiteral("x1", "a")])], fixture.schema, 2)


def test_feasible_hand_assignment(fixture):
    inst = MIPInstance(fixture, 2, 0.01, 0.02)
    a = fixture_assignment(fixture)
    ok, viol = check_feasibility(inst, a)
    assert ok and viol == []
    v = encode(inst, a)
    assert v.zeta.tolist() == [True, False]
    assert v.omega[:, 0].tolist() == [True, True, False, False]
    assert not v.xi.any()


def test_planted_omega_violation(fixture):
    inst = MIPInstance(fixture, 2, 0.01, 0.02)
    a = fixture_assignment(fixture)
    v = encode(inst, a)
    v.omega[2, 0] = True  # row 2 has x1 = b
    ok, viol = check_feasibility(inst, a, v)
    assert not ok
    assert any("(n=2,k=0,j=0)" in m for m in viol)


def test_activation_violation(fixture):
    inst = MIPInstance(fixture, 2, 0.01, 0.02)
    a = fixture_assignment(fixture)
    v = encode(inst, a)
    v.zeta[0] = False
    ok, viol = check_feasibility(inst, a, v)
    assert not ok and any(m.startswith("zeta[k=0]") for m in viol)


def test_bound_off_grid_is_a_violation(fixture):
    inst = MIPInstance(fixture, 1, 0.01, 0.02)
    a = BoxAssignment.from_patterns([Pattern([NumericLiteral("x2", upper=2.2)])], fixture.schema, 1)
    ok, viol = check_feasibility(inst, a)
    assert not ok and any("not a candidate threshold" in m for m in viol)


def test_one_dimensional_example():
    d = numeric_data([1.0, 2.0, 4.0, 5.0], [1, 1, 0, 0])
    model, stats = solve_ooa(d, 0.01, 0.02, 1)
    assert model.patterns == (Pattern([NumericLiteral("x", upper=3.0)]),)
    assert stats.errors == 0 and stats.proven_optimal
    assert math.isclose(stats.objective, 0.03)
    assert model.provenance == "ooa"


def test_heavy_regularization_gives_empty_model(fixture):
    model, stats = solve_ooa(fixture, 0.3, 0.3)
    assert model.n_patterns == 0
    assert stats.objective == 0.5 and stats.proven_optimal


def test_fixture_two_boxes(fixture):
    model, stats = solve_ooa(fixture, 0.01, 0.02, 2)
    assert math.isclose(stats.objective, 0.03) and stats.proven_optimal
    assert model.patterns == (Pattern([CategoricalLiteral("x1", "a")]),)
    cat = exhaustive_catalog(fixture)
    other = solve(SelectionProblem(coverage_matrix(cat, fixture), 0.01, 0.02, 2))
    assert other.objective == stats.objective


def test_scale_guard_names_ooax():
    d = numeric_data([float(i) for i in range(20)], [i % 2 for i in range(20)])
    with pytest.raises(GuardError, match="ooax"):
        solve_ooa(d, 0.01, 0.01, 1, max_rows=10)


def test_box_count_validated(fixture):
    with pytest.raises(ValueError):
        solve_ooa(fixture, 0.01, 0.02, 0)


# ---------------------------------------------------------------------------
# properties


def tiny_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 31))
    j = int(rng.integers(1, 4))
    d = random_dataset(rng, n, j)
    c1 = float(rng.choice([0.005, 0.01, 0.02]))
    c2 = float(rng.choice([0.0, 0.01, 0.03]))
    k = int(rng.integers(1, 4))
    return d, c1, c2, k


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_agrees_with_selector_over_exhaustive_catalog(seed):
    d, c1, c2, k = tiny_instance(seed)
    model, stats = solve_ooa(d, c1, c2, k)
    assert stats.proven_optimal
    cat = exhaustive_catalog(d)
    other = solve(SelectionProblem(coverage_matrix(cat, d), c1, c2, k))
    assert abs(stats.objective - other.objective) <= 1e-12
    assert math.isclose(objective(model, d), stats.objective, abs_tol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_returned_model_is_feasible(seed):
    d, c1, c2, k = tiny_instance(seed)
    model, _ = solve_ooa(d, c1, c2, k)
    a = BoxAssignment.from_patterns(model.patterns, d.schema, k)
    ok, viol = check_feasibility(MIPInstance(d, k, c1, c2), a)
    assert ok, viol
    decoded = [z for z in a.patterns(d.schema) if z is not None]
    assert decoded == list(model.patterns)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_bounds_can_move_within_their_cell(seed):
    d, c1, c2, k = tiny_instance(seed)
    model, _ = solve_ooa(d, c1, c2, k)
    want = model.predict_dataset(d)
    rng = np.random.default_rng(seed)
    for _ in range(5):
        pats = []
        for z in model.patterns:
            lits = []
            for lit in z.literals:
                if isinstance(lit, NumericLiteral):
                    # a midpoint sits halfway between observed neighbours h apart
                    lo, hi = lit.lower, lit.upper
                    if lit.lower_active:
                        lo = lo + rng.uniform(-0.49, 0.49) * _gap(d, lit.attr, lo)
                    if lit.upper_active:
                        hi = hi + rng.uniform(-0.49, 0.49) * _gap(d, lit.attr, hi)
                    lit = NumericLiteral(lit.attr, lo, max(lo, hi))
                lits.append(lit)
            pats.append(Pattern(lits))
        moved = OAModel(tuple(pats), c1, c2, model.cap, "ooa")
        assert np.array_equal(moved.predict_dataset(d), want)


def _gap(d, attr, t):
    col = d.columns[d.schema.index(attr)]
    vals = np.unique(col[~np.isnan(col)])
    below, above = vals[vals < t], vals[vals > t]
    return float(above[0] - below[-1]) if below.size and above.size else 0.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_box_order_does_not_change_errors(seed):
    d, c1, c2, k = tiny_instance(seed)
    boxes, _ = box_catalog(d)
    rng = np.random.default_rng(seed)
    pick = [boxes[i][0] for i in rng.permutation(len(boxes))[:k]]
    inst = MIPInstance(d, k, c1, c2)
    a = BoxAssignment.from_patterns(pick, d.schema, k)
    b = BoxAssignment.from_patterns(pick[::-1], d.schema, k)
    assert np.array_equal(encode(inst, a).xi, encode(inst, b).xi)
