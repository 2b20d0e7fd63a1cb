import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_dataset
from oarules.dataset import (CATEGORICAL, NUMERIC, Attribute, Dataset, Schema, binarize,
                             format_schema, load_csv, parse_schema, stratified_folds)
from oarules.errors import DataError, ParseError
from oarules.patterns import CategoricalLiteral, NumericLiteral


def test_load_fixture(fixture):
    assert fixture.n == 4 and fixture.n_pos == 2 and fixture.n_neg == 2
    x2 = fixture.schema.attribute("x2")
    assert x2.kind == NUMERIC and (x2.lower, x2.upper) == (1.0, 4.0)
    assert fixture.schema.attribute("x1").categories == ("a", "b")


def test_header_only_gives_empty_dataset(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("x1,x2,y\n")
    d = load_csv(p)
    assert d.n == 0


def test_short_row_names_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x1,x2,y\na,1.0,1\nb,2.0\n")
    with pytest.raises(DataError, match="line 3"):
        load_csv(p)


def test_unknown_category_under_schema(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x1,y\na,1\nc,0\n")
    schema = parse_schema("x1:categorical=a|b\nlabel=y:positive=1\n")
    with pytest.raises(DataError, match="unknown category"):
        load_csv(p, schema)


def test_three_labels_rejected(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x1,y\na,1\nb,0\na,2\n")
    with pytest.raises(DataError):
        load_csv(p)


def test_text_labels_need_positive(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x1,y\na,yes\nb,no\n")
    with pytest.raises(DataError):
        load_csv(p)
    d = load_csv(p, positive_label="yes")
    assert list(d.labels) == [1, -1]


def test_missing_cells(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x1,x2,y\na,?,1\n,2.0,0\nb,3.0,0\n")
    d = load_csv(p)
    assert np.isnan(d.columns[1][0])
    assert d.columns[0][1] == -1
    assert not CategoricalLiteral("x1", "a").mask(d)[1]


def test_schema_round_trip():
    text = "x1:categorical=a|b\nx2:numeric\nlabel=y:positive=1\n"
    assert format_schema(parse_schema(text)) == text


def test_schema_parse_error_names_line():
    with pytest.raises(ParseError, match="line 2"):
        parse_schema("x1:numeric\nx2:weird\nlabel=y:positive=1\n")


def test_binarize_fixture(fixture):
    b = binarize(fixture, 2, "quantile")
    cols = list(b.columns)
    assert CategoricalLiteral("x1", "a") in cols and CategoricalLiteral("x1", "b") in cols
    assert NumericLiteral("x2", upper=2.0) in cols
    assert NumericLiteral("x2", lower=3.0) in cols
    a = cols.index(CategoricalLiteral("x1", "a"))
    assert b.bits[:, a].tolist() == [True, True, False, False]


def test_binarize_constant_numeric_column():
    s = Schema((Attribute("x", NUMERIC), Attribute("c", CATEGORICAL, ("u", "v"))), "y", "1")
    d = Dataset.from_rows(s, [[1.0, "u"], [1.0, "v"], [1.0, "u"]], [1, 0, 1])
    b = binarize(d, 4)
    assert all(lit.attr != "x" for lit in b.columns)


def test_binarize_three_categories():
    s = Schema((Attribute("c", CATEGORICAL, ("u", "v", "w")),), "y", "1")
    d = Dataset.from_rows(s, [["u"], ["v"], ["w"]], [1, 0, 1])
    assert len(binarize(d).columns) == 3


def test_binarize_all_missing_column():
    s = Schema((Attribute("x", NUMERIC),), "y", "1")
    d = Dataset.from_rows(s, [[None], [None]], [1, 0])
    with pytest.raises(DataError, match="'x'"):
        binarize(d)


def test_binarize_equal_width():
    s = Schema((Attribute("x", NUMERIC),), "y", "1")
    d = Dataset.from_rows(s, [[0.0], [1.0], [2.0], [10.0]], [1, 0, 1, 0])
    b = binarize(d, 2, "equal-width")
    assert NumericLiteral("x", upper=2.0) in b.columns
    assert NumericLiteral("x", lower=10.0) in b.columns


def test_folds_fixture(fixture):
    f = stratified_folds(fixture, 2, 7)
    for _, te in f.splits():
        assert sorted(fixture.labels[te].tolist()) == [-1, 1]
    assert np.array_equal(f.fold_of, stratified_folds(fixture, 2, 7).fold_of)


def test_folds_too_many(fixture):
    with pytest.raises(DataError):
        stratified_folds(fixture, 3, 0)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 60), j=st.integers(1, 4),
       bins=st.integers(1, 5), missing=st.sampled_from([0.0, 0.2]))
def test_binarize_bits_match_literals(seed, n, j, bins, missing):
    rng = np.random.default_rng(seed)
    d = random_dataset(rng, n, j, n_values=6, p_missing=missing)
    try:
        b = binarize(d, bins)
    except DataError:
        return  # an all-missing column
    for c, lit in enumerate(b.columns):
        expect = [lit.matches(d.row(i)[lit.attr]) for i in range(d.n)]
        assert b.bits[:, c].tolist() == expect
        assert 0 < b.bits[:, c].sum() < d.n


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(4, 80), k=st.integers(2, 5))
def test_folds_partition_and_stratify(seed, n, k):
    rng = np.random.default_rng(seed)
    d = random_dataset(rng, n, 1)
    if k > min(d.n_pos, d.n_neg):
        return
    f = stratified_folds(d, k, seed)
    seen = np.concatenate([te for _, te in f.splits()])
    assert sorted(seen.tolist()) == list(range(d.n))
    for _, te in f.splits():
        # each fold's positive count is within one of its share
        assert abs((d.labels[te] == 1).sum() - d.n_pos / k) < 1
