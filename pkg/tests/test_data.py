import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairshift.data import (
    DataError,
    GaussianSpec,
    LabeledDataset,
    SchemaError,
    TabularSchema,
    concat,
    default_gaussian_spec,
    gaussian_sample,
    largest_remainder,
    load_csv,
    make_pstar_testset,
    minority_joint,
    pstar_target,
    split_train_test,
    standardize,
)


def test_dataset_validation():
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((3, 1)), [0, 1], [0, 1, 0], ("a", "b"))
    with pytest.raises(DataError):
        LabeledDataset(np.zeros((2, 1)), [0, 2], [0, 1], ("a", "b"))
    with pytest.raises(DataError):
        LabeledDataset(np.array([[np.inf], [0]]), [0, 1], [0, 1], ("a", "b"))


def test_dataset_csv_round_trip():
    ds = gaussian_sample(default_gaussian_spec(n=50))
    text = ds.to_csv()
    assert text.splitlines()[0] == "x0,x1,group,label"
    back = LabeledDataset.from_csv(text, groups=ds.groups, labels=ds.labels)
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.a, ds.a)
    np.testing.assert_array_equal(back.y, ds.y)
    with pytest.raises(SchemaError):
        LabeledDataset.from_csv("x,g,y\n1,0,0\n")


def test_gaussian_sample_is_seeded_and_shaped():
    spec = default_gaussian_spec(0.1, n=1000, seed=4)
    a, b = gaussian_sample(spec), gaussian_sample(spec)
    np.testing.assert_array_equal(a.X, b.X)
    assert a.n == 1000 and a.d == 2
    # counts follow the joint up to multinomial noise
    assert np.abs(a.joint().probs - minority_joint(0.1)).max() < 0.05
    c = gaussian_sample(spec.with_joint(spec.joint, seed=5))
    assert not np.array_equal(a.X, c.X)


def test_gaussian_sample_cell_means():
    spec = default_gaussian_spec(0.25, n=20000)
    ds = gaussian_sample(spec)
    for i in range(2):
        for j in range(2):
            rows = (ds.a == i) & (ds.y == j)
            np.testing.assert_allclose(ds.X[rows].mean(axis=0), spec.means[i, j], atol=0.05)


def test_gaussian_spec_errors():
    spec = default_gaussian_spec()
    bad = spec.covs.copy()
    bad[0, 0] = [[1.0, 2.0], [2.0, 1.0]]
    with pytest.raises(ValueError, match="positive definite"):
        gaussian_sample(GaussianSpec(spec.means, bad, spec.joint))
    with pytest.raises(ValueError):
        GaussianSpec(spec.means, spec.covs, [[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(ValueError):
        minority_joint(0.7)


@given(st.integers(0, 10_000), st.lists(st.floats(0.01, 10), min_size=1, max_size=8))
def test_largest_remainder(total, shares):
    counts = largest_remainder(total, np.array(shares))
    assert counts.sum() == total and counts.min() >= 0
    exact = total * np.array(shares) / np.sum(shares)
    assert np.all(np.abs(counts - exact) < 1.0 + 1e-9)


def test_split_is_stratified_and_exact():
    ds = gaussian_sample(default_gaussian_spec(0.05, n=3000, seed=1))
    tr, te = split_train_test(ds, 0.7, seed=2)
    assert tr.n == 2100 and te.n == 900
    np.testing.assert_array_equal(tr.cell_counts() + te.cell_counts(), ds.cell_counts())
    np.testing.assert_allclose(tr.joint().probs, ds.joint().probs, atol=2e-3)
    tr2, _ = split_train_test(ds, 0.7, seed=2)
    np.testing.assert_array_equal(tr.X, tr2.X)
    with pytest.raises(ValueError):
        split_train_test(ds, 1.0)


def test_pstar_testset_balances_groups():
    ds = gaussian_sample(default_gaussian_spec(0.1, n=4000, seed=3))
    target = pstar_target(ds)
    np.testing.assert_allclose(target.probs[0], target.probs[1])
    balanced = make_pstar_testset(ds, seed=0)
    counts = balanced.cell_counts()
    assert np.abs(counts[0] - counts[1]).max() <= 1
    # no row is used twice
    assert len({tuple(r) for r in balanced.X}) == balanced.n


def test_standardize_fits_on_train_only():
    ds = gaussian_sample(default_gaussian_spec(n=500))
    tr, te = split_train_test(ds, 0.5, seed=0)
    tr_s, (te_s,), st_ = standardize(tr, [te], n_numeric=1)
    np.testing.assert_allclose(tr_s.X[:, 0].mean(), 0.0, atol=1e-12)
    np.testing.assert_allclose(tr_s.X[:, 0].std(), 1.0, atol=1e-12)
    np.testing.assert_array_equal(te_s.X[:, 1], te.X[:, 1])  # non-numeric column untouched
    np.testing.assert_allclose(te_s.X[:, 0], (te.X[:, 0] - st_.mean[0]) / st_.scale[0])


def test_concat():
    ds = gaussian_sample(default_gaussian_spec(n=40))
    both = concat([ds.subset(np.arange(10)), ds.subset(np.arange(10, 40))])
    np.testing.assert_array_equal(both.X, ds.X)


CSV = """age,priors,sex,race,two_year_recid
25,1,Male,African-American,1
40,0,Female,Caucasian,0
33,,Male,Hispanic,0
51,4,Male,Caucasian,1
19,2,Female,African-American,0
"""


def _schema(**kw):
    base = dict(numeric=["age", "priors"], categorical=["sex"], protected=["race"],
                label="two_year_recid", positive="1", protected_binarize={"race": "Caucasian"})
    base.update(kw)
    return TabularSchema(**base)


def test_load_csv_encodes_and_drops(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text(CSV)
    data = load_csv(p, _schema())
    ds = data.dataset
    assert data.dropped_rows == 1 and ds.n == 4 and data.n_numeric == 2
    assert ds.feature_names == ("age", "priors", "sex=Female", "sex=Male")
    np.testing.assert_array_equal(ds.X[:, 2:].sum(axis=1), 1.0)  # one-hot
    assert ds.groups == ("Caucasian", "not_Caucasian")
    assert ds.labels == ("0", "1")
    assert ds.y.tolist() == [1, 0, 1, 0]


def test_load_csv_one_categorical_two_levels(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("c,g,y\nu,a,1\nv,a,0\nu,b,1\n")
    ds = load_csv(p, TabularSchema(categorical=["c"], protected=["g"], label="y")).dataset
    assert ds.d == 2 and ds.feature_names == ("c=u", "c=v")


def test_load_csv_errors(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text(CSV.replace("51,4", "51,four"))
    with pytest.raises(DataError, match="row 4"):
        load_csv(p, _schema())
    p.write_text(CSV.replace(",0\n", ",2\n", 1))
    with pytest.raises(DataError, match="binary"):
        load_csv(p, _schema())
    with pytest.raises(SchemaError, match="missing"):
        load_csv(p, _schema(numeric=["height"]))
    with pytest.raises(DataError, match="not found"):
        load_csv(tmp_path / "nope.csv", _schema())
    with pytest.raises(SchemaError):
        _schema(protected=[])
