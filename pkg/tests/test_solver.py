import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairshift.core import EmptyCellError, FairKind
from fairshift.data import LabeledDataset, default_gaussian_spec, gaussian_sample
from fairshift.solver import (
    ConstraintSpec,
    LinearClassifier,
    RandomizedClassifier,
    SolverConfig,
    baseline_constraint,
    dumps_model,
    evaluate,
    loads_model,
    train_constrained,
    weighted_logistic_fit,
)


def sample(p_minor=0.05, n=1000, seed=0):
    return gaussian_sample(default_gaussian_spec(p_minor, n=n, seed=seed))


def logistic_objective(theta, X, y, w, l2):
    z = X @ theta[:-1] + theta[-1]
    s = 2 * y - 1
    w = w / w.sum()
    return float(w @ np.logaddexp(0, -s * z) + 0.5 * l2 * theta[:-1] @ theta[:-1])


@given(st.integers(0, 2**32 - 1))
def test_logistic_fit_matches_generic_optimizer(seed):
    minimize = pytest.importorskip("scipy.optimize").minimize
    rng = np.random.default_rng(seed)
    n = 80
    X = rng.normal(size=(n, 2))
    y = (X[:, 0] + rng.normal(scale=1.0, size=n) > 0).astype(int)
    if y.min() == y.max():
        return
    w = rng.uniform(0.1, 2.0, n)
    ds = LabeledDataset(X, np.zeros(n, int), y, ("g",))
    cfg = SolverConfig(l2=1e-2)
    clf = weighted_logistic_fit(ds, w, cfg)
    ref = minimize(logistic_objective, np.zeros(3), args=(X, y, w, 1e-2), method="BFGS", tol=1e-12)
    ours = logistic_objective(np.append(clf.weights, clf.bias), X, y, w, 1e-2)
    assert ours <= ref.fun + 1e-9


def test_logistic_fit_weight_scale_invariant():
    ds = sample()
    w = np.random.default_rng(0).uniform(0, 1, ds.n)
    a = weighted_logistic_fit(ds, w)
    b = weighted_logistic_fit(ds, 7.0 * w)
    np.testing.assert_allclose(a.weights, b.weights, atol=1e-8)


def test_logistic_fit_single_class_is_constant():
    ds = sample()
    clf = weighted_logistic_fit(ds, np.ones(ds.n), labels=np.ones(ds.n, int))
    assert clf.constant and clf.predict(ds.X).all()
    with pytest.raises(ValueError):
        weighted_logistic_fit(ds, np.zeros(ds.n))
    with pytest.raises(ValueError):
        weighted_logistic_fit(ds, -np.ones(ds.n))


def test_randomized_classifier_expected_loss():
    X = np.array([[-1.0], [1.0]])
    ds = LabeledDataset(X, [0, 0], [1, 1], ("g",))
    always = LinearClassifier([0.0], 1.0)
    never = LinearClassifier([0.0], -1.0)
    mix = RandomizedClassifier((always, never), [0.25, 0.75])
    np.testing.assert_allclose(mix.expected_loss(ds), [0.75, 0.75])
    draws = mix.predict(np.zeros((20000, 1)), np.random.default_rng(0))
    assert abs(draws.mean() - 0.25) < 0.02
    with pytest.raises(ValueError):
        RandomizedClassifier((always,), [0.5])
    with pytest.raises(ValueError):
        LinearClassifier([np.nan], 0.0)


def test_constraint_spec_validation():
    with pytest.raises(ValueError):
        ConstraintSpec(FairKind.CRP, -0.1)
    assert baseline_constraint().eps == 10.0
    with pytest.raises(ValueError):
        SolverConfig(selection="vote")


def test_fair_training_shrinks_gap():
    ds = sample(0.05, n=2000)
    base = train_constrained(ds, baseline_constraint())
    fair = train_constrained(ds, ConstraintSpec(FairKind.CRP, 0.1))
    gb, gf = evaluate(base, ds).gap, evaluate(fair, ds).gap
    assert gb > 0.2 and gf < 0.1
    assert len(fair.members) == SolverConfig().iterations


@pytest.mark.parametrize("selection", ["best_gap", "lp"])
def test_alternative_selections(selection):
    ds = sample(0.05, n=1500)
    cfg = SolverConfig(selection=selection)
    model = train_constrained(ds, ConstraintSpec(FairKind.CRP, 0.1), cfg)
    assert abs(model.mix_weights.sum() - 1.0) <= 1e-12
    assert evaluate(model, ds).gap < 0.15


def test_risk_parity_constraint():
    ds = sample(0.1, n=1500)
    fair = train_constrained(ds, ConstraintSpec(FairKind.RP, 0.05))
    base = train_constrained(ds, ConstraintSpec(FairKind.RP, 10.0))
    assert evaluate(fair, ds, kind=FairKind.RP).gap < evaluate(base, ds, kind=FairKind.RP).gap


def test_training_is_deterministic():
    ds = sample(0.05, n=800)
    a = dumps_model(train_constrained(ds, ConstraintSpec(FairKind.CRP, 0.1)))
    b = dumps_model(train_constrained(ds, ConstraintSpec(FairKind.CRP, 0.1)))
    assert a == b


def test_model_serialization_round_trip():
    ds = sample(n=500)
    model = train_constrained(ds, ConstraintSpec(FairKind.CRP, 0.1), SolverConfig(iterations=5))
    back = loads_model(dumps_model(model))
    np.testing.assert_array_equal(back.positive_rate(ds.X), model.positive_rate(ds.X))
    with pytest.raises(ValueError, match="line 1"):
        loads_model("weights 1 2\n")


def test_empty_cell_is_reported():
    ds = sample(n=400)
    ds = ds.subset(np.flatnonzero(~((ds.a == 1) & (ds.y == 1))))
    with pytest.raises(EmptyCellError):
        train_constrained(ds, ConstraintSpec(FairKind.CRP, 0.1))


def test_evaluate_profile_and_accuracy():
    ds = sample(n=600)
    model = RandomizedClassifier((LinearClassifier([0.0, 0.0], 1.0),), [1.0])
    ev = evaluate(model, ds)
    assert ev.accuracy == pytest.approx(ds.y.mean())
    np.testing.assert_allclose(ev.profile.values, [[1, 0], [1, 0]])
    assert ev.gap == 0.0
