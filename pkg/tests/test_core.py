import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fairshift.core import (
    EmptyCellError,
    FairKind,
    FairSubspace,
    GroupMarginal,
    GroupSpace,
    RiskProfile,
    ShapeError,
    empirical_risk_profile,
    fairness_gap,
    load_marginal,
    matrix_from_csv,
    matrix_to_csv,
    overall_risk,
    project_fair,
    project_fair_perp,
)
from fairshift.data import LabeledDataset
from oracles import project_fair_loop

CRP22 = GroupSpace.crp(("0", "1"), ("0", "1"))
RP2 = GroupSpace.rp(("0", "1"))

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def space_and_pair(draw):
    n_a = draw(st.integers(1, 4))
    n_v = draw(st.integers(1, 4))
    space = GroupSpace.crp(tuple(range(n_a)), tuple(f"v{j}" for j in range(n_v)))
    x = draw(arrays(float, (n_a, n_v), elements=finite))
    y = draw(arrays(float, (n_a, n_v), elements=finite))
    kind = draw(st.sampled_from(list(FairKind)))
    return FairSubspace(space, kind), x, y


def test_space_validation():
    with pytest.raises(ValueError):
        GroupSpace(("a", "a"))
    with pytest.raises(ValueError):
        GroupSpace((), ("x",))
    assert RP2.trivial_disc and RP2.shape == (2, 1)
    assert CRP22.cell_names() == ["0|0", "0|1", "1|0", "1|1"]


def test_profile_is_read_only_and_shape_checked():
    r = RiskProfile(CRP22, [[0.1, 0.2], [0.3, 0.4]])
    with pytest.raises(ValueError):
        r.values[0, 0] = 1.0
    with pytest.raises(ShapeError):
        RiskProfile(CRP22, [0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        RiskProfile(CRP22, [[np.nan, 0], [0, 0]])


def test_marginal_must_sum_to_one():
    GroupMarginal(CRP22, np.full((2, 2), 0.25))
    with pytest.raises(ValueError):
        GroupMarginal(CRP22, np.full((2, 2), 0.3))
    with pytest.raises(ValueError):
        GroupMarginal(CRP22, [[1.2, -0.2], [0, 0]])
    assert GroupMarginal.uniform(CRP22).probs.sum() == pytest.approx(1.0)


def test_overall_risk_examples():
    # uniform target over a 2x2 profile is the plain mean
    r = RiskProfile(CRP22, [[0.1, 0.3], [0.2, 0.4]])
    assert overall_risk(GroupMarginal.uniform(CRP22), r) == pytest.approx(0.25, abs=1e-15)
    assert overall_risk(GroupMarginal(RP2, [0.9, 0.1]), RiskProfile(RP2, [0.1, 0.4])) == pytest.approx(0.13)
    with pytest.raises(ShapeError):
        overall_risk(GroupMarginal.uniform(CRP22), RiskProfile(RP2, [0.1, 0.4]))


def test_projection_examples():
    x = np.array([[0.1, 0.5], [0.3, 0.1]])
    np.testing.assert_allclose(project_fair(x, FairSubspace(CRP22)), [[0.2, 0.3], [0.2, 0.3]], atol=1e-15)
    np.testing.assert_allclose(project_fair(x, FairSubspace(CRP22, FairKind.RP)), np.full((2, 2), 0.25), atol=1e-15)
    # columns summing to zero are already in F-perp for CRP
    d = np.array([[0.15, 0.15], [-0.15, -0.15]])
    np.testing.assert_allclose(project_fair_perp(d, FairSubspace(CRP22)), d, atol=1e-15)


def test_fairness_gap():
    x = np.array([[0.1, 0.5], [0.3, 0.1]])
    assert fairness_gap(x, FairSubspace(CRP22)) == pytest.approx(0.4)
    assert fairness_gap(x, FairSubspace(CRP22, FairKind.RP)) == pytest.approx(0.4)
    assert fairness_gap(np.ones((2, 2)), FairSubspace(CRP22)) == 0.0


@given(space_and_pair())
def test_projection_matches_loop_oracle(case):
    fair, x, _ = case
    np.testing.assert_allclose(project_fair(x, fair), project_fair_loop(x, fair.kind), atol=1e-12)


@given(space_and_pair())
def test_projection_idempotent_and_orthogonal(case):
    fair, x, y = case
    px = project_fair(x, fair)
    np.testing.assert_allclose(project_fair(px, fair), px, atol=1e-12)
    np.testing.assert_allclose(px + project_fair_perp(x, fair), x, atol=1e-12)
    scale = 1.0 + np.abs(x).sum() * np.abs(y).max()
    assert abs(np.sum(px * project_fair_perp(y, fair))) <= 1e-12 * scale
    assert fair.contains(px, tol=1e-12)


@given(space_and_pair())
def test_rp_subspace_inside_crp_subspace(case):
    fair, x, _ = case
    rp = FairSubspace(fair.space, FairKind.RP)
    crp = FairSubspace(fair.space, FairKind.CRP)
    assert crp.contains(project_fair(x, rp), tol=1e-12)


@given(space_and_pair())
def test_gap_zero_iff_fair(case):
    fair, x, _ = case
    assert fairness_gap(project_fair(x, fair), fair) <= 1e-12
    if fairness_gap(x, fair) == 0.0:
        assert fair.contains(x, tol=1e-12)
    else:
        assert not fair.contains(x, tol=0.0)


def _tiny_dataset():
    X = np.zeros((6, 1))
    a = np.array([0, 0, 0, 1, 1, 1])
    y = np.array([0, 1, 1, 0, 0, 1])
    return LabeledDataset(X, a, y, groups=("g", "h"), labels=(0, 1))


def test_empirical_risk_profile_counts():
    ds = _tiny_dataset()
    losses = np.array([1, 0, 1, 0, 1, 1], dtype=float)
    space = GroupSpace.crp(("g", "h"), (0, 1))
    r = empirical_risk_profile(losses, ds, space)
    np.testing.assert_allclose(r.values, [[1.0, 0.5], [0.5, 1.0]])
    rp = empirical_risk_profile(losses, ds, GroupSpace.rp(("g", "h")))
    np.testing.assert_allclose(rp.values.ravel(), [2 / 3, 2 / 3])


def test_empirical_risk_profile_empty_cell():
    ds = _tiny_dataset().subset(np.array([0, 1, 2, 3, 4]))
    space = GroupSpace.crp(("g", "h"), (0, 1))
    losses = np.ones(5)
    with pytest.raises(EmptyCellError) as info:
        empirical_risk_profile(losses, ds, space)
    assert info.value.group == "h" and info.value.disc_value == 1
    r = empirical_risk_profile(losses, ds, space, strict=False)
    assert r.mask.tolist() == [[True, True], [True, False]]
    assert r.values[1, 1] == 0.0


def test_empirical_risk_profile_shape_error():
    with pytest.raises(ShapeError):
        empirical_risk_profile(np.ones(3), _tiny_dataset(), CRP22)


@given(arrays(float, (3, 2), elements=finite))
def test_matrix_csv_round_trip(x):
    space = GroupSpace.crp(("a", "b", "c"), ("u", "v"))
    sp, arr = matrix_from_csv(matrix_to_csv(x, space))
    assert sp == space
    np.testing.assert_array_equal(arr, x)


def test_matrix_csv_errors_carry_line_numbers(tmp_path):
    with pytest.raises(ValueError, match="line 3"):
        matrix_from_csv("group,0,1\n0,0.1,0.2\n1,0.3\n")
    with pytest.raises(ValueError, match="line 2"):
        matrix_from_csv("group,0,1\n0,zero,0.2\n")
    p = tmp_path / "m.csv"
    p.write_text("group,0,1\n0,0.25,0.25\n1,0.25,0.25\n")
    assert load_marginal(p).probs.sum() == 1.0
