import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fairshift.core import FairKind, FairSubspace, GroupSpace
from fairshift.geometry import bayes_fair_check, minimize_linear, orthogonality_check
from fairshift.instances import BIAS_KINDS, crp_space, random_rp2_instance, random_target_instance

seeds = st.integers(0, 2**32 - 1)


@given(seeds, st.sampled_from(BIAS_KINDS), st.integers(3, 10))
def test_target_instance_invariants(seed, bias, n_vertices):
    inst = random_target_instance(np.random.default_rng(seed), crp_space(), n_vertices=n_vertices, bias=bias)
    assert len(inst.poly) == n_vertices
    assert inst.poly.vertices.min() >= 0
    _, argmin = minimize_linear(inst.poly, inst.p_star)
    assert argmin == [inst.r_star_index]
    assert bayes_fair_check(inst.poly, inst.p_star, inst.fair)
    for p in (inst.p_star.probs, inst.p_tilde.probs):
        assert p.min() >= 0 and p.sum() == pytest.approx(1.0, abs=1e-12)
    if bias == "orthogonal":
        assert orthogonality_check(inst.p_star, inst.p_tilde, inst.fair)


def test_target_instance_is_seeded():
    a = random_target_instance(np.random.default_rng(3), crp_space())
    b = random_target_instance(np.random.default_rng(3), crp_space())
    np.testing.assert_array_equal(a.poly.vertices, b.poly.vertices)
    np.testing.assert_array_equal(a.p_tilde.probs, b.p_tilde.probs)


def test_unknown_bias_kind():
    with pytest.raises(ValueError):
        random_target_instance(np.random.default_rng(0), crp_space(), bias="adversarial")


def test_rp_instance_on_trivial_disc():
    space = GroupSpace.rp(("0", "1", "2"))
    inst = random_target_instance(np.random.default_rng(0), space, kind=FairKind.RP)
    assert FairSubspace(space, FairKind.RP).contains(inst.poly.vertices[inst.r_star_index])


@given(seeds)
def test_rp2_instance(seed):
    poly, p_tilde, maj, r, rf = random_rp2_instance(np.random.default_rng(seed))
    assert p_tilde[maj] >= 0.5 and p_tilde.sum() == pytest.approx(1.0)
    assert abs(rf[0] - rf[1]) <= 1e-9
    assert p_tilde @ r <= p_tilde @ rf + 1e-9
