import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tacgan.theory import (
    DiscreteJoint,
    conditional_entropy_y_given_x,
    entropy,
    jsd_multi,
    kl,
    mutual_information,
    optimal_twin,
    random_joint,
    random_uniform_prior_joint,
    theorem1_degenerate,
    theorem1_lp_oracle,
    theorem3_check,
    u_of_g,
)


def test_random_joint_degenerate_case():
    j = random_joint(1, 1, seed=0)
    np.testing.assert_allclose(j.table, [[1.0]])


def test_random_joint_sums_to_one():
    j = random_joint(5, 4, seed=1)
    assert float(j.table.sum()) == pytest.approx(1.0, abs=1e-12)
    assert np.all(j.table >= 0)


def test_random_joint_seeds_differ():
    a = random_joint(3, 3, seed=1)
    b = random_joint(3, 3, seed=2)
    assert not np.array_equal(a.table, b.table)


def test_joint_validation():
    with pytest.raises(ValueError, match="negative"):
        DiscreteJoint(np.array([[0.5, -0.1], [0.3, 0.3]]))
    with pytest.raises(ValueError, match="sums"):
        DiscreteJoint(np.array([[0.5, 0.4]]))


def test_kl_identical_is_zero():
    p = np.array([0.2, 0.3, 0.5])
    assert kl(p, p) == 0.0


def test_kl_onehot_vs_uniform():
    assert kl([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-14)


def test_kl_absolute_continuity_flag():
    assert kl([0.5, 0.5], [1.0, 0.0]) == float("inf")


def test_kl_zero_p_entries_ignored():
    assert kl([0.0, 1.0], [0.0, 1.0]) == 0.0


def test_jsd_identical_distributions_zero():
    p = np.array([0.1, 0.6, 0.3])
    assert jsd_multi([p, p, p]) == pytest.approx(0.0, abs=1e-15)


def test_jsd_disjoint_supports_log_k():
    dists = [np.eye(4)[i] for i in range(4)]
    assert jsd_multi(dists) == pytest.approx(math.log(4), abs=1e-12)


def test_jsd_two_way_matches_independent_formula():
    rng = np.random.default_rng(0)
    p = rng.dirichlet(np.ones(6))
    q = rng.dirichlet(np.ones(6))
    m = 0.5 * (p + q)
    # independently coded two-term evaluation
    direct = 0.5 * float(np.sum(p * np.log(p / m))) + 0.5 * float(np.sum(q * np.log(q / m)))
    assert jsd_multi([p, q]) == pytest.approx(direct, abs=1e-12)


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_jsd_nonnegative_property(seed):
    rng = np.random.default_rng(seed)
    dists = [rng.dirichlet(np.ones(5)) for _ in range(3)]
    assert jsd_multi(dists) >= 0.0


def test_jsd_zero_iff_equal_perturbation():
    p = np.full(4, 0.25)
    base = jsd_multi([p, p, p])
    assert base == pytest.approx(0.0, abs=1e-15)
    bumped = p.copy()
    bumped[0] += 1e-6
    bumped /= bumped.sum()
    assert jsd_multi([p, bumped, p]) > 0.0


def test_mutual_information_product_joint():
    px = np.array([0.3, 0.7])
    py = np.array([0.25, 0.25, 0.5])
    j = DiscreteJoint(px[:, None] * py[None, :])
    assert mutual_information(j) == pytest.approx(0.0, abs=1e-14)


def test_mutual_information_diagonal():
    j = DiscreteJoint(np.eye(2) * 0.5)
    assert mutual_information(j) == pytest.approx(math.log(2), abs=1e-14)


def test_mutual_information_entropy_difference_oracle():
    j = random_joint(6, 4, seed=3)
    hy = entropy(j.marginal_y())
    hyx = conditional_entropy_y_given_x(j)
    assert mutual_information(j) == pytest.approx(hy - hyx, abs=1e-12)


def test_proposition_identity_chain():
    # with uniform priors: I = H(Y) - H(Y|X) = (1/K) sum KL(Q_X|Y=k || Q_X)
    j = random_uniform_prior_joint(7, 3, seed=4)
    mi = mutual_information(j)
    hy_minus = entropy(j.marginal_y()) - conditional_entropy_y_given_x(j)
    cond = j.conditional_x_given_y()
    jsd = jsd_multi(list(cond))
    assert mi == pytest.approx(hy_minus, abs=1e-10)
    assert mi == pytest.approx(jsd, abs=1e-10)


def test_theorem1_degenerate_basic():
    out = theorem1_degenerate(np.array([[0.5, 0.3, 0.2]]))
    np.testing.assert_array_equal(out, [[1.0, 0.0, 0.0]])


def test_theorem1_degenerate_idempotent():
    row = np.array([[0.0, 1.0, 0.0]])
    np.testing.assert_array_equal(theorem1_degenerate(row), row)


def test_theorem1_degenerate_tie_policy():
    out = theorem1_degenerate(np.array([[0.5, 0.5, 0.0]]))
    np.testing.assert_array_equal(out, [[1.0, 0.0, 0.0]])


def test_theorem1_lp_oracle_basic():
    row = np.array([0.5, 0.3, 0.2])
    onehot = theorem1_lp_oracle(row)
    np.testing.assert_array_equal(onehot, [1.0, 0.0, 0.0])
    assert float(onehot @ -np.log(row)) == pytest.approx(-math.log(0.5), abs=1e-14)


def test_theorem1_lp_oracle_uniform_tie():
    onehot = theorem1_lp_oracle(np.full(4, 0.25))
    np.testing.assert_array_equal(onehot, [1.0, 0.0, 0.0, 0.0])


def test_theorem1_lp_matches_argmax_exhaustive():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        k = int(rng.integers(2, 7))
        row = rng.dirichlet(np.ones(k))
        np.testing.assert_array_equal(
            theorem1_lp_oracle(row), theorem1_degenerate(row[None, :])[0]
        )


def test_optimal_twin_identical_conditionals_uniform():
    cond = np.tile(np.array([0.2, 0.5, 0.3]), (4, 1))
    post = optimal_twin(cond)
    np.testing.assert_allclose(post, np.full((3, 4), 0.25), atol=1e-12)


def test_optimal_twin_disjoint_supports_one_hot():
    cond = np.eye(3)
    post = optimal_twin(cond)
    np.testing.assert_array_equal(post, np.eye(3))


def test_optimal_twin_matches_ratio_and_normalizes():
    rng = np.random.default_rng(6)
    cond = rng.dirichlet(np.ones(5), size=3)
    post = optimal_twin(cond)
    np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-12)
    for x in range(5):
        for k in range(3):
            assert post[x, k] == pytest.approx(cond[k, x] / cond[:, x].sum(), abs=1e-12)


def test_optimal_twin_flags_dead_states():
    cond = np.array([[0.5, 0.5, 0.0], [0.4, 0.6, 0.0]])
    post = optimal_twin(cond)
    assert np.all(np.isnan(post[2]))
    assert not np.any(np.isnan(post[:2]))


def test_u_of_g_identical_conditionals():
    cond = np.tile(np.array([0.1, 0.2, 0.3, 0.4]), (3, 1))
    assert u_of_g(cond) == pytest.approx(-3 * math.log(3), abs=1e-12)
    assert -3 * math.log(3) == pytest.approx(-3.295836866, abs=1e-9)


def test_u_of_g_disjoint_supports_zero():
    assert u_of_g(np.eye(3)) == pytest.approx(0.0, abs=1e-12)


def test_u_of_g_jsd_identity():
    rng = np.random.default_rng(7)
    for _ in range(50):
        k = int(rng.integers(2, 6))
        m = int(rng.integers(2, 9))
        cond = rng.dirichlet(np.ones(m), size=k)
        expect = -k * math.log(k) + k * jsd_multi(list(cond))
        assert u_of_g(cond) == pytest.approx(expect, abs=1e-10)


def test_u_of_g_floor_property():
    rng = np.random.default_rng(8)
    for _ in range(50):
        cond = rng.dirichlet(np.ones(6), size=3)
        assert u_of_g(cond) >= -3 * math.log(3) - 1e-12


def test_theorem3_equal_joints_and_true_classifier():
    j = random_joint(4, 3, seed=9)
    report = theorem3_check(j, j, j.conditional_y_given_x())
    assert report.lhs == pytest.approx(0.0, abs=1e-12)
    assert report.rhs == pytest.approx(0.0, abs=1e-9)
    assert report.holds


def test_theorem3_equal_joints_wrong_classifier():
    j = random_joint(4, 3, seed=10)
    qc = np.full((4, 3), 1 / 3)
    report = theorem3_check(j, j, qc)
    assert report.lhs == pytest.approx(0.0, abs=1e-12)
    assert report.rhs > 0.0
    assert report.holds


def test_theorem3_holds_on_random_triples():
    rng = np.random.default_rng(11)
    worst = np.inf
    for i in range(1000):
        m = int(rng.integers(1, 9))
        k = int(rng.integers(2, 9))
        p = random_joint(m, k, seed=3 * i)
        q = random_joint(m, k, seed=3 * i + 1)
        qc = np.random.default_rng(3 * i + 2).dirichlet(np.ones(k), size=m)
        report = theorem3_check(p, q, qc)
        assert report.holds, f"bound failed at instance {i}: slack {report.slack}"
        worst = min(worst, report.slack)
    assert worst >= -1e-9


def test_theorem3_infinite_kl_vacuous():
    p = DiscreteJoint(np.array([[0.25, 0.25], [0.25, 0.25]]))
    q = DiscreteJoint(np.array([[0.5, 0.0], [0.5, 0.0]]))
    qc = np.array([[1.0, 0.0], [1.0, 0.0]])  # P's rows put mass where qc has none
    report = theorem3_check(p, q, qc)
    assert report.rhs == float("inf")
    assert report.holds


def test_theorem3_counting_constants():
    p = random_joint(6, 3, seed=12)
    q = random_joint(6, 3, seed=13)
    qc = np.random.default_rng(14).dirichlet(np.ones(3), size=6)
    report = theorem3_check(p, q, qc)
    assert report.c1 == pytest.approx(3.0, abs=1e-12)  # M/2 for proper rows
    assert report.c2 == pytest.approx(0.5, abs=1e-12)
