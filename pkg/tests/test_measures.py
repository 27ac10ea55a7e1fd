import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from schrodinger_ot import (Coupling, DiscreteMeasure, entropy_chain_rule_residual, marginal,
                            relative_entropy, tv_distance, wasserstein1_1d)


def _prob(rng, n, zeros=False):
    w = rng.dirichlet(np.ones(n))
    if zeros:
        w[rng.integers(n)] = 0.0
        w /= w.sum()
    return w


def test_measure_rejects_mass_drift():
    with pytest.raises(ValueError):
        DiscreteMeasure([0.0, 1.0], [0.5, 0.5 + 1e-9])


def test_measure_rejects_duplicate_points():
    with pytest.raises(ValueError):
        DiscreteMeasure([0.1, 0.1 + 1e-15], [0.5, 0.5])


def test_measure_json_roundtrip():
    mu = DiscreteMeasure([[0.0, 1.0], [2.0, -1.0]], [0.25, 0.75])
    back = DiscreteMeasure.from_dict(mu.to_dict())
    assert mu.to_dict() == {"dim": 2, "points": [[0.0, 1.0], [2.0, -1.0]], "weights": [0.25, 0.75]}
    np.testing.assert_array_equal(back.points, mu.points)
    np.testing.assert_array_equal(back.weights, mu.weights)


def test_coupling_json_roundtrip():
    c = Coupling([0.0, 1.0], [2.0, 3.0], [[0.2, 0.3], [0.1, 0.4]])
    back = Coupling.from_dict(c.to_dict())
    np.testing.assert_array_equal(back.weights, c.weights)
    assert set(c.to_dict()) == {"dim", "source_support", "target_support", "weights"}


class TestMarginal:
    def test_product_source(self, rng):
        p = DiscreteMeasure([0.0, 1.0, 2.0], _prob(rng, 3))
        q = DiscreteMeasure([5.0, 6.0], _prob(rng, 2))
        pi = Coupling.product(p, q)
        np.testing.assert_allclose(marginal(pi, "source").weights, p.weights, atol=1e-12)
        np.testing.assert_allclose(marginal(pi, "target").weights, q.weights, atol=1e-12)

    def test_diagonal_target(self):
        pi = Coupling([0.0, 1.0], [2.0, 3.0], [[0.5, 0.0], [0.0, 0.5]])
        np.testing.assert_allclose(marginal(pi, "target").weights, [0.5, 0.5])
        np.testing.assert_array_equal(marginal(pi, "target").points, [[2.0], [3.0]])

    def test_row_sums(self):
        pi = Coupling([0.0, 1.0], [2.0, 3.0], [[0.2, 0.3], [0.1, 0.4]])
        np.testing.assert_allclose(marginal(pi, "source").weights, [0.5, 0.5], atol=1e-15)

    def test_bad_side(self):
        pi = Coupling([0.0], [1.0], [[1.0]])
        with pytest.raises(ValueError):
            marginal(pi, "middle")


class TestRelativeEntropy:
    def test_self_is_zero(self, rng):
        p = _prob(rng, 5)
        assert relative_entropy(p, p) == 0.0

    def test_two_point_value(self):
        # 0.5 ln(0.5/0.25) + 0.5 ln(0.5/0.75) = 0.5 ln(4/3)
        assert relative_entropy([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.143841036225890, abs=1e-12)

    def test_absolute_continuity_failure(self):
        assert relative_entropy([1.0, 0.0], [0.0, 1.0]) == math.inf

    def test_zero_times_log_zero(self):
        assert relative_entropy([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2.0))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            relative_entropy([0.5, 0.5], [1.0 / 3] * 3)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2**31 - 1))
    def test_gibbs_inequality(self, n, seed):
        rng = np.random.default_rng(seed)
        p, q = _prob(rng, n, zeros=True), _prob(rng, n)
        h = relative_entropy(p, q)
        assert h >= -1e-15
        assert (h < 1e-14) == np.allclose(p, q, atol=1e-7) or h > 0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2**31 - 1))
    def test_finite_implies_support_inclusion(self, n, seed):
        rng = np.random.default_rng(seed)
        p, q = _prob(rng, n, zeros=True), _prob(rng, n, zeros=True)
        if np.isfinite(relative_entropy(p, q)):
            assert np.all(q[p > 0] > 0)


class TestTV:
    def test_self(self, rng):
        p = DiscreteMeasure([0.0, 1.0, 2.0], _prob(rng, 3))
        assert tv_distance(p, p) == 0.0

    def test_disjoint_diracs(self):
        assert tv_distance(DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([1.0])) == 1.0

    def test_hand_sum(self):
        p = DiscreteMeasure([0.0, 1.0], [0.5, 0.5])
        q = DiscreteMeasure([0.0, 1.0], [0.25, 0.75])
        assert tv_distance(p, q) == pytest.approx(0.25)

    def test_merges_by_rounded_identity(self):
        p = DiscreteMeasure([0.1 + 0.2], [1.0])
        q = DiscreteMeasure([0.3], [1.0])
        assert tv_distance(p, q) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            tv_distance(DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([0.0, 0.0]))

    def test_couplings(self):
        a = Coupling([0.0, 1.0], [2.0, 3.0], [[0.5, 0.0], [0.0, 0.5]])
        b = Coupling([0.0, 1.0], [2.0, 3.0], [[0.0, 0.5], [0.5, 0.0]])
        assert tv_distance(a, b) == 1.0


class TestW1:
    def test_diracs(self):
        assert wasserstein1_1d(DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([1.0])) == 1.0

    def test_self(self, canonical):
        assert wasserstein1_1d(canonical[0], canonical[0]) == 0.0

    def test_shift(self, canonical):
        assert wasserstein1_1d(*canonical) == pytest.approx(2.0)

    def test_requires_1d(self):
        with pytest.raises(ValueError):
            wasserstein1_1d(DiscreteMeasure.dirac([0.0, 0.0]), DiscreteMeasure.dirac([0.0, 1.0]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(np.linspace(-3, 3, 25), size=6, replace=False))
    p, q, r = (DiscreteMeasure(support, _prob(rng, 6)) for _ in range(3))
    for dist in (tv_distance, wasserstein1_1d):
        assert dist(p, q) == pytest.approx(dist(q, p), abs=1e-14)
        assert dist(p, p) == 0.0
        assert dist(p, r) <= dist(p, q) + dist(q, r) + 1e-12
        assert dist(p, q) > 0 or np.allclose(p.weights, q.weights)


class TestChainRule:
    def test_identical(self, rng):
        P = Coupling([0.0, 1.0], [0.0, 1.0], rng.dirichlet(np.ones(4)).reshape(2, 2))
        assert abs(entropy_chain_rule_residual(P, P)) <= 1e-15

    @pytest.mark.parametrize("seed", range(5))
    def test_random_3x3(self, seed):
        rng = np.random.default_rng(seed)
        P = Coupling([0, 1, 2], [0, 1, 2], rng.dirichlet(np.ones(9)).reshape(3, 3))
        R = Coupling([0, 1, 2], [0, 1, 2], rng.dirichlet(np.ones(9)).reshape(3, 3))
        assert abs(entropy_chain_rule_residual(P, R)) <= 1e-10

    def test_product_vs_uniform(self, rng):
        p = DiscreteMeasure([0, 1, 2], _prob(rng, 3))
        q = DiscreteMeasure([0, 1, 2], _prob(rng, 3))
        P = Coupling.product(p, q)
        R = Coupling([0, 1, 2], [0, 1, 2], np.full((3, 3), 1 / 9))
        # independent computation: for a product P and uniform R the total splits
        # into H(p|unif) + H(q|unif)
        direct = relative_entropy(p.weights, np.full(3, 1 / 3)) + relative_entropy(q.weights, np.full(3, 1 / 3))
        assert relative_entropy(P, R) == pytest.approx(direct, abs=1e-12)
        assert abs(entropy_chain_rule_residual(P, R)) <= 1e-10

    def test_infinite_reported_not_raised(self):
        P = Coupling([0, 1], [0, 1], [[0.5, 0.0], [0.0, 0.5]])
        R = Coupling([0, 1], [0, 1], [[0.0, 0.5], [0.5, 0.0]])
        assert math.isnan(entropy_chain_rule_residual(P, R))
