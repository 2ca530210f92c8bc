import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topk_lab.core import CardinalitySet
from topk_lab.costsens import (
    CostSpec,
    cost,
    cost_matrix,
    cost_rows,
    cs_comp_sum_loss,
    cs_constrained_loss,
    cs_grad,
    cs_kernel_values,
    cs_loss,
    target_cardinality_loss,
)
from topk_lab.losses import COMP_FAMILIES, CSTND_FAMILIES, LossKind, comp_sum_loss
from topk_lab.oracle import cs_target_regret, cs_target_regret_enum


def spec(ks, lam=0.05, normalize=True, penalty="log_k"):
    return CostSpec(lam, CardinalitySet(ks), penalty, normalize)


def fd(f, r, h=1e-6):
    g = np.zeros_like(r)
    for i in range(r.size):
        e = np.zeros_like(r)
        e[i] = h
        g[i] = (f(r + e) - f(r - e)) / (2 * h)
    return g


class TestCostSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            CostSpec(-0.1, CardinalitySet([1]))
        with pytest.raises(ValueError):
            CostSpec(0.1, CardinalitySet([1, 2]), "table", table=(0.0,))
        with pytest.raises(ValueError):
            CostSpec(0.1, CardinalitySet([1, 2]), "table", table=(1.0, 0.5))
        CostSpec(0.1, CardinalitySet([1, 2]), "table", table=(0.0, 0.5))

    def test_penalties(self):
        np.testing.assert_allclose(spec([1, 2, 4]).penalties, np.log([1, 2, 4]))
        np.testing.assert_allclose(spec([1, 3], penalty="linear_k").penalties, [1, 3])
        assert spec([1, 2, 4]).scale == pytest.approx(1 + 0.05 * math.log(4))
        assert spec([1, 2, 4], normalize=False).scale == 1.0


class TestCost:
    def test_examples(self):
        s = [3.0, 2.0, 1.0]
        assert cost(spec([1, 2], normalize=False), s, 1, 1) == 0.0
        assert cost(spec([1, 2], normalize=False), s, 2, 2) == pytest.approx(0.05 * math.log(2))
        assert cost(spec([1, 2, 3], lam=0.0), s, 2, 3) == 1.0

    def test_k_outside_set(self):
        with pytest.raises(ValueError):
            cost(spec([1, 2]), [1.0, 2.0, 3.0], 3, 1)

    def test_matrix_matches_scalar(self):
        sp = spec([1, 2, 4])
        s = np.array([0.1, 0.9, 0.3, -0.2, 0.5])
        C = cost_matrix(sp, s)
        for j, k in enumerate(sp.kset):
            for y in range(1, 6):
                assert C[j, y - 1] == cost(sp, s, k, y)

    @settings(max_examples=100)
    @given(st.integers(2, 8), st.floats(0, 5), st.integers(0, 2**32 - 1))
    def test_bounded_and_monotone(self, n, lam, seed):
        rng = np.random.default_rng(seed)
        ks = sorted(rng.choice(np.arange(1, n + 1), rng.integers(1, n + 1), replace=False))
        sp = CostSpec(lam, CardinalitySet(ks))
        C = cost_matrix(sp, rng.integers(-2, 3, n).astype(float))
        assert C.min() >= 0.0 and C.max() <= 1.0 + 1e-15
        miss = C * sp.scale - lam * sp.penalties[:, None]
        assert np.all(np.diff(np.round(miss), axis=0) <= 0)


class TestTargetLoss:
    def test_examples(self):
        sp = spec([1, 2, 3])
        s = [3.0, 2.0, 1.0]
        assert target_cardinality_loss(sp, s, [5.0, 0.0, 0.0], 1) == 0.0
        full = target_cardinality_loss(sp, s, [0.0, 0.0, 5.0], 3)
        assert full == pytest.approx(0.05 * math.log(3) / (1 + 0.05 * math.log(3)))

    def test_ties_pick_larger_k(self):
        sp = spec([1, 2])
        assert target_cardinality_loss(sp, [3.0, 2.0], [1.0, 1.0], 2) == cost(sp, [3.0, 2.0], 2, 2)

    @settings(max_examples=100)
    @given(st.integers(0, 2**32 - 1), st.floats(-50, 50))
    def test_brute_argmax_and_shift(self, seed, c):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 7))
        sp = CostSpec(0.1, CardinalitySet(range(1, n + 1)))
        s, r, y = rng.normal(size=n), rng.integers(-2, 3, n).astype(float), int(rng.integers(1, n + 1))
        best = max(range(n), key=lambda j: (r[j], j))
        assert target_cardinality_loss(sp, s, r, y) == cost(sp, s, sp.kset.ks[best], y)
        assert target_cardinality_loss(sp, s, r + c, y) == target_cardinality_loss(sp, s, r, y)

    def test_regret_matches_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            n = int(rng.integers(2, 7))
            sp = CostSpec(0.2, CardinalitySet(range(1, n + 1)))
            C = cost_matrix(sp, rng.normal(size=n))
            p, r = rng.dirichlet(np.ones(n)), rng.normal(size=n)
            assert abs(cs_target_regret(C, p, r) - cs_target_regret_enum(C, p, r)) <= 1e-12


class TestSurrogates:
    def test_comp_zero_and_unit_costs(self):
        kind = LossKind("comp_log")
        n = 3
        s = np.array([3.0, 2.0, 1.0])
        # lambda = 0 and k = n always hits, so every cost is zero
        sp0 = CostSpec(0.0, CardinalitySet([3]))
        assert cs_comp_sum_loss(kind, sp0, s, [0.0], 1) == 0.0
        sp = CostSpec(0.0, CardinalitySet([1, 2, 3]))
        r = np.zeros(3)
        # label 1 is always in the top-k set, so all costs vanish
        assert cs_comp_sum_loss(kind, sp, s, r, 1) == pytest.approx(n * math.log(n))
        C1 = np.ones((1, 3))
        assert cs_kernel_values(kind, r[None], C1)[0] == 0.0

    def test_comp_reduces_to_sum_of_standard(self):
        rng = np.random.default_rng(2)
        for fam in COMP_FAMILIES:
            kind = LossKind(fam)
            r = rng.normal(size=4)
            expect = sum(comp_sum_loss(kind, r, k) for k in range(1, 5))
            assert cs_kernel_values(kind, r[None], np.zeros((1, 4)))[0] == pytest.approx(expect)

    def test_comp_frozen(self):
        sp = spec([1, 2], normalize=False)
        v = cs_comp_sum_loss(LossKind("comp_log"), sp, [0.5, 2.0, -1.0], [0.3, -0.2], 1)
        assert v == pytest.approx(0.940318048418467911060536744658, abs=1e-14)

    def test_cstnd_examples(self):
        kind = LossKind("cstnd_exp")
        assert cs_kernel_values(kind, np.zeros((1, 3)), np.zeros((1, 3)))[0] == 0.0
        assert cs_kernel_values(kind, np.zeros((1, 3)), np.ones((1, 3)))[0] == 3.0

    def test_cstnd_frozen(self):
        sp = spec([1, 2, 4])
        v = cs_constrained_loss(LossKind("cstnd_hinge"), sp, [0.1, 0.9, 0.3, -0.2, 0.5],
                                [0.4, -0.1, -0.3], 3)
        assert v == pytest.approx(2.22545513082499290391379888383, abs=1e-14)

    def test_cstnd_constraint(self):
        with pytest.raises(ValueError):
            cs_constrained_loss(LossKind("cstnd_exp"), spec([1, 2]), [1.0, 0.0], [0.5, 0.0], 1)

    def test_zero_weight_grad(self):
        sp = CostSpec(0.0, CardinalitySet([2]))
        g = cs_grad(LossKind("cstnd_exp"), sp, [1.0, 0.0], [0.0], 1)
        np.testing.assert_array_equal(g, [0.0])

    @pytest.mark.parametrize("fam", COMP_FAMILIES + CSTND_FAMILIES)
    def test_grad_fd(self, fam):
        kind = LossKind(fam)
        rng = np.random.default_rng(9)
        sp = spec([1, 2, 4], lam=0.3)
        checked = 0
        while checked < 100:
            s = rng.normal(size=6)
            y = int(rng.integers(1, 7))
            r = rng.normal(0, 1.5, 3)
            if kind.is_constrained:
                r -= r.mean()
                if np.any(np.abs(1 + r) < 1e-3) or np.any(np.abs(r) < 1e-3):
                    continue
            g = cs_grad(kind, sp, s, r, y)
            C = cost_rows(sp, s[None], np.array([y - 1]))
            num = fd(lambda v: cs_kernel_values(kind, v[None], C)[0], r)
            assert np.linalg.norm(g - num) / max(1, np.linalg.norm(num)) <= 1e-5
            checked += 1

    def test_dispatch(self):
        sp = spec([1, 2])
        assert cs_loss(LossKind("comp_log"), sp, [1.0, 0.0], [0.0, 0.0], 1) == pytest.approx(
            cs_comp_sum_loss(LossKind("comp_log"), sp, [1.0, 0.0], [0.0, 0.0], 1))
