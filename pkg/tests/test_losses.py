import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topk_lab.losses import (
    COMP_FAMILIES,
    CSTND_FAMILIES,
    LossKind,
    TopKLoss,
    comp_sum_grad,
    comp_sum_loss,
    constrained_grad,
    constrained_loss,
    kernel_grads,
    kernel_values,
    loss_kind,
    near_kink,
    topk_loss,
    topk_miss,
)

COMP = [LossKind(f) for f in COMP_FAMILIES]
CSTND = [LossKind(f) for f in CSTND_FAMILIES]


def fd_grad(f, s, h=1e-5):
    g = np.zeros_like(s)
    for i in range(s.size):
        e = np.zeros_like(s)
        e[i] = h
        g[i] = (f(s + e) - f(s - e)) / (2 * h)
    return g


class TestLossKind:
    def test_validation(self):
        with pytest.raises(ValueError):
            LossKind("max_loss")
        with pytest.raises(ValueError):
            LossKind("comp_gce", alpha=1.0)
        with pytest.raises(ValueError):
            LossKind("cstnd_rho", rho=0.0)

    def test_defaults(self):
        assert LossKind("comp_gce").alpha == 0.7
        assert LossKind("cstnd_rho").rho == 1.0

    def test_coercion(self):
        assert loss_kind("comp_log") == LossKind("comp_log")
        assert loss_kind({"family": "comp_gce", "alpha": 0.5}).alpha == 0.5

    def test_family_mismatch(self):
        with pytest.raises(ValueError):
            comp_sum_loss(LossKind("cstnd_exp"), [0, 0], 1)
        with pytest.raises(ValueError):
            constrained_loss(LossKind("comp_log"), [0, 0], 1)


class TestTopK:
    def test_examples(self):
        assert topk_loss([3, 2, 1], 3, 2) == 1
        assert topk_loss([3, 2, 1], 3, 3) == 0
        assert topk_loss([1, 1, 0], 1, 1) == 1
        assert topk_loss([1, 1, 0], 2, 1) == 0

    def test_range_errors(self):
        with pytest.raises(ValueError):
            topk_loss([1, 2], 3, 1)
        with pytest.raises(ValueError):
            topk_loss([1, 2], 1, 3)

    def test_all_values_and_batch(self):
        s = np.array([0.2, 1.0, 1.0, -1.0])
        np.testing.assert_array_equal(TopKLoss(2).all_values(s), [1, 0, 0, 1])
        S = np.tile(s, (4, 1))
        np.testing.assert_array_equal(topk_miss(S, np.arange(4), 2), [1, 0, 0, 1])


class TestCompSum:
    def test_uniform_values(self):
        s = [0.0, 0.0, 0.0]
        assert comp_sum_loss(LossKind("comp_log"), s, 1) == pytest.approx(math.log(3), abs=1e-15)
        assert comp_sum_loss(LossKind("comp_exp"), s, 2) == pytest.approx(2.0, abs=1e-15)
        assert comp_sum_loss(LossKind("comp_mae"), s, 3) == pytest.approx(2 / 3, abs=1e-15)
        # (1/0.7)(1 - 4^-0.7), high-precision reference
        v = comp_sum_loss(LossKind("comp_gce", alpha=0.7), [0.0] * 4, 1)
        assert v == pytest.approx(0.887244083389143508692647480877, abs=1e-14)

    def test_log_frozen(self):
        # ln(1 + 2 e^-2), high-precision reference
        v = comp_sum_loss(LossKind("comp_log"), [2.0, 0.0, 0.0], 1)
        assert v == pytest.approx(0.239544766221884504868922893154, abs=1e-15)

    def test_log_grad_is_softmax_minus_onehot(self):
        g = comp_sum_grad(LossKind("comp_log"), [0.0, 0.0, 0.0], 1)
        np.testing.assert_allclose(g, [1 / 3 - 1, 1 / 3, 1 / 3], atol=1e-15)

    def test_large_scores_stay_finite(self):
        s = np.array([700.0, -700.0, 0.0])
        for kind in COMP:
            if kind.family == "comp_exp":
                continue
            for y in (1, 2, 3):
                v = comp_sum_loss(kind, s, y)
                assert np.isfinite(v) and v >= 0
                assert np.all(np.isfinite(comp_sum_grad(kind, s, y)))
        s = np.array([350.0, -350.0, 0.0])
        assert np.isfinite(comp_sum_loss(LossKind("comp_exp"), s, 2))

    @pytest.mark.parametrize("kind", COMP, ids=str)
    def test_grad_fd(self, kind):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(2, 9))
            s, y = rng.normal(0, 2, n), int(rng.integers(1, n + 1))
            g = comp_sum_grad(kind, s, y)
            fd = fd_grad(lambda v: comp_sum_loss(kind, v, y), s)
            assert np.linalg.norm(g - fd) / max(1, np.linalg.norm(fd)) <= 1e-5

    def test_gce_half_grad_fd(self):
        kind = LossKind("comp_gce", alpha=0.5)
        s = np.array([0.3, -1.2, 2.0, 0.1])
        fd = fd_grad(lambda v: comp_sum_loss(kind, v, 2), s)
        np.testing.assert_allclose(comp_sum_grad(kind, s, 2), fd, rtol=1e-5, atol=1e-9)

    @pytest.mark.parametrize("kind", COMP, ids=str)
    @given(st.lists(st.floats(-20, 20), min_size=2, max_size=8), st.floats(-50, 50), st.data())
    def test_shift_invariance(self, kind, s, c, data):
        y = data.draw(st.integers(1, len(s)))
        s = np.array(s)
        assert abs(comp_sum_loss(kind, s + c, y) - comp_sum_loss(kind, s, y)) <= 1e-10 * max(
            1.0, comp_sum_loss(kind, s, y))

    @given(st.lists(st.floats(-20, 20), min_size=2, max_size=8), st.data())
    def test_ranges_and_ordering(self, s, data):
        y = data.draw(st.integers(1, len(s)))
        log = comp_sum_loss(LossKind("comp_log"), s, y)
        mae = comp_sum_loss(LossKind("comp_mae"), s, y)
        gce = comp_sum_loss(LossKind("comp_gce", alpha=0.7), s, y)
        assert 0 <= mae < 1
        assert 0 <= gce < 1 / 0.7
        assert log >= mae - 1e-15

    @pytest.mark.parametrize("kind", COMP, ids=str)
    @given(st.lists(st.floats(-20, 20), min_size=2, max_size=8), st.floats(0, 5), st.data())
    def test_lowering_target_never_helps(self, kind, s, d, data):
        y = data.draw(st.integers(1, len(s)))
        s = np.array(s)
        lower = s.copy()
        lower[y - 1] -= d
        assert comp_sum_loss(kind, lower, y) >= comp_sum_loss(kind, s, y) - 1e-12

    def test_log_grad_sums_to_zero(self):
        g = comp_sum_grad(LossKind("comp_log"), [0.3, -2.0, 1.1, 0.0], 3)
        assert abs(g.sum()) < 1e-15


class TestConstrained:
    def test_examples(self):
        assert constrained_loss(LossKind("cstnd_exp"), [0, 0, 0], 1) == 2.0
        assert constrained_loss(LossKind("cstnd_hinge"), [2, -1, -1], 1) == 0.0
        assert constrained_loss(LossKind("cstnd_rho"), [0, 0, 0], 2) == 2.0
        # max(0, 1 + 0)^2 + max(0, 1 - 1)^2
        assert constrained_loss(LossKind("cstnd_sq_hinge"), [1, 0, -1], 1) == 1.0

    def test_grad_examples(self):
        np.testing.assert_array_equal(constrained_grad(LossKind("cstnd_exp"), [0, 0, 0], 1), [0, 1, 1])
        np.testing.assert_array_equal(constrained_grad(LossKind("cstnd_hinge"), [2, -1, -1], 1), [0, 0, 0])

    def test_constraint_enforced(self):
        with pytest.raises(ValueError):
            constrained_loss(LossKind("cstnd_exp"), [1.0, 0.0], 1)
        constrained_loss(LossKind("cstnd_exp"), [1.0, -1.0 + 5e-10], 1)
        with pytest.raises(ValueError):
            constrained_grad(LossKind("cstnd_hinge"), [1.0, -1.0 + 1e-8], 1)

    def test_rho_margin_shape(self):
        kind = LossKind("cstnd_rho", rho=2.0)
        # non-target at -1: 1 + (-1)/2 = 0.5; at 1: clipped to 1
        assert constrained_loss(kind, [0.0, -1.0, 1.0], 1) == pytest.approx(1.5)
        np.testing.assert_allclose(constrained_grad(kind, [0.0, -1.0, 1.0], 1), [0, 0.5, 0])

    @pytest.mark.parametrize("kind", CSTND, ids=str)
    def test_grad_fd_away_from_kinks(self, kind):
        rng = np.random.default_rng(5)
        checked = 0
        while checked < 100:
            n = int(rng.integers(2, 9))
            s = rng.normal(0, 1.5, n)
            s -= s.mean()
            if near_kink(kind, s):
                continue
            y0 = np.array([rng.integers(n)])
            g = kernel_grads(kind, s[None], y0)[1][0]
            fd = fd_grad(lambda v: kernel_values(kind, v[None], y0)[0], s)
            assert np.linalg.norm(g - fd) / max(1, np.linalg.norm(fd)) <= 1e-5
            checked += 1

    def test_all_values(self):
        kind = LossKind("cstnd_exp")
        s = np.array([1.0, -0.5, -0.5])
        expect = [constrained_loss(kind, s, y) for y in (1, 2, 3)]
        np.testing.assert_allclose(kind.all_values(s), expect)
