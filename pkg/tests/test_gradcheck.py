import numpy as np
import pytest

from topk_lab.costsens import cs_kernel_grads
from topk_lab.gradcheck import (
    KERNEL_TOL,
    central_diff,
    check_cs_kernel,
    check_kernel,
    check_model,
    rel_err,
)
from topk_lab.losses import LossKind, kernel_grads


def corrupted(real):
    def grad_fn(kind, S, extra):
        v, g = real(kind, S, extra)
        g = g.copy()
        g[:, 0] += 0.01
        return v, g
    return grad_fn


class TestHelpers:
    def test_central_diff_quadratic(self):
        f = lambda x: float(x @ x)
        x = np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(central_diff(f, x), 2 * x, atol=1e-8)
        np.testing.assert_array_equal(x, [1.0, -2.0, 0.5])

    def test_rel_err(self):
        assert rel_err(np.zeros(3), np.zeros(3)) == 0.0
        assert rel_err(np.array([1.0, 0.0]), np.array([0.0, 0.0])) == 1.0


class TestChecks:
    @pytest.mark.parametrize("fam", ["comp_log", "cstnd_hinge"])
    def test_kernel_passes(self, fam):
        row = check_kernel(LossKind(fam), 0, 30)
        assert row.passed and row.worst <= KERNEL_TOL

    def test_corrupted_kernel_fails(self):
        row = check_kernel(LossKind("comp_exp"), 0, 20, grad_fn=corrupted(kernel_grads))
        assert not row.passed

    def test_corrupted_cs_kernel_fails(self):
        row = check_cs_kernel(LossKind("cstnd_exp"), 0, 20, grad_fn=corrupted(cs_kernel_grads))
        assert not row.passed

    def test_model_passes(self):
        assert check_model("mlp2", LossKind("comp_log"), 0, 5, cost_sensitive=True).passed
        assert check_model("linear", LossKind("cstnd_sq_hinge"), 0, 5).passed

    def test_reproducible(self):
        a = check_kernel(LossKind("comp_gce"), 3, 10)
        b = check_kernel(LossKind("comp_gce"), 3, 10)
        assert a.worst == b.worst
