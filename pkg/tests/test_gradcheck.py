"""The finite-difference verification harness itself.

Positive runs come from the acceptance suite; here the harness is
probed directly, including a negative control that corrupts one
backward rule and expects the suite to catch and name it.
"""

import numpy as np
import pytest

from tamperloc import ops, precision
from tamperloc.gradcheck import check_gradients, run_suite
from tamperloc.tensor import Tensor


class TestCheckGradients:
    def test_passes_on_a_correct_graph(self, rng):
        x = Tensor(rng.normal(0, 1, (3, 4)), requires_grad=True)
        result = check_gradients(lambda: (x * x).sum(), [("x", x)], "square")
        assert result.passed
        assert result.max_rel_err < 1e-4
        assert result.line().startswith("PASS square")

    def test_reports_worst_element_on_failure(self, rng):
        # a graph whose analytic gradient is wrong by construction:
        # detach() hides half the dependency from the tape
        x = Tensor(rng.normal(0, 1, 4) + 3.0, requires_grad=True)
        result = check_gradients(
            lambda: (x * x.detach()).sum(), [("x", x)], "broken"
        )
        assert not result.passed
        assert "worst element" in result.detail
        assert "analytic" in result.detail and "numeric" in result.detail
        assert result.line().startswith("FAIL broken")

    def test_requires_64_bit_mode(self, rng):
        precision.set_precision("f32")
        try:
            x = Tensor(np.ones(3), requires_grad=True)
            with pytest.raises(RuntimeError, match="64-bit"):
                check_gradients(lambda: (x * x).sum(), [("x", x)], "nope")
        finally:
            precision.set_precision("f64")

    def test_rejects_unreached_leaf(self, rng):
        x = Tensor(rng.normal(0, 1, 3), requires_grad=True)
        orphan = Tensor(rng.normal(0, 1, 3), requires_grad=True)
        with pytest.raises(AssertionError, match="orphan"):
            check_gradients(
                lambda: (x * x).sum(), [("x", x), ("orphan", orphan)], "unused"
            )


class TestRunSuite:
    def test_ops_scope_all_pass(self):
        results, ok = run_suite(scope="ops", seed=0)
        assert ok
        assert all(r.passed for r in results)
        names = {r.name for r in results}
        assert "conv2d" in names and "batch_norm_train" in names

    def test_unknown_scope_rejected(self):
        with pytest.raises(ValueError, match="scope"):
            run_suite(scope="everything")

    def test_negative_control_corrupted_conv_backward(self, monkeypatch):
        """Corrupting the conv input-gradient rule must flip the conv
        checks to FAIL and leave unrelated checks passing."""
        true_rule = ops._conv2d_input_grad

        def corrupted(*args, **kwargs):
            return 1.01 * true_rule(*args, **kwargs)

        monkeypatch.setattr(ops, "_conv2d_input_grad", corrupted)
        results, ok = run_suite(scope="ops", seed=0)
        assert not ok
        failed = {r.name for r in results if not r.passed}
        assert any(name.startswith("conv2d") for name in failed)
        passed = {r.name for r in results if r.passed}
        assert "relu" in passed and "matmul" in passed
