"""The shared finite-difference battery in both precisions."""

import numpy as np
import pytest

from vigan.gradsuite import check_op, composed_loss_checks, op_names, run_suite


class TestF64Battery:
    @pytest.mark.parametrize("name", op_names())
    def test_op_under_tolerance(self, name):
        result = check_op(name, points=25)
        assert result.passed, f"{name}: {result.worst_error:.3e}"


class TestF32Battery:
    # f32 analytic gradients against an f64 finite-difference reference
    @pytest.mark.parametrize("name", op_names())
    def test_op_under_f32_tolerance(self, name):
        result = check_op(name, points=25, dtype=np.float32, tol=1e-3)
        assert result.passed, f"{name} (f32): {result.worst_error:.3e}"


class TestComposedLosses:
    def test_all_four_objectives(self):
        results = composed_loss_checks()
        assert [r.name for r in results] == [
            "loss_enc_composed", "loss_gen_composed", "loss_recog", "loss_dis"]
        for r in results:
            assert r.passed, f"{r.name}: {r.worst_error:.3e}"


class TestSuiteDriver:
    def test_unknown_module_rejected(self):
        with pytest.raises(ValueError, match="unknown gradcheck module"):
            run_suite("nonsense")

    def test_single_module_filter(self):
        results = run_suite("sigmoid", points=3)
        assert [r.name for r in results] == ["sigmoid"]
