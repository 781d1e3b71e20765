import pytest

from app.errors import SelfTestFailed
from app.fdct import CurveletConfig, build_plan
from app.selftest import GroupResult, perturb_plan, require_pass, run_selftest


def test_fresh_build_passes_every_group():
    results = run_selftest()
    assert [r.name for r in results] == ["fdct-roundtrip", "tight-frame", "robust-stats", "correlations", "wilcoxon"]
    assert all(r.passed for r in results), [r.detail for r in results if not r.passed]
    require_pass(results)


def test_perturbed_window_fails_the_tight_frame_group():
    plan = perturb_plan(build_plan(CurveletConfig()))
    results = run_selftest(plan=plan, groups=["tight-frame"])
    assert len(results) == 1 and not results[0].passed
    with pytest.raises(SelfTestFailed, match="tight-frame"):
        require_pass(results)


def test_require_pass_lists_failures():
    results = [GroupResult("a", True, "", 0.0), GroupResult("b", False, "boom", 0.0)]
    with pytest.raises(SelfTestFailed, match="b"):
        require_pass(results)
