"""
Test mô hình chi phí FLOPs / tham số
"""

import pytest

from app.algorithms import ABLATION_COSTS, ablation_cost, model_cost, module_flops
from app.errors import ConfigError, LayoutError
from app.harness.config import (ABLATION_FLOPS_TOLERANCE, ABLATION_PARAM_TOLERANCE,
                                FLOPS_TOLERANCE, PARAM_TOLERANCE)
from app.harness.verify import reference_costs
from app.models import DownsampleMethod, build_variant


class TestModelCost:

    def test_tiny_224(self):
        report = model_cost(build_variant("T"))
        assert report.gflops == pytest.approx(4.7, rel=FLOPS_TOLERANCE)
        assert report.mparams == pytest.approx(30.2, rel=PARAM_TOLERANCE)
        assert report.reference_flops_g == 4.7
        assert abs(report.flops_delta) <= FLOPS_TOLERANCE

    @pytest.mark.parametrize("name,res", [("B", 224), ("L", 224)])
    def test_params_match_reference(self, name, res):
        report = model_cost(build_variant(name, res))
        assert abs(report.params_delta) <= PARAM_TOLERANCE

    def test_resolution_override_changes_window(self):
        report = model_cost(build_variant("B"), resolution=384)
        assert report.window == 12
        assert report.resolution == 384
        assert report.gflops > model_cost(build_variant("B")).gflops

    def test_stage_breakdown_sums(self):
        report = model_cost(build_variant("T"))
        assert len(report.stages) == 4
        total = sum(s.flops for s in report.stages) + report.embed_flops + report.head_flops
        assert total == report.flops
        assert [s.resolution for s in report.stages] == [56, 28, 14, 7]

    def test_stage_one_module(self):
        stage = model_cost(build_variant("T")).stages[0]
        assert stage.module.total == module_flops(56, 56, 96, 7, 3).total

    def test_last_stage_has_no_conv(self):
        stage = model_cost(build_variant("T")).stages[3]
        assert stage.module.conv == 0

    def test_ablation_has_no_reference(self):
        report = model_cost(build_variant("T", downsample=DownsampleMethod.PATCH_MERGING))
        assert report.reference_flops_g is None
        assert report.flops_delta is None

    def test_depths_ablation_has_no_reference(self):
        assert model_cost(build_variant("T", depths=(4, 3, 2, 2))).reference_flops_g is None

    def test_csv_rows(self):
        rows = model_cost(build_variant("T")).to_csv_rows()
        assert rows[0][0] == "stage"
        assert rows[-2][0] == "total"

    def test_invalid_resolution(self):
        with pytest.raises(LayoutError):
            model_cost(build_variant("tiny-test", 64, window=4))


class TestAblations:

    @pytest.mark.parametrize("name", sorted(ABLATION_COSTS))
    def test_matches_reference_row(self, name):
        report, params_m, flops_g = ablation_cost(name)
        assert report.mparams == pytest.approx(params_m, rel=ABLATION_PARAM_TOLERANCE)
        assert report.gflops == pytest.approx(flops_g, rel=ABLATION_FLOPS_TOLERANCE)

    def test_downsample_variants_cost_less(self):
        baseline = ablation_cost("baseline")[0]
        for name in ("downsample_dwconv", "downsample_avgpool", "downsample_patch_merging"):
            report = ablation_cost(name)[0]
            assert report.params < baseline.params
            assert report.flops < baseline.flops

    def test_unknown_ablation(self):
        with pytest.raises(ConfigError):
            ablation_cost("kernels_9_9_9")


@pytest.mark.slow
def test_reference_table():
    passed, detail = reference_costs()
    assert passed, detail["failing"]
