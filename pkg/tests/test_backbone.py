"""
Test cấu hình biến thể và backbone bốn stage
"""

import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from app.algorithms import model_cost
from app.core import backbone_features, backbone_forward, check_resolution
from app.errors import ConfigError, LayoutError
from app.models import (ModelConfig, PositionMode, build_variant, count_parameters,
                        init_backbone, named_parameters, window_for_resolution)
from app.tensor import Tensor


class TestVariants:

    def test_variant_t(self):
        cfg = build_variant("T")
        assert cfg.dims == (96, 192, 384, 768)
        assert cfg.heads == (3, 6, 12, 24)
        assert cfg.depths == (2, 2, 6, 2)
        assert cfg.window == 7
        assert cfg.kernels == (3, 3, 3, None)

    def test_window_by_resolution(self):
        assert build_variant("B", 384).window == 12
        assert window_for_resolution("S", 512) == 16
        assert window_for_resolution("L", 1024) == 16

    def test_large_heads(self):
        assert build_variant("L").heads == (6, 12, 24, 48)

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            build_variant("XL")

    def test_unknown_resolution(self):
        with pytest.raises(ConfigError):
            build_variant("T", 300)

    def test_stage_four_kernel_must_be_none(self):
        with pytest.raises(ConfigError):
            build_variant("T", kernels=(3, 3, 3, 3))

    def test_json_round_trip(self, tmp_path):
        cfg = build_variant("S", 384, position_mode=PositionMode.RELATIVE)
        path = tmp_path / "s384.json"
        cfg.to_json(path)
        assert ModelConfig.from_json(path) == cfg

    def test_unknown_json_field(self, tmp_path):
        data = build_variant("T").to_dict()
        data["dropout"] = 0.1
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(data))
        with pytest.raises(ConfigError):
            ModelConfig.from_json(path)

    def test_layout_error_names_stage(self):
        cfg = build_variant("tiny-test", 64, window=4)
        with pytest.raises(LayoutError) as info:
            check_resolution(cfg, 64, 64)
        assert info.value.stage == 4
        with pytest.raises(LayoutError) as info:
            cfg.stage_layouts()
        assert info.value.stage == 4


class TestBackbone:

    def test_tiny_forward(self, tiny_config, rng):
        weights = init_backbone(tiny_config)
        image = Tensor(rng.normal(size=(2, 64, 64, 3)))
        logits = backbone_forward(image, tiny_config, weights)
        assert logits.shape == (2, 4)
        assert np.all(np.isfinite(logits.data))

    def test_stage_shapes(self, tiny_config, rng):
        features = backbone_features(Tensor(rng.normal(size=(1, 64, 64, 3))), tiny_config,
                                     init_backbone(tiny_config))
        assert [f.shape for f in features] == [(1, 16, 16, 16), (1, 8, 8, 32),
                                               (1, 4, 4, 64), (1, 2, 2, 128)]

    def test_deterministic(self, tiny_config, rng):
        image = Tensor(rng.normal(size=(1, 64, 64, 3)))
        first = backbone_features(image, tiny_config, init_backbone(tiny_config, seed=3))[-1]
        second = backbone_features(image, tiny_config, init_backbone(tiny_config, seed=3))[-1]
        assert_array_equal(first.data, second.data)

    def test_parameter_count_matches_cost_model(self, tiny_config):
        assert count_parameters(init_backbone(tiny_config)) == model_cost(tiny_config).params

    def test_parameter_count_with_ablations(self):
        cfg = build_variant("tiny-test", 64, position_mode=PositionMode.ABSOLUTE,
                            pointwise=True)
        assert count_parameters(init_backbone(cfg)) == model_cost(cfg).params

    def test_indivisible_input(self, tiny_config, rng):
        with pytest.raises(LayoutError):
            backbone_forward(Tensor(rng.normal(size=(1, 48, 64, 3))), tiny_config,
                             init_backbone(tiny_config))


class TestResolutionScaling:

    def test_window_scales_off_table(self):
        cfg = build_variant("T").with_resolution(448)
        assert cfg.window == 14
        assert [layout.H for layout in cfg.stage_layouts()] == [112, 56, 28, 14]
        assert all(layout.M == 14 for layout in cfg.stage_layouts())

    def test_table_resolution_uses_rule(self):
        assert build_variant("T").with_resolution(384).window == 12

    def test_non_scaling_resolution(self):
        with pytest.raises(ConfigError):
            build_variant("T").with_resolution(300)

    def test_build_variant_stays_strict(self):
        with pytest.raises(ConfigError):
            build_variant("T", 448)

    def test_parameters_unchanged(self):
        base = build_variant("T")
        shapes = {name: t.shape for name, t in named_parameters(init_backbone(base))}
        scaled = {name: t.shape
                  for name, t in named_parameters(init_backbone(base.with_resolution(448)))}
        assert scaled == shapes

    def test_cost_model_params_unchanged(self):
        base = model_cost(build_variant("T"))
        scaled = model_cost(build_variant("T"), resolution=448)
        assert scaled.window == 14
        assert scaled.params == base.params
        assert scaled.flops > 4 * base.flops

    def test_relative_tables_follow_window(self):
        cfg = build_variant("tiny-test", 64, position_mode=PositionMode.RELATIVE)
        small = dict(named_parameters(init_backbone(cfg)))
        large = dict(named_parameters(init_backbone(cfg.with_resolution(128))))
        assert small.keys() == large.keys()
        changed = {name for name in small if small[name].shape != large[name].shape}
        assert changed and all(name.endswith("rel_bias") for name in changed)
        assert all(large[name].shape[0] == (2 * 4 - 1) ** 2 for name in changed)
