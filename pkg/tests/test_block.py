"""
Test Iwin block với ba cách nối nhánh
"""

from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from app.core import block_forward
from app.errors import ConfigError, LayoutError
from app.harness.config import FD_RTOL
from app.harness.gradcheck import gradcheck
from app.harness.verify import jitter, weighted_loss
from app.models import (AttentionMode, BlockConfig, InterleavePath, PositionMode, Structure,
                        init_block, load_parameters, map_parameters, parameter_dict)
from app.tensor import Tensor


def zero_branches(weights):
    """Giữ LayerNorm (gamma = 1, beta = 0), mọi trọng số nhánh bằng 0"""
    return map_parameters(weights, lambda name, t: t if name.startswith("norm")
                          else Tensor(np.zeros(t.shape)))


class TestBlockForward:

    @pytest.mark.parametrize("structure", list(Structure))
    def test_zero_branches_is_identity(self, structure, rng):
        cfg = BlockConfig(dim=8, num_heads=2, window=2, kernel=3, structure=structure)
        w = zero_branches(init_block(rng, cfg))
        x = Tensor(rng.normal(size=(1, 8, 8, 8)))
        assert_array_equal(block_forward(x, cfg, w).data, x.data)

    @pytest.mark.parametrize("structure", list(Structure))
    def test_shape_preserved(self, structure, rng):
        cfg = BlockConfig(dim=8, num_heads=2, window=2, kernel=3, structure=structure)
        x = Tensor(rng.normal(size=(2, 4, 6, 8)))
        assert block_forward(x, cfg, init_block(rng, cfg)).shape == x.shape

    def test_index_path_bit_exact(self, rng):
        cfg = BlockConfig(dim=8, num_heads=2, window=2, kernel=3)
        w = jitter(init_block(rng, cfg), rng)
        x = Tensor(rng.normal(size=(1, 8, 8, 8)))
        indexed = replace(cfg, interleave_path=InterleavePath.INDEX)
        assert_array_equal(block_forward(x, cfg, w).data, block_forward(x, indexed, w).data)

    def test_structures_differ(self, rng):
        x = Tensor(rng.normal(size=(1, 4, 4, 4)))
        outs = []
        for structure in Structure:
            cfg = BlockConfig(dim=4, num_heads=2, window=2, kernel=3, structure=structure)
            outs.append(block_forward(x, cfg, jitter(init_block(np.random.default_rng(1), cfg),
                                                     np.random.default_rng(2))).data)
        assert not np.allclose(outs[0], outs[1])
        assert not np.allclose(outs[1], outs[2])

    def test_conv_only_block(self, rng):
        cfg = BlockConfig(dim=4, num_heads=1, window=2, kernel=3, attention_mode=AttentionMode.NONE)
        w = init_block(rng, cfg)
        assert w.attn is None
        x = Tensor(rng.normal(size=(1, 3, 5, 4)))
        assert block_forward(x, cfg, w).shape == x.shape

    def test_window_must_divide(self, rng):
        cfg = BlockConfig(dim=4, num_heads=2, window=3, kernel=3)
        with pytest.raises(LayoutError):
            block_forward(Tensor(rng.normal(size=(1, 4, 4, 4))), cfg, init_block(rng, cfg))

    def test_relative_mode_needs_table(self, rng):
        cfg = BlockConfig(dim=4, num_heads=2, window=2, kernel=3)
        w = init_block(rng, cfg)
        relative = replace(cfg, position_mode=PositionMode.RELATIVE)
        with pytest.raises(ConfigError):
            block_forward(Tensor(rng.normal(size=(1, 4, 4, 4))), relative, w)

    def test_kernel_mismatch(self, rng):
        w = init_block(rng, BlockConfig(dim=4, num_heads=2, window=2, kernel=3))
        cfg = BlockConfig(dim=4, num_heads=2, window=2, kernel=5)
        with pytest.raises(ConfigError):
            block_forward(Tensor(rng.normal(size=(1, 4, 4, 4))), cfg, w)

    def test_invalid_heads(self):
        with pytest.raises(ConfigError):
            BlockConfig(dim=6, num_heads=4, window=2)


class TestBlockGradient:

    @pytest.mark.parametrize("structure", list(Structure))
    def test_gradcheck_8x8(self, structure, rng):
        cfg = BlockConfig(dim=8, num_heads=2, window=2, kernel=3, structure=structure,
                          position_mode=PositionMode.RELATIVE)
        w = jitter(init_block(rng, cfg), rng)
        x = Tensor(rng.normal(size=(1, 8, 8, 8)))
        loss = weighted_loss(rng, x.shape)
        tensors = {"input": x, **parameter_dict(w)}

        def fn(t):
            rest = {k: v for k, v in t.items() if k != "input"}
            return loss(block_forward(t["input"], cfg, load_parameters(w, rest)))

        errors = gradcheck(fn, tensors, max_entries=12)
        worst = max(errors, key=errors.get)
        assert errors[worst] < FD_RTOL, (worst, errors[worst])
