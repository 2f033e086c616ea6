"""Architecture configuration: shapes, pooling traces, parameter counts."""

import numpy as np
import pytest

from ambiloc.model.config import (
    REFERENCE_PARAMETER_COUNTS,
    ArchConfig,
    config_by_name,
    count_parameters,
    named_configs,
    parameter_shapes,
    shape_propagate,
)


def hand_counted_toy() -> int:
    # 1 block, 2 filters, kernel 3x3, 6 input channels, no recurrent/dense:
    # conv0 weights 3*3*6*2 = 108 plus 2 biases, conv1 weights 3*3*2*2 = 36
    # plus 2 biases.
    return (108 + 2) + (36 + 2)


def toy_conv_only_count() -> int:
    shapes = parameter_shapes(
        ArchConfig(
            name="toy",
            blocks=1,
            pool_sizes=(4,),
            class_count=7,
            conv_filters=2,
        )
    )
    return sum(
        int(np.prod(shape))
        for name, shape in shapes.items()
        if name.startswith("block")
    )


class TestNamedConfigs:
    def test_all_nine_present(self):
        configs = named_configs()
        assert sorted(configs) == sorted(REFERENCE_PARAMETER_COUNTS)

    @pytest.mark.parametrize("name", sorted(REFERENCE_PARAMETER_COUNTS))
    def test_count_within_two_percent(self, name):
        cfg = config_by_name(name, class_count=425)
        counted = count_parameters(cfg)
        reference = REFERENCE_PARAMETER_COUNTS[name]
        assert abs(counted - reference) / reference < 0.02

    @pytest.mark.parametrize("name", sorted(REFERENCE_PARAMETER_COUNTS))
    def test_final_frequency_matches_name_suffix(self, name):
        cfg = config_by_name(name, class_count=425)
        blocks, q_final = name.split("-")
        assert cfg.blocks == int(blocks)
        assert cfg.q_final == int(q_final)

    def test_doubling_q_adds_recurrent_input_weights(self):
        # widening the flattened frame doubles only the first recurrent
        # layer's input weight matrices: 2 directions * 4 gates * 64 hidden
        c42 = count_parameters(config_by_name("4-2", 425))
        c44 = count_parameters(config_by_name("4-4", 425))
        c48 = count_parameters(config_by_name("4-8", 425))
        assert c44 - c42 == 2 * 4 * 64 * (64 * 2)
        assert c44 - c42 == 65_536
        assert c48 - c44 == 131_072

    def test_reference_deltas_match_same_law(self):
        r = REFERENCE_PARAMETER_COUNTS
        assert r["4-4"] - r["4-2"] == 65_536
        assert r["4-8"] - r["4-4"] == 131_072
        assert r["5-4"] - r["5-2"] == 65_536
        assert r["6-4"] - r["6-2"] == 65_536
        assert r["7-4"] - r["7-2"] == 65_536


class TestFrequencyTraces:
    def test_4_2_trace(self):
        cfg = config_by_name("4-2", 425)
        assert cfg.frequency_trace() == [513, 64, 16, 4, 2]

    def test_7_4_trace(self):
        cfg = config_by_name("7-4", 425)
        assert cfg.frequency_trace() == [513, 256, 128, 64, 32, 16, 8, 4]

    def test_floor_division(self):
        # 513 / 8 floors to 64, dropping one bin
        cfg = config_by_name("4-2", 425)
        assert cfg.frequency_trace()[1] == 64


class TestShapePropagate:
    def test_conv_stack_output(self):
        for name in REFERENCE_PARAMETER_COUNTS:
            cfg = config_by_name(name, 425)
            shapes = dict(shape_propagate(cfg))
            assert shapes[f"block{cfg.blocks - 1}/pool"] == (25, cfg.q_final, 64)
            assert shapes["flatten"] == (25, cfg.q_final * 64)

    def test_time_axis_constant(self):
        cfg = config_by_name("5-4", 425)
        for _, shape in shape_propagate(cfg):
            assert shape[0] == 25

    def test_final_output(self):
        cfg = config_by_name("6-2", 425)
        assert shape_propagate(cfg)[-1] == ("dense1", (25, 425))

    def test_conv_preserves_spatial_dims(self):
        cfg = config_by_name("4-2", 425)
        shapes = dict(shape_propagate(cfg))
        assert shapes["block0/conv0"] == (25, 513, 64)
        assert shapes["block0/conv1"] == (25, 513, 64)

    def test_rejects_frequency_below_one(self):
        with pytest.raises(ValueError):
            ArchConfig(
                name="bad",
                blocks=4,
                pool_sizes=(8, 8, 8, 8),
                class_count=10,
            )


class TestCountParameters:
    def test_toy_hand_enumeration(self):
        assert toy_conv_only_count() == hand_counted_toy() == 148

    def test_reduced_profile_is_small(self):
        cfg = config_by_name("reduced", class_count=51)
        assert count_parameters(cfg) < 100_000

    def test_count_matches_parameter_shapes(self):
        cfg = config_by_name("reduced", class_count=51)
        total = sum(int(np.prod(s)) for s in parameter_shapes(cfg).values())
        assert count_parameters(cfg) == total


class TestValidation:
    def test_pool_count_must_match_blocks(self):
        with pytest.raises(ValueError):
            ArchConfig(name="bad", blocks=3, pool_sizes=(4, 4), class_count=10)

    def test_class_count_positive(self):
        with pytest.raises(ValueError):
            config_by_name("4-2", class_count=0)

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown configuration"):
            config_by_name("3-1", class_count=10)

    def test_pool_sizes_positive(self):
        with pytest.raises(ValueError):
            ArchConfig(name="bad", blocks=1, pool_sizes=(0,), class_count=10)
