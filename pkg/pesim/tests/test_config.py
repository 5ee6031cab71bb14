from pathlib import Path

import pytest
from pydantic import ValidationError

import config
from config import CoreConfig, LayerConfig, RunConfig, SubtilePolicy
from core.tensor import ConvLayerSpec, Precision


def test_core_defaults():
    core = CoreConfig(num_pes=64)
    assert (core.input_buffer_entries, core.psum_buffer_entries, core.output_buffer_entries) == (32, 512, 512)
    assert core.precision == Precision.FP32
    assert core.subtile_policy == SubtilePolicy.SQUARE
    assert core.lanes == 1
    assert core.clock_ghz == 0.25


def test_int8_core_has_four_lanes():
    assert CoreConfig(num_pes=4, precision="int8x4").lanes == 4


@pytest.mark.parametrize("kwargs", [dict(num_pes=0), dict(num_pes=4, clock_mhz=0), dict(num_pes=4, precision="fp16")])
def test_invalid_core_rejected(kwargs):
    with pytest.raises(ValidationError):
        CoreConfig(**kwargs)


def test_core_is_frozen():
    core = CoreConfig(num_pes=4)
    with pytest.raises(ValidationError):
        core.num_pes = 8


def test_layer_config_converts_to_spec():
    spec = ConvLayerSpec(c_in=3, c_out=8, h_in=9, w_in=9, k_y=3, k_x=3, stride=2, pad=1, name="c")
    layer = LayerConfig.from_spec(spec)
    assert layer.to_spec() == spec


def test_layer_document_defaults_match_conv_layer_defaults():
    doc = {"c_in": 2, "c_out": 2, "h_in": 6, "w_in": 6, "name": "d"}
    spec = LayerConfig(**doc).to_spec()
    assert spec == ConvLayerSpec.from_dict(doc)
    assert (spec.k_y, spec.k_x, spec.stride, spec.pad) == (3, 3, 1, 0)


def test_run_config_parses_fixture_documents():
    run = RunConfig(
        layer={"c_in": 1, "c_out": 1, "h_in": 2, "w_in": 2},
        core={"num_pes": 4},
        input={"layout": "CHW", "dims": [1, 2, 2], "seed": 1},
    )
    assert run.input.dtype == "fp32"
    assert run.weights is None


def test_settings_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("PESIM_THREADS", "3")
    monkeypatch.setenv("PESIM_OUTPUT_DIR", str(tmp_path))
    config.get_settings.cache_clear()
    try:
        settings = config.get_settings()
        assert settings.threads == 3
        assert settings.output_dir == Path(tmp_path)
    finally:
        config.get_settings.cache_clear()
