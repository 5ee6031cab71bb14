import pytest

from config import CoreConfig, SubtilePolicy
from core.analytics import (
    COMPUTE,
    OUTPUT_BW,
    SPATIAL,
    analyze_layer,
    arithmetic_intensity,
    bandwidth_requirement,
    output_interval,
    peak_performance,
    predict_cycles,
    reuse_factors,
    scale_out_note,
    soundness_bound,
    spatial_utilization,
    temporal_utilization,
    tiling_loss,
    total_utilization,
)
from core.core_sim import simulate_layer_timing
from core.errors import ConfigError
from core.tensor import ConvLayerSpec, Precision
from core.tiler import Tile, TileKind
from workloads.presets import MEASURED_FP32_GFLOPS, MEASURED_INT8_GOPS, scale_preset, vgg16

VGG16 = vgg16()
VGG16_INT8 = vgg16(Precision.INT8X4)

# --------------------------------------------------------------------------- #
#   Peak and bandwidth
# --------------------------------------------------------------------------- #


@pytest.mark.parametrize("num_pes,peak", [(16, 8.0), (64, 32.0), (256, 128.0), (324, 162.0)])
def test_fp32_peak(num_pes, peak):
    assert peak_performance(CoreConfig(num_pes=num_pes)) == peak


@pytest.mark.parametrize("num_pes,peak", [(256, 512.0), (324, 648.0), (400, 800.0), (625, 1250.0)])
def test_int8x4_peak(num_pes, peak):
    assert peak_performance(CoreConfig(num_pes=num_pes, precision=Precision.INT8X4)) == peak


def test_weight_bandwidth_of_14x14_on_625_pes():
    bw = bandwidth_requirement(VGG16.layer("conv5_1"), CoreConfig(num_pes=625))
    assert bw.weight_gbps == pytest.approx(625 / 196)
    assert round(bw.weight_gbps) == 3
    assert bw.cap_gbps == 1.0
    assert bw.over_cap == ["weight"]


def test_first_layer_output_stream_is_over_the_cap():
    bw = bandwidth_requirement(VGG16.layer("conv1_1"), CoreConfig(num_pes=256))
    # one output per PE every 3 * 9 = 27 cycles
    assert bw.output_gbps == pytest.approx(0.25 * 256 * 4 / 27)
    assert "output" in bw.over_cap


def test_first_layer_arithmetic_intensity():
    assert arithmetic_intensity(VGG16.layer("conv1_1")) == {"input": 1152, "weight": 100352, "output": 54}


def test_reuse_and_output_interval():
    spec = VGG16_INT8.layer("conv3_2")
    reuse = reuse_factors(spec)
    assert (reuse.input, reuse.weight, reuse.output) == (9 * 256, 56 * 56, 9 * 256)
    # 64 four-lane groups
    assert output_interval(spec) == 9 * 64


# --------------------------------------------------------------------------- #
#   Utilization
# --------------------------------------------------------------------------- #


def test_spatial_utilization_bounds():
    assert spatial_utilization(300, 625) == 0.48
    with pytest.raises(ConfigError):
        spatial_utilization(65, 64)


def test_temporal_utilization_of_a_25x25_tile():
    spec = VGG16_INT8.layer("conv3_2")
    tile = Tile(0, 0, 25, 25, TileKind.RR)
    # 64 * 9 * 256 compute over a 625 * 256 drain
    assert temporal_utilization(spec, tile) == pytest.approx(0.9216)


def test_25x25_fp32_tile_is_fully_busy():
    tile = Tile(0, 0, 25, 25, TileKind.RR)
    # 256 * 9 * 256 compute against 256 * 27 * 27 input and 625 * 256 drain
    assert temporal_utilization(VGG16.layer("conv3_2"), tile) == 1.0


@pytest.mark.parametrize("h,w,k,c_out", [(8, 8, 3, 4), (14, 14, 3, 64), (5, 9, 1, 16), (6, 6, 5, 2)])
def test_temporal_utilization_never_drops_with_more_input_channels(h, w, k, c_out):
    previous = 0.0
    for c_in in range(1, 129):
        spec = ConvLayerSpec(c_in=c_in, c_out=c_out, h_in=h, w_in=w, k_y=k, k_x=k, pad=k // 2)
        u_t = temporal_utilization(spec)
        assert u_t >= previous, c_in
        previous = u_t


def test_square_width_reads_the_window_width_squared():
    spec = ConvLayerSpec(c_in=1, c_out=1, h_in=1, w_in=4, k_y=1, k_x=1)
    assert temporal_utilization(spec) == pytest.approx(1 / 4)
    assert temporal_utilization(spec, square_width=True) == pytest.approx(1 / 16)


def test_56x56_on_625_vpes():
    spec = VGG16_INT8.layer("conv3_2")
    core = CoreConfig(num_pes=625, precision=Precision.INT8X4)
    util = total_utilization(spec, core)
    assert util.tiles == 6
    assert util.u_spatial == pytest.approx(0.836, abs=1e-3)
    assert util.u_total == pytest.approx(util.u_spatial * util.u_temporal)
    assert util.binding_constraint == SPATIAL
    assert tiling_loss(spec, core) == pytest.approx(1 - util.u_spatial)
    assert soundness_bound(spec, core) >= MEASURED_INT8_GOPS[625]["conv3_2"]


def test_first_layer_binds_on_output_bandwidth():
    util = total_utilization(VGG16.layer("conv1_1"), CoreConfig(num_pes=256))
    assert util.u_spatial == 1.0
    assert util.binding_constraint == OUTPUT_BW


def test_compute_bound_layer():
    spec = ConvLayerSpec(c_in=8, c_out=64, h_in=4, w_in=4, k_y=3, k_x=3, pad=1)
    util = total_utilization(spec, CoreConfig(num_pes=16))
    assert util.u_total == 1.0
    assert util.binding_constraint == COMPUTE


# --------------------------------------------------------------------------- #
#   Soundness against measured throughput
# --------------------------------------------------------------------------- #


@pytest.mark.parametrize("num_pes", sorted(MEASURED_FP32_GFLOPS))
def test_measured_fp32_never_beats_the_model(num_pes):
    core = CoreConfig(num_pes=num_pes, subtile_policy=SubtilePolicy.FILL)
    for spec in VGG16.layers:
        measured = MEASURED_FP32_GFLOPS[num_pes][spec.name]
        assert measured <= soundness_bound(spec, core) * 1.02, spec.name


def test_square_subtiles_understate_28x28_on_64_pes():
    spec = VGG16.layer("conv4_1")
    square = soundness_bound(spec, CoreConfig(num_pes=64, subtile_policy=SubtilePolicy.SQUARE))
    fill = soundness_bound(spec, CoreConfig(num_pes=64, subtile_policy=SubtilePolicy.FILL))
    assert square == pytest.approx(24.5)
    assert square * 1.02 < MEASURED_FP32_GFLOPS[64]["conv4_1"] <= fill


# --------------------------------------------------------------------------- #
#   Cycle prediction
# --------------------------------------------------------------------------- #


def test_predict_one_mac():
    spec = ConvLayerSpec(c_in=1, c_out=1, h_in=1, w_in=1, k_y=1, k_x=1)
    # one compute cycle plus the exposed drain; pipeline fill is not modelled
    assert predict_cycles(spec, CoreConfig(num_pes=1)) == 2


def _close(spec, core):
    simulated = simulate_layer_timing(core, spec).total_cycles
    predicted = predict_cycles(spec, core)
    assert abs(predicted - simulated) <= 0.05 * simulated, (spec.name, core.num_pes, predicted, simulated)


@pytest.mark.parametrize("num_pes", [16, 64])
def test_prediction_tracks_timeline_scaled_vgg16(num_pes):
    # channel counts divided by 8 keep the test fast; the full-size run is marked slow
    for spec in scale_preset(VGG16, 8).layers:
        _close(spec, CoreConfig(num_pes=num_pes))


@pytest.mark.slow
@pytest.mark.parametrize("num_pes", [16, 64])
def test_prediction_tracks_timeline_vgg16(num_pes):
    for spec in VGG16.layers:
        _close(spec, CoreConfig(num_pes=num_pes))


@pytest.mark.slow
@pytest.mark.parametrize("num_pes", [256, 324])
def test_prediction_tracks_timeline_spot_checks(num_pes):
    for name in ("conv1_2", "conv3_2", "conv5_1"):
        _close(VGG16.layer(name), CoreConfig(num_pes=num_pes))


# --------------------------------------------------------------------------- #
#   Layer rows and notes
# --------------------------------------------------------------------------- #


def test_analyze_layer_row():
    core = CoreConfig(num_pes=64)
    spec = VGG16.layer("conv3_2")
    row = analyze_layer(spec, core)
    assert row.layer == "conv3_2"
    assert row.predicted_cycles == predict_cycles(spec, core)
    assert row.predicted_gflops == pytest.approx(spec.ops * 250 / (row.predicted_cycles * 1e3))
    assert set(row.to_row()) >= {"u_spatial", "u_temporal", "u_total", "binding_constraint"}
    assert row.tiling_loss == pytest.approx(tiling_loss(spec, core))
    assert row.intensity == arithmetic_intensity(spec)
    assert row.to_row()["over_cap"] == ";".join(row.bandwidth.over_cap)
    assert row.to_dict()["bandwidth"]["over_cap"] == row.over_cap


def test_scale_out_note_is_labelled_as_extrapolation():
    note = scale_out_note(VGG16.layer("conv5_3"), CoreConfig(num_pes=64), 4)
    assert note.startswith("4 core(s)")
    assert "not simulated" in note
