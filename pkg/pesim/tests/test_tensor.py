import numpy as np
import pytest

from conftest import chw, cikykxco, naive_conv
from core.errors import LayoutError, PackingError, ShapeError
from core.tensor import (
    ConvLayerSpec,
    Layout,
    Precision,
    Tensor3,
    Tensor4,
    check_operands,
    conv2d_reference,
    inverse_transform_features,
    inverse_transform_weights,
    pack_int8,
    pack_weights_int8,
    pad_channels,
    pad_input,
    transform_features,
    transform_weights,
    unpack_int8,
)

# --------------------------------------------------------------------------- #
#   Layer shape
# --------------------------------------------------------------------------- #


def test_output_extent_same_padding():
    spec = ConvLayerSpec(c_in=64, c_out=64, h_in=224, w_in=224, k_y=3, k_x=3, pad=1)
    assert (spec.h_out, spec.w_out) == (224, 224)
    assert (spec.h_padded, spec.w_padded) == (226, 226)


def test_output_extent_stride_two():
    spec = ConvLayerSpec(c_in=1, c_out=1, h_in=5, w_in=7, k_y=3, k_x=3, stride=2)
    assert (spec.h_out, spec.w_out) == (2, 3)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(stride=3),
        dict(pad=-1),
        dict(h_in=0),
        # 4 + 0 - 3 = 1 is not divisible by stride 2
        dict(h_in=4, stride=2),
        # kernel larger than the padded input
        dict(k_y=9),
    ],
)
def test_invalid_shapes_raise(kwargs):
    base = dict(c_in=1, c_out=1, h_in=5, w_in=5, k_y=3, k_x=3)
    base.update(kwargs)
    with pytest.raises(ShapeError):
        ConvLayerSpec(**base)


def test_int8_channel_groups_round_up():
    spec = ConvLayerSpec(c_in=3, c_out=8, h_in=4, w_in=4, k_y=1, k_x=1, precision="int8x4")
    assert spec.precision == Precision.INT8X4
    assert spec.padded_c_in == 4
    assert spec.channel_groups == 1
    assert spec.lanes == 4
    # macs count the real channels only
    assert spec.macs == 3 * 8 * 16


def test_spec_dict_round_trip():
    spec = ConvLayerSpec(c_in=2, c_out=3, h_in=9, w_in=7, k_y=3, k_x=1, stride=2, pad=1,
                         precision=Precision.INT8X4, name="conv")
    assert ConvLayerSpec.from_dict(spec.to_dict()) == spec


# --------------------------------------------------------------------------- #
#   Containers and layout transforms
# --------------------------------------------------------------------------- #


def test_tensor_rejects_wrong_length():
    with pytest.raises(ShapeError):
        Tensor3(Layout.CHW, (1, 2, 2), np.zeros(3, dtype=np.float32))


def test_tensor_rejects_weight_layout_for_feature_map():
    with pytest.raises(LayoutError):
        Tensor3(Layout.CIKYKXCO, (1, 2, 2), np.zeros(4, dtype=np.float32))


def test_transform_weights_moves_input_channel_first(rng):
    w = rng.standard_normal((3, 2, 5, 4)).astype(np.float32)
    out = transform_weights(Tensor4.from_array(w, Layout.KYKXCICO))
    assert out.layout == Layout.CIKYKXCO
    assert out.dims == (5, 3, 2, 4)
    assert out.array[4, 2, 1, 3] == w[2, 1, 4, 3]
    back = inverse_transform_weights(out)
    assert back.layout == Layout.KYKXCICO
    assert np.array_equal(back.array, w)


def test_transform_features_whc_to_chw(rng):
    t = rng.standard_normal((5, 4, 3)).astype(np.float32)
    out = transform_features(Tensor3.from_array(t, Layout.WHC))
    assert out.dims == (3, 4, 5)
    assert out.array[2, 1, 4] == t[4, 1, 2]
    assert np.array_equal(inverse_transform_features(out).array, t)


def test_transform_checks_source_layout():
    w = Tensor4.from_array(np.zeros((1, 1, 1, 1), dtype=np.float32), Layout.CIKYKXCO)
    with pytest.raises(LayoutError):
        transform_weights(w)


# --------------------------------------------------------------------------- #
#   Padding and packing
# --------------------------------------------------------------------------- #


def test_pad_input_adds_zero_border():
    t = chw(np.ones((2, 3, 4), dtype=np.float32))
    padded = pad_input(t, 2).array
    assert padded.shape == (2, 7, 8)
    assert padded.sum() == 24
    assert np.all(padded[:, :2, :] == 0)
    assert np.all(padded[:, :, -2:] == 0)
    assert pad_input(t, 0) is t


def test_pad_channels_to_multiple_of_four():
    t = chw(np.ones((5, 2, 2), dtype=np.int8))
    padded = pad_channels(t)
    assert padded.dims == (8, 2, 2)
    assert np.all(padded.array[5:] == 0)


def test_pack_int8_lane_order(rng):
    data = rng.integers(-128, 128, size=(8, 3, 2)).astype(np.int8)
    packed = pack_int8(chw(data))
    assert packed.groups == 2
    assert packed.data.shape == (2, 3, 2, 4)
    assert list(packed.data[1, 2, 0]) == [data[4 + l, 2, 0] for l in range(4)]
    assert np.array_equal(unpack_int8(packed).array, data)


def test_pack_int8_requires_multiple_of_four():
    with pytest.raises(PackingError):
        pack_int8(chw(np.zeros((6, 2, 2), dtype=np.int8)))
    with pytest.raises(PackingError):
        pack_weights_int8(cikykxco(np.zeros((3, 1, 1, 1), dtype=np.int8)))


def test_pack_weights_int8_shape(rng):
    w = rng.integers(-128, 128, size=(4, 3, 3, 2)).astype(np.int8)
    packed = pack_weights_int8(cikykxco(w))
    assert packed.shape == (1, 3, 3, 2, 4)
    assert list(packed[0, 1, 2, 1]) == list(w[:, 1, 2, 1])


# --------------------------------------------------------------------------- #
#   Reference convolution
# --------------------------------------------------------------------------- #


def test_check_operands_rejects_mismatch(small_spec):
    x = chw(np.zeros((3, 6, 5), dtype=np.float32))
    w = cikykxco(np.zeros((3, 3, 3, 5), dtype=np.float32))
    with pytest.raises(ShapeError):
        check_operands(x, w, small_spec)


def test_check_operands_int8_needs_packable_channels():
    spec = ConvLayerSpec(c_in=3, c_out=1, h_in=3, w_in=3, k_y=1, k_x=1, precision=Precision.INT8X4)
    x = chw(np.zeros((3, 3, 3), dtype=np.int8))
    w = cikykxco(np.zeros((3, 1, 1, 1), dtype=np.int8))
    with pytest.raises(PackingError):
        check_operands(x, w, spec)
    assert check_operands(pad_channels(x), cikykxco(np.zeros((4, 1, 1, 1), dtype=np.int8)), spec) == 4


def test_reference_fp32_matches_scalar_loop(rng, small_spec):
    x = chw(rng.standard_normal((3, 6, 5)).astype(np.float32))
    w = cikykxco(rng.standard_normal((3, 3, 3, 4)).astype(np.float32))
    out = conv2d_reference(x, w, small_spec)
    assert out.dims == (4, 6, 5)
    assert out.dtype == np.float32
    assert np.array_equal(out.array.view(np.uint32), naive_conv(x, w, small_spec).view(np.uint32))


def test_reference_int8_matches_scalar_loop(rng):
    spec = ConvLayerSpec(c_in=8, c_out=3, h_in=7, w_in=8, k_y=3, k_x=2, stride=2, pad=1,
                         precision=Precision.INT8X4)
    x = chw(rng.integers(-128, 128, size=(8, 7, 8)).astype(np.int8))
    w = cikykxco(rng.integers(-128, 128, size=(8, 3, 2, 3)).astype(np.int8))
    out = conv2d_reference(x, w, spec)
    assert out.dtype == np.int32
    assert np.array_equal(out.array, naive_conv(x, w, spec))


def test_reference_int8_extremes_accumulate_in_int32():
    spec = ConvLayerSpec(c_in=4, c_out=1, h_in=3, w_in=3, k_y=3, k_x=3, precision=Precision.INT8X4)
    x = chw(np.full((4, 3, 3), -128, dtype=np.int8))
    w = cikykxco(np.full((4, 3, 3, 1), -128, dtype=np.int8))
    assert conv2d_reference(x, w, spec).array[0, 0, 0] == 36 * 128 * 128


def test_transform_weights_distinct_values():
    w = Tensor4.from_array(np.arange(72, dtype=np.int32).reshape(3, 3, 2, 4), Layout.KYKXCICO)
    out = transform_weights(w)
    assert out.array[0, 1, 2, 3] == w.array[1, 2, 0, 3]


def test_pad_single_pixel():
    padded = pad_input(chw(np.array([[[5.0]]], dtype=np.float32)), 1).array
    assert padded.shape == (1, 3, 3)
    assert padded[0, 1, 1] == 5.0
    assert np.count_nonzero(padded) == 1


def test_pack_constant_channels():
    data = np.stack([np.full((2, 2), v, dtype=np.int8) for v in (1, 2, 3, 4)])
    packed = pack_int8(chw(data))
    assert np.all(packed.data == np.array([1, 2, 3, 4], dtype=np.int8))


def test_pointwise_kernel_scales_the_input(rng):
    spec = ConvLayerSpec(c_in=1, c_out=3, h_in=4, w_in=5, k_y=1, k_x=1)
    x = chw(rng.standard_normal((1, 4, 5)).astype(np.float32))
    w = cikykxco(np.array([2.0, -0.5, 3.0], dtype=np.float32).reshape(1, 1, 1, 3))
    out = conv2d_reference(x, w, spec).array
    for co, scale in enumerate((2.0, -0.5, 3.0)):
        assert np.array_equal(out[co], x.array[0] * np.float32(scale))


def test_power_of_two_scaling_is_exact(rng, small_spec):
    x = rng.standard_normal((3, 6, 5)).astype(np.float32)
    w = cikykxco(rng.standard_normal((3, 3, 3, 4)).astype(np.float32))
    base = conv2d_reference(chw(x), w, small_spec).array
    scaled = conv2d_reference(chw(x * np.float32(4.0)), w, small_spec).array
    assert np.array_equal(scaled, base * np.float32(4.0))
