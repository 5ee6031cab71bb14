import numpy as np
import pytest

from config import CoreConfig
from core.tensor import ConvLayerSpec, Layout, Precision, Tensor3, Tensor4, pad_input


def naive_conv(input: Tensor3, weights: Tensor4, spec: ConvLayerSpec) -> np.ndarray:
    """Scalar loop convolution with the same accumulation order as the hardware."""
    x = pad_input(input, spec.pad).array
    w = weights.array
    channels = x.shape[0]
    int8 = spec.precision == Precision.INT8X4
    out = np.zeros((spec.c_out, spec.h_out, spec.w_out), dtype=np.int32 if int8 else np.float32)
    for co in range(spec.c_out):
        for oy in range(spec.h_out):
            for ox in range(spec.w_out):
                if int8:
                    acc = 0
                    for g in range(0, channels, 4):
                        for ky in range(spec.k_y):
                            for kx in range(spec.k_x):
                                y, xx = oy * spec.stride + ky, ox * spec.stride + kx
                                acc += sum(int(x[g + l, y, xx]) * int(w[g + l, ky, kx, co]) for l in range(4))
                    out[co, oy, ox] = acc
                else:
                    acc = np.float32(0.0)
                    for ci in range(channels):
                        for ky in range(spec.k_y):
                            for kx in range(spec.k_x):
                                y, xx = oy * spec.stride + ky, ox * spec.stride + kx
                                acc = np.float32(acc + np.float32(x[ci, y, xx] * w[ci, ky, kx, co]))
                    out[co, oy, ox] = acc
    return out


def chw(array: np.ndarray) -> Tensor3:
    return Tensor3.from_array(array, Layout.CHW)


def cikykxco(array: np.ndarray) -> Tensor4:
    return Tensor4.from_array(array, Layout.CIKYKXCO)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def fp32_core():
    return CoreConfig(num_pes=16)


@pytest.fixture
def int8_core():
    return CoreConfig(num_pes=16, precision=Precision.INT8X4)


@pytest.fixture
def small_spec():
    return ConvLayerSpec(c_in=3, c_out=4, h_in=6, w_in=5, k_y=3, k_x=3, stride=1, pad=1, name="small")
