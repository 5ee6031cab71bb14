"""
Dense tensor containers, layout transforms and the reference convolution.

The accelerator expects feature maps as C x H x W and weights as
Ci x Ky x Kx x Co. Host-side tensors usually arrive as W x H x C and
Ky x Kx x Ci x Co, so this module provides:

1. Layer shape description (ConvLayerSpec)
2. Tensor3 / Tensor4 containers with explicit layout tags
3. Layout transforms and their inverses
4. Zero padding (spatial and channel)
5. int8x4 channel packing
6. The reference convolution every simulated result is checked against
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Tuple

import numpy as np

from core.errors import LayoutError, PackingError, ShapeError

logger = logging.getLogger(__name__)

LANES_PER_VECTOR = 4


class Precision(str, Enum):
    FP32 = "fp32"
    INT8X4 = "int8x4"


class Layout(str, Enum):
    CHW = "CHW"
    WHC = "WHC"
    KYKXCICO = "KyKxCiCo"
    CIKYKXCO = "CiKyKxCo"


FEATURE_LAYOUTS = (Layout.CHW, Layout.WHC)
WEIGHT_LAYOUTS = (Layout.KYKXCICO, Layout.CIKYKXCO)

# ============================================================
# 1. LAYER SHAPE
# ============================================================


@dataclass(frozen=True)
class ConvLayerSpec:
    """
    Shape of one convolution layer plus its precision mode.

    Stride and padding are the same on both axes. int8x4 layers whose c_in
    is not a multiple of 4 are accepted here; they run with zero channels
    appended up to padded_c_in.
    """
    # Input / output channel counts
    c_in: int
    c_out: int

    # Unpadded input plane
    h_in: int
    w_in: int

    # Kernel extents
    k_y: int
    k_x: int

    stride: int = 1
    pad: int = 0
    precision: Precision = Precision.FP32

    # Name used in reports
    name: str = "layer"

    def __post_init__(self):
        for field_name in ("c_in", "c_out", "h_in", "w_in", "k_y", "k_x"):
            if getattr(self, field_name) < 1:
                raise ShapeError(f"{self.name}: {field_name} must be >= 1, got {getattr(self, field_name)}")
        if self.pad < 0:
            raise ShapeError(f"{self.name}: pad must be >= 0, got {self.pad}")
        if self.stride not in (1, 2):
            raise ShapeError(f"{self.name}: stride must be 1 or 2, got {self.stride}")
        object.__setattr__(self, "precision", Precision(self.precision))
        for extent, k, axis in ((self.h_in, self.k_y, "y"), (self.w_in, self.k_x, "x")):
            span = extent + 2 * self.pad - k
            if span < 0 or span % self.stride != 0:
                raise ShapeError(
                    f"{self.name}: {axis} extent {extent} with pad {self.pad}, kernel {k}, "
                    f"stride {self.stride} does not give an integer output size"
                )

    @property
    def h_out(self) -> int:
        return (self.h_in + 2 * self.pad - self.k_y) // self.stride + 1

    @property
    def w_out(self) -> int:
        return (self.w_in + 2 * self.pad - self.k_x) // self.stride + 1

    @property
    def h_padded(self) -> int:
        return self.h_in + 2 * self.pad

    @property
    def w_padded(self) -> int:
        return self.w_in + 2 * self.pad

    @property
    def lanes(self) -> int:
        return LANES_PER_VECTOR if self.precision == Precision.INT8X4 else 1

    @property
    def padded_c_in(self) -> int:
        if self.precision == Precision.INT8X4:
            return math.ceil(self.c_in / LANES_PER_VECTOR) * LANES_PER_VECTOR
        return self.c_in

    @property
    def channel_groups(self) -> int:
        """Input channels (fp32) or 4-channel vectors (int8x4) streamed per tile."""
        return self.padded_c_in // self.lanes

    @property
    def kernel_size(self) -> int:
        return self.k_y * self.k_x

    @property
    def macs(self) -> int:
        """Multiply-accumulates of the unpadded layer."""
        return self.c_in * self.c_out * self.k_y * self.k_x * self.h_out * self.w_out

    @property
    def ops(self) -> int:
        # 1 MAC = add + mul
        return 2 * self.macs

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "c_in": self.c_in,
            "c_out": self.c_out,
            "h_in": self.h_in,
            "w_in": self.w_in,
            "k_y": self.k_y,
            "k_x": self.k_x,
            "stride": self.stride,
            "pad": self.pad,
            "precision": self.precision.value,
        }

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "ConvLayerSpec":
        return ConvLayerSpec(
            c_in=data["c_in"],
            c_out=data["c_out"],
            h_in=data["h_in"],
            w_in=data["w_in"],
            k_y=data.get("k_y", 3),
            k_x=data.get("k_x", 3),
            stride=data.get("stride", 1),
            pad=data.get("pad", 0),
            precision=Precision(data.get("precision", "fp32")),
            name=data.get("name", "layer"),
        )

    def __repr__(self):
        return (
            f"<ConvLayerSpec {self.name}: {self.c_in}x{self.h_in}x{self.w_in} -> "
            f"{self.c_out}x{self.h_out}x{self.w_out}, k={self.k_y}x{self.k_x}, "
            f"s={self.stride}, p={self.pad}, {self.precision.value}>"
        )


# ============================================================
# 2. CONTAINERS
# ============================================================


def _validate(layout: Layout, dims: Tuple[int, ...], data: np.ndarray, allowed, rank: int):
    if layout not in allowed:
        raise LayoutError(f"layout {layout} is not one of {[l.value for l in allowed]}")
    if len(dims) != rank:
        raise ShapeError(f"{layout.value} tensor needs {rank} dims, got {dims}")
    if any(d < 1 for d in dims):
        raise ShapeError(f"dims must be positive, got {dims}")
    if data.ndim != 1 or data.size != math.prod(dims):
        raise ShapeError(f"data length {data.size} does not match dims {dims}")


@dataclass
class Tensor3:
    """Feature map. data is flat, indexed by the layout's row-major order."""
    layout: Layout
    dims: Tuple[int, int, int]
    data: np.ndarray

    def __post_init__(self):
        self.layout = Layout(self.layout)
        self.dims = tuple(int(d) for d in self.dims)
        self.data = np.ascontiguousarray(self.data).reshape(-1)
        _validate(self.layout, self.dims, self.data, FEATURE_LAYOUTS, 3)

    @staticmethod
    def from_array(array: np.ndarray, layout: Layout = Layout.CHW) -> "Tensor3":
        return Tensor3(layout, array.shape, array.reshape(-1))

    @property
    def array(self) -> np.ndarray:
        return self.data.reshape(self.dims)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def __repr__(self):
        return f"<Tensor3 {self.layout.value} {self.dims} {self.dtype}>"


@dataclass
class Tensor4:
    """Weight tensor. data is flat, indexed by the layout's row-major order."""
    layout: Layout
    dims: Tuple[int, int, int, int]
    data: np.ndarray

    def __post_init__(self):
        self.layout = Layout(self.layout)
        self.dims = tuple(int(d) for d in self.dims)
        self.data = np.ascontiguousarray(self.data).reshape(-1)
        _validate(self.layout, self.dims, self.data, WEIGHT_LAYOUTS, 4)

    @staticmethod
    def from_array(array: np.ndarray, layout: Layout = Layout.CIKYKXCO) -> "Tensor4":
        return Tensor4(layout, array.shape, array.reshape(-1))

    @property
    def array(self) -> np.ndarray:
        return self.data.reshape(self.dims)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def __repr__(self):
        return f"<Tensor4 {self.layout.value} {self.dims} {self.dtype}>"


@dataclass
class PackedInput:
    """
    int8 feature map with four channels packed per spatial position.

    data has shape (groups, H, W, 4): lane l of group g at (y, x) is
    channel 4g+l of the unpacked map at (y, x).
    """
    groups: int
    data: np.ndarray

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


# ============================================================
# 3. LAYOUT TRANSFORMS
# ============================================================


def _expect(t, layout: Layout):
    if t.layout != layout:
        raise LayoutError(f"expected {layout.value} tensor, got {t.layout.value}")


def transform_weights(w: Tensor4) -> Tensor4:
    """Ky x Kx x Ci x Co  ->  Ci x Ky x Kx x Co."""
    _expect(w, Layout.KYKXCICO)
    return Tensor4.from_array(np.transpose(w.array, (2, 0, 1, 3)), Layout.CIKYKXCO)


def inverse_transform_weights(w: Tensor4) -> Tensor4:
    """Ci x Ky x Kx x Co  ->  Ky x Kx x Ci x Co."""
    _expect(w, Layout.CIKYKXCO)
    return Tensor4.from_array(np.transpose(w.array, (1, 2, 0, 3)), Layout.KYKXCICO)


def transform_features(t: Tensor3) -> Tensor3:
    """W x H x C  ->  C x H x W."""
    _expect(t, Layout.WHC)
    return Tensor3.from_array(np.transpose(t.array, (2, 1, 0)), Layout.CHW)


def inverse_transform_features(t: Tensor3) -> Tensor3:
    """C x H x W  ->  W x H x C."""
    _expect(t, Layout.CHW)
    return Tensor3.from_array(np.transpose(t.array, (2, 1, 0)), Layout.WHC)


# ============================================================
# 4. PADDING
# ============================================================


def pad_input(t: Tensor3, pad: int) -> Tensor3:
    """Zero-pad the spatial border of a CHW map by `pad` on every side."""
    _expect(t, Layout.CHW)
    if pad < 0:
        raise ShapeError(f"pad must be >= 0, got {pad}")
    if pad == 0:
        return t
    padded = np.pad(t.array, ((0, 0), (pad, pad), (pad, pad)))
    return Tensor3.from_array(padded, Layout.CHW)


def pad_channels(t: Tensor3, multiple: int = LANES_PER_VECTOR) -> Tensor3:
    """Append zero channels to a CHW map up to the next multiple."""
    _expect(t, Layout.CHW)
    c = t.dims[0]
    extra = -c % multiple
    if extra == 0:
        return t
    logger.debug(f"Padding {c} channels with {extra} zero channel(s)")
    return Tensor3.from_array(np.pad(t.array, ((0, extra), (0, 0), (0, 0))), Layout.CHW)


def pad_weight_channels(w: Tensor4, multiple: int = LANES_PER_VECTOR) -> Tensor4:
    """Append zero input channels to Ci x Ky x Kx x Co weights."""
    _expect(w, Layout.CIKYKXCO)
    extra = -w.dims[0] % multiple
    if extra == 0:
        return w
    return Tensor4.from_array(np.pad(w.array, ((0, extra), (0, 0), (0, 0), (0, 0))), Layout.CIKYKXCO)


# ============================================================
# 5. INT8X4 PACKING
# ============================================================


def pack_int8(t: Tensor3) -> PackedInput:
    _expect(t, Layout.CHW)
    c, h, w = t.dims
    if c % LANES_PER_VECTOR:
        raise PackingError(f"cannot pack {c} channels into 4-lane vectors; pad channels first")
    groups = c // LANES_PER_VECTOR
    data = t.array.astype(np.int8, copy=False).reshape(groups, LANES_PER_VECTOR, h, w).transpose(0, 2, 3, 1)
    return PackedInput(groups=groups, data=np.ascontiguousarray(data))


def unpack_int8(p: PackedInput) -> Tensor3:
    groups, h, w, lanes = p.data.shape
    data = p.data.transpose(0, 3, 1, 2).reshape(groups * lanes, h, w)
    return Tensor3.from_array(np.ascontiguousarray(data), Layout.CHW)


def pack_weights_int8(w: Tensor4) -> np.ndarray:
    """
    Pack Ci x Ky x Kx x Co int8 weights into 32-bit weight words.

    Returns:
        array of shape (Ci/4, Ky, Kx, Co, 4); the last axis is the lane.
    """
    _expect(w, Layout.CIKYKXCO)
    ci, ky, kx, co = w.dims
    if ci % LANES_PER_VECTOR:
        raise PackingError(f"cannot pack {ci} weight channels into 4-lane vectors; pad channels first")
    packed = w.array.astype(np.int8, copy=False).reshape(ci // LANES_PER_VECTOR, LANES_PER_VECTOR, ky, kx, co)
    return np.ascontiguousarray(packed.transpose(0, 2, 3, 4, 1))


# ============================================================
# 6. REFERENCE CONVOLUTION
# ============================================================


def check_operands(input: Tensor3, weights: Tensor4, spec: ConvLayerSpec) -> int:
    """
    Validate a (input, weights) pair against a layer.

    The input may carry either c_in or padded_c_in channels.

    Returns:
        number of input channels actually present
    """
    _expect(input, Layout.CHW)
    _expect(weights, Layout.CIKYKXCO)
    channels, h, w = input.dims
    if channels not in (spec.c_in, spec.padded_c_in) or (h, w) != (spec.h_in, spec.w_in):
        raise ShapeError(f"{spec.name}: input dims {input.dims} do not match ({spec.c_in}, {spec.h_in}, {spec.w_in})")
    if weights.dims != (channels, spec.k_y, spec.k_x, spec.c_out):
        raise ShapeError(
            f"{spec.name}: weight dims {weights.dims} do not match ({channels}, {spec.k_y}, {spec.k_x}, {spec.c_out})"
        )
    if spec.precision == Precision.INT8X4 and channels % LANES_PER_VECTOR:
        raise PackingError(f"{spec.name}: int8x4 needs a multiple of 4 input channels, got {channels}")
    return channels


def conv2d_reference(input: Tensor3, weights: Tensor4, spec: ConvLayerSpec) -> Tensor3:
    """
    Exact convolution oracle.

    fp32 accumulates one running float32 sum per output in (ci, ky, kx)
    order. int8x4 accumulates in int32, group outermost, each step adding
    ((p0 + p1) + (p2 + p3)) of the four lane products.

    Args:
        input: C x H x W map (unpadded)
        weights: Ci x Ky x Kx x Co weights
        spec: layer shape

    Returns:
        Co x Ho x Wo map, float32 or int32
    """
    channels = check_operands(input, weights, spec)
    x = pad_input(input, spec.pad).array
    w = weights.array
    s, ho, wo = spec.stride, spec.h_out, spec.w_out
    y_span = s * (ho - 1) + 1
    x_span = s * (wo - 1) + 1

    if spec.precision == Precision.FP32:
        x = x.astype(np.float32, copy=False)
        w = w.astype(np.float32, copy=False)
        out = np.zeros((spec.c_out, ho, wo), dtype=np.float32)
        for ci in range(channels):
            for ky in range(spec.k_y):
                for kx in range(spec.k_x):
                    patch = x[ci, ky:ky + y_span:s, kx:kx + x_span:s]
                    out += patch[None, :, :] * w[ci, ky, kx, :][:, None, None]
        return Tensor3.from_array(out, Layout.CHW)

    x = x.astype(np.int32)
    w = w.astype(np.int32)
    out = np.zeros((spec.c_out, ho, wo), dtype=np.int32)
    for g in range(channels // LANES_PER_VECTOR):
        lanes = slice(g * LANES_PER_VECTOR, (g + 1) * LANES_PER_VECTOR)
        for ky in range(spec.k_y):
            for kx in range(spec.k_x):
                patch = x[lanes, ky:ky + y_span:s, kx:kx + x_span:s]
                p = patch[:, None, :, :] * w[lanes, ky, kx, :][:, :, None, None]
                out += (p[0] + p[1]) + (p[2] + p[3])
    return Tensor3.from_array(out, Layout.CHW)
