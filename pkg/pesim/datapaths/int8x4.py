import numpy as np

from core.tensor import LANES_PER_VECTOR, Precision, Tensor3, Tensor4, pack_int8, pack_weights_int8
from datapaths.base import BaseDatapath


class Int8x4Datapath(BaseDatapath):
    """vPE: four int8 multiplies and a two-level adder tree into one int32 accumulator."""
    precision = Precision.INT8X4
    lanes = LANES_PER_VECTOR
    accumulator_dtype = np.int32

    def input_words(self, padded: Tensor3) -> np.ndarray:
        packed = pack_int8(padded)
        return packed.data.reshape(packed.groups, packed.height * packed.width, self.lanes)

    def weight_words(self, weights: Tensor4) -> np.ndarray:
        packed = pack_weights_int8(weights)
        groups, ky, kx, co, lanes = packed.shape
        return packed.reshape(groups, ky * kx, co, lanes)

    def mac(self, psum: np.ndarray, window: np.ndarray, weight_reg: np.ndarray) -> None:
        p = window.astype(np.int32) * weight_reg.astype(np.int32)
        psum += (p[:, 0] + p[:, 1]) + (p[:, 2] + p[:, 3])
