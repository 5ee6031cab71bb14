import numpy as np

from core.tensor import Precision, Tensor3, Tensor4
from datapaths.base import BaseDatapath


class Fp32Datapath(BaseDatapath):
    precision = Precision.FP32
    lanes = 1
    accumulator_dtype = np.float32

    def input_words(self, padded: Tensor3) -> np.ndarray:
        c = padded.dims[0]
        return padded.array.astype(np.float32, copy=False).reshape(c, -1, 1)

    def weight_words(self, weights: Tensor4) -> np.ndarray:
        ci, ky, kx, co = weights.dims
        return weights.array.astype(np.float32, copy=False).reshape(ci, ky * kx, co, 1)

    def mac(self, psum: np.ndarray, window: np.ndarray, weight_reg: np.ndarray) -> None:
        # float32 product, then float32 add: no fused multiply-add
        psum += window[:, 0] * weight_reg[0]
