import numpy as np

from core.tensor import Precision, Tensor3, Tensor4


class BaseDatapath:
    """
    MAC datapath of one PE flavour.

    Inputs reach the PE array as "words": one fp32 value, or one 32-bit
    vector of four int8 lanes. Every array passed around here carries the
    lane axis last so both flavours share the same gather/broadcast code.
    """
    precision: Precision
    lanes: int
    accumulator_dtype: type

    def input_words(self, padded: Tensor3) -> np.ndarray:
        """
        Padded C x Hp x Wp map -> (groups, Hp * Wp, lanes) stream words.
        """
        raise NotImplementedError

    def weight_words(self, weights: Tensor4) -> np.ndarray:
        """
        Ci x Ky x Kx x Co weights -> (groups, Ky * Kx, Co, lanes) broadcast words.
        """
        raise NotImplementedError

    def mac(self, psum: np.ndarray, window: np.ndarray, weight_reg: np.ndarray) -> None:
        """
        One cycle of every active PE: psum += window . weight_reg, in place.

        Args:
            psum: (active_pes,) accumulators for one output channel
            window: (active_pes, lanes) cached input words
            weight_reg: (lanes,) the broadcast weight word
        """
        raise NotImplementedError
