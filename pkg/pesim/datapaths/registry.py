from core.tensor import Precision
from datapaths.base import BaseDatapath
from datapaths.fp32 import Fp32Datapath
from datapaths.int8x4 import Int8x4Datapath


class DatapathRegistry:
    def __init__(self):
        self.datapaths = [
            Fp32Datapath(),
            Int8x4Datapath(),
        ]

    def get_datapath(self, precision) -> BaseDatapath:
        precision = Precision(precision)
        for datapath in self.datapaths:
            if datapath.precision == precision:
                return datapath
        raise KeyError(f"no datapath for precision {precision}")


_registry = DatapathRegistry()


def get_datapath(precision) -> BaseDatapath:
    return _registry.get_datapath(precision)
