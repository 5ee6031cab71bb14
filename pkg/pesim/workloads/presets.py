"""
Workload presets and published reference measurements.

The reference numbers are FPGA measurements of the hardware this model
describes (batch size 1, 250 MHz, host overheads included). They are
upper-bound checks for the analytical model, never simulation targets.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, List

from core.tensor import ConvLayerSpec, Precision


@dataclass
class WorkloadPreset:
    name: str
    layers: List[ConvLayerSpec] = field(default_factory=list)

    def layer(self, name: str) -> ConvLayerSpec:
        for spec in self.layers:
            if spec.name == name:
                return spec
        raise KeyError(f"{self.name} has no layer '{name}'")

    def __len__(self) -> int:
        return len(self.layers)


# (name, height/width, input channels, output channels); all 3x3, stride 1, pad 1
VGG16_LAYERS = [
    ("conv1_1", 224, 3, 64),
    ("conv1_2", 224, 64, 64),
    ("conv2_1", 112, 64, 128),
    ("conv2_2", 112, 128, 128),
    ("conv3_1", 56, 128, 256),
    ("conv3_2", 56, 256, 256),
    ("conv3_3", 56, 256, 256),
    ("conv4_1", 28, 256, 512),
    ("conv4_2", 28, 512, 512),
    ("conv4_3", 28, 512, 512),
    ("conv5_1", 14, 512, 512),
    ("conv5_2", 14, 512, 512),
    ("conv5_3", 14, 512, 512),
]


def vgg16(precision: Precision = Precision.FP32) -> WorkloadPreset:
    layers = [
        ConvLayerSpec(
            c_in=c_in, c_out=c_out, h_in=hw, w_in=hw, k_y=3, k_x=3,
            stride=1, pad=1, precision=Precision(precision), name=name,
        )
        for name, hw, c_in, c_out in VGG16_LAYERS
    ]
    return WorkloadPreset(name="vgg16", layers=layers)


PRESETS = {"vgg16": vgg16}


def scale_channels(spec: ConvLayerSpec, factor: int) -> ConvLayerSpec:
    """Divide every channel count >= factor by factor (desk-scale runs)."""
    if factor <= 1:
        return spec

    def scaled(c: int) -> int:
        return c // factor if c >= factor else c

    return replace(spec, c_in=scaled(spec.c_in), c_out=scaled(spec.c_out))


def scale_preset(preset: WorkloadPreset, factor: int) -> WorkloadPreset:
    if factor <= 1:
        return preset
    return WorkloadPreset(
        name=f"{preset.name}/ch{factor}",
        layers=[scale_channels(spec, factor) for spec in preset.layers],
    )


# ============================================================================
# MEASURED REFERENCE VALUES
# ============================================================================

# fp32 GFLOPS per layer, keyed by PE count
MEASURED_FP32_GFLOPS: Dict[int, Dict[str, float]] = {
    16: {
        "conv1_1": 5.79, "conv1_2": 7.01, "conv2_1": 7.21, "conv2_2": 7.22,
        "conv3_1": 7.33, "conv3_2": 7.33, "conv3_3": 7.33,
        "conv4_1": 7.38, "conv4_2": 7.39, "conv4_3": 7.39,
        "conv5_1": 6.95, "conv5_2": 6.95, "conv5_3": 6.95,
    },
    64: {
        "conv1_1": 6.05, "conv1_2": 27.95, "conv2_1": 28.71, "conv2_2": 28.80,
        "conv3_1": 29.11, "conv3_2": 29.22, "conv3_3": 29.23,
        "conv4_1": 27.70, "conv4_2": 27.78, "conv4_3": 27.78,
        "conv5_1": 22.48, "conv5_2": 22.47, "conv5_3": 22.46,
    },
    256: {
        "conv1_1": 6.15, "conv1_2": 110.11, "conv2_1": 111.71, "conv2_2": 113.39,
        "conv3_1": 106.61, "conv3_2": 108.78, "conv3_3": 108.75,
        "conv4_1": 87.71, "conv4_2": 89.09, "conv4_3": 89.09,
        "conv5_1": 81.63, "conv5_2": 81.98, "conv5_3": 81.88,
    },
    324: {
        "conv1_1": 6.13, "conv1_2": 130.44, "conv2_1": 127.38, "conv2_2": 139.15,
        "conv3_1": 126.13, "conv3_2": 128.46, "conv3_3": 128.30,
        "conv4_1": 112.58, "conv4_2": 116.48, "conv4_3": 116.58,
        "conv5_1": 81.24, "conv5_2": 81.81, "conv5_3": 81.84,
    },
}

MEASURED_FP32_PEAK = {16: 8.0, 64: 32.0, 256: 128.0, 324: 162.0}
MEASURED_FP32_OVERALL = {16: 7.24, 64: 27.23, 256: 91.79, 324: 108.1}

# int8x4 GOPS per layer, keyed by vPE count
MEASURED_INT8_GOPS: Dict[int, Dict[str, float]] = {
    256: {
        "conv1_1": 11.99, "conv1_2": 252.03, "conv2_1": 240.09, "conv2_2": 430.66,
        "conv3_1": 373.92, "conv3_2": 418.58, "conv3_3": 418.02,
        "conv4_1": 338.24, "conv4_2": 346.86, "conv4_3": 347.48,
        "conv5_1": 289.23, "conv5_2": 289.72, "conv5_3": 290.40,
    },
    324: {
        "conv1_1": 11.91, "conv1_2": 250.70, "conv2_1": 242.76, "conv2_2": 489.32,
        "conv3_1": 450.49, "conv3_2": 489.25, "conv3_3": 488.14,
        "conv4_1": 413.11, "conv4_2": 445.65, "conv4_3": 445.53,
        "conv5_1": 289.33, "conv5_2": 290.89, "conv5_3": 289.72,
    },
    400: {
        "conv1_1": 11.95, "conv1_2": 254.85, "conv2_1": 247.29, "conv2_2": 481.66,
        "conv3_1": 438.78, "conv3_2": 578.66, "conv3_3": 581.39,
        "conv4_1": 416.60, "conv4_2": 449.54, "conv4_3": 449.31,
        "conv5_1": 289.13, "conv5_2": 290.79, "conv5_3": 290.60,
    },
    625: {
        "conv1_1": 12.06, "conv1_2": 253.31, "conv2_1": 247.19, "conv2_2": 473.26,
        "conv3_1": 449.43, "conv3_2": 823.84, "conv3_3": 820.90,
        "conv4_1": 433.05, "conv4_2": 461.71, "conv4_3": 460.42,
        "conv5_1": 290.30, "conv5_2": 293.77, "conv5_3": 290.99,
    },
}

MEASURED_INT8_PEAK = {256: 512.0, 324: 648.0, 400: 800.0, 625: 1250.0}
MEASURED_INT8_OVERALL = {256: 293.94, 324: 353.6, 400: 335.0, 625: 351.86}


def measured_reference(precision: Precision, num_pes: int) -> Dict[str, float]:
    """Measured per-layer throughput for a configuration, or {} if none was measured."""
    table = MEASURED_INT8_GOPS if Precision(precision) == Precision.INT8X4 else MEASURED_FP32_GFLOPS
    return table.get(num_pes, {})
