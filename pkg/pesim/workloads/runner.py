"""
Workload driver: per-layer pipeline, verification and reports.

    pad -> transform -> tile -> simulate / analyze

Simulation without verification runs the controller timeline only (cycle
counts do not depend on data); verification runs the full datapath on
deterministic pseudo-random tensors and compares against conv2d_reference.
"""

import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import CoreConfig, RunConfig
from core.analytics import analyze_layer, peak_performance, scale_out_note
from core.core_sim import CycleStats, simulate_layer, simulate_layer_timing
from core.errors import ShapeError
from core.fixtures import from_document, random_tensor
from core.tensor import (
    ConvLayerSpec,
    Layout,
    Precision,
    Tensor3,
    Tensor4,
    conv2d_reference,
    pad_channels,
    pad_weight_channels,
    transform_features,
    transform_weights,
)
from workloads.presets import WorkloadPreset, measured_reference

logger = logging.getLogger(__name__)

REPORT_CSV_COLUMNS = [
    "layer",
    "gops",
    "core_time_ms",
    "u_spatial",
    "u_temporal",
    "u_total",
    "binding_constraint",
    "total_cycles",
    "compute_cycles",
    "input_stall_cycles",
    "output_stall_cycles",
    "pipeline_fill_cycles",
    "predicted_cycles",
    "predicted_gflops",
]


class RunMode(str, Enum):
    SIMULATE = "simulate"
    ANALYZE = "analyze"
    BOTH = "both"


# ============================================================================
# REPORT TYPES
# ============================================================================


@dataclass
class LayerRow:
    layer: str
    ops: int
    # core-time: simulated (or predicted) cycles over the clock
    core_time_ms: float
    gops: float
    u_spatial: Optional[float] = None
    u_temporal: Optional[float] = None
    u_total: Optional[float] = None
    binding_constraint: str = ""
    total_cycles: Optional[int] = None
    compute_cycles: Optional[int] = None
    input_stall_cycles: Optional[int] = None
    output_stall_cycles: Optional[int] = None
    pipeline_fill_cycles: Optional[int] = None
    predicted_cycles: Optional[int] = None
    predicted_gflops: Optional[float] = None
    verified: Optional[bool] = None
    measured: Optional[float] = None
    tiling_loss: Optional[float] = None
    # per-stream demand in GB/s plus the streams above one word per cycle
    bandwidth: Optional[Dict[str, Any]] = None
    intensity: Optional[Dict[str, int]] = None

    def to_csv_row(self) -> Dict[str, Any]:
        return {c: ("" if getattr(self, c) is None else getattr(self, c)) for c in REPORT_CSV_COLUMNS}


@dataclass
class RunReport:
    workload: str
    num_pes: int
    precision: str
    clock_mhz: float
    mode: str
    layers: List[LayerRow] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    @property
    def peak(self) -> float:
        return peak_performance(
            CoreConfig(num_pes=self.num_pes, precision=self.precision, clock_mhz=self.clock_mhz)
        )

    @property
    def overall_gops(self) -> float:
        """Total ops over total core-time."""
        total_ms = sum(row.core_time_ms for row in self.layers)
        if total_ms == 0:
            return 0.0
        return sum(row.ops for row in self.layers) / (total_ms * 1e6)

    @property
    def max_fraction_of_peak(self) -> float:
        if not self.layers:
            return 0.0
        return max(row.gops for row in self.layers) / self.peak

    @property
    def passed(self) -> bool:
        return all(row.verified is not False for row in self.layers)

    def footer(self) -> Dict[str, float]:
        return {
            "peak": self.peak,
            "overall_gops": self.overall_gops,
            "max_fraction_of_peak": self.max_fraction_of_peak,
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "workload": self.workload,
            "num_pes": self.num_pes,
            "precision": self.precision,
            "clock_mhz": self.clock_mhz,
            "mode": self.mode,
            "layers": [asdict(row) for row in self.layers],
            "footer": self.footer(),
            "notes": self.notes,
        }


# ============================================================================
# OPERANDS
# ============================================================================


def random_operands(spec: ConvLayerSpec, seed: int) -> Tuple[Tensor3, Tensor4]:
    """
    Deterministic host-layout tensors (W x H x C, Ky x Kx x Ci x Co),
    transformed to the core layouts.
    """
    dtype = "int8" if spec.precision == Precision.INT8X4 else "fp32"
    features = random_tensor(Layout.WHC, (spec.w_in, spec.h_in, spec.c_in), dtype, seed)
    weights = random_tensor(Layout.KYKXCICO, (spec.k_y, spec.k_x, spec.c_in, spec.c_out), dtype, seed + 1)
    return transform_features(features), transform_weights(weights)


def _core_layouts(input: Tensor3, weights: Tensor4) -> Tuple[Tensor3, Tensor4]:
    if input.layout == Layout.WHC:
        input = transform_features(input)
    if weights.layout == Layout.KYKXCICO:
        weights = transform_weights(weights)
    return input, weights


def outputs_match(result: Tensor3, expected: Tensor3) -> bool:
    """Bit-exact comparison (float32 compared through its bit pattern)."""
    if result.dims != expected.dims or result.dtype != expected.dtype:
        return False
    if result.dtype == np.float32:
        return np.array_equal(result.data.view(np.uint32), expected.data.view(np.uint32))
    return np.array_equal(result.data, expected.data)


def verify_layer(core: CoreConfig, spec: ConvLayerSpec, input: Tensor3, weights: Tensor4) -> Tuple[bool, CycleStats, Tensor3]:
    input, weights = _core_layouts(input, weights)
    output, stats = simulate_layer(core, spec, input, weights)
    if spec.precision == Precision.INT8X4:
        input, weights = pad_channels(input), pad_weight_channels(weights)
    expected = conv2d_reference(input, weights, spec)
    return outputs_match(output, expected), stats, output


# ============================================================================
# RUN WORKLOAD
# ============================================================================


def _core_for(spec: ConvLayerSpec, core: CoreConfig) -> CoreConfig:
    if Precision(core.precision) == spec.precision:
        return core
    return core.model_copy(update={"precision": spec.precision})


def run_workload(
    workload: Union[WorkloadPreset, Sequence[ConvLayerSpec]],
    core: CoreConfig,
    mode: RunMode = RunMode.BOTH,
    verify: bool = False,
    square_width: bool = False,
    seed: int = 0,
) -> RunReport:
    """
    Run every layer of a workload on one core.

    Args:
        workload: preset or plain list of layers
        core: core configuration
        mode: simulate (timeline), analyze (closed form) or both
        verify: also run the datapath on pseudo-random tensors and compare
            with the reference convolution
        square_width: analytics uses W_i * W_i for the input read
        seed: base seed for verification tensors

    Raises:
        UnschedulableError: a layer does not fit the core
    """
    mode = RunMode(mode)
    if isinstance(workload, WorkloadPreset):
        name, layers = workload.name, list(workload.layers)
    else:
        name, layers = "custom", list(workload)

    report = RunReport(
        workload=name,
        num_pes=core.num_pes,
        precision=Precision(core.precision).value,
        clock_mhz=core.clock_mhz,
        mode=mode.value,
    )
    measured = measured_reference(core.precision, core.num_pes) if name == "vgg16" else {}

    for index, spec in enumerate(layers):
        layer_core = _core_for(spec, core)
        row = LayerRow(layer=spec.name, ops=spec.ops, core_time_ms=0.0, gops=0.0, measured=measured.get(spec.name))

        if mode in (RunMode.ANALYZE, RunMode.BOTH):
            analysis = analyze_layer(spec, layer_core, square_width)
            row.u_spatial = analysis.u_spatial
            row.u_temporal = analysis.u_temporal
            row.u_total = analysis.u_total
            row.binding_constraint = analysis.binding_constraint
            row.predicted_cycles = analysis.predicted_cycles
            row.predicted_gflops = analysis.predicted_gflops
            row.tiling_loss = analysis.tiling_loss
            row.bandwidth = analysis.bandwidth.to_dict()
            row.intensity = analysis.intensity

        stats = None
        if verify:
            input, weights = random_operands(spec, seed + 2 * index)
            row.verified, stats, _ = verify_layer(layer_core, spec, input, weights)
            if not row.verified:
                logger.error(f"{spec.name}: simulated output differs from the reference")
        elif mode in (RunMode.SIMULATE, RunMode.BOTH):
            stats = simulate_layer_timing(layer_core, spec)

        if stats is not None:
            row.total_cycles = stats.total_cycles
            row.compute_cycles = stats.compute_cycles
            row.input_stall_cycles = stats.input_stall_cycles
            row.output_stall_cycles = stats.output_stall_cycles
            row.pipeline_fill_cycles = stats.pipeline_fill_cycles
            cycles = stats.total_cycles
        else:
            cycles = row.predicted_cycles

        row.core_time_ms = cycles / (core.clock_mhz * 1e3)
        row.gops = spec.ops / (row.core_time_ms * 1e6) if cycles else 0.0
        report.layers.append(row)
        logger.info(f"{spec.name}: {row.gops:.2f} GOPS over {cycles} cycles")

    over_cap = [
        f"{row.layer} ({', '.join(row.bandwidth['over_cap'])})"
        for row in report.layers
        if row.bandwidth and row.bandwidth["over_cap"]
    ]
    if over_cap:
        report.notes.append("streams above one word per cycle: " + "; ".join(over_cap))
    if layers:
        report.notes.append(scale_out_note(layers[-1], _core_for(layers[-1], core), 4))
    return report


def simulate_config(run: RunConfig, verify: bool = False, seed: int = 0):
    """
    Simulate the single layer of a run config.

    Tensors come from the config's fixture documents, or from the
    deterministic generator when absent.

    Returns:
        (output Tensor3, CycleStats, verified or None)
    """
    spec = run.layer.to_spec()
    core = _core_for(spec, run.core)
    if run.input is not None and run.weights is not None:
        input, weights = from_document(run.input), from_document(run.weights)
        if not isinstance(input, Tensor3) or not isinstance(weights, Tensor4):
            raise ShapeError("config 'input' must be a feature map and 'weights' a weight tensor")
    else:
        input, weights = random_operands(spec, seed)

    if verify:
        verified, stats, output = verify_layer(core, spec, input, weights)
        return output, stats, verified
    input, weights = _core_layouts(input, weights)
    output, stats = simulate_layer(core, spec, input, weights)
    return output, stats, None


# ============================================================================
# VERIFY SWEEP
# ============================================================================

SWEEP_PES = (4, 9, 16, 36, 64)
SWEEP_MAX_INPUT = 16


@dataclass
class SweepFailure:
    spec: ConvLayerSpec
    core: CoreConfig
    reason: str

    def __repr__(self):
        return f"<SweepFailure {self.spec!r} on {self.core.num_pes} PEs: {self.reason}>"


@dataclass
class SweepSummary:
    seed: int
    count: int
    failures: List[SweepFailure] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def minimal_failure(self) -> Optional[SweepFailure]:
        if not self.failures:
            return None
        return min(self.failures, key=lambda f: (f.spec.macs, f.core.num_pes))


def _axis(rng: np.random.Generator, k: int, stride: int, pad: int) -> Tuple[int, int]:
    """Pick an output extent, then the input extent that produces it."""
    lowest = max(1, -(-(1 + 2 * pad - k) // stride) + 1)
    highest = (SWEEP_MAX_INPUT + 2 * pad - k) // stride + 1
    out = int(rng.integers(lowest, highest + 1))
    return (out - 1) * stride + k - 2 * pad, out


def random_case(rng: np.random.Generator, index: int) -> Tuple[ConvLayerSpec, CoreConfig]:
    precision = Precision.FP32 if rng.integers(0, 2) == 0 else Precision.INT8X4
    k_y, k_x = (int(v) for v in rng.integers(1, 6, size=2))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, min(2, min(k_y, k_x) - 1) + 1))
    h_in, _ = _axis(rng, k_y, stride, pad)
    w_in, _ = _axis(rng, k_x, stride, pad)
    spec = ConvLayerSpec(
        c_in=int(rng.integers(1, 9)),
        c_out=int(rng.integers(1, 9)),
        h_in=h_in,
        w_in=w_in,
        k_y=k_y,
        k_x=k_x,
        stride=stride,
        pad=pad,
        precision=precision,
        name=f"sweep{index}",
    )
    # a small output buffer exercises output-channel chunking
    buffers = int(rng.choice([512, 512, 3]))
    core = CoreConfig(
        num_pes=int(rng.choice(SWEEP_PES)),
        precision=precision,
        psum_buffer_entries=buffers,
        output_buffer_entries=buffers,
    )
    return spec, core


def verify_sweep(seed: int, count: int) -> SweepSummary:
    """
    Simulate `count` random small layers and compare each bit-exactly with
    conv2d_reference.
    """
    rng = np.random.default_rng(seed)
    summary = SweepSummary(seed=seed, count=count)
    for index in range(count):
        spec, core = random_case(rng, index)
        input, weights = random_operands(spec, int(rng.integers(0, 2 ** 32)))
        try:
            ok, _, _ = verify_layer(core, spec, input, weights)
            reason = "" if ok else "output mismatch"
        except Exception as e:
            ok, reason = False, f"{type(e).__name__}: {e}"
        if not ok:
            logger.error(f"{spec!r} on {core.num_pes} PEs failed: {reason}")
            summary.failures.append(SweepFailure(spec, core, reason))
    return summary
