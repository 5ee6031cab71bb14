"""
Closed-form performance model of a core.

Per tile, the array is busy for G * Ky * Kx * Co cycles (G = input
channels, or 4-channel groups for int8x4) and cannot go faster than the
slower of its two data streams:

    input read    G * Wi' * Hi'   (Wi', Hi' = padded input window of the tile)
    output drain  Wo' * Ho' * Co  (tile pixels times output channels)

    U_t = min(1, G * K^2 * Co / max(input read, output drain))
    U_s = tile pixels / num_pes

Layer figures aggregate tiles weighted by cycles; U = U_s * U_t.
The same reuse factors give per-stream bandwidth demand and arithmetic
intensity.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

from config import CoreConfig
from core.errors import ConfigError
from core.interconnect import window_extent
from core.tensor import ConvLayerSpec, Precision
from core.tiler import Schedule, Tile, TileKind, build_schedule

logger = logging.getLogger(__name__)

WORD_BYTES = 4

ANALYZE_CSV_COLUMNS = [
    "layer",
    "tiles",
    "u_spatial",
    "u_temporal",
    "u_total",
    "binding_constraint",
    "predicted_cycles",
    "predicted_gflops",
    "tiling_loss",
    "over_cap",
]

COMPUTE = "compute"
INPUT_BW = "input_bw"
OUTPUT_BW = "output_bw"
SPATIAL = "spatial"

# ============================================================
# 1. REPORT TYPES
# ============================================================


@dataclass
class UtilizationReport:
    u_spatial: float
    u_temporal: float
    u_total: float
    binding_constraint: str
    tiles: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class BandwidthReport:
    input_gbps: float
    weight_gbps: float
    output_gbps: float
    # one word per cycle per stream
    cap_gbps: float

    @property
    def over_cap(self) -> List[str]:
        streams = {"input": self.input_gbps, "weight": self.weight_gbps, "output": self.output_gbps}
        return [name for name, demand in streams.items() if demand > self.cap_gbps]

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["over_cap"] = self.over_cap
        return data


@dataclass
class ReuseFactors:
    # uses of one input value
    input: int
    # uses of one broadcast weight
    weight: int
    # accumulations into one partial sum
    output: int


@dataclass
class LayerAnalysis:
    layer: str
    tiles: int
    u_spatial: float
    u_temporal: float
    u_total: float
    binding_constraint: str
    predicted_cycles: int
    predicted_gflops: float
    # 1 - u_spatial
    tiling_loss: float = 0.0
    bandwidth: Optional[BandwidthReport] = None
    # ops per element fetched, per stream
    intensity: Dict[str, int] = field(default_factory=dict)

    @property
    def over_cap(self) -> List[str]:
        return self.bandwidth.over_cap if self.bandwidth else []

    def to_row(self) -> Dict[str, Any]:
        row = {c: getattr(self, c) for c in ANALYZE_CSV_COLUMNS if c != "over_cap"}
        row["over_cap"] = ";".join(self.over_cap)
        return row

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["bandwidth"] = self.bandwidth.to_dict() if self.bandwidth else None
        return data


# ============================================================
# 2. UTILIZATION
# ============================================================


def spatial_utilization(pixels: int, num_pes: int) -> float:
    if pixels > num_pes:
        raise ConfigError(f"{pixels} pixels do not fit {num_pes} PEs")
    return pixels / num_pes


def _input_read(spec: ConvLayerSpec, tile: Tile, square_width: bool) -> int:
    win_h, win_w = window_extent(tile.height, tile.width, spec)
    # literal W_i * W_i of the closed form
    per_channel = win_w * win_w if square_width else win_h * win_w
    return spec.channel_groups * per_channel


def temporal_utilization(
    spec: ConvLayerSpec,
    tile: Optional[Tile] = None,
    c_out: Optional[int] = None,
    square_width: bool = False,
) -> float:
    """
    Compute time over the slower of input read and output drain, capped at 1.

    Args:
        spec: layer shape
        tile: output tile; the whole output plane when omitted
        c_out: output channels computed together (defaults to spec.c_out)
        square_width: use W_i * W_i instead of W_i * H_i for the input read
    """
    tile = tile or Tile(0, 0, spec.h_out, spec.w_out, TileKind.RR)
    c_out = c_out or spec.c_out
    compute = spec.channel_groups * spec.kernel_size * c_out
    drain = tile.pixels * c_out
    return min(1.0, compute / max(_input_read(spec, tile, square_width), drain))


def _tile_terms(spec: ConvLayerSpec, schedule: Schedule, square_width: bool):
    for job in schedule.jobs:
        compute = spec.channel_groups * spec.kernel_size * job.chunk
        u_t = temporal_utilization(spec, job.tile, job.chunk, square_width)
        read = _input_read(spec, job.tile, square_width)
        drain = job.pixels * job.chunk
        yield job, compute, u_t, read >= drain


def total_utilization(
    spec: ConvLayerSpec,
    core: CoreConfig,
    square_width: bool = False,
    schedule: Optional[Schedule] = None,
) -> UtilizationReport:
    """
    Cycle-weighted utilization over the layer's schedule.

    u_spatial weights each tile's PE occupancy by its compute cycles;
    u_temporal is total compute over total time; their product equals
    total PE-cycles of work over num_pes times total time.
    """
    schedule = schedule or build_schedule(spec, core)
    n = core.num_pes
    compute_sum = 0.0
    busy_sum = 0.0
    time_sum = 0.0
    stall = {INPUT_BW: 0.0, OUTPUT_BW: 0.0}

    for job, compute, u_t, input_bound in _tile_terms(spec, schedule, square_width):
        elapsed = compute / u_t
        compute_sum += compute
        busy_sum += spatial_utilization(job.pixels, n) * compute
        time_sum += elapsed
        stall[INPUT_BW if input_bound else OUTPUT_BW] += elapsed - compute

    u_s = busy_sum / compute_sum
    u_t = compute_sum / time_sum
    spatial_loss = 1.0 - u_s
    temporal_loss = 1.0 - u_t
    if spatial_loss <= 1e-12 and temporal_loss <= 1e-12:
        binding = COMPUTE
    elif spatial_loss >= temporal_loss:
        binding = SPATIAL
    else:
        binding = INPUT_BW if stall[INPUT_BW] >= stall[OUTPUT_BW] else OUTPUT_BW

    return UtilizationReport(
        u_spatial=u_s,
        u_temporal=u_t,
        u_total=u_s * u_t,
        binding_constraint=binding,
        tiles=schedule.tile_count,
    )


def tiling_loss(spec: ConvLayerSpec, core: CoreConfig, schedule: Optional[Schedule] = None) -> float:
    """Fraction of peak lost to idle PEs in partial tiles."""
    return 1.0 - total_utilization(spec, core, schedule=schedule).u_spatial


# ============================================================
# 3. CYCLES AND PEAK
# ============================================================


def predict_cycles(spec: ConvLayerSpec, core: CoreConfig, schedule: Optional[Schedule] = None) -> int:
    """
    Closed-form layer cycles.

    Per job t: C_t = G * max(T_c, Wn) with double buffering, G * (T_c + Wn)
    without; its drain D_t = pixels * chunk overlaps the next job, so the
    layer takes sum(C_t) + sum(max(0, D_t - C_{t+1})) with C_{T+1} = 0.
    Pipeline fill is not included.
    """
    schedule = schedule or build_schedule(spec, core)
    double = 2 * spec.kernel_size <= core.input_buffer_entries
    groups = spec.channel_groups

    computes = []
    drains = []
    for job in schedule.jobs:
        t_c = job.chunk * spec.kernel_size
        window = job.window_size
        computes.append(groups * (max(t_c, window) if double else t_c + window))
        drains.append(job.pixels * job.chunk)

    total = sum(computes)
    for t, drain in enumerate(drains):
        following = computes[t + 1] if t + 1 < len(computes) else 0
        total += max(0, drain - following)
    return total


def peak_performance(core: CoreConfig) -> float:
    """GFLOPS (fp32) or GOPS (int8x4): 2 ops per MAC per lane per PE per cycle."""
    return 2.0 * core.lanes * core.num_pes * core.clock_ghz


def soundness_bound(spec: ConvLayerSpec, core: CoreConfig, square_width: bool = False) -> float:
    """Highest throughput the model allows for this layer, in GFLOPS/GOPS."""
    return peak_performance(core) * total_utilization(spec, core, square_width).u_total


# ============================================================
# 4. REUSE AND BANDWIDTH
# ============================================================


def reuse_factors(spec: ConvLayerSpec) -> ReuseFactors:
    return ReuseFactors(
        input=spec.kernel_size * spec.c_out,
        weight=spec.h_out * spec.w_out,
        output=spec.kernel_size * spec.c_in,
    )


def arithmetic_intensity(spec: ConvLayerSpec) -> Dict[str, int]:
    """Ops (add + mul) per element fetched, per stream."""
    reuse = reuse_factors(spec)
    return {"input": 2 * reuse.input, "weight": 2 * reuse.weight, "output": 2 * reuse.output}


def output_interval(spec: ConvLayerSpec) -> int:
    """Cycles between two 32-bit outputs of one fully busy PE."""
    return spec.kernel_size * spec.channel_groups


def bandwidth_requirement(spec: ConvLayerSpec, core: CoreConfig) -> BandwidthReport:
    """
    Per-stream demand (GB/s) of a fully busy core.

    Every PE consumes one word per cycle; a stream needs one new word per
    PE every `reuse` cycles. int8x4 words carry four lanes, so the output
    reuse counts 4-channel groups.
    """
    clock = core.clock_ghz
    n = core.num_pes
    reuse = reuse_factors(spec)

    def demand(words_reused: int) -> float:
        return clock * n * WORD_BYTES / words_reused

    return BandwidthReport(
        input_gbps=demand(reuse.input),
        weight_gbps=demand(reuse.weight),
        output_gbps=demand(output_interval(spec)),
        cap_gbps=clock * WORD_BYTES,
    )


def scale_out_note(spec: ConvLayerSpec, core: CoreConfig, cores: int) -> str:
    """Linear extrapolation to several cores; never simulated."""
    bound = soundness_bound(spec, core)
    bw = bandwidth_requirement(spec, core)
    total_bw = (bw.input_gbps + bw.weight_gbps + bw.output_gbps) * cores
    unit = "GOPS" if core.precision == Precision.INT8X4 else "GFLOPS"
    return (
        f"{cores} core(s): up to {bound * cores:.2f} {unit} needing {total_bw:.2f} GB/s "
        f"(linear extrapolation of one core, not simulated)"
    )


# ============================================================
# 5. LAYER ROW
# ============================================================


def analyze_layer(spec: ConvLayerSpec, core: CoreConfig, square_width: bool = False) -> LayerAnalysis:
    schedule = build_schedule(spec, core)
    util = total_utilization(spec, core, square_width, schedule)
    cycles = predict_cycles(spec, core, schedule)
    gflops = spec.ops * core.clock_mhz / (cycles * 1e3) if cycles else 0.0
    logger.debug(f"{spec.name}: {util} predicted {cycles} cycles")
    return LayerAnalysis(
        layer=spec.name,
        tiles=util.tiles,
        u_spatial=util.u_spatial,
        u_temporal=util.u_temporal,
        u_total=util.u_total,
        binding_constraint=util.binding_constraint,
        predicted_cycles=cycles,
        predicted_gflops=gflops,
        tiling_loss=tiling_loss(spec, core, schedule),
        bandwidth=bandwidth_requirement(spec, core),
        intensity=arithmetic_intensity(spec),
    )
