"""
Cycle-level model of one core.

A core is a controller plus a 1-D PE array joined by three interconnects:
weight broadcast, input multicast and output unicast. For every tile job
the controller, per input channel (or 4-channel group):

    stream the channel's input window    Wn = window pixels cycles
    broadcast chunk * Ky * Kx weights    T_c cycles, one MAC per PE per cycle

Input windows are double-buffered when two kernel windows fit the input
FIFO, so the next channel streams while the current one computes. When a
job finishes, its partial sums move to the output buffers once the
previous job's outputs have drained; outputs leave one value per cycle for
the whole core while the next job computes.

The timing model is an event timeline over these resources. The
functional model pushes real data through the same protocol (cache
routing from the receiver chain, one broadcast weight register) and is
bit-exact with conv2d_reference.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from config import CoreConfig, get_settings
from core.errors import BufferOverflowError, ConfigError
from core.interconnect import cache_routing
from core.tensor import (
    ConvLayerSpec,
    Layout,
    Precision,
    Tensor3,
    Tensor4,
    check_operands,
    pad_channels,
    pad_input,
    pad_weight_channels,
)
from core.tiler import Schedule, TileJob, build_schedule
from datapaths.base import BaseDatapath
from datapaths.registry import get_datapath

logger = logging.getLogger(__name__)

# ============================================================
# 1. CYCLE STATISTICS
# ============================================================


@dataclass
class CycleStats:
    total_cycles: int = 0
    compute_cycles: int = 0
    input_stall_cycles: int = 0
    output_stall_cycles: int = 0
    pipeline_fill_cycles: int = 0

    # Largest number of PEs active in any job
    active_pes: int = 0

    # PE-cycles spent on MACs (a vPE cycle counts once; see lanes)
    macs_executed: int = 0

    lanes: int = 1

    # Kernel window too large for two halves of the input FIFO
    single_buffered: bool = False

    # Weight skew of every job but the last. It overlaps the next job's
    # compute, so it is reported here and not in total_cycles
    hidden_fill_cycles: int = 0

    jobs: int = 0

    def accounted(self) -> int:
        return self.compute_cycles + self.input_stall_cycles + self.output_stall_cycles + self.pipeline_fill_cycles

    def ops(self) -> int:
        return 2 * self.macs_executed * self.lanes

    def time_ms(self, clock_mhz: float) -> float:
        return self.total_cycles / (clock_mhz * 1e3)

    def gops(self, clock_mhz: float) -> float:
        """GFLOPS (fp32) or GOPS (int8x4): 2 * macs * lanes per second, in 1e9."""
        if self.total_cycles == 0:
            return 0.0
        return self.ops() * clock_mhz / (self.total_cycles * 1e3)

    def to_dict(self, clock_mhz: Optional[float] = None) -> Dict[str, Any]:
        data = asdict(self)
        if clock_mhz is not None:
            data["clock_mhz"] = clock_mhz
            data["core_time_ms"] = self.time_ms(clock_mhz)
            data["gops"] = self.gops(clock_mhz)
        return data

    def __repr__(self):
        return (
            f"<CycleStats total={self.total_cycles} compute={self.compute_cycles} "
            f"in_stall={self.input_stall_cycles} out_stall={self.output_stall_cycles} "
            f"fill={self.pipeline_fill_cycles}>"
        )


def is_double_buffered(spec: ConvLayerSpec, core: CoreConfig) -> bool:
    return 2 * spec.kernel_size <= core.input_buffer_entries


# ============================================================
# 2. CONTROLLER TIMELINE
# ============================================================


class ControllerTimeline:
    """
    Event timeline of the controller over a sequence of jobs.

    Resources: the input bus (one word per cycle), the two input-buffer
    halves, the MAC array, the psum buffers and the output unicast bus.
    Every cycle of the MAC array is either compute, input stall (window
    not loaded), output stall (psums not yet moved out) or pipeline fill.
    """

    def __init__(self, core: CoreConfig, spec: ConvLayerSpec):
        self.core = core
        self.spec = spec
        self.double_buffered = is_double_buffered(spec, core)
        self.bus_free = 0
        self.half_free = [0, 0]
        self.loads = 0
        self.compute_free = 0
        self.psum_free = 0
        self.drain_end = 0
        self.last_active = 0
        self.stats = CycleStats(lanes=spec.lanes, single_buffered=not self.double_buffered)
        if not self.double_buffered:
            logger.warning(
                f"{spec.name}: 2 x {spec.kernel_size}-entry windows exceed the "
                f"{core.input_buffer_entries}-entry input buffer; single buffering"
            )

    def run_job(self, job: TileJob) -> None:
        if job.pixels > self.core.num_pes:
            raise BufferOverflowError(f"{job!r} needs {job.pixels} PEs, core has {self.core.num_pes}")
        if job.chunk > min(self.core.psum_buffer_entries, self.core.output_buffer_entries):
            raise BufferOverflowError(f"{job!r} holds {job.chunk} psums per PE")

        stats = self.stats
        if stats.jobs:
            stats.hidden_fill_cycles += max(0, self.last_active - 1)
        window = job.window_size
        compute = job.chunk * self.spec.kernel_size

        for g in range(self.spec.channel_groups):
            if self.double_buffered:
                half = self.loads % 2
                load_start = max(self.bus_free, self.half_free[half])
            else:
                half = 0
                load_start = max(self.bus_free, self.compute_free)
            load_end = load_start + window
            self.bus_free = load_end
            self.loads += 1

            gate = self.compute_free
            if g == 0:
                # psums of the previous job still occupy the accumulators
                gate = max(gate, self.psum_free)
                stats.output_stall_cycles += gate - self.compute_free

            start = max(load_end, gate)
            if self.loads == 1:
                stats.pipeline_fill_cycles += start - gate
            else:
                stats.input_stall_cycles += start - gate

            self.compute_free = start + compute
            self.half_free[half] = self.compute_free
            stats.compute_cycles += compute
            stats.macs_executed += job.pixels * compute

        move = max(self.compute_free, self.drain_end)
        self.psum_free = move
        self.drain_end = move + job.pixels * job.chunk
        self.last_active = job.pixels
        stats.active_pes = max(stats.active_pes, job.pixels)
        stats.jobs += 1

    def finish(self) -> CycleStats:
        stats = self.stats
        exposed_drain = max(0, self.drain_end - self.compute_free)
        stats.output_stall_cycles += exposed_drain
        # the last weight reaches the last active PE active-1 cycles after PE 0
        skew = max(0, self.last_active - 1)
        stats.pipeline_fill_cycles += skew
        stats.total_cycles = self.compute_free + exposed_drain + skew
        if stats.accounted() != stats.total_cycles:
            raise AssertionError(f"cycle accounting broken: {stats!r}")
        return stats


def simulate_layer_timing(
    core: CoreConfig, spec: ConvLayerSpec, schedule: Optional[Schedule] = None
) -> CycleStats:
    """Controller timeline of a whole layer, without moving data."""
    _check_precision(core, spec)
    schedule = schedule or build_schedule(spec, core)
    timeline = ControllerTimeline(core, spec)
    for job in schedule.jobs:
        timeline.run_job(job)
    return timeline.finish()


# ============================================================
# 3. FUNCTIONAL PE ARRAY
# ============================================================


class PEArray:
    """
    State of the active PEs of one job.

    Weights are never stored: the only weight storage is the broadcast
    register shared through the pipeline.
    """

    def __init__(self, core: CoreConfig, job: TileJob, datapath: BaseDatapath):
        taps = job.layer.kernel_size
        halves = 2 if is_double_buffered(job.layer, core) else 1
        if halves * taps > core.input_buffer_entries:
            raise BufferOverflowError(f"{halves} x {taps}-entry windows exceed the input buffer")
        if job.chunk > core.psum_buffer_entries or job.chunk > core.output_buffer_entries:
            raise BufferOverflowError(f"{job.chunk} psums exceed the psum/output buffers")

        self.datapath = datapath
        self.num_active = job.pixels
        self.windows = np.zeros((halves, job.pixels, taps, datapath.lanes), dtype=_word_dtype(datapath))
        self.psum = np.zeros((job.chunk, job.pixels), dtype=datapath.accumulator_dtype)
        self.output = np.zeros((job.chunk, job.pixels), dtype=datapath.accumulator_dtype)
        self.weight_reg = np.zeros(datapath.lanes, dtype=_word_dtype(datapath))
        self._half = 0

    def load_window(self, cached_words: np.ndarray) -> np.ndarray:
        half = self._half
        self.windows[half] = cached_words
        self._half = (half + 1) % self.windows.shape[0]
        return self.windows[half]

    def broadcast(self, word: np.ndarray) -> None:
        self.weight_reg[...] = word

    def compute(self, co: int, window: np.ndarray, tap: int) -> None:
        self.datapath.mac(self.psum[co], window[:, tap], self.weight_reg)

    def move_psums(self) -> np.ndarray:
        self.output[...] = self.psum
        self.psum[...] = 0
        return self.output


def _word_dtype(datapath: BaseDatapath):
    return np.float32 if datapath.precision == Precision.FP32 else np.int8


def _run_job(
    core: CoreConfig,
    job: TileJob,
    words: np.ndarray,
    weight_words: np.ndarray,
    padded_width: int,
    datapath: BaseDatapath,
) -> np.ndarray:
    """
    Functional execution of one job.

    Args:
        words: (groups, Hp * Wp, lanes) padded input stream words
        weight_words: (groups, Ky * Kx, Co, lanes) weight words

    Returns:
        (chunk, height, width) outputs of the tile
    """
    spec = job.layer
    tile = job.tile
    routing = cache_routing(tile.height, tile.width, spec.k_y, spec.k_x, spec.stride)
    win_y, win_x = job.window_origin
    _, win_w = job.window_extent
    ry, rx = np.divmod(routing, win_w)
    gather = (win_y + ry) * padded_width + (win_x + rx)

    pes = PEArray(core, job, datapath)
    window = None
    loaded = -1
    for group, co, ky, kx in job.weight_order:
        if group != loaded:
            window = pes.load_window(words[group][gather])
            loaded = group
        tap = ky * spec.k_x + kx
        pes.broadcast(weight_words[group, tap, co])
        pes.compute(co - job.co_start, window, tap)

    return pes.move_psums().reshape(job.chunk, tile.height, tile.width).copy()


# ============================================================
# 4. ENTRY POINTS
# ============================================================


def _check_precision(core: CoreConfig, spec: ConvLayerSpec) -> None:
    if Precision(core.precision) != spec.precision:
        raise ConfigError(
            f"{spec.name}: layer precision {spec.precision.value} on a {Precision(core.precision).value} core"
        )


def _prepare_operands(spec: ConvLayerSpec, input: Tensor3, weights: Tensor4) -> Tuple[Tensor3, Tensor4]:
    if spec.precision == Precision.INT8X4 and input.layout == Layout.CHW and input.dims[0] % 4:
        logger.debug(f"{spec.name}: padding {input.dims[0]} channels to {spec.padded_c_in}")
        input = pad_channels(input)
        weights = pad_weight_channels(weights)
    check_operands(input, weights, spec)
    return input, weights


def simulate_tile(
    core: CoreConfig, job: TileJob, input: Tensor3, weights: Tensor4
) -> Tuple[Tensor3, CycleStats]:
    """
    Run one job on an otherwise idle core.

    Args:
        core: core configuration
        job: tile job from build_schedule
        input: zero-padded C x Hp x Wp map (channels padded to 4 for int8x4)
        weights: Ci x Ky x Kx x Co weights

    Returns:
        (chunk x height x width outputs, CycleStats of the job)
    """
    spec = job.layer
    _check_precision(core, spec)
    expected = (spec.padded_c_in, spec.h_padded, spec.w_padded)
    if input.layout != Layout.CHW or input.dims != expected:
        raise ConfigError(f"{spec.name}: simulate_tile needs a padded CHW input of dims {expected}, got {input!r}")
    datapath = get_datapath(spec.precision)
    outputs = _run_job(
        core,
        job,
        datapath.input_words(input),
        datapath.weight_words(weights),
        spec.w_padded,
        datapath,
    )
    timeline = ControllerTimeline(core, spec)
    timeline.run_job(job)
    return Tensor3.from_array(outputs, Layout.CHW), timeline.finish()


def simulate_layer(
    core: CoreConfig, spec: ConvLayerSpec, input: Tensor3, weights: Tensor4
) -> Tuple[Tensor3, CycleStats]:
    """
    Tile, schedule and run a whole layer.

    Independent jobs run their datapaths on worker threads (PESIM_THREADS);
    the timeline is evaluated in schedule order.

    Returns:
        (c_out x h_out x w_out output, aggregate CycleStats)
    """
    _check_precision(core, spec)
    input, weights = _prepare_operands(spec, input, weights)
    padded = pad_input(input, spec.pad)
    schedule = build_schedule(spec, core)

    datapath = get_datapath(spec.precision)
    words = datapath.input_words(padded)
    weight_words = datapath.weight_words(weights)

    def run(job: TileJob) -> np.ndarray:
        return _run_job(core, job, words, weight_words, spec.w_padded, datapath)

    threads = get_settings().threads
    if threads > 1 and len(schedule.jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results: List[np.ndarray] = list(pool.map(run, schedule.jobs))
    else:
        results = [run(job) for job in schedule.jobs]

    out = np.zeros((spec.c_out, spec.h_out, spec.w_out), dtype=datapath.accumulator_dtype)
    for job, tile_out in zip(schedule.jobs, results):
        t = job.tile
        out[job.co_start:job.co_stop, t.origin_y:t.origin_y + t.height, t.origin_x:t.origin_x + t.width] = tile_out

    stats = simulate_layer_timing(core, spec, schedule)
    logger.debug(f"{spec.name}: {stats!r}")
    return Tensor3.from_array(out, Layout.CHW), stats
