"""
Output-plane tiling and per-layer scheduling.

A core computes one output pixel per PE, so a layer whose output plane is
larger than the PE count is cut into tiles:

    RR   P x P tiles from the top-left (P = floor(sqrt(num_pes)))
    RS   right strip, width w_out mod P, full height (owns the corner)
    SR   bottom strip, height h_out mod P, width P * floor(w_out / P)
    SUB  pieces of a strip too large for the core

A strip that fits is scheduled whole, whatever its aspect ratio.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Dict, Iterator, List, Tuple

import numpy as np

from config import CoreConfig, SubtilePolicy
from core.errors import ConfigError, ShapeError, UnschedulableError
from core.interconnect import StreamWord, generate_command_stream, window_extent, window_origin
from core.tensor import ConvLayerSpec

logger = logging.getLogger(__name__)

TILE_CSV_COLUMNS = ["kind", "origin_y", "origin_x", "height", "width", "pixels"]


class TileKind(str, Enum):
    RR = "RR"
    RS = "RS"
    SR = "SR"
    SUB = "SUB"


# ============================================================
# 1. TILES
# ============================================================


@dataclass(frozen=True)
class Tile:
    # Top-left output pixel
    origin_y: int
    origin_x: int

    height: int
    width: int

    kind: TileKind = TileKind.RR

    @property
    def pixels(self) -> int:
        return self.height * self.width

    def contains(self, y: int, x: int) -> bool:
        return self.origin_y <= y < self.origin_y + self.height and self.origin_x <= x < self.origin_x + self.width

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "origin_y": self.origin_y,
            "origin_x": self.origin_x,
            "height": self.height,
            "width": self.width,
            "pixels": self.pixels,
        }

    def __repr__(self):
        return f"<Tile {self.kind.value} @({self.origin_y},{self.origin_x}) {self.height}x{self.width}>"


def _split_strip(
    origin_y: int, origin_x: int, height: int, width: int, along_height: bool, piece: int
) -> List[Tile]:
    tiles = []
    length = height if along_height else width
    for start in range(0, length, piece):
        size = min(piece, length - start)
        if along_height:
            tiles.append(Tile(origin_y + start, origin_x, size, width, TileKind.SUB))
        else:
            tiles.append(Tile(origin_y, origin_x + start, height, size, TileKind.SUB))
    return tiles


def tile_output_plane(
    h_out: int, w_out: int, num_pes: int, policy: SubtilePolicy = SubtilePolicy.SQUARE
) -> List[Tile]:
    """
    Cut an output plane into tiles of at most num_pes pixels.

    Args:
        h_out, w_out: output plane extents
        num_pes: PEs in the core (need not be a perfect square)
        policy: how strips that do not fit are split; SQUARE caps pieces
            at P along the strip, FILL makes them as long as the core allows

    Returns:
        tiles in emission order: RR raster, then RS pieces, then SR pieces
    """
    if num_pes < 1:
        raise ConfigError(f"num_pes must be >= 1, got {num_pes}")
    p = math.isqrt(num_pes)
    rr_rows, rr_cols = h_out // p, w_out // p
    tiles: List[Tile] = []

    # ---------- RR: regular P x P ----------
    for i in range(rr_rows):
        for j in range(rr_cols):
            tiles.append(Tile(i * p, j * p, p, p, TileKind.RR))

    # ---------- RS: right strip, full height ----------
    rs_width = w_out % p
    if rs_width and h_out:
        origin_x = rr_cols * p
        if h_out * rs_width <= num_pes:
            tiles.append(Tile(0, origin_x, h_out, rs_width, TileKind.RS))
        else:
            piece = p if policy == SubtilePolicy.SQUARE else num_pes // rs_width
            tiles.extend(_split_strip(0, origin_x, h_out, rs_width, True, piece))

    # ---------- SR: bottom strip, corner excluded ----------
    sr_height = h_out % p
    sr_width = rr_cols * p
    if sr_height and sr_width:
        origin_y = rr_rows * p
        if sr_height * sr_width <= num_pes:
            tiles.append(Tile(origin_y, 0, sr_height, sr_width, TileKind.SR))
        else:
            piece = p if policy == SubtilePolicy.SQUARE else num_pes // sr_height
            tiles.extend(_split_strip(origin_y, 0, sr_height, sr_width, False, piece))

    return tiles


# ============================================================
# 2. TILE JOBS
# ============================================================


@dataclass(frozen=True)
class WeightOrder:
    """
    Order of the weight broadcast for one job: for each input channel
    (or 4-channel group), for each output channel of the chunk, for each
    kernel tap (k_y, k_x).
    """
    groups: int
    co_start: int
    co_stop: int
    k_y: int
    k_x: int

    def __len__(self) -> int:
        return self.groups * (self.co_stop - self.co_start) * self.k_y * self.k_x

    def __iter__(self) -> Iterator[Tuple[int, int, int, int]]:
        for g in range(self.groups):
            for co in range(self.co_start, self.co_stop):
                for ky in range(self.k_y):
                    for kx in range(self.k_x):
                        yield g, co, ky, kx


@dataclass
class TileJob:
    """One output tile for one chunk of output channels."""
    tile: Tile
    layer: ConvLayerSpec

    # Output channels [co_start, co_stop) computed by this job
    co_start: int = 0
    co_stop: int = 0

    def __post_init__(self):
        if self.co_stop == 0:
            self.co_stop = self.layer.c_out

    @property
    def chunk(self) -> int:
        return self.co_stop - self.co_start

    @property
    def pixels(self) -> int:
        return self.tile.pixels

    @cached_property
    def pe_map(self) -> np.ndarray:
        """PE index of every output pixel of the tile, row-major."""
        return np.arange(self.tile.pixels, dtype=np.int64).reshape(self.tile.height, self.tile.width)

    def pe_of(self, y: int, x: int) -> int:
        if not self.tile.contains(y, x):
            raise ShapeError(f"output pixel ({y}, {x}) is not in {self.tile!r}")
        return (y - self.tile.origin_y) * self.tile.width + (x - self.tile.origin_x)

    @property
    def window_origin(self) -> Tuple[int, int]:
        return window_origin(self.tile, self.layer)

    @property
    def window_extent(self) -> Tuple[int, int]:
        return window_extent(self.tile.height, self.tile.width, self.layer)

    @property
    def window_size(self) -> int:
        h, w = self.window_extent
        return h * w

    @cached_property
    def commands(self) -> List[StreamWord]:
        return generate_command_stream(self.tile, self.layer)

    @property
    def weight_order(self) -> WeightOrder:
        return WeightOrder(self.layer.channel_groups, self.co_start, self.co_stop, self.layer.k_y, self.layer.k_x)

    def __repr__(self):
        return f"<TileJob {self.tile!r} co[{self.co_start}:{self.co_stop}]>"


@dataclass
class Schedule:
    layer: ConvLayerSpec
    jobs: List[TileJob] = field(default_factory=list)

    @property
    def tiles(self) -> List[Tile]:
        seen = []
        for job in self.jobs:
            if job.co_start == 0:
                seen.append(job.tile)
        return seen

    @property
    def tile_count(self) -> int:
        return len(self.tiles)

    @property
    def active_pe_sum(self) -> int:
        return sum(job.pixels for job in self.jobs)

    def __len__(self) -> int:
        return len(self.jobs)


def build_schedule(spec: ConvLayerSpec, core: CoreConfig) -> Schedule:
    """
    Tile a layer for a core and order its jobs.

    Output channels are split into chunks no larger than the psum and
    output buffers. Jobs are ordered tile-major, then by chunk.

    Raises:
        UnschedulableError: a kernel window does not fit the input buffer
    """
    taps = spec.kernel_size
    if taps > core.input_buffer_entries:
        raise UnschedulableError(
            spec.name,
            f"k_y*k_x = {taps} exceeds the {core.input_buffer_entries}-entry input buffer",
        )

    chunk = min(core.output_buffer_entries, core.psum_buffer_entries)
    tiles = tile_output_plane(spec.h_out, spec.w_out, core.num_pes, core.subtile_policy)
    schedule = Schedule(layer=spec)
    for tile in tiles:
        for co_start in range(0, spec.c_out, chunk):
            schedule.jobs.append(TileJob(tile, spec, co_start, min(co_start + chunk, spec.c_out)))

    chunks = math.ceil(spec.c_out / chunk)
    if chunks > 1:
        logger.debug(f"{spec.name}: c_out {spec.c_out} split into {chunks} chunks of <= {chunk}")
    logger.debug(f"{spec.name}: {len(tiles)} tiles, {len(schedule.jobs)} jobs on {core.num_pes} PEs")
    return schedule
