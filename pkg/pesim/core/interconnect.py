"""
Input multicast interconnect.

The controller streams a tile's input window row-major, one word per
cycle, each word carrying a 4-bit command. Every PE holds two flags:

    RD  - cache the word travelling with the command
    LS  - first PE of an active row in the tile's logical 2-D arrangement

A PE rewrites the command before forwarding it to its neighbour, so the
set of caching PEs can dilate, shift or erode by one column (or one row)
per word without a general multicast network.

This module provides:

1. The command vocabulary and the per-receiver transition table
2. The geometric receiver-set oracle
3. ReceiverChain: pipelined (cycle-stepped) and functional models
4. Command-stream generation for a tile
5. Per-PE cache routing consumed by the core simulator
"""

import logging
from enum import IntEnum
from functools import lru_cache
from typing import TYPE_CHECKING, Dict, FrozenSet, List, NamedTuple, Optional, Tuple

import numpy as np

from core.errors import BufferOverflowError, CommandStreamError, OutOfWindowError
from core.tensor import ConvLayerSpec

if TYPE_CHECKING:
    from core.tiler import Tile

logger = logging.getLogger(__name__)

Interval = Tuple[int, int]

# ============================================================
# 1. COMMANDS AND RECEIVER STATE
# ============================================================


class Command(IntEnum):
    NOOP = 0
    DILATE_X = 1
    ERODE_X = 2
    SHIFT_X = 3
    ROTATE_Y = 4
    DILATE_Y = 5
    ERODE_Y = 6
    SHIFT_Y = 7
    SHIFT_X_INT = 8
    DILATE_X_INT = 9
    ERODE_X_INT = 10
    ROW_INT_A = 11
    ROW_INT_B = 12
    START = 13
    START_PROPAGATE = 14
    # spare encoding: word cached by no PE, state untouched
    SKIP = 15


MNEMONICS: Dict[int, str] = {
    Command.NOOP: "NoOp",
    Command.DILATE_X: "DilateX",
    Command.ERODE_X: "ErodeX",
    Command.SHIFT_X: "ShiftX",
    Command.ROTATE_Y: "RotateY",
    Command.DILATE_Y: "DilateY",
    Command.ERODE_Y: "ErodeY",
    Command.SHIFT_Y: "ShiftY",
    Command.SHIFT_X_INT: "ShiftX'",
    Command.DILATE_X_INT: "DilateX'",
    Command.ERODE_X_INT: "ErodeX'",
    Command.ROW_INT_A: "RowA'",
    Command.ROW_INT_B: "RowB'",
    Command.START: "Start",
    Command.START_PROPAGATE: "Start'",
    Command.SKIP: "Skip",
}

RD = 1
LS = 2


class ReceiverState(NamedTuple):
    rd: int = 0
    ls: int = 0

    def to_byte(self) -> int:
        return self.rd | (self.ls << 1)

    @staticmethod
    def from_byte(value: int) -> "ReceiverState":
        return ReceiverState(value & RD, (value & LS) >> 1)


def _transition(state: int, code: int) -> Tuple[int, int]:
    """
    Returns:
        (new state byte, forwarded command)
    """
    rd = state & RD
    ls = state & LS

    if code == Command.START:
        return RD | LS, Command.START_PROPAGATE
    if code == Command.START_PROPAGATE:
        return 0, Command.START_PROPAGATE

    if code == Command.SHIFT_X and rd:
        return state & ~RD, Command.SHIFT_X_INT
    if code == Command.SHIFT_X_INT and not rd:
        return state | RD, Command.SHIFT_X

    if code == Command.DILATE_X and rd:
        return state, Command.DILATE_X_INT
    if code == Command.DILATE_X_INT and not rd:
        return state | RD, Command.DILATE_X

    if code == Command.ERODE_X and rd:
        return state & ~RD, Command.ERODE_X_INT
    if code == Command.ERODE_X_INT and not rd:
        return state, Command.ERODE_X
    # an erode wave reaching a further row that starts at column 0
    if code == Command.ERODE_X_INT and rd and ls:
        return state & ~RD, Command.ERODE_X_INT

    if code == Command.ROTATE_Y:
        return (state & ~RD) | (1 if ls else 0), Command.ROTATE_Y
    if code == Command.ERODE_Y and ls:
        return state & ~LS, Command.ROTATE_Y
    if code == Command.SHIFT_Y and ls:
        return state & ~LS, Command.ROW_INT_A
    if code == Command.DILATE_Y and ls:
        return state | RD, Command.ROW_INT_A
    if code == Command.ROW_INT_A and rd:
        return state & ~RD, Command.ROW_INT_B
    if code == Command.ROW_INT_B and not rd:
        return RD | LS, Command.ROW_INT_A

    return state, code


def _build_table() -> bytes:
    # entry = new_state << 4 | forwarded command, indexed by state << 4 | command
    table = bytearray(64)
    for state in range(4):
        for code in range(16):
            new_state, out = _transition(state, code)
            table[(state << 4) | code] = (new_state << 4) | out
    return bytes(table)


TRANSITIONS = _build_table()

# identity on every state: nothing to propagate
_PASSIVE = frozenset({Command.NOOP, Command.SKIP})

# state byte -> RD bit, for bytes.translate
_RD_ONLY = bytes(s & RD for s in range(256))


def receiver_step(state: ReceiverState, cmd_in: int) -> Tuple[ReceiverState, Command, int]:
    """
    Apply one command to one receiver.

    The word that travels with the command is cached when RD is set after
    the update (never for Skip).

    Returns:
        (new state, forwarded command, cache bit)
    """
    code = int(cmd_in)
    if not 0 <= code <= 15:
        raise CommandStreamError(f"command code {code} does not fit the 4-bit bus")
    entry = TRANSITIONS[(state.to_byte() << 4) | code]
    new_state = ReceiverState.from_byte(entry >> 4)
    cache = new_state.rd if code != Command.SKIP else 0
    return new_state, Command(entry & 0xF), cache


# ============================================================
# 2. RECEIVER ORACLE
# ============================================================


def receiver_interval(pos: int, k: int, stride: int, extent: int) -> Optional[Interval]:
    """
    Output indices o in [0, extent) whose kernel span [o*stride, o*stride + k - 1]
    covers window position `pos`, as an inclusive interval (None if empty).
    """
    lo = max(0, -((k - 1 - pos) // stride))
    hi = min(extent - 1, pos // stride)
    if lo > hi:
        return None
    return lo, hi


def window_origin(tile: "Tile", spec: ConvLayerSpec) -> Tuple[int, int]:
    return tile.origin_y * spec.stride, tile.origin_x * spec.stride


def window_extent(height: int, width: int, spec: ConvLayerSpec) -> Tuple[int, int]:
    return (height - 1) * spec.stride + spec.k_y, (width - 1) * spec.stride + spec.k_x


def receiver_intervals(tile: "Tile", spec: ConvLayerSpec, iy: int, ix: int) -> Tuple[Optional[Interval], Optional[Interval]]:
    """
    Receiver rows and columns (tile coordinates) for padded-input pixel (iy, ix).
    """
    win_y, win_x = window_origin(tile, spec)
    win_h, win_w = window_extent(tile.height, tile.width, spec)
    y, x = iy - win_y, ix - win_x
    if not (0 <= y < win_h and 0 <= x < win_w):
        raise OutOfWindowError(
            f"input ({iy}, {ix}) is outside the window at ({win_y}, {win_x}) of extent {win_h}x{win_w}"
        )
    return (
        receiver_interval(y, spec.k_y, spec.stride, tile.height),
        receiver_interval(x, spec.k_x, spec.stride, tile.width),
    )


def oracle_receivers(tile: "Tile", spec: ConvLayerSpec, iy: int, ix: int) -> FrozenSet[int]:
    """
    PEs whose convolution window covers padded-input pixel (iy, ix).

    PE index is row-major over the tile: pe = (oy - origin_y) * width + (ox - origin_x).
    """
    rows, cols = receiver_intervals(tile, spec, iy, ix)
    if rows is None or cols is None:
        return frozenset()
    return frozenset(
        r * tile.width + c
        for r in range(rows[0], rows[1] + 1)
        for c in range(cols[0], cols[1] + 1)
    )


# ============================================================
# 3. RECEIVER CHAIN
# ============================================================


class ReceiverChain:
    """
    Receivers of PEs 0..N-1, connected in a line.

    Two views of the same hardware:
    - tick()/run(): pipelined, one (command, word) bundle advances one PE per cycle
    - apply(): functional, the whole line processes one bundle at once
    Each PE sees the same command sequence in both, so cache events agree.
    """

    def __init__(self, num_pes: int, states: Optional[bytes] = None):
        self.num_pes = num_pes
        self.states = bytearray(states) if states is not None else bytearray(num_pes)
        # bundle (command, word index) arriving at each PE this cycle
        self._arriving: List[Optional[Tuple[int, int]]] = [None] * num_pes
        self.cycle = 0

    def state(self, pe: int) -> ReceiverState:
        return ReceiverState.from_byte(self.states[pe])

    # ---------- functional model ----------

    def apply(self, code: int) -> None:
        if code in _PASSIVE:
            return
        table = TRANSITIONS
        states = self.states
        c = code
        for i in range(self.num_pes):
            entry = table[(states[i] << 4) | c]
            states[i] = entry >> 4
            c = entry & 0xF

    def rd_mask(self) -> bytes:
        return bytes(self.states).translate(_RD_ONLY)

    def cache_mask(self, code: int) -> bytes:
        """Per-PE cache bits for the word that travelled with `code`."""
        if code == Command.SKIP:
            return bytes(self.num_pes)
        return self.rd_mask()

    def replay(self, codes) -> List[FrozenSet[int]]:
        """Cached-by set of every word of a command stream."""
        result = []
        for code in codes:
            self.apply(code)
            mask = self.cache_mask(code)
            result.append(frozenset(i for i, bit in enumerate(mask) if bit))
        return result

    # ---------- pipelined model ----------

    @property
    def in_flight(self) -> int:
        return sum(1 for b in self._arriving if b is not None)

    def tick(self, bundle: Optional[Tuple[int, int]] = None) -> List[Tuple[int, int]]:
        """
        Advance one cycle. `bundle` (command, word index) enters PE 0.

        Returns:
            (pe, word index) cache events of this cycle
        """
        arriving = self._arriving
        if bundle is not None:
            if arriving[0] is not None:
                raise BufferOverflowError(f"PE 0 received two bundles in cycle {self.cycle}")
            arriving[0] = bundle

        events = []
        forwarded: List[Optional[Tuple[int, int]]] = [None] * self.num_pes
        table = TRANSITIONS
        for pe, held in enumerate(arriving):
            if held is None:
                continue
            code, word = held
            entry = table[(self.states[pe] << 4) | code]
            self.states[pe] = entry >> 4
            if code != Command.SKIP and entry & (RD << 4):
                events.append((pe, word))
            if pe + 1 < self.num_pes:
                if forwarded[pe + 1] is not None:
                    raise BufferOverflowError(f"PE {pe + 1} received two bundles in cycle {self.cycle}")
                forwarded[pe + 1] = (entry & 0xF, word)

        self._arriving = forwarded
        self.cycle += 1
        return events

    def run(self, codes) -> List[List[int]]:
        """
        Inject one bundle per cycle and drain the pipeline.

        Returns:
            for every PE, the word indices it cached, in arrival order
        """
        cached: List[List[int]] = [[] for _ in range(self.num_pes)]
        codes = list(codes)
        for word, code in enumerate(codes):
            for pe, w in self.tick((int(code), word)):
                cached[pe].append(w)
        while self.in_flight:
            for pe, w in self.tick():
                cached[pe].append(w)
        return cached


# ============================================================
# 4. COMMAND STREAM GENERATION
# ============================================================


class StreamWord(NamedTuple):
    code: Command
    # padded-input coordinates of the word
    y: int
    x: int


def _x_command(before: Interval, after: Interval) -> Optional[Command]:
    if after == before:
        return Command.NOOP
    if after == (before[0], before[1] + 1):
        return Command.DILATE_X
    if after == (before[0] + 1, before[1] + 1):
        return Command.SHIFT_X
    if after == (before[0] + 1, before[1]):
        return Command.ERODE_X
    return None


def _y_command(before: Interval, after: Interval) -> Optional[Command]:
    if after == before:
        return Command.ROTATE_Y
    if after == (before[0], before[1] + 1):
        return Command.DILATE_Y
    if after == (before[0] + 1, before[1] + 1):
        return Command.SHIFT_Y
    if after == (before[0] + 1, before[1]):
        return Command.ERODE_Y
    return None


class _ExpectedStates:
    """Receiver state bytes a correct stream must produce for a given (rows, cols)."""

    def __init__(self, height: int, width: int):
        self.height = height
        self.width = width
        self._memo: Dict[Tuple[Interval, Interval], bytes] = {}

    def __call__(self, rows: Interval, cols: Interval) -> bytes:
        key = (rows, cols)
        cached = self._memo.get(key)
        if cached is not None:
            return cached
        states = bytearray(self.height * self.width)
        for r in range(rows[0], rows[1] + 1):
            for c in range(cols[0], cols[1] + 1):
                states[r * self.width + c] |= RD
            if self.width > 1:
                states[r * self.width] |= LS
        if self.width == 1:
            states[0] |= LS
        self._memo[key] = bytes(states)
        return self._memo[key]


@lru_cache(maxsize=512)
def command_codes(height: int, width: int, k_y: int, k_x: int, stride: int) -> bytes:
    """
    Command code of every word of a height x width tile's input window,
    row-major over the window.

    Within a row the column interval moves by NoOp/DilateX/ShiftX/ErodeX.
    The first word of a row resets columns to {0} with RotateY, DilateY,
    ShiftY or ErodeY. A width-1 tile is a single column of PEs, so row
    changes use the X commands on consecutive PEs. Words nobody needs are
    sent with Skip.
    """
    num_pes = height * width
    win_h = (height - 1) * stride + k_y
    win_w = (width - 1) * stride + k_x
    rows_of = [receiver_interval(y, k_y, stride, height) for y in range(win_h)]
    cols_of = [receiver_interval(x, k_x, stride, width) for x in range(win_w)]

    expected = _ExpectedStates(height, width)
    chain = ReceiverChain(num_pes)
    codes = bytearray()
    rows_held: Optional[Interval] = None
    cols_held: Optional[Interval] = None

    for y in range(win_h):
        rows = rows_of[y]
        for x in range(win_w):
            cols = cols_of[x]
            if y == 0 and x == 0:
                code = Command.START
            elif rows is None or cols is None:
                codes.append(Command.SKIP)
                continue
            elif x == 0 and width > 1:
                code = _y_command(rows_held, rows)
            elif x == 0:
                code = _x_command(rows_held, rows)
            else:
                code = _x_command(cols_held, cols)

            target = expected(rows, cols)
            before = bytes(chain.states)
            if code is not None:
                chain.apply(code)
            if code is None or chain.states != target:
                code = _lowest_reproducing(before, target)
                if code is None:
                    raise CommandStreamError(
                        "no command reproduces the receiver transition",
                        position=(y, x),
                        before=(rows_held, cols_held),
                        after=(rows, cols),
                    )
                logger.debug(f"Fallback command {code} at ({y}, {x}) for {height}x{width} tile")
                chain.states = bytearray(target)

            codes.append(code)
            rows_held, cols_held = rows, cols

    return bytes(codes)


def _lowest_reproducing(before: bytes, target: bytes) -> Optional[Command]:
    for code in range(Command.START):
        trial = ReceiverChain(len(before), before)
        trial.apply(code)
        if trial.states == target:
            return Command(code)
    return None


def generate_command_stream(tile: "Tile", spec: ConvLayerSpec) -> List[StreamWord]:
    """
    Command stream for one input channel of a tile's window.

    Args:
        tile: output tile
        spec: layer (kernel and stride)

    Returns:
        one StreamWord per window pixel, row-major, in padded-input coordinates
    """
    codes = command_codes(tile.height, tile.width, spec.k_y, spec.k_x, spec.stride)
    win_y, win_x = window_origin(tile, spec)
    _, win_w = window_extent(tile.height, tile.width, spec)
    return [
        StreamWord(Command(code), win_y + i // win_w, win_x + i % win_w)
        for i, code in enumerate(codes)
    ]


def format_command_stream(stream: List[StreamWord]) -> List[Dict[str, object]]:
    """Rows of the command dump: cycle, code, mnemonic, y, x."""
    return [
        {"cycle": cycle, "code": int(w.code), "mnemonic": MNEMONICS[w.code], "y": w.y, "x": w.x}
        for cycle, w in enumerate(stream)
    ]


# ============================================================
# 5. CACHE ROUTING
# ============================================================


@lru_cache(maxsize=256)
def cache_routing(height: int, width: int, k_y: int, k_x: int, stride: int) -> np.ndarray:
    """
    Window positions each PE of a tile caches, found by running the
    command stream through the pipelined chain and checked against the
    functional replay.

    Returns:
        int array (height * width, k_y * k_x) of row-major window offsets;
        column j is the j-th word the PE cached, i.e. kernel tap (j // k_x, j % k_x)
    """
    codes = command_codes(height, width, k_y, k_x, stride)
    num_pes = height * width
    cached = ReceiverChain(num_pes).run(codes)
    replayed: List[List[int]] = [[] for _ in range(num_pes)]
    for word, receivers in enumerate(ReceiverChain(num_pes).replay(codes)):
        for pe in receivers:
            replayed[pe].append(word)
    if replayed != cached:
        pe = next(i for i in range(num_pes) if replayed[i] != cached[i])
        raise CommandStreamError(
            "pipelined and functional receiver chains disagree",
            position=(pe // width, pe % width),
        )
    taps = k_y * k_x
    for pe, words in enumerate(cached):
        if len(words) > taps:
            raise BufferOverflowError(f"PE {pe} cached {len(words)} words, window holds {taps}")
        if len(words) < taps:
            raise CommandStreamError(
                f"PE {pe} cached {len(words)} of {taps} window words",
                position=(pe // width, pe % width),
            )
    routing = np.array(cached, dtype=np.int64).reshape(height * width, taps)
    routing.setflags(write=False)
    return routing
