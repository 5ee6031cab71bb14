"""
pesim command line.

    python main.py simulate --layer 56x56x256x256 --pes 625 --precision int8x4 --verify
    python main.py analyze  --preset vgg16 --pes 64
    python main.py tile     --layer 65x65x1x1 --kernel 1 --pes 64
    python main.py commands --layer 4x4x1x1 --kernel 2 --pad 0 --pes 9
    python main.py verify   --seed 1 --seed 2 --seed 3 --count 200
    python main.py vgg16    --pes 625 --precision int8x4 --analyze
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from config import CoreConfig, LayerConfig, RunConfig, SubtilePolicy
from core.analytics import ANALYZE_CSV_COLUMNS, analyze_layer
from core.errors import AcceleratorError
from core.export import export_csv, export_json, format_csv
from core.fixtures import save_fixture
from core.interconnect import format_command_stream
from core.tensor import ConvLayerSpec, Precision
from core.tiler import TILE_CSV_COLUMNS, build_schedule, tile_output_plane
from workloads.presets import PRESETS, scale_preset
from workloads.runner import REPORT_CSV_COLUMNS, RunMode, run_workload, simulate_config, verify_sweep

logger = logging.getLogger("pesim")

COMMAND_CSV_COLUMNS = ["cycle", "code", "mnemonic", "y", "x"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MISMATCH = 2

# ============================================================================
# ARGUMENT HELPERS
# ============================================================================


def parse_layer(text: str, args: argparse.Namespace, name: str = "layer") -> ConvLayerSpec:
    """HxWxCIxCO plus --kernel/--stride/--pad/--precision."""
    try:
        h, w, c_in, c_out = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"--layer expects HxWxCIxCO, got '{text}'")
    k = args.kernel
    pad = args.pad if args.pad is not None else k // 2
    return ConvLayerSpec(
        c_in=c_in, c_out=c_out, h_in=h, w_in=w, k_y=k, k_x=k,
        stride=args.stride, pad=pad, precision=Precision(args.precision), name=name,
    )


def core_from_args(args: argparse.Namespace) -> CoreConfig:
    return CoreConfig(
        num_pes=args.pes,
        input_buffer_entries=args.input_buffer,
        psum_buffer_entries=args.psum_buffer,
        output_buffer_entries=args.output_buffer,
        precision=Precision(args.precision),
        clock_mhz=args.clock,
        subtile_policy=SubtilePolicy(args.subtiles),
    )


def load_run_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        return RunConfig(**json.load(f))


def layers_from_args(args: argparse.Namespace) -> List[ConvLayerSpec]:
    if getattr(args, "config", None):
        return [load_run_config(args.config).layer.to_spec()]
    if getattr(args, "preset", None):
        preset = scale_preset(PRESETS[args.preset](Precision(args.precision)), args.scale)
        return list(preset.layers)
    if args.layer:
        return [parse_layer(args.layer, args)]
    raise argparse.ArgumentTypeError("give --layer, --preset or --config")


def _add_layer_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--layer", help="HxWxCIxCO (input height, width, input/output channels)")
    p.add_argument("--kernel", type=int, default=3, help="square kernel size (default 3)")
    p.add_argument("--stride", type=int, default=1, choices=[1, 2])
    p.add_argument("--pad", type=int, default=None, help="zero padding (default kernel // 2)")


def _add_core_args(p: argparse.ArgumentParser, pes_default: Optional[int] = 64) -> None:
    p.add_argument("--pes", type=int, default=pes_default, help="PEs (vPEs for int8x4) in the core")
    p.add_argument("--precision", default="fp32", choices=[v.value for v in Precision])
    p.add_argument("--clock", type=float, default=250.0, help="clock in MHz (reporting only)")
    p.add_argument("--input-buffer", type=int, default=32)
    p.add_argument("--psum-buffer", type=int, default=512)
    p.add_argument("--output-buffer", type=int, default=512)
    p.add_argument("--subtiles", default="square", choices=[s.value for s in SubtilePolicy],
                   help="split of remainder strips that exceed the core")


def _add_output_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--csv", help="also write the CSV report to this file name in the output directory")
    p.add_argument("--json", help="also write a JSON report to this file name in the output directory")
    p.add_argument("--out-dir", default=None, help="output directory (default PESIM_OUTPUT_DIR or ./output)")


# ============================================================================
# SUBCOMMANDS
# ============================================================================


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.config:
        run = load_run_config(args.config)
    else:
        spec = layers_from_args(args)[0]
        run = RunConfig(layer=LayerConfig.from_spec(spec), core=core_from_args(args))

    output, stats, verified = simulate_config(run, verify=args.verify, seed=args.seed)
    record = stats.to_dict(run.core.clock_mhz)
    record["layer"] = run.layer.model_dump(mode="json")
    record["verified"] = verified
    print(json.dumps(record, indent=2))

    if args.json:
        export_json(record, args.json, args.out_dir)
    if args.output:
        save_fixture(output, args.output)
        print(f"[OK] Output tensor written to {args.output}")

    if verified is False:
        print("FAIL: simulated output differs from conv2d_reference", file=sys.stderr)
        return EXIT_MISMATCH
    if verified:
        print("PASS: simulated output matches conv2d_reference bit-exactly")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    if args.config:
        run = load_run_config(args.config)
        jobs = [(run.layer.to_spec(), run.core)]
    else:
        core = core_from_args(args)
        jobs = [(spec, core) for spec in layers_from_args(args)]

    analyses = []
    for spec, core in jobs:
        layer_core = core.model_copy(update={"precision": spec.precision})
        analyses.append(analyze_layer(spec, layer_core, args.square_width))
    rows = [a.to_row() for a in analyses]
    sys.stdout.write(format_csv(rows, ANALYZE_CSV_COLUMNS))
    if args.csv:
        export_csv(rows, ANALYZE_CSV_COLUMNS, args.csv, args.out_dir)
    if args.json:
        export_json([a.to_dict() for a in analyses], args.json, args.out_dir)
    return EXIT_OK


def cmd_tile(args: argparse.Namespace) -> int:
    spec = layers_from_args(args)[0]
    core = core_from_args(args)
    tiles = tile_output_plane(spec.h_out, spec.w_out, core.num_pes, SubtilePolicy(core.subtile_policy))
    rows = [t.to_dict() for t in tiles]
    sys.stdout.write(format_csv(rows, TILE_CSV_COLUMNS))
    if args.csv:
        export_csv(rows, TILE_CSV_COLUMNS, args.csv, args.out_dir)
    return EXIT_OK


def cmd_commands(args: argparse.Namespace) -> int:
    spec = layers_from_args(args)[0]
    schedule = build_schedule(spec, core_from_args(args))
    tiles = schedule.tiles
    if not 0 <= args.tile < len(tiles):
        print(f"error: tile index {args.tile} out of range (0..{len(tiles) - 1})", file=sys.stderr)
        return EXIT_ERROR
    job = next(j for j in schedule.jobs if j.tile == tiles[args.tile])
    rows = format_command_stream(job.commands)
    sys.stdout.write(format_csv(rows, COMMAND_CSV_COLUMNS))
    if args.csv:
        export_csv(rows, COMMAND_CSV_COLUMNS, args.csv, args.out_dir)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    status = EXIT_OK
    for seed in args.seed or [0]:
        summary = verify_sweep(seed, args.count)
        if summary.passed:
            print(f"seed {seed}: {summary.count} specs PASS")
            continue
        status = EXIT_MISMATCH
        minimal = summary.minimal_failure
        print(f"seed {seed}: {len(summary.failures)}/{summary.count} specs FAIL")
        print(f"  minimal failing spec: {minimal.spec!r} on {minimal.core.num_pes} PEs ({minimal.reason})")
    return status


def cmd_vgg16(args: argparse.Namespace) -> int:
    preset = scale_preset(PRESETS["vgg16"](Precision(args.precision)), args.scale)
    if args.both or (args.analyze and args.simulate):
        mode = RunMode.BOTH
    elif args.simulate:
        mode = RunMode.SIMULATE
    else:
        mode = RunMode.ANALYZE

    report = run_workload(preset, core_from_args(args), mode, args.verify, args.square_width, args.seed)
    rows = [row.to_csv_row() for row in report.layers]
    sys.stdout.write(format_csv(rows, REPORT_CSV_COLUMNS))
    footer = report.footer()
    unit = "GOPS" if args.precision == Precision.INT8X4.value else "GFLOPS"
    print(f"# peak {footer['peak']:.2f} {unit}")
    print(f"# overall {footer['overall_gops']:.2f} {unit}")
    print(f"# max fraction of peak {footer['max_fraction_of_peak'] * 100:.1f}%")
    if args.scale > 1:
        print(f"# channel counts >= {args.scale} divided by {args.scale}")
    for note in report.notes:
        print(f"# {note}")

    if args.csv:
        export_csv(rows, REPORT_CSV_COLUMNS, args.csv, args.out_dir)
    if args.json:
        data = report.to_dict()
        data["scale"] = args.scale
        export_json(data, args.json, args.out_dir)
    return EXIT_OK if report.passed else EXIT_MISMATCH


# ============================================================================
# PARSER
# ============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pesim", description="1-D PE-array CNN accelerator simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one layer and report cycle statistics")
    _add_layer_args(p)
    _add_core_args(p)
    _add_output_args(p)
    p.add_argument("--config", help="JSON run config {layer, core, input?, weights?}")
    p.add_argument("--verify", action="store_true", help="compare with conv2d_reference")
    p.add_argument("--seed", type=int, default=0, help="seed for generated tensors")
    p.add_argument("--output", help="write the output tensor fixture here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="closed-form utilization and cycle prediction")
    _add_layer_args(p)
    _add_core_args(p)
    _add_output_args(p)
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--preset", choices=sorted(PRESETS), help="analyze every layer of a preset")
    p.add_argument("--scale", type=int, default=1, help="divide preset channel counts by N")
    p.add_argument("--square-width", action="store_true", help="input read as W_i * W_i")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("tile", help="print the tiling of a layer's output plane")
    _add_layer_args(p)
    _add_core_args(p)
    _add_output_args(p)
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("commands", help="dump the input-interconnect command stream of one tile")
    _add_layer_args(p)
    _add_core_args(p)
    _add_output_args(p)
    p.add_argument("--tile", type=int, default=0, help="tile index in schedule order")
    p.set_defaults(func=cmd_commands)

    p = sub.add_parser("verify", help="randomized bit-exact sweep against conv2d_reference")
    p.add_argument("--seed", type=int, action="append", help="sweep seed (repeatable)")
    p.add_argument("--count", type=int, default=200)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("vgg16", help="run the VGG-16 preset")
    _add_core_args(p, pes_default=64)
    _add_output_args(p)
    mode = p.add_argument_group("mode")
    mode.add_argument("--analyze", action="store_true", help="closed-form model (default)")
    mode.add_argument("--simulate", action="store_true", help="controller timeline")
    mode.add_argument("--both", action="store_true")
    p.add_argument("--verify", action="store_true", help="run the datapath and compare (use with --scale)")
    p.add_argument("--scale", type=int, default=1, help="divide channel counts by N")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--square-width", action="store_true", help="input read as W_i * W_i")
    p.set_defaults(func=cmd_vgg16)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (AcceleratorError, argparse.ArgumentTypeError, ValidationError) as e:
        logger.debug(f"{args.command} failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
