#!/usr/bin/env python3
"""
Command-line interface for hybrid_beam.

Batch reproductions of the modal study, the delay-stability study, the
hybrid frequency sweeps and the acceptance checks. Every command writes CSV
tables (checked against their schema) and, when enabled, a plotting script
per table.
"""

import argparse
import asyncio
import logging
import math
import sys
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from .core import HybridBeamError
from .run_config import RunConfig, build_model, build_partition, load_config
from .tools.acceptance import hybrid_setup, run_acceptance
from .tools.beam_fe import natural_frequencies
from .tools.iterative_coupler import estimate_damping, sweep
from .tools.reporting import boundary_rows, locus_rows, root_rows, sweep_rows, write_plot_script, write_table
from .tools.stability import DelayCharacteristic, find_roots, root_locus, stability_boundary_async
from .tools.substructuring import clamped_interface_modes, condensed_table, placement_warnings

logger = logging.getLogger("hybrid_beam.cli")

MONOLITHIC_MODES = 6
CLAMPED_MODES = 3


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Load ``--config`` and apply the run-level overrides on a copy."""
    config = load_config(args.config)
    if args.seed is not None:
        noise = config.rig.noise.model_copy(update={"seed": args.seed})
        config = config.model_copy(update={"rig": config.rig.model_copy(update={"noise": noise})})
    if args.out is not None:
        config = config.model_copy(update={"output": config.output.model_copy(update={"directory": args.out})})
    if getattr(args, "prime", False):
        config = config.model_copy(update={"rig": config.rig.model_copy(update={"prime_steady_state": True})})
    return config


def _emit(rows, config: RunConfig, name: str, schema: str, **plot_args) -> Path:
    path = write_table(rows, Path(config.output.directory) / f"{name}.csv", schema)
    if config.output.plot_scripts and schema in ("roots", "locus", "boundary", "sweep", "raw"):
        write_plot_script(path, schema, **plot_args)
    print(f"✅ {path}")
    return path


async def cmd_modes(args: argparse.Namespace) -> bool:
    """Monolithic and clamped-interface modes, plus placement warnings."""
    config = resolve_config(args)
    model = build_model(config)
    part = build_partition(config, model)
    rows = [
        {"kind": "monolithic", "mode": j, "frequency_hz": m.frequency_hz, "damping_ratio": m.damping_ratio}
        for j, m in enumerate(natural_frequencies(model, MONOLITHIC_MODES), start=1)
    ]
    for kind, side in (("clamped-PS", part.P_part), ("clamped-NS", part.N_part)):
        for j, f in enumerate(clamped_interface_modes(side, CLAMPED_MODES), start=1):
            rows.append({"kind": kind, "mode": j, "frequency_hz": f, "damping_ratio": math.nan})
    _emit(rows, config, "modes", "modes")

    for row in rows:
        print(f"  {row['kind']:<11} {row['mode']}: {row['frequency_hz']:9.3f} Hz")
    band = (config.coupler.freq_start_hz, config.coupler.freq_stop_hz)
    warnings = placement_warnings(part, band)
    if warnings:
        for w in warnings:
            print(f"⚠️ {w}")
    else:
        print("No placement warnings")

    if args.condensed:
        c = config.coupler
        count = int(round((c.freq_stop_hz - c.freq_start_hz) / c.freq_step_hz)) + 1
        freqs = [c.freq_start_hz + j * c.freq_step_hz for j in range(count)]
        table = condensed_table(part.N_part, freqs) + condensed_table(part.P_part, freqs)
        _emit(table, config, "condensed", "condensed")
    return True


async def cmd_stability(args: argparse.Namespace) -> bool:
    """Root maps, root locus and cut-off stability boundaries."""
    config = resolve_config(args)
    st = config.stability
    ctx = DelayCharacteristic(build_model(config), config.partition.near_pole_condition)
    box, resolution = st.box(), st.resolution()

    roots = []
    for tau in st.root_delays:
        found = await asyncio.to_thread(find_roots, ctx, st.alpha, tau, box, resolution)
        unstable = sum(r.unstable for r in found)
        print(f"  tau = {tau:g} ms: {len(found)} roots, {unstable} unstable")
        roots.extend(found)
    _emit(root_rows(roots), config, "roots", "roots")

    curves = await asyncio.to_thread(root_locus, ctx, st.alpha, st.locus_grid(), box, resolution)
    _emit(locus_rows(curves), config, "locus", "locus")

    points = []
    for f_c in st.f_cutoffs:
        boundary = await stability_boundary_async(ctx, f_c, st.alpha_grid, tau_range=st.tau_range)
        failed = [p for p in boundary if p.error]
        if failed:
            logger.warning("f_c = %.0f Hz: %d boundary points failed", f_c * 1000.0, len(failed))
        points.extend(boundary)
    _emit(boundary_rows(points), config, "boundary", "boundary")
    if ctx.pole_hits:
        print(f"⚠️ {ctx.pole_hits} roots excluded at condensation poles")
    return True


async def cmd_sweep(args: argparse.Namespace) -> bool:
    """Hybrid frequency sweeps, one per damping scale and repeat."""
    config = resolve_config(args)
    scales = args.damping_scale or [config.rig.damping_scale]
    export_raw = args.export_raw or config.output.export_raw
    base_seed = config.rig.noise.seed
    rows = []
    for scale in scales:
        for repeat in range(args.repeat):
            seed = base_seed + repeat
            setup = hybrid_setup(config, damping_scale=scale, ideal=args.ideal_rig, seed=seed)
            records = await asyncio.to_thread(sweep, setup.rig, setup.omegas, setup.coupler, setup.numerical)
            weights = (1.0, setup.rig.config.sensors.laser_separation)
            rows.extend(sweep_rows(records, weights, scale, seed, repeat))

            converged = [r for r in records if r.converged]
            print(f"  damping x{scale:g}, seed {seed}: {len(converged)}/{len(records)} converged")
            for r in records:
                if not r.converged:
                    print(f"⚠️ NC at {r.omega_hz:.2f} Hz (|R| = {r.residual_norm:.4g} mm)")
            if len(converged) >= 3:
                est = estimate_damping(
                    [r.omega_hz for r in converged], [r.U_P.amplitude("u") / r.forcing for r in converged]
                )
                zeta = "outside the band" if est.zeta is None else f"{100 * est.zeta:.2f} %"
                print(f"    peak {est.peak:.4g} mm/kN at {est.peak_hz:.2f} Hz, damping {zeta}")

            if export_raw:
                for r in records:
                    if r.window is None:
                        continue
                    name = f"raw/sweep_x{scale:g}_r{repeat}_{r.omega_hz:.2f}Hz"
                    _emit(r.window.to_frame(), config, name, "raw", period=r.window.period)
    _emit(rows, config, "sweep", "sweep")
    return True


async def cmd_verify(args: argparse.Namespace) -> bool:
    """Acceptance checks; fails when any selected criterion fails."""
    config = resolve_config(args)
    results = await run_acceptance(config, args.criteria)
    for r in results:
        mark = "✅" if r.passed else "❌"
        detail = f" [{r.detail}]" if r.detail else ""
        print(f"{mark} {r.group}: {r.criterion}: {r.measured} (expected {r.expected}){detail}")
    _emit([r.to_row() for r in results], config, "verify", "verify")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return not failed


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (built-in defaults when omitted)")
    common.add_argument("--seed", type=int, help="Seed of every noise source")
    common.add_argument("--out", help="Output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="Enable verbose output")
    common.add_argument("-d", "--debug", action="store_true", help="Enable detailed debug output (implies verbose)")

    parser = argparse.ArgumentParser(
        description="hybrid-beam - iterative Fourier-domain hybrid testing of a cantilever beam"
    )
    subparsers = parser.add_subparsers(dest="command", help="Command to execute")

    modes_parser = subparsers.add_parser("modes", parents=[common], help="Modal tables and placement checks")
    modes_parser.add_argument("--condensed", action="store_true", help="Also write the condensed interface matrices")

    subparsers.add_parser("stability", parents=[common], help="Delay-stability study")

    sweep_parser = subparsers.add_parser("sweep", parents=[common], help="Hybrid frequency sweep")
    sweep_parser.add_argument("--damping-scale", type=float, nargs="+", help="Damping scale(s) of the physical beam")
    sweep_parser.add_argument("--ideal-rig", action="store_true", help="No noise, no lag, no filter, exact force sensing")
    sweep_parser.add_argument("--repeat", type=int, default=1, help="Repeat each sweep with consecutive seeds")
    sweep_parser.add_argument("--export-raw", action="store_true", help="Write the last raw window of every point")
    sweep_parser.add_argument(
        "--prime", action="store_true", help="Start every voltage update on the exact steady state (skips the transient)"
    )

    verify_parser = subparsers.add_parser("verify", parents=[common], help="Run the acceptance checks")
    verify_parser.add_argument(
        "--criteria", action="append", help="Criteria group to run (repeatable); all groups when omitted"
    )
    return parser


def main(argv: Optional[list[str]] = None):
    """Entry point for the CLI."""
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    if not args.command:
        parser.print_help()
        return
    if args.debug:
        logging.getLogger("hybrid_beam").setLevel(logging.DEBUG)
        args.verbose = True
    if getattr(args, "repeat", 1) < 1:
        parser.error("--repeat must be at least 1")

    commands = {
        "modes": cmd_modes,
        "stability": cmd_stability,
        "sweep": cmd_sweep,
        "verify": cmd_verify,
    }

    try:
        ok = asyncio.run(commands[args.command](args))
    except KeyboardInterrupt:
        logger.info("Operation interrupted by user")
        sys.exit(1)
    except ValidationError as e:
        for err in e.errors():
            logger.error("%s: %s", ".".join(str(p) for p in err["loc"]) or "config", err["msg"])
        sys.exit(1)
    except (HybridBeamError, KeyError) as e:
        logger.error(f"Error executing command: {str(e)}")
        if args.verbose:
            import traceback
            traceback.print_exc()
        sys.exit(1)
    if not ok:
        sys.exit(1)


if __name__ == "__main__":
    main()
