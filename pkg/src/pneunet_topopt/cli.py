"""Command-line entry point.

    pneunet-topopt optimize <config>
    pneunet-topopt check-gradients <config> [--seed N]
    pneunet-topopt extract-contour <design.csv> [--level 0.5]

Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import artifacts
from ._validation import NumericalError, ValidationError
from .config_file import format_config, parse_config
from .contour import EmptyContourError, contours_to_csv, contours_to_svg, element_contours
from .model import build_model
from .optimizer import OptimizationAborted, check_gradients, run

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("pneunet_topopt")


def cmd_optimize(args) -> int:
    config = parse_config(args.config)
    model = build_model(config)
    outdir = Path(config.output_dir)
    written = [artifacts.atomic_write(outdir / "resolved_config.txt", format_config(config))]

    def progress(record, check):
        if record.iteration % args.log_every == 0:
            log.info("it %3d  f0 e/i/d = %.4f %.4f %.4f  V_i = %.4f  M_nd = %.2f%%  beta = %g",
                     record.iteration, record.f0_eroded, record.f0_intermediate, record.f0_dilated,
                     record.volume_intermediate, record.discreteness_intermediate, record.beta)

    try:
        result = run(model, config, verify_gradients=not args.skip_self_check,
                     early_exit=args.early_exit, callback=progress)
    except OptimizationAborted as exc:
        written += artifacts.write_history(outdir, exc.history, exc.checks)
        _manifest(outdir, written, f"aborted after {len(exc.history)} iterations: {exc}")
        log.error("optimization aborted: %s", exc)
        return EXIT_NUMERICAL
    try:
        written += artifacts.write_results(outdir, model, result)
    except OSError as exc:
        _manifest(outdir, written, f"I/O failure: {exc}")
        raise
    disp = result.output_displacement["intermediate"] * 1e3
    print(f"done: {result.iterations} iterations, output displacement {disp:.4f} mm, "
          f"V_f(i) = {result.volumes['intermediate']:.4f}; artifacts in {outdir}")
    return EXIT_OK


def _manifest(outdir: Path, written, reason: str) -> None:
    text = reason + "\n" + "".join(f"{p}\n" for p in written)
    print(text, file=sys.stderr, end="")
    try:
        artifacts.atomic_write(outdir / "manifest.txt", text)
    except OSError:
        pass


def cmd_check_gradients(args) -> int:
    config = parse_config(args.config)
    report = check_gradients(config, seed=args.seed)
    outdir = Path(config.output_dir)
    table = artifacts.csv_text(["design", "element", "realization", "adjoint", "finite_difference",
                                 "relative_error"], report.rows)
    path = artifacts.atomic_write(outdir / "gradient_check.csv", table)
    status = "PASS" if report.passed else "FAIL"
    print(f"{status}: max relative error {report.max_error:.3e} (tolerance {report.tolerance:.0e}) "
          f"over {len(report.per_design)} designs; table in {path}")
    return EXIT_OK if report.passed else EXIT_NUMERICAL


def cmd_extract_contour(args) -> int:
    design = artifacts.read_design(args.design)
    loops = element_contours(design["rho_bar"], design["nex"], design["ney"], design["lx"],
                             design["ly"], level=args.level)
    stem = Path(args.design).with_suffix("")
    svg = artifacts.atomic_write(f"{stem}_contour.svg", contours_to_svg(loops, design["lx"], design["ly"]))
    artifacts.atomic_write(f"{stem}_contour.csv", contours_to_csv(loops))
    print(f"{len(loops)} closed loops written to {svg} and {stem}_contour.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pneunet-topopt", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="run the robust optimization and write all artifacts")
    p.add_argument("config")
    p.add_argument("--log-every", type=int, default=10, metavar="N")
    p.add_argument("--early-exit", action="store_true",
                   help="stop once beta is maximal and the design change drops below 1e-3")
    p.add_argument("--skip-self-check", action="store_true",
                   help="do not run the small-mesh gradient check before optimizing")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("check-gradients", help="adjoint vs finite differences on a small mesh")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_check_gradients)

    p = sub.add_parser("extract-contour", help="iso-contour of a design CSV as SVG and CSV")
    p.add_argument("design")
    p.add_argument("--level", type=float, default=0.5)
    p.set_defaults(func=cmd_extract_contour)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValidationError, EmptyContourError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
