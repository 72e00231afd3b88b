# src/cli.py - Command-line surface: rate curves, b0 reports, simulations, lattice demo
"""Usage: python -m src.cli <command> [--config FILE] [--seed N] [--out FILE]
[--trials N] [--snr-db START:STEP:STOP]

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

import argparse
import logging
import math
import sys
from typing import List, Optional

from schemas import ExperimentConfig
from src.core.config import configure_logging, settings
from src.core.exceptions import ComputationError, ConfigError
from src.services.experiment_service import experiment_service, load_config, write_csv
from src.services.source_coding import derive_packing, packing_gap, select_prime

logger = logging.getLogger(__name__)


def parse_snr_grid(text: str) -> List[float]:
    """'start:step:stop' (stop included) or a single value, in dB"""
    parts = text.split(":")
    try:
        values = [float(x) for x in parts]
    except ValueError:
        raise ConfigError(f"SNR grid '{text}' is not numeric", "snr_db")
    if len(values) == 1:
        return values
    if len(values) != 3:
        raise ConfigError("SNR grid must be START:STEP:STOP", "snr_db")
    start, step, stop = values
    if not step > 0 or stop < start:
        raise ConfigError("SNR grid needs a positive step and STOP >= START", "snr_db")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file (or defaults) with the command-line flags applied on top"""
    config = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.snr_db is not None:
        overrides["snr_db"] = parse_snr_grid(args.snr_db)
    if args.out is not None:
        overrides["output"] = args.out
    if not overrides:
        return config
    try:
        return ExperimentConfig.model_validate({**config.model_dump(), **overrides})
    except ValueError as e:
        raise ConfigError(str(e), "flags")


def cmd_rates(config: ExperimentConfig) -> None:
    write_csv(experiment_service.rates_frame(config), config.output)


def cmd_compare(config: ExperimentConfig) -> None:
    frame = experiment_service.compare_frame(config)
    logger.info(f"b0 per function: {frame.attrs['b0']}")
    write_csv(frame, config.output)


def cmd_simulate(config: ExperimentConfig) -> None:
    write_csv(experiment_service.simulate_frame(config), config.output)


def cmd_b0(config: ExperimentConfig) -> None:
    report = experiment_service.b0_report(config)
    print(f"function: {report.function}")
    print(f"eps: {report.eps:g}")
    print(f"b0: {report.b0}")
    print(f"sup_error: {report.sup_error:.6g}")
    print(f"grid_error: {report.grid_error:.6g}")
    if report.bound is not None:
        print(f"bound: {report.bound:.6g}")
    print(f"v: {report.v}")
    print(f"eta: {report.eta}")
    N = experiment_service.topology(config).max_cluster_size
    q = N * ((1 << report.b0) - 1) + 1
    params = derive_packing(report.b0, N, config.lattice.p or select_prime(q, config.channel.n, config.lattice.k),
                            config.lattice.k)
    gap = packing_gap(params)
    print(f"packing: q={params.q} p={params.p} tau={gap.tau_exact} conservative_tau={gap.tau_conservative}")


def cmd_demo_lattice(p: int, k: int, n: int, snr_db: float, seed: int) -> None:
    demo = experiment_service.lattice_demo(p, k, n, snr_db, seed)
    print(f"lattice: p={demo.p} k={demo.k} n={demo.n} gamma={demo.gamma:.6g} codebook_size={demo.codebook_size}")
    print("generator:")
    for row in demo.generator:
        print("  " + " ".join(str(v) for v in row))
    if demo.codebook is not None:
        print("codebook:")
        for word in demo.codebook:
            print("  " + " ".join(f"{v:.6g}" for v in word))
    else:
        print(f"codebook: {demo.codebook_size} codewords (not listed)")
    for i, (w, x) in enumerate(zip(demo.messages, demo.transmitted)):
        print(f"node {i}: w={w} x=[{', '.join(f'{v:.6g}' for v in x)}]")
    print(f"received: [{', '.join(f'{v:.6g}' for v in demo.received)}]")
    print(f"expected sum: {demo.expected_sum}")
    print(f"decoded sum: {demo.decoded_sum}")
    print(f"success: {demo.success}")


def cmd_defaults() -> None:
    print(ExperimentConfig().model_dump_json(indent=2))


def cmd_serve(host: str, port: int) -> None:
    import uvicorn

    uvicorn.run("main:app", host=host, port=port)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON experiment file")
    common.add_argument("--seed", type=int, default=None, help="Master seed (u64)")
    common.add_argument("--out", default=None, help="Output CSV path (stdout if omitted)")
    common.add_argument("--trials", type=int, default=None, help="Monte Carlo trials per SNR point")
    common.add_argument("--snr-db", dest="snr_db", default=None, help="START:STEP:STOP in dB")

    parser = argparse.ArgumentParser(prog="python -m src.cli", description=settings.DESCRIPTION)
    parser.add_argument("--log-level", default=None, help="Logging level (default from OTA_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("rates", parents=[common], help="Closed-form rate curves as CSV")
    sub.add_parser("b0", parents=[common], help="Quantizer resolution report")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo reports per SNR point as CSV")
    sub.add_parser("compare", parents=[common], help="Lattice rates of several builtins as CSV")
    sub.add_parser("defaults", help="Print the default configuration as JSON")

    demo = sub.add_parser("demo-lattice", help="Encode, superimpose and decode one example")
    demo.add_argument("--p", type=int, default=3)
    demo.add_argument("--k", type=int, default=1)
    demo.add_argument("--n", type=int, default=2)
    demo.add_argument("--snr", type=float, default=20.0, help="SNR in dB")
    demo.add_argument("--seed", type=int, default=0)

    serve = sub.add_parser("serve", help="Run the HTTP API")
    serve.add_argument("--host", default=settings.HOST)
    serve.add_argument("--port", type=int, default=settings.PORT)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        if args.command == "defaults":
            cmd_defaults()
        elif args.command == "demo-lattice":
            cmd_demo_lattice(args.p, args.k, args.n, args.snr, args.seed)
        elif args.command == "serve":
            cmd_serve(args.host, args.port)
        else:
            config = resolve_config(args)
            {"rates": cmd_rates, "b0": cmd_b0, "simulate": cmd_simulate, "compare": cmd_compare}[args.command](config)
    except ComputationError as e:
        print(f"error [{e.error_code}]: {e.detail}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected failure in {args.command}: {e}")
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
