"""Command-line driver: ``ghztomo <subcommand> [options]``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 kernel
quadrature did not converge, 4 kernel-check found a deviation.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import load_config, with_overrides
from .experiment import ConfigError, ExperimentConfig, oracle_C, run, theoretical_C
from .fock import dumps_ensemble
from .homodyne import draw_settings, sample
from .kernel import (
    KernelConvergenceError,
    all_requests,
    fock_operator,
    generic_operator_kernel,
    kappa,
    matrix_element_kernel,
)
from .source import ZeroHeraldError, herald

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_DEVIATION = 0, 2, 3, 4
KERNEL_CHECK_TOL = 1e-8

log = logging.getLogger("ghztomo")


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits: {text}")
    return value


def _count(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative: {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment config (defaults apply without one)")
    common.add_argument("--seed", type=_u64, help="master seed override")
    common.add_argument("--samples", type=_count, help="sample count N override")
    common.add_argument("--out", type=Path, help="output path override")
    common.add_argument("--no-timestamp", action="store_true", help="omit wall-clock metadata from CSV output")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ghztomo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    sub.add_parser("simulate", parents=[common], help="Monte-Carlo tomography of C(phi), written as CSV")
    sub.add_parser("theory", parents=[common], help="closed-form and oracle C(phi) on the grid")
    kc = sub.add_parser("kernel-check", parents=[common],
                        help="compare the factorized kernel with the generic operator kernel")
    kc.add_argument("--eta", type=float, help="homodyne efficiency (defaults to the config value)")
    kc.add_argument("--trials", type=_count, default=1000)
    sd = sub.add_parser("sample-dump", parents=[common], help="dump the heralded state and raw homodyne samples")
    sd.add_argument("--state-out", type=Path, help="file for the state dump (default: stdout)")
    sub.add_parser("herald-info", parents=[common], help="print heralding weights and probabilities")
    return parser


def _config(args, samples_override: bool = True) -> ExperimentConfig:
    base = load_config(args.config) if args.config else ExperimentConfig()
    samples = args.samples if samples_override else None
    return with_overrides(base, seed=args.seed, samples=samples, output=args.out)


def _check_writable(path: Path):
    if not path.parent.is_dir():
        raise ConfigError(f"output directory does not exist: {path.parent}")


def cmd_simulate(args) -> int:
    config = _config(args)
    if config.output is not None:
        _check_writable(config.output)
    table = run(config)
    if config.output is None:
        print("phi,c_est,c_err,c_theory")
        for row in table.rows():
            print(",".join(repr(float(v)) for v in row))
    else:
        table.to_csv(config.output, timestamp=not args.no_timestamp)
        log.info("wrote %s", config.output)
    return EXIT_OK


def cmd_theory(args) -> int:
    config = _config(args)
    out = herald(config.crystal)
    phi = config.grid.values()
    lines = ["phi,c_theory,c_oracle"]
    lines += [f"{float(p)!r},{float(t)!r},{oracle_C(config, p, out.state)!r}"
              for p, t in zip(phi, theoretical_C(config, phi, out))]
    text = "\n".join(lines) + "\n"
    if config.output is None:
        sys.stdout.write(text)
    else:
        _check_writable(config.output)
        config.output.write_text(text)
    return EXIT_OK


def cmd_herald_info(args) -> int:
    config = _config(args)
    out = herald(config.crystal)
    print(f"p1        {out.p1:.10f}")
    print(f"p2        {out.p2:.10f}")
    print(f"p3        {out.p3:.10f}")
    print(f"P_Phi     {out.p_phi:.10g}")
    print(f"P_rho     {out.p_rho:.10g}")
    print(f"ghz_phase {config.crystal.ghz_phase:.10f}")
    print(f"port      {out.herald_port}")
    return EXIT_OK


def cmd_kernel_check(args) -> int:
    config = _config(args)
    eta = config.eta if args.eta is None else args.eta
    try:
        kappa(eta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rng = np.random.default_rng(config.seed)
    requests = all_requests(2, 1)
    worst = (0.0, None)
    for _ in range(args.trials):
        req = requests[rng.integers(len(requests))]
        x = rng.uniform(-3, 3)
        theta = math.asin(math.sqrt(rng.random()))
        psi = rng.uniform(0, 2 * math.pi, 2)
        fast = matrix_element_kernel(x, theta, psi[0], psi[1], req.n, req.m, eta)[0]
        u = (math.cos(theta), math.sin(theta))
        slow = generic_operator_kernel(fock_operator(req.n, req.m, 2), x, u, psi, eta)
        dev = abs(fast - slow)
        if dev > worst[0]:
            worst = (dev, (req, x, theta, tuple(psi), fast, slow))
    print(f"eta={eta} trials={args.trials} max deviation {worst[0]:.3e}")
    if worst[0] >= KERNEL_CHECK_TOL:
        req, x, theta, psi, fast, slow = worst[1]
        print(f"worst case: {req} x={x!r} theta={theta!r} psi={psi!r} factorized={fast!r} generic={slow!r}")
        return EXIT_DEVIATION
    return EXIT_OK


def cmd_sample_dump(args) -> int:
    # --samples sets the dump length here, not the block-averaged run size
    config = _config(args, samples_override=False)
    if config.output is not None:
        _check_writable(config.output)
    if args.state_out is not None:
        _check_writable(args.state_out)
    ens = herald(config.crystal).state
    n = args.samples if args.samples is not None else 1000
    rng = np.random.default_rng(config.seed)
    settings = draw_settings(rng, n, len(ens.layout.pairs))
    data = sample(ens, settings, config.eta, rng)
    dump = dumps_ensemble(ens)
    if args.state_out is None:
        sys.stdout.write(dump)
    else:
        args.state_out.write_text(dump)
    names = [p[0][0] for p in ens.layout.pairs]
    header = [f"{c}_{j}" for j in names for c in ("theta", "psi_o", "psi_e")] + [f"x_{j}" for j in names]
    cols = []
    for j in range(len(names)):
        cols += [settings.theta[:, j], settings.psi_o[:, j], settings.psi_e[:, j]]
    cols += [data.x[:, j] for j in range(len(names))]
    lines = [f"# eta: {config.eta}", f"# seed: {config.seed}", ",".join(header)]
    lines += [",".join(repr(float(v)) for v in row) for row in np.column_stack(cols)]
    text = "\n".join(lines) + "\n"
    if config.output is None:
        sys.stdout.write(text)
    else:
        config.output.write_text(text)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "theory": cmd_theory,
    "kernel-check": cmd_kernel_check,
    "sample-dump": cmd_sample_dump,
    "herald-info": cmd_herald_info,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ZeroHeraldError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KernelConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
