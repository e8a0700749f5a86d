"""Command-line entry point ``rydberg-lyapunov``.

Exit status: 0 success, 1 configuration error (nothing written), 2 runtime
invariant violation (partial output plus a ``FAILED`` marker).
"""

from __future__ import annotations

import argparse
import math
import re
import sys
from typing import Sequence

from .dynamics import InvariantViolation, time_to_threshold
from .experiments import plan_scenario, run_scenario, scenario_names
from .settings import ConfigError, load_settings_file, normalise, parse_assignment, resolve
from .zeno import zeno_check

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2
ZENO_TOL = 1e-8

_PHYS = re.compile(r"^\s*([0-9.eE+-]+)\s*(?:[*·x×]\s*(?:2\s*)?(?:pi|π))?\s*$")


def parse_g_mhz(text: str) -> float:
    """Angular coupling in rad/us from ``g_MHz=55`` or ``g_MHz=55*2pi``."""
    key, _, value = text.partition("=")
    if key.strip() != "g_MHz" or not value:
        raise ConfigError(f"--report-physical expects g_MHz=<value>, got {text!r}")
    m = _PHYS.match(value)
    if not m:
        raise ConfigError(f"cannot parse g_MHz value {value!r}")
    try:
        g = float(m.group(1))
    except ValueError:
        raise ConfigError(f"cannot parse g_MHz value {value!r}") from None
    if re.search(r"pi|π", value):
        g *= 2 * math.pi
    if not g > 0:
        raise ConfigError("g_MHz must be positive")
    return g


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output root directory (default: out)")
    common.add_argument("--resolution", choices=("full", "ci"), default="full")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a setting (repeatable)")
    common.add_argument("--config", help="JSON settings file")
    common.add_argument("--workers", type=int, default=1,
                        help="processes for sweep grid points (default: 1)")
    common.add_argument("--report-physical", metavar="g_MHz=VALUE",
                        help="also report times in microseconds for this coupling")

    parser = argparse.ArgumentParser(
        prog="rydberg-lyapunov",
        description="Dissipative singlet preparation with Lyapunov control fields.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", parents=[common], help="run a scenario's trajectories")
    p.add_argument("scenario")
    p = sub.add_parser("sweep", parents=[common], help="run a scenario's parameter sweep")
    p.add_argument("scenario")
    sub.add_parser("zeno-check", parents=[common],
                   help="compare the derived Zeno Hamiltonian with the analytic one")
    sub.add_parser("list", help="list registered scenarios")
    return parser


def collect_overrides(config: str | None, assignments: Sequence[str]) -> dict:
    """File values first, then command-line assignments on top."""
    merged = normalise(load_settings_file(config)) if config else {}
    cli = {}
    for text in assignments:
        key, value = parse_assignment(text)
        cli[key] = value
    merged.update(normalise(cli))
    return merged


def _report(out, g_rad_per_us: float | None) -> None:
    for stem, traj in out.trajectories.items():
        hit = time_to_threshold(traj, 0.95)
        line = (f"{stem}: F(t={traj.times[-1]:g}/g) = {traj.fidelity[-1]:.6f}, "
                f"min purity = {traj.purity.min():.6f}, "
                f"t(F>=0.95) = {'never' if hit is None else f'{hit:.4g}/g'}")
        if g_rad_per_us is not None:
            line += f" [t_f = {traj.times[-1] / g_rad_per_us:.4g} us"
            if hit is not None:
                line += f", t(F>=0.95) = {hit / g_rad_per_us:.4g} us"
            line += "]"
        print(line)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG

    if args.command == "list":
        for name in scenario_names():
            print(name)
        return EXIT_OK

    try:
        overrides = collect_overrides(args.config, args.overrides)
        g_phys = parse_g_mhz(args.report_physical) if args.report_physical else None
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        if args.command == "zeno-check":
            params = resolve(overrides).params
        else:
            plan_scenario(args.scenario, overrides, args.resolution, args.command)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "zeno-check":
        dev = zeno_check(params)
        print(f"max |H_zeno - H_eff| = {dev:.3e}")
        return EXIT_OK if dev <= ZENO_TOL else EXIT_INVARIANT

    try:
        out = run_scenario(args.scenario, overrides, args.out, args.resolution,
                           mode=args.command, workers=args.workers,
                           log=lambda msg: print(msg, file=sys.stderr))
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    _report(out, g_phys)
    for path in out.files:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
