"""Command-line interface.

Subcommands: simulate, fluid, rate, tilt, lln, ldp-slope, girsanov-check,
validate.  All take ``--config <file>`` (a JSON document mirroring the
ExperimentConfig fields) plus optional ``--seed``, ``--out`` and
``--threads`` overrides.  Exit codes: 0 success, 1 validation error,
2 numerical failure, 3 oracle infeasible.

Every data file embeds the resolved config and seed; wall-clock metadata
is isolated in ``metadata.json`` so a (config, seed) pair reproduces the
data bytes exactly.  Report-style commands also render a PNG figure next
to the delimited output unless ``--no-plot`` is given.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .assumptions import validate_assumptions
from .errors import (
    ConvergenceError,
    IntegrationError,
    NetworkSyntaxError,
    OracleError,
    SimulationError,
    ValidationError,
)
from .experiments import (
    ExperimentConfig,
    build_event,
    build_tilt,
    girsanov_check,
    ldp_slope_experiment,
)
from .fluid import lln_gap, solve_perturbed
from .girsanov import importance_estimate
from .paths import GridPath, JumpPath
from .rate import evaluate_G, evaluate_J
from .simulate import simulate

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_ORACLE = 3


def _dump_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _write_metadata(out: Path, args: argparse.Namespace):
    _write(
        out / "metadata.json",
        _dump_json(
            {
                "version": __version__,
                "command": args.command,
                "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            }
        ),
    )


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    if not args.config:
        raise ValidationError("--config is required for this command")
    try:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from exc
    config = ExperimentConfig.from_json(data)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out = args.out
    if args.threads is not None:
        config.threads = args.threads
    if getattr(args, "replicas", None) is not None:
        if args.replicas < 2:
            raise ValidationError("replicas: need at least 2")
        config.replicas = args.replicas
    return config


def _config_comment(config: ExperimentConfig) -> str:
    return "config: " + json.dumps(config.resolved(), sort_keys=True)


def cmd_simulate(args) -> int:
    config = _load_config(args)
    net = config.load_network()
    tilt = build_tilt(config.tilt, net, config.T, config.steps)
    out = Path(config.out)
    for v_index, volume in enumerate(config.V):
        paths = [
            simulate(
                net, volume, config.counts0(volume), config.T,
                config.volume_seed(v_index), tilt=tilt, stream=k,
            )
            for k in range(config.replicas)
        ]
        payload = {
            "config": config.resolved(),
            "V": volume,
            "paths": [p.to_json() for p in paths],
        }
        _write(out / f"simulate_V{volume}.json", _dump_json(payload))
        (out / f"simulate_V{volume}_r0.bin").write_bytes(paths[0].to_binary())
    _write_metadata(out, args)
    return EXIT_OK


def cmd_fluid(args) -> int:
    config = _load_config(args)
    net = config.load_network()
    tilt = build_tilt(config.tilt, net, config.T, config.steps)
    path = solve_perturbed(net, np.asarray(config.c0, dtype=float), tilt, config.T, config.steps)
    out = Path(config.out)
    _write(
        out / "fluid.csv",
        path.to_csv(
            species=list(net.species),
            comments=[_config_comment(config), "columns: t, c:<species>..., w:<reaction-index>..."],
        ),
    )
    _write(out / "fluid.json", _dump_json({"config": config.resolved(), "path": path.to_json()}))
    if not args.no_plot:
        from .plotting import plot_gridpath

        plot_gridpath(path, net.species, str(out / "fluid.png"))
    _write_metadata(out, args)
    return EXIT_OK


def _read_gridpath(path_file: str) -> GridPath:
    text = Path(path_file).read_text(encoding="utf-8")
    if path_file.endswith(".json"):
        data = json.loads(text)
        return GridPath.from_json(data.get("path", data))
    return GridPath.from_csv(text)


def cmd_rate(args) -> int:
    config = _load_config(args)
    if not args.path:
        raise ValidationError("--path <gridpath file> is required for the rate command")
    net = config.load_network()
    grid = _read_gridpath(args.path)
    tol = float(config.tolerances.get("rate_tol", 1e-9))
    report = evaluate_J(net, grid, tol=tol)
    payload = {"config": config.resolved(), "rate": report.to_json()}
    tilt = build_tilt(config.tilt, net, grid.horizon, len(grid.times) - 1)
    if tilt is not None:
        payload["G"] = evaluate_G(net, grid, tilt)
    out = Path(config.out)
    _write(out / "rate.json", _dump_json(payload))
    _write_metadata(out, args)
    return EXIT_OK


def cmd_tilt(args) -> int:
    config = _load_config(args)
    net = config.load_network()
    tilt = build_tilt(config.tilt, net, config.T, config.steps)
    if tilt is None:
        raise ValidationError("tilt: the tilt command needs a tilt spec in the config")
    center = None
    if config.event and config.event.get("kind") == "tube":
        center = solve_perturbed(net, np.asarray(config.c0, float), tilt, config.T, config.steps)
    event = build_event(config.event, net, center)
    rows = []
    for v_index, volume in enumerate(config.V):
        est = importance_estimate(
            net, volume, config.counts0(volume), config.T, event, tilt,
            config.replicas, config.volume_seed(v_index), threads=config.threads,
        )
        rows.append({"V": volume, **est.to_json()})
    out = Path(config.out)
    _write(out / "tilt_estimates.json", _dump_json({"config": config.resolved(), "estimates": rows}))
    lines = ["# " + _config_comment(config), "V,p_hat,stderr,ess,replicas"]
    for row in rows:
        lines.append(
            f"{row['V']},{row['p_hat']!r},{row['stderr']!r},{row['ess']!r},{row['replicas']}"
        )
    _write(out / "tilt_estimates.csv", "\n".join(lines) + "\n")
    _write_metadata(out, args)
    return EXIT_OK


def cmd_lln(args) -> int:
    config = _load_config(args)
    net = config.load_network()
    tilt = build_tilt(config.tilt, net, config.T, config.steps)
    reports = []
    for v_index, volume in enumerate(config.V):
        reports.append(
            lln_gap(
                net, volume, np.asarray(config.c0, dtype=float), config.T,
                config.replicas, config.volume_seed(v_index), tilt=tilt,
                steps=config.steps, threads=config.threads,
            )
        )
    out = Path(config.out)
    lines = ["# " + _config_comment(config), "V,mean,q50,q90,q99"]
    for rep in reports:
        lines.append(
            f"{rep.volume},{rep.mean!r},{rep.quantile(0.5)!r},"
            f"{rep.quantile(0.9)!r},{rep.quantile(0.99)!r}"
        )
    _write(out / "lln.csv", "\n".join(lines) + "\n")
    _write(
        out / "lln.json",
        _dump_json({"config": config.resolved(), "gaps": [r.to_json() for r in reports]}),
    )
    if not args.no_plot:
        from .plotting import plot_lln

        plot_lln(reports, str(out / "lln.png"))
    _write_metadata(out, args)
    return EXIT_OK


def cmd_ldp_slope(args) -> int:
    config = _load_config(args)
    report = ldp_slope_experiment(config)
    out = Path(config.out)
    _write(
        out / "slope.json",
        _dump_json({"config": config.resolved(), "slope": report.to_json()}),
    )
    lines = ["# " + _config_comment(config), "V,p_hat,stderr,ess,slope,ci_lo,ci_hi,ess_collapse"]
    for e in report.entries:
        lines.append(
            f"{e.volume},{e.p_hat!r},{e.stderr!r},{e.ess!r},{e.slope!r},"
            f"{e.ci_lo!r},{e.ci_hi!r},{int(e.ess_collapse)}"
        )
    _write(out / "slope.csv", "\n".join(lines) + "\n")
    if not args.no_plot:
        from .plotting import plot_slope

        plot_slope(report, str(out / "slope.png"))
    _write_metadata(out, args)
    if any(e.ess_collapse for e in report.entries):
        print("warning: ESS collapse at some volumes", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_girsanov_check(args) -> int:
    config = _load_config(args)
    report = girsanov_check(config)
    out = Path(config.out)
    _write(
        out / "girsanov.json",
        _dump_json({"config": config.resolved(), "check": report.to_json()}),
    )
    _write_metadata(out, args)
    if not report.passed:
        print("girsanov check FAILED", file=sys.stderr)
        return EXIT_NUMERICAL
    print("girsanov check passed")
    return EXIT_OK


def _roundtrip_artifacts(directory: str) -> list[str]:
    """Re-parse emitted numeric files and re-check their type invariants."""
    problems = []
    root = Path(directory)
    for csv_file in sorted(root.glob("*.csv")):
        text = csv_file.read_text(encoding="utf-8")
        header = next(
            (ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")), ""
        )
        if header.startswith("t,"):
            try:
                GridPath.from_csv(text)
            except Exception as exc:
                problems.append(f"{csv_file.name}: {exc}")
    for json_file in sorted(root.glob("*.json")):
        try:
            data = json.loads(json_file.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            problems.append(f"{json_file.name}: {exc}")
            continue
        if "paths" in data and "config" in data:
            try:
                net = ExperimentConfig.from_json(data["config"]).load_network()
                for p in data["paths"]:
                    JumpPath.from_json(p, net)
            except Exception as exc:
                problems.append(f"{json_file.name}: {exc}")
        if "path" in data:
            try:
                GridPath.from_json(data["path"])
            except Exception as exc:
                problems.append(f"{json_file.name}: {exc}")
    return problems


def cmd_validate(args) -> int:
    if args.artifacts:
        problems = _roundtrip_artifacts(args.artifacts)
        if problems:
            for p in problems:
                print(f"invalid artifact: {p}", file=sys.stderr)
            return EXIT_VALIDATION
        print("artifacts round-trip cleanly")
        return EXIT_OK
    config = _load_config(args)
    net = config.load_network()
    tolerances = config.tolerances
    report = validate_assumptions(
        net,
        np.asarray(config.c0, dtype=float),
        eps=float(tolerances.get("eps", 0.25)),
        grid=int(tolerances.get("grid", 64)),
        seed=config.seed,
    )
    out = Path(config.out)
    _write(
        out / "assumptions.json",
        _dump_json({"config": config.resolved(), "report": report.to_json()}),
    )
    _write_metadata(out, args)
    status = "pass" if report.all_passed else "FAIL"
    for name, item in report.items.items():
        print(f"  ({name}) {'pass' if item.passed else 'FAIL'}: {item.detail}")
    print(f"assumption validation: {status} (psi exponent {report.psi_exponent})")
    return EXIT_OK if report.all_passed else EXIT_NUMERICAL


_COMMANDS = {
    "simulate": cmd_simulate,
    "fluid": cmd_fluid,
    "rate": cmd_rate,
    "tilt": cmd_tilt,
    "lln": cmd_lln,
    "ldp-slope": cmd_ldp_slope,
    "girsanov-check": cmd_girsanov_check,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluxldp",
        description="Reaction-flux simulation and large-deviation verification runs.",
    )
    parser.add_argument("--version", action="version", version=f"fluxldp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("simulate", "sample exact jump trajectories"),
        ("fluid", "integrate the (tilted) reaction rate equation"),
        ("rate", "evaluate the rate functional on a stored grid path"),
        ("tilt", "importance-sample an event probability under a tilt"),
        ("lln", "measure sup-norm gaps to the fluid limit across volumes"),
        ("ldp-slope", "estimate -(1/V) log P(tube) across volumes"),
        ("girsanov-check", "compare tilted estimates against the exact oracle"),
        ("validate", "validate rate assumptions or round-trip emitted artifacts"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="JSON config file (ExperimentConfig fields)")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--out", default=None, help="override the output directory")
        cmd.add_argument("--threads", type=int, default=None, help="replica worker count")
        cmd.add_argument("--replicas", type=int, default=None, help="override the replica count")
        if name == "rate":
            cmd.add_argument("--path", help="grid-path file (CSV or JSON) to evaluate")
        if name in ("fluid", "lln", "ldp-slope"):
            cmd.add_argument("--no-plot", action="store_true", help="skip figure rendering")
        if name == "validate":
            cmd.add_argument("--artifacts", help="directory of emitted files to round-trip")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValidationError, NetworkSyntaxError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SimulationError, IntegrationError, ConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OracleError as exc:
        print(f"oracle infeasible: {exc}", file=sys.stderr)
        return EXIT_ORACLE


if __name__ == "__main__":
    sys.exit(main())
