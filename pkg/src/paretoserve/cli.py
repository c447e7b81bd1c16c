"""Operator entry points: run a server, run attacks, run experiment suites.

Every subcommand is deterministic given --seed (wall-clock report fields
aside), logs its effective configuration into output headers, and uses the
exit-code convention: 0 success, 2 configuration error, 3 protocol/connection
error, 4 attack infeasibility.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .attack import AttackBudget, campaign_report, run_campaign
from .errors import (
    BudgetExhausted,
    GranularityViolation,
    InfeasibleSpec,
    MalformedMessage,
    NoFeasibleVictim,
    OutOfRange,
    ZooFormatError,
)
from .fingerprint import QueryEndpoint, run_fingerprint
from .simlab import (
    TRADEOFF_FIELDS,
    complexity_csv,
    complexity_experiment,
    default_complexity_granularity,
    reference_zoo,
    tradeoff_csv,
    tradeoff_experiment,
)
from .wire import WireClient, make_server, serve_loop
from .zoo import GranularityConfig, load_zoo

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROTOCOL = 3
EXIT_ATTACK = 4


def _parse_endpoint(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"endpoint must be HOST:PORT, got {value!r}")
    return host, int(port)


def _int_list(value: str) -> list[int]:
    return [int(v) for v in value.split(",") if v]


def _float_list(value: str) -> list[float]:
    return [float(v) for v in value.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paretoserve")
    parser.add_argument("--config", type=Path, help="JSON file of flag defaults; flags override")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--format", choices=("json", "csv"), default="json",
                        help="stdout rendering for reports")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the model-less serving shim")
    serve.add_argument("--zoo", type=Path, required=True)
    serve.add_argument("--port", type=int, default=7421)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--epsilon", type=float, default=None,
                       help="enable the Laplace defense with this epsilon")
    serve.add_argument("--mode", choices=("service", "experiment"), default="service")

    fingerprint = sub.add_parser("fingerprint", help="recover the frontier over the wire")
    fingerprint.add_argument("--endpoint", type=_parse_endpoint, required=True)
    fingerprint.add_argument("--l-up", type=float, required=True)
    fingerprint.add_argument("--acc-g", type=float, required=True)
    fingerprint.add_argument("--lat-g", type=float, required=True)
    fingerprint.add_argument("--out", type=Path, default=None)

    attack = sub.add_parser("attack", help="run a full query campaign over the wire")
    attack.add_argument("--endpoint", type=_parse_endpoint, required=True)
    attack.add_argument("--latency-budget", type=float, required=True)
    attack.add_argument("--query-budget", type=int, default=4000)
    attack.add_argument("--mode", choices=("fingerprint", "naive"), default="fingerprint")
    attack.add_argument("--l-up", type=float, required=True)
    attack.add_argument("--acc-g", type=float, required=True)
    attack.add_argument("--lat-g", type=float, required=True)
    attack.add_argument("--out", type=Path, default=None,
                        help="base path; writes <out>.json and <out>.csv")

    experiment = sub.add_parser("experiment", help="run an in-process experiment suite")
    esub = experiment.add_subparsers(dest="suite", required=True)

    complexity = esub.add_parser("complexity", help="fingerprinting query complexity vs zoo size")
    complexity.add_argument("--sizes", type=_int_list, required=True)
    complexity.add_argument("--trials", type=int, default=10)
    complexity.add_argument("--acc-g", type=float, default=None)
    complexity.add_argument("--lat-g", type=float, default=None)
    complexity.add_argument("--l-up", type=float, default=None)
    complexity.add_argument("--out", type=Path, required=True)

    tradeoff = esub.add_parser("tradeoff", help="protection vs goodput across epsilons")
    tradeoff.add_argument("--zoo", type=Path, default=None,
                          help="zoo file; defaults to the built-in 12-model synthetic zoo")
    tradeoff.add_argument("--budgets", type=_float_list, default=[13.0])
    tradeoff.add_argument("--epsilons", type=_float_list, required=True)
    tradeoff.add_argument("--trials", type=int, default=30)
    tradeoff.add_argument("--query-budget", type=int, default=4000)
    tradeoff.add_argument("--out", type=Path, required=True)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config is not None:
        try:
            defaults = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read --config: {exc}")
        if not isinstance(defaults, dict):
            parser.error("--config must contain a JSON object")
        # Flags explicitly present on the command line override the file.
        stated = {a.lstrip("-").split("=")[0].replace("-", "_") for a in argv if a.startswith("--")}
        for key, value in defaults.items():
            attr = key.replace("-", "_")
            if hasattr(args, attr) and attr not in stated:
                setattr(args, attr, value)
    return args


def _effective_config(args: argparse.Namespace) -> dict:
    skip = {"config", "out", "command", "suite"}
    return {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k not in skip and v is not None
    }


def cmd_serve(args: argparse.Namespace) -> int:
    models, g = load_zoo(args.zoo)
    server = make_server(
        models, g, host=args.host, port=args.port, mode=args.mode,
        seed=args.seed, epsilon=args.epsilon,
    )
    frontier = server.router.frontier
    print(f"serving {len(frontier)} frontier models on {args.host}:{server.port} ({args.mode} mode)")
    if args.epsilon is not None:
        d = server.router.defense
        print(f"defense enabled: epsilon={args.epsilon} delta_acc={d.delta_acc} delta_lat={d.delta_lat}")
    try:
        serve_loop(server)
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def _emit_report(doc: dict, out: Path | None, fmt: str) -> None:
    text = json.dumps(doc, indent=2, sort_keys=False)
    if out is not None:
        out.write_text(text + "\n")
    if fmt == "json":
        print(text)
    else:
        for key, value in doc.items():
            print(f"{key},{json.dumps(value, sort_keys=True)}")


def cmd_fingerprint(args: argparse.Namespace) -> int:
    g = GranularityConfig(acc_g=args.acc_g, lat_g=args.lat_g, l_up=args.l_up)
    host, port = args.endpoint
    with WireClient(host, port, g) as client:
        ep = QueryEndpoint(client)
        estimate, wall = run_fingerprint(ep, g)
    doc = estimate.report(g, wall_clock_s=wall)
    doc["config"] = _effective_config(args)
    _emit_report(doc, args.out, args.format)
    return EXIT_OK


def cmd_attack(args: argparse.Namespace) -> int:
    g = GranularityConfig(acc_g=args.acc_g, lat_g=args.lat_g, l_up=args.l_up)
    host, port = args.endpoint
    budget = AttackBudget(latency_budget=args.latency_budget, query_budget=args.query_budget)
    t0 = time.perf_counter()
    with WireClient(host, port, g) as client:
        ep = QueryEndpoint(client)
        result = run_campaign(ep, budget, g, mode=args.mode)
    doc = campaign_report(result, seed=args.seed)
    doc["wall_clock_s"] = time.perf_counter() - t0
    doc["config"] = _effective_config(args)
    if args.out is not None:
        args.out.with_suffix(".json").write_text(json.dumps(doc, indent=2) + "\n")
        pmf = result.pmf() or {}
        lines = ["# schema_version=1"]
        lines += [f"# {k}={v}" for k, v in sorted(doc["config"].items())]
        lines.append("mode,q_fingerprint,q_label,q_success,q_fail")
        lines.append(
            f"{result.mode},{result.queries_fingerprinting},{result.queries_labeling},"
            f"{result.queries_successful},{result.queries_failed}"
        )
        lines.append("model_id,pmf")
        lines += [f"{mid},{p!r}" for mid, p in sorted(pmf.items())]
        args.out.with_suffix(".csv").write_text("\n".join(lines) + "\n")
    _emit_report(doc, None, args.format)
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    if args.suite == "complexity":
        defaults = default_complexity_granularity()
        g = GranularityConfig(
            acc_g=args.acc_g if args.acc_g is not None else defaults.acc_g,
            lat_g=args.lat_g if args.lat_g is not None else defaults.lat_g,
            l_up=args.l_up if args.l_up is not None else defaults.l_up,
        )
        result = complexity_experiment(args.sizes, args.trials, g, args.seed)
        config = _effective_config(args)
        args.out.write_text(complexity_csv(result, config))
        print(f"wrote {len(result.rows)} rows to {args.out} (r2={result.r2:.4f})")
        return EXIT_OK
    if args.suite == "tradeoff":
        if args.zoo is not None:
            models, g = load_zoo(args.zoo)
        else:
            models, g = reference_zoo()
        rows = tradeoff_experiment(
            models, g, args.budgets, args.epsilons, args.trials, args.seed,
            query_budget=args.query_budget,
        )
        config = _effective_config(args)
        args.out.write_text(tradeoff_csv(rows, config))
        print(f"wrote {len(rows)} rows to {args.out} ({','.join(TRADEOFF_FIELDS)})")
        return EXIT_OK
    raise AssertionError(f"unknown suite {args.suite!r}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = _apply_config_file(parser, list(sys.argv[1:] if argv is None else argv))
    try:
        if args.command == "serve":
            return cmd_serve(args)
        if args.command == "fingerprint":
            return cmd_fingerprint(args)
        if args.command == "attack":
            return cmd_attack(args)
        if args.command == "experiment":
            return cmd_experiment(args)
        raise AssertionError(f"unknown command {args.command!r}")
    except (NoFeasibleVictim, BudgetExhausted) as exc:
        print(f"attack infeasible: {exc}", file=sys.stderr)
        return EXIT_ATTACK
    except (MalformedMessage, OutOfRange, ConnectionError, TimeoutError) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (ZooFormatError, GranularityViolation, InfeasibleSpec, OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def console_entry() -> None:
    sys.exit(main())
