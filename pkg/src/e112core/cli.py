"""Command-line entry points: the service binary and the scenario harness."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .clock import ManualClock, SystemClock
from .config import load_config
from .errors import AssertionFailed, SchemaError, ServiceUnreachable
from .gateway import GatewayServer
from .harness import make_flood_scenario, parse_scenario, run
from .providers import ProviderSet
from .service import CoreService


def _env(name: str, cast=str):
    raw = os.environ.get(name)
    if raw is None:
        return None
    if cast is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return cast(raw)


def server_main(argv: list[str] | None = None) -> int:
    # Flags win over E112_* environment variables, which win over the
    # config file, which wins over defaults.
    parser = argparse.ArgumentParser(
        prog="e112-server",
        description="Run an emergency-coordination service node.")
    parser.add_argument("--port", type=int, default=_env("E112_PORT", int))
    parser.add_argument("--store", default=_env("E112_STORE"),
                        help="memory or file:<path> (default: memory)")
    parser.add_argument("--config", default=_env("E112_CONFIG"),
                        help="JSON config file")
    parser.add_argument("--cell-deg", type=float, dest="cell_deg",
                        default=_env("E112_CELL_DEG", float),
                        help="location index grid cell size in degrees")
    parser.add_argument("--fault-injection", action="store_true",
                        dest="fault_injection",
                        default=_env("E112_FAULT_INJECTION", bool),
                        help="enable /test surfaces and fault flags (test builds)")
    parser.add_argument("--manual-clock", action="store_true",
                        help="drive time via /test/clock/advance (implies test use)")
    args = parser.parse_args(argv)

    overrides = {"port": args.port, "store": args.store, "cell_deg": args.cell_deg,
                 "fault_injection": args.fault_injection or None}
    config = load_config(args.config, overrides)
    clock = ManualClock() if args.manual_clock else SystemClock()
    service = CoreService(config=config,
                          clock=clock,
                          providers=ProviderSet.fakes(push_drop_rate=config.push_drop_rate))
    if not args.manual_clock:
        service.start_background()
    server = GatewayServer(service)
    print(f"e112-core listening on {server.url} "
          f"(store={config.store}, fault_injection={config.fault_injection})",
          flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


def harness_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="e112-harness",
        description="Replay a scripted disaster scenario against a running node.")
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="execute a scenario file")
    runp.add_argument("scenario", help="path to the scenario JSON")
    runp.add_argument("--endpoint", required=True, help="service base URL")
    runp.add_argument("--report", default=None, help="write the JSON report here")

    genp = sub.add_parser("generate-flood",
                          help="write the built-in flood drill scenario")
    genp.add_argument("out", help="output path")
    genp.add_argument("--seed", type=int, default=7)
    genp.add_argument("--users", type=int, default=100)
    genp.add_argument("--inside", type=int, default=60)

    args = parser.parse_args(argv)

    if args.command == "generate-flood":
        doc = make_flood_scenario(args.seed, args.users, args.inside)
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")
        print(f"wrote {args.out}")
        return 0

    try:
        scenario = parse_scenario(args.scenario)
    except SchemaError as e:
        print(f"scenario error at {e.details.get('path', '$')}: {e.message}",
              file=sys.stderr)
        return 2
    try:
        report = run(scenario, args.endpoint, report_path=args.report)
    except ServiceUnreachable as e:
        print(f"service unreachable: {e.message}", file=sys.stderr)
        return 3
    except AssertionFailed as e:
        report = e.details.get("report")
        if report is not None:
            _print_report(report)
            if args.report:
                with open(args.report, "w", encoding="utf-8") as f:
                    json.dump(report, f, indent=2, sort_keys=True)
                    f.write("\n")
        print(f"FAIL: {e.message}", file=sys.stderr)
        return 1
    _print_report(report)
    return 0


def _print_report(report: dict) -> None:
    det = report["deterministic"]
    overall = det["overall"]
    print(f"events executed: {det['events_executed']}")
    print(f"delivery precision: {overall['precision']}  recall: {overall['recall']}  "
          f"duplicates: {overall['duplicate_deliveries']}")
    if overall["latency_logical"]:
        lat = overall["latency_logical"]
        print(f"alert-to-push latency (logical event steps): "
              f"p50={lat['p50']} p95={lat['p95']} p99={lat['p99']}")
    for entry in det["assertions"]:
        flag = "PASS" if entry["pass"] else "FAIL"
        print(f"  [{flag}] {entry['name']}: {entry['detail']}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(server_main())
