"""Command line entry points.

    edgefed serve --config configs/service.yaml
    edgefed hash-password --user alice
    edgefed jitter analyze trace.csv --rate 10000000 --payload 1250
    edgefed jitter loopback --duration 5 --rate 10000000
    edgefed jitter demo-trace out.csv
"""

from __future__ import annotations

import argparse
import getpass
import json
import logging
import signal
import sys

from . import __version__
from .api import ApiServer
from .app import ServiceConfig, build_authenticator, build_core
from .auth import hash_password
from .jitter import (
    build_profile_trace,
    compute_jitter,
    dump_trace_csv,
    load_trace_csv,
    measure_loopback_jitter,
)


def _report_text(report) -> str:
    lines = [
        f"intervals: {len(report.per_interval_ms)}",
        f"mean:      {report.mean_ms:.4f} ms",
        f"p95:       {report.p95_ms:.4f} ms",
        f"max:       {report.max_ms:.4f} ms",
        f"spikes (> {report.spike_threshold_ms:g} ms): {len(report.spike_intervals)}",
    ]
    for start, end in report.spike_intervals:
        lines.append(f"  window {start:.3f}s .. {end:.3f}s")
    if report.loss_fraction is not None:
        flag = " (lossy)" if report.lossy else ""
        lines.append(f"loss:      {report.loss_fraction * 100:.2f}%{flag}")
    return "\n".join(lines)


def cmd_serve(args) -> int:
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    config = ServiceConfig.load(args.config)
    if args.host:
        config.host = args.host
    if args.port:
        config.port = args.port
    core = build_core(config)
    authenticator = build_authenticator(config, core.clock)
    server = ApiServer(core, authenticator, host=config.host, port=config.port,
                       portal_dir=config.portal_dir).start()
    host, port = server.address
    print(f"edgefed {__version__} listening on http://{host}:{port}")
    stop = {"flag": False}

    def handle_signal(signum, frame):
        stop["flag"] = True

    signal.signal(signal.SIGINT, handle_signal)
    signal.signal(signal.SIGTERM, handle_signal)
    try:
        while not stop["flag"]:
            signal.pause()
    except (KeyboardInterrupt, AttributeError):
        pass
    print("shutting down")
    server.stop()
    core.close()
    return 0


def cmd_hash_password(args) -> int:
    password = args.password or getpass.getpass("password: ")
    entry = hash_password(password, salt_hex=args.salt)
    doc = {
        "user_id": args.user,
        "role": args.role,
        "password": entry,
    }
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def cmd_jitter_analyze(args) -> int:
    trace = load_trace_csv(args.trace, args.rate, args.payload)
    report = compute_jitter(trace, spike_threshold_ms=args.spike_threshold)
    if args.json:
        print(json.dumps(report.to_dict(), sort_keys=True))
    else:
        print(_report_text(report))
    return 0


def cmd_jitter_loopback(args) -> int:
    report = measure_loopback_jitter(args.duration, args.rate, args.payload,
                                     spike_threshold_ms=args.spike_threshold)
    if args.json:
        print(json.dumps(report.to_dict(), sort_keys=True))
    else:
        print(_report_text(report))
    return 0


def cmd_jitter_demo_trace(args) -> int:
    trace = build_profile_trace(duration_s=args.duration, rate_bps=args.rate,
                                payload_bytes=args.payload, seed=args.seed)
    dump_trace_csv(trace, args.out)
    print(f"wrote {len(trace.arrivals)} arrivals to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgefed")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the federation service")
    serve.add_argument("--config", required=True)
    serve.add_argument("--host", default=None)
    serve.add_argument("--port", type=int, default=None)
    serve.add_argument("-v", "--verbose", action="store_true")
    serve.set_defaults(fn=cmd_serve)

    hashpw = sub.add_parser("hash-password", help="generate a user file entry")
    hashpw.add_argument("--user", default="user")
    hashpw.add_argument("--role", default="user", choices=["user", "admin"])
    hashpw.add_argument("--password", default=None)
    hashpw.add_argument("--salt", default=None, help="hex salt (random when omitted)")
    hashpw.set_defaults(fn=cmd_hash_password)

    jitter = sub.add_parser("jitter", help="jitter analysis tools")
    jsub = jitter.add_subparsers(dest="jitter_command", required=True)

    analyze = jsub.add_parser("analyze", help="analyze a seq,timestamp_us CSV trace")
    analyze.add_argument("trace")
    analyze.add_argument("--rate", type=float, default=10_000_000.0)
    analyze.add_argument("--payload", type=int, default=1250)
    analyze.add_argument("--spike-threshold", type=float, default=1.75)
    analyze.add_argument("--json", action="store_true")
    analyze.set_defaults(fn=cmd_jitter_analyze)

    loopback = jsub.add_parser("loopback", help="measure loopback UDP jitter")
    loopback.add_argument("--duration", type=float, default=5.0)
    loopback.add_argument("--rate", type=float, default=10_000_000.0)
    loopback.add_argument("--payload", type=int, default=1250)
    loopback.add_argument("--spike-threshold", type=float, default=1.75)
    loopback.add_argument("--json", action="store_true")
    loopback.set_defaults(fn=cmd_jitter_loopback)

    demo = jsub.add_parser("demo-trace", help="write a synthetic profile trace")
    demo.add_argument("out")
    demo.add_argument("--duration", type=float, default=40.0)
    demo.add_argument("--rate", type=float, default=10_000_000.0)
    demo.add_argument("--payload", type=int, default=1250)
    demo.add_argument("--seed", type=int, default=7)
    demo.set_defaults(fn=cmd_jitter_demo_trace)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
