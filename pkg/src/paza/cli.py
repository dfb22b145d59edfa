"""Command-line entry points.

    paza simulate --cameras 4 --fps 10 --duration 60 --seed 7 -o trace.jsonl
    paza replay trace.jsonl --mock-script script.json --report report.json
    paza evaluate --manifest manifest.json --endpoint http://host:port
    paza cost --gpu-hr 0.40 --hours 12 --days 30 --stores 10
    paza serve --port 8080 --alert-dir alerts/
    paza mock-vlm --script script.json --port 9090
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import threading

from .alerts import AlertStore
from .analytics import CostParams, call_volume_projection, cost_model
from .config import load_pipeline_config
from .evaluate import evaluate_clips
from .events import ParseError, parse_frame_event
from .mockvlm import MockScript, MockVlmServer
from .pipeline import Pipeline, run_replay
from .service import serve
from .simulate import (
    ScenarioConfig,
    generate_trace,
    read_truth,
    truth_path_for,
    write_trace,
)

logger = logging.getLogger(__name__)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--endpoint", help="VLM endpoint base URL (overrides VLM_API_URL)")
    p.add_argument("--model", help="VLM model name (overrides VLM_MODEL_NAME)")
    p.add_argument("--rate-limit", type=int, help="global VLM calls per minute")
    p.add_argument("--tau-d", type=float, help="dwell threshold, seconds")
    p.add_argument("--tau-c", type=float, help="per-person cooldown, seconds")
    p.add_argument("--rho", type=float, help="object proximity fraction")
    p.add_argument("--theta-h", type=float, help="hand-to-torso fraction")
    p.add_argument("--clip-k", type=int, help="frames per clip")
    p.add_argument("--buffer-t", type=float, help="buffer horizon, seconds")
    p.add_argument("--retention-h", type=float, help="snapshot retention, hours")
    p.add_argument("--alert-dir", help="directory for the alert log and snapshots")


def _resolve_config(args) -> "object":
    pf = {}
    gw = {}
    top = {}
    if args.endpoint is not None:
        gw["api_url"] = args.endpoint
    if getattr(args, "model", None) is not None:
        gw["model_name"] = args.model
    if args.rate_limit is not None:
        pf["rate_limit_per_min"] = args.rate_limit
        gw["rate_limit_per_min"] = args.rate_limit
    for flag, name in (
        ("tau_d", "tau_d_s"),
        ("tau_c", "tau_c_s"),
        ("rho", "rho"),
        ("theta_h", "theta_h"),
        ("clip_k", "clip_frames_k"),
        ("buffer_t", "buffer_horizon_t_s"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            pf[name] = value
    if args.retention_h is not None:
        top["retention_h"] = args.retention_h
    if args.alert_dir is not None:
        top["alert_dir"] = args.alert_dir
    return load_pipeline_config(
        args.config, prefilter_overrides=pf, gateway_overrides=gw, top_overrides=top
    )


def _cmd_simulate(args) -> int:
    cfg = ScenarioConfig(
        cameras=args.cameras,
        fps=args.fps,
        duration_s=args.duration,
        arrival_rate_per_min=args.arrival_rate,
        browse_fraction=args.browse_frac,
        pickup_fraction=args.pickup_frac,
        conceal_fraction=args.conceal_frac,
        seed=args.seed,
    )
    events, truths = generate_trace(cfg)
    write_trace(events, truths, args.output)
    print(f"wrote {len(events)} events to {args.output} "
          f"({len(truths)} shoppers, truth sidecar {truth_path_for(args.output)})")
    return 0


def _iter_trace(path: str):
    fh = sys.stdin if path == "-" else open(path, encoding="utf-8")
    try:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield parse_frame_event(line)
            except ParseError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    finally:
        if fh is not sys.stdin:
            fh.close()


def _cmd_replay(args) -> int:
    cfg = _resolve_config(args)
    truths = None
    if args.trace != "-":
        sidecar = truth_path_for(args.trace)
        if sidecar.exists():
            truths = read_truth(sidecar)

    mock = None
    if args.mock_script:
        mock = MockVlmServer(MockScript.from_file(args.mock_script)).start()
        cfg.gateway.api_url = mock.url
        if not cfg.gateway.model_name:
            cfg.gateway.model_name = "mock-vlm"
    if args.no_vlm:
        cfg.gateway.api_url = ""

    try:
        try:
            pipeline = run_replay(_iter_trace(args.trace), cfg, truths=truths)
        except ParseError as exc:
            print(f"trace parse failure: {exc}", file=sys.stderr)
            return 2
        report_json = pipeline.report_json()
        if args.report:
            with open(args.report, "w", encoding="utf-8") as fh:
                fh.write(report_json)
        print(report_json, end="")
        return 0
    finally:
        if mock is not None:
            mock.stop()


def _cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    if not cfg.gateway.api_url:
        print("evaluate requires --endpoint or VLM_API_URL", file=sys.stderr)
        return 2
    report = evaluate_clips(args.manifest, cfg.gateway)
    text = json.dumps(report, sort_keys=True, indent=2)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def _cmd_cost(args) -> int:
    params = CostParams(
        gpu_usd_per_hr=args.gpu_hr,
        hours_per_day=args.hours,
        days_per_month=args.days,
        stores_sharing=args.stores,
        db_usd_month=(args.db_low, args.db_high),
        network_usd_month=(args.net_low, args.net_high),
        vlm_usd_month=(args.vlm_low, args.vlm_high),
    )
    breakdown = cost_model(params)
    low, high = call_volume_projection(
        args.calls_hr_low, args.calls_hr_high, args.hours, args.days
    )
    print(f"VLM GPU share per store: ${breakdown['vlm_per_store']:.2f}/month "
          f"(${args.gpu_hr:.2f}/hr x {args.hours:g}h x {args.days:g}d / {args.stores} stores)")
    for name, (lo, hi) in breakdown["components"].items():
        print(f"  {name:<8} ${lo:g}-{hi:g}/month")
    print(f"  total    ${breakdown['total_low']:g}-{breakdown['total_high']:g}/month")
    print(f"projected VLM calls/month: {low:g}-{high:g} "
          f"({args.calls_hr_low:g}-{args.calls_hr_high:g}/hr x {args.hours:g}h x {args.days:g}d)")
    return 0


def _cmd_serve(args) -> int:
    cfg = _resolve_config(args)
    store = AlertStore(cfg.alert_dir) if cfg.alert_dir else None
    pipeline = Pipeline(cfg, alert_store=store)
    server = serve(pipeline, port=args.port, tick_s=args.tick_s)
    print(f"paza service listening on {server.url}", flush=True)
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


def _cmd_mock_vlm(args) -> int:
    script = MockScript.from_file(args.script) if args.script else MockScript.always(
        "CONFIRMED\nConfidence: 85\nPerson conceals an item."
    )
    server = MockVlmServer(script, port=args.port).start()
    print(f"mock VLM listening on {server.url}", flush=True)
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paza", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic shopper trace")
    p.add_argument("--cameras", type=int, default=4)
    p.add_argument("--fps", type=int, default=10)
    p.add_argument("--duration", type=int, default=60, help="seconds")
    p.add_argument("--arrival-rate", type=float, default=6.0, help="shoppers/min/camera")
    p.add_argument("--browse-frac", type=float, default=0.08)
    p.add_argument("--pickup-frac", type=float, default=0.03)
    p.add_argument("--conceal-frac", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("replay", help="replay a trace through the pipeline")
    p.add_argument("trace", help="trace JSONL path, or - for stdin")
    p.add_argument("--mock-script", help="mock VLM script (starts an in-process mock)")
    p.add_argument("--report", help="write the run report JSON here")
    p.add_argument("--no-vlm", action="store_true", help="trigger-only dry run")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("evaluate", help="run the offline clip evaluation protocol")
    p.add_argument("--manifest", required=True)
    p.add_argument("--report")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("cost", help="print the monthly cost model")
    p.add_argument("--gpu-hr", type=float, default=0.40)
    p.add_argument("--hours", type=float, default=12.0)
    p.add_argument("--days", type=float, default=30.0)
    p.add_argument("--stores", type=int, default=10)
    p.add_argument("--db-low", type=float, default=5.0)
    p.add_argument("--db-high", type=float, default=15.0)
    p.add_argument("--net-low", type=float, default=5.0)
    p.add_argument("--net-high", type=float, default=10.0)
    p.add_argument("--vlm-low", type=float, default=20.0)
    p.add_argument("--vlm-high", type=float, default=60.0)
    p.add_argument("--calls-hr-low", type=float, default=10.0)
    p.add_argument("--calls-hr-high", type=float, default=60.0)
    p.set_defaults(func=_cmd_cost)

    p = sub.add_parser("serve", help="run the live ingest + dashboard API service")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--tick-s", type=float, default=1.0)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("mock-vlm", help="run the scriptable mock VLM server")
    p.add_argument("--script", help="mock script JSON; defaults to always-CONFIRMED")
    p.add_argument("--port", type=int, default=0)
    p.set_defaults(func=_cmd_mock_vlm)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
