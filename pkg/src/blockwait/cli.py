"""Command-line interface.

Subcommands cover the full workflow: simulate a mempool into a JSONL
store, ingest from a live node, train/evaluate/sweep models, print the
0-100 gwei curve for a saved snapshot, and serve predictions over HTTP
with background retraining.

Configuration precedence: CLI flags beat --set pairs, which beat the
--config file, which beats built-in defaults. The node URL may also come
from the ETH_RPC_URL environment variable (flags win).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import threading
import time

from . import rpc
from .config import ConfigError, build_dataclass, load_config_file, parse_set_overrides
from .core import TxRecord
from .forest import ForestConfig
from .metrics import render_table
from .mlp import MlpConfig
from .pipeline import (
    KINDS,
    Scheduler,
    SchedulerConfig,
    SnapshotRegistry,
    evaluate_split,
    load_snapshot,
    predict_curve,
    render_curve,
    render_sweep,
    save_snapshot,
    sweep,
    train_snapshot,
)
from .server import build_server
from .sim import SimConfig, generate_dataset
from .store import DatasetStore

log = logging.getLogger(__name__)

_MODEL_SECTIONS = {"forest": ForestConfig, "mlp": MlpConfig}


def _config_values(args) -> dict[str, str]:
    values: dict[str, str] = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    values.update(parse_set_overrides(getattr(args, "set", None)))
    return values


def _model_config(kind: str, values: dict[str, str]):
    cls = _MODEL_SECTIONS.get(kind)
    if cls is None:
        return None
    return build_dataclass(cls, values, kind)


def _apply_flag_overrides(config, args, mapping: dict[str, str]):
    """Explicit CLI flags beat config-file/--set values."""
    overrides = {}
    for flag, field in mapping.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    return dataclasses.replace(config, **overrides) if overrides else config


def _window_blocks(args) -> int | None:
    # --window-blocks 0 means "use the whole store"
    return None if args.window_blocks == 0 else args.window_blocks


def _cmd_simulate(args) -> int:
    values = _config_values(args)
    config = build_dataclass(SimConfig, values, "sim")
    config = _apply_flag_overrides(
        config,
        args,
        {
            "seed": "seed",
            "horizon": "horizon",
            "arrival_rate": "arrival_rate",
            "block_interval": "block_interval",
            "block_capacity": "block_capacity",
            "pool_capacity": "pool_capacity",
            "gas_price_median_gwei": "gas_price_median_gwei",
            "gas_price_sigma_log": "gas_price_sigma_log",
            "failure_rate": "failure_rate",
        },
    )
    if args.exponential_blocks:
        config = dataclasses.replace(config, exponential_blocks=True)
    records = generate_dataset(config)
    store = DatasetStore(args.out)
    written = store.append(records)
    print(
        f"simulated {written} confirmed transactions over "
        f"{int(config.horizon / config.block_interval)} blocks "
        f"(load ratio {config.load_ratio:.2f}) -> {args.out}"
    )
    return 0


def _cmd_train(args) -> int:
    values = _config_values(args)
    store = DatasetStore(args.store)
    snapshot = train_snapshot(
        store,
        args.model,
        config=_model_config(args.model, values),
        window_blocks=_window_blocks(args),
    )
    path = save_snapshot(snapshot, args.out)
    print(
        f"trained {snapshot.kind} v{snapshot.version} on "
        f"{snapshot.window_descriptor} -> {path}"
    )
    return 0


def _cmd_evaluate(args) -> int:
    values = _config_values(args)
    store = DatasetStore(args.store)
    result = evaluate_split(
        store,
        args.model,
        config=_model_config(args.model, values),
        train_fraction=args.train_fraction,
        seed=args.seed,
    )
    if args.json:
        print(result.to_json_line())
    else:
        print(render_table([result]))
    return 0


def _cmd_curve(args) -> int:
    snapshot = load_snapshot(args.snapshot)
    template = TxRecord(
        tx_hash="0x" + "0" * 64,
        sender="0x" + "0" * 40,
        nonce=args.nonce,
        gas_price=0,
        gas_limit=args.gas_limit,
        value=args.value_wei,
    )
    points = predict_curve(snapshot, template=template)
    if args.json:
        import json as _json

        print(
            _json.dumps(
                {
                    "model": snapshot.kind,
                    "model_version": snapshot.version,
                    "points": [dataclasses.asdict(p) for p in points],
                }
            )
        )
    else:
        print(f"{snapshot.kind} v{snapshot.version} ({snapshot.window_descriptor})")
        print(render_curve(points))
    return 0


def _cmd_sweep(args) -> int:
    store = DatasetStore(args.store)
    results = sweep(store, args.model, train_fraction=args.train_fraction, seed=args.seed)
    print(render_sweep(results))
    return 0


def _cmd_serve(args) -> int:
    values = _config_values(args)
    store = DatasetStore(args.store)
    registry = SnapshotRegistry()
    kinds = [k.strip() for k in args.models.split(",") if k.strip()]
    unknown = [k for k in kinds if k not in KINDS]
    if unknown:
        raise ValueError(f"unknown model kinds: {unknown}")

    scheduler_config = build_dataclass(SchedulerConfig, values, "scheduler")
    if args.window_blocks is not None:
        scheduler_config = dataclasses.replace(
            scheduler_config, window_blocks=args.window_blocks
        )
    model_configs = {k: _model_config(k, values) for k in kinds}

    live = []
    for kind in kinds:
        try:
            snapshot = train_snapshot(
                store,
                kind,
                config=model_configs.get(kind),
                window_blocks=scheduler_config.window_blocks,
                registry=registry,
            )
            live.append(kind)
            print(f"trained {kind} v{snapshot.version} on {snapshot.window_descriptor}")
        except Exception as exc:
            print(f"warning: initial training of {kind} failed: {exc}", file=sys.stderr)
    if not live:
        raise RuntimeError(f"no model could be trained from store {args.store}")

    scheduler = None
    if not args.no_scheduler:
        scheduler = Scheduler(
            store,
            registry,
            config=scheduler_config,
            kinds=live,
            model_configs=model_configs,
        ).start()

    def retrain(kind):
        return train_snapshot(
            store,
            kind,
            config=model_configs.get(kind),
            window_blocks=scheduler_config.window_blocks,
            registry=registry,
        )

    host, _, port = args.address.partition(":")
    server = build_server(
        registry,
        address=(host or "127.0.0.1", int(port or 8000)),
        retrain=retrain,
        default_kind=live[0],
    )
    print(f"serving on http://{server.server_address[0]}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        print("shutting down")
    finally:
        if scheduler is not None:
            scheduler.stop()
        server.server_close()
    return 0


def _cmd_ingest(args) -> int:
    url = args.url or os.environ.get("ETH_RPC_URL")
    if not url:
        raise ValueError("no node URL: pass --url or set ETH_RPC_URL")
    endpoint = rpc.NodeEndpoint(
        url=url, request_timeout=args.timeout, poll_interval=args.poll_interval
    )
    client = rpc.JsonRpcClient(endpoint)
    store = DatasetStore(args.store)
    stop = threading.Event()

    pending_thread = threading.Thread(
        target=rpc.watch_pending, args=(client, store, stop), daemon=True
    )
    pending_thread.start()
    print(f"ingesting from {url} into {args.store} (Ctrl-C to stop)")
    try:
        if args.duration is not None:
            deadline = time.monotonic() + args.duration
            while time.monotonic() < deadline:
                rpc.watch_blocks(client, store, stop=stop, max_polls=1)
                time.sleep(endpoint.poll_interval)
        else:
            rpc.watch_blocks(client, store, stop=stop)
    except KeyboardInterrupt:
        print("stopping ingestion")
    finally:
        stop.set()
        pending_thread.join(timeout=5)
    print(f"store now holds {len(store)} records")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockwait",
        description="Predict how many blocks an Ethereum transaction waits before confirmation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument(
            "--set",
            action="append",
            metavar="SECTION.KEY=VALUE",
            help="override one config key (repeatable)",
        )

    p = sub.add_parser("simulate", help="generate a synthetic dataset into a JSONL store")
    common(p)
    p.add_argument("--out", required=True, help="output JSONL store path")
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=float, help="simulated seconds")
    p.add_argument("--arrival-rate", type=float, dest="arrival_rate")
    p.add_argument("--block-interval", type=float, dest="block_interval")
    p.add_argument("--block-capacity", type=int, dest="block_capacity")
    p.add_argument("--pool-capacity", type=int, dest="pool_capacity")
    p.add_argument("--gas-price-median-gwei", type=float, dest="gas_price_median_gwei")
    p.add_argument("--gas-price-sigma-log", type=float, dest="gas_price_sigma_log")
    p.add_argument("--failure-rate", type=float, dest="failure_rate")
    p.add_argument("--exponential-blocks", action="store_true", dest="exponential_blocks")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="train one model on the trailing window")
    common(p)
    p.add_argument("--store", required=True)
    p.add_argument("--model", required=True, choices=KINDS)
    p.add_argument("--out", required=True, help="snapshot output path")
    p.add_argument(
        "--window-blocks",
        type=int,
        default=100,
        help="trailing window size in blocks; 0 uses the whole store",
    )
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="80/20 split evaluation on a store")
    common(p)
    p.add_argument("--store", required=True)
    p.add_argument("--model", required=True, choices=(*KINDS, "baseline"))
    p.add_argument("--train-fraction", type=float, default=0.8, dest="train_fraction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true", help="print a JSON line instead of a table")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("curve", help="0-100 gwei prediction curve from a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--gas-limit", type=int, default=21000, dest="gas_limit")
    p.add_argument("--value-wei", type=int, default=0, dest="value_wei")
    p.add_argument("--nonce", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_curve)

    p = sub.add_parser("sweep", help="evaluate every variant of a model kind")
    common(p)
    p.add_argument("--store", required=True)
    p.add_argument("--model", required=True, choices=("forest", "mlp"))
    p.add_argument("--train-fraction", type=float, default=0.8, dest="train_fraction")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("serve", help="train, retrain on an interval, and serve HTTP")
    common(p)
    p.add_argument("--store", required=True)
    p.add_argument("--address", default="127.0.0.1:8000")
    p.add_argument("--models", default="forest,glm", help="comma-separated model kinds")
    p.add_argument("--window-blocks", type=int, dest="window_blocks")
    p.add_argument("--no-scheduler", action="store_true", dest="no_scheduler")
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("ingest", help="watch a node and append confirmed records")
    common(p)
    p.add_argument("--store", required=True)
    p.add_argument("--url", help="JSON-RPC endpoint (or ETH_RPC_URL)")
    p.add_argument("--poll-interval", type=float, default=2.0, dest="poll_interval")
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--duration", type=float, help="stop after this many seconds")
    p.set_defaults(func=_cmd_ingest)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("BLOCKWAIT_LOG", "WARNING"),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, LookupError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
