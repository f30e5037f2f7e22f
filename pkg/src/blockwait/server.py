"""HTTP prediction service over immutable snapshots.

Stateless request handling: every request resolves one complete snapshot
from the registry, so responses during a retrain swap are always
consistent (old or new model, never a mixture).
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional
from urllib.parse import parse_qs, urlparse

from .core import TxRecord
from .pipeline import KINDS, SnapshotRegistry, predict_curve, predict_one
from .store import EmptyWindowError

log = logging.getLogger(__name__)

_ZERO_ADDRESS = "0x" + "0" * 40


class _BadRequest(ValueError):
    pass


def _query_number(query: dict, name: str, default=None, required: bool = False):
    if name not in query:
        if required:
            raise _BadRequest(f"missing query parameter {name!r}")
        return default
    raw = query[name][0]
    try:
        value = float(raw)
    except ValueError:
        raise _BadRequest(f"{name} must be a number, got {raw!r}")
    if value < 0:
        raise _BadRequest(f"{name} must be >= 0, got {raw}")
    return value


class _Handler(BaseHTTPRequestHandler):
    server_version = "blockwait"

    # -- plumbing ----------------------------------------------------------
    def log_message(self, fmt, *args):  # route through logging, not stderr
        log.debug("%s %s", self.address_string(), fmt % args)

    def _send(self, code: int, body: dict) -> None:
        data = json.dumps(body).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _resolve_kind(self, query: dict) -> str:
        kind = query.get("model", [self.server.default_kind])[0]
        if kind not in KINDS:
            raise _BadRequest(f"unknown model {kind!r}; expected one of {list(KINDS)}")
        return kind

    def _snapshot(self, kind: str):
        snapshot = self.server.registry.get(kind)
        if snapshot is None:
            self._send(503, {"error": f"no live snapshot for model {kind!r}", "model": kind})
            return None
        return snapshot

    # -- routes ------------------------------------------------------------
    def do_GET(self):
        url = urlparse(self.path)
        query = parse_qs(url.query)
        try:
            if url.path == "/health":
                self._send(
                    200,
                    {"status": "ok", "models": self.server.registry.versions()},
                )
            elif url.path == "/predict":
                self._handle_predict(query)
            elif url.path == "/curve":
                self._handle_curve(query)
            else:
                self._send(404, {"error": f"no route {url.path}"})
        except _BadRequest as exc:
            self._send(400, {"error": str(exc)})
        except Exception as exc:  # pragma: no cover - defensive
            log.exception("request failed")
            self._send(500, {"error": str(exc)})

    def do_POST(self):
        url = urlparse(self.path)
        query = parse_qs(url.query)
        try:
            if url.path == "/retrain":
                self._handle_retrain(query)
            else:
                self._send(404, {"error": f"no route {url.path}"})
        except _BadRequest as exc:
            self._send(400, {"error": str(exc)})
        except Exception as exc:  # pragma: no cover - defensive
            log.exception("request failed")
            self._send(500, {"error": str(exc)})

    def _handle_predict(self, query: dict) -> None:
        kind = self._resolve_kind(query)
        gas_price_gwei = _query_number(query, "gas_price_gwei", required=True)
        gas_limit = _query_number(query, "gas_limit", required=True)
        value_wei = _query_number(query, "value_wei", required=True)
        nonce = _query_number(query, "nonce", default=0.0)
        if gas_limit < 1:
            raise _BadRequest(f"gas_limit must be >= 1, got {gas_limit}")
        snapshot = self._snapshot(kind)
        if snapshot is None:
            return
        record = TxRecord(
            tx_hash="0x" + "0" * 64,
            sender=_ZERO_ADDRESS,
            nonce=int(nonce),
            gas_price=int(round(gas_price_gwei * 1e9)),
            gas_limit=int(gas_limit),
            value=int(value_wei),
        )
        prediction = predict_one(snapshot, record)
        self._send(
            200,
            {
                "blocks": prediction.blocks,
                "seconds": prediction.seconds,
                "model": snapshot.kind,
                "model_version": snapshot.version,
                "window": snapshot.window_descriptor,
            },
        )

    def _handle_curve(self, query: dict) -> None:
        kind = self._resolve_kind(query)
        snapshot = self._snapshot(kind)
        if snapshot is None:
            return
        points = predict_curve(snapshot)
        self._send(
            200,
            {
                "model": snapshot.kind,
                "model_version": snapshot.version,
                "points": [
                    {
                        "gas_price_gwei": p.gas_price_gwei,
                        "blocks": p.blocks,
                        "seconds": p.seconds,
                    }
                    for p in points
                ],
            },
        )

    def _handle_retrain(self, query: dict) -> None:
        kind = self._resolve_kind(query)
        retrain = self.server.retrain
        if retrain is None:
            self._send(503, {"error": "retraining is not wired on this server"})
            return
        try:
            snapshot = retrain(kind)
        except EmptyWindowError as exc:
            self._send(503, {"error": str(exc), "model": kind})
            return
        self._send(200, {"model": kind, "version": snapshot.version})


class PredictionServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(
        self,
        address: tuple[str, int],
        registry: SnapshotRegistry,
        retrain: Optional[Callable] = None,
        default_kind: str = "forest",
    ):
        super().__init__(address, _Handler)
        self.registry = registry
        self.retrain = retrain
        self.default_kind = default_kind


def build_server(
    registry: SnapshotRegistry,
    address: tuple[str, int] = ("127.0.0.1", 0),
    retrain: Optional[Callable] = None,
    default_kind: str = "forest",
) -> PredictionServer:
    """Bind the service; port 0 picks a free port (see server.server_address)."""
    return PredictionServer(address, registry, retrain=retrain, default_kind=default_kind)


def start_in_background(server: PredictionServer) -> threading.Thread:
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return thread
