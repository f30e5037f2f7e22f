"""Ethereum node ingestion over JSON-RPC 2.0: block and pending watchers.

Transport is plain HTTP polling so any node endpoint works; the poll
loops tolerate transient transport failures and keep running. Hex
quantities are decoded as unbounded Python integers, so wei values are
never truncated.
"""

from __future__ import annotations

import itertools
import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import requests

from .core import ClockSkewError, ReceiptStatus, TxRecord
from .store import DatasetStore

log = logging.getLogger(__name__)


class TransportError(RuntimeError):
    """The node could not be reached; safe to retry."""


class RpcError(RuntimeError):
    """The node answered with an error or an unparseable payload."""

    def __init__(self, message: str, payload=None):
        super().__init__(message)
        self.payload = payload


class BlockNotFoundError(LookupError):
    """The requested block is not (yet) part of the chain."""


class NodeCapabilityError(RuntimeError):
    """The node lacks a required API (e.g. txpool inspection)."""


@dataclass(frozen=True)
class NodeEndpoint:
    url: str
    request_timeout: float = 10.0
    poll_interval: float = 2.0

    def __post_init__(self) -> None:
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be > 0")
        if self.poll_interval <= 0:
            raise ValueError("poll_interval must be > 0")


def _hex_int(value, context: str, payload=None) -> int:
    try:
        if isinstance(value, str):
            return int(value, 16)
        if isinstance(value, int):
            return value
    except ValueError:
        pass
    raise RpcError(f"expected hex quantity for {context}, got {value!r}", payload)


def _http_transport(url: str, payload: dict, timeout: float) -> dict:
    try:
        response = requests.post(url, json=payload, timeout=timeout)
        response.raise_for_status()
        return response.json()
    except (requests.RequestException, ValueError) as exc:
        raise TransportError(f"JSON-RPC request to {url} failed: {exc}") from exc


class JsonRpcClient:
    """Minimal JSON-RPC 2.0 client.

    transport may be replaced (e.g. by a scripted stub in tests); it
    takes (url, payload, timeout) and returns the decoded response dict.
    """

    def __init__(
        self,
        endpoint: NodeEndpoint,
        transport: Optional[Callable[[str, dict, float], dict]] = None,
    ):
        self.endpoint = endpoint
        self._transport = transport or _http_transport
        self._ids = itertools.count(1)

    def call(self, method: str, params: list):
        payload = {
            "jsonrpc": "2.0",
            "id": next(self._ids),
            "method": method,
            "params": params,
        }
        response = self._transport(self.endpoint.url, payload, self.endpoint.request_timeout)
        if not isinstance(response, dict):
            raise RpcError(f"malformed response to {method}", response)
        if response.get("error"):
            raise RpcError(f"{method} failed: {response['error']}", response)
        if "result" not in response:
            raise RpcError(f"response to {method} has no result", response)
        return response["result"]

    def block_number(self) -> int:
        result = self.call("eth_blockNumber", [])
        return _hex_int(result, "eth_blockNumber", result)

    def transaction_receipt(self, tx_hash: str) -> Optional[dict]:
        return self.call("eth_getTransactionReceipt", [tx_hash])

    def txpool_pending(self) -> list[dict]:
        """Flat list of pending transaction objects from txpool_content."""
        content = self.call("txpool_content", [])
        try:
            pending = content["pending"]
            txs = []
            for by_nonce in pending.values():
                txs.extend(by_nonce.values())
            return txs
        except (TypeError, KeyError, AttributeError) as exc:
            raise RpcError(f"malformed txpool_content response: {exc}", content) from exc


@dataclass(frozen=True)
class BlockTx:
    tx_hash: str
    sender: str
    nonce: int
    gas_price: int
    gas_limit: int
    value: int


@dataclass(frozen=True)
class Block:
    number: int
    timestamp: int
    transactions: tuple[BlockTx, ...]


def _parse_block_tx(raw: dict, payload) -> BlockTx:
    try:
        return BlockTx(
            tx_hash=raw["hash"],
            sender=raw["from"],
            nonce=_hex_int(raw["nonce"], "tx.nonce", payload),
            gas_price=_hex_int(raw["gasPrice"], "tx.gasPrice", payload),
            gas_limit=_hex_int(raw["gas"], "tx.gas", payload),
            value=_hex_int(raw["value"], "tx.value", payload),
        )
    except KeyError as exc:
        raise RpcError(f"transaction object missing field {exc}", payload) from exc


def fetch_block(client: JsonRpcClient, block_number: int) -> Block:
    """Fetch one block with its full transaction objects."""
    raw = client.call("eth_getBlockByNumber", [hex(block_number), True])
    if raw is None:
        raise BlockNotFoundError(f"block {block_number} not found (not yet mined?)")
    try:
        return Block(
            number=_hex_int(raw["number"], "block.number", raw),
            timestamp=_hex_int(raw["timestamp"], "block.timestamp", raw),
            transactions=tuple(_parse_block_tx(t, raw) for t in raw["transactions"]),
        )
    except (KeyError, TypeError) as exc:
        raise RpcError(f"malformed block response: {exc}", raw) from exc


def watch_pending(
    client: JsonRpcClient,
    store: DatasetStore,
    stop: Optional[threading.Event] = None,
    clock: Callable[[], float] = time.time,
    max_polls: Optional[int] = None,
) -> int:
    """Poll the pending pool, recording each hash's first-seen wall time.

    A hash seen in several polls keeps its earliest timestamp. Transient
    transport errors are logged and polling continues; a node without the
    txpool API is a fatal configuration error.
    """
    polls = 0
    recorded = 0
    while (stop is None or not stop.is_set()) and (max_polls is None or polls < max_polls):
        try:
            txs = client.txpool_pending()
        except RpcError as exc:
            raise NodeCapabilityError(
                f"node at {client.endpoint.url} does not expose txpool_content: {exc}"
            ) from exc
        except TransportError as exc:
            log.warning("pending poll failed, will retry: %s", exc)
            txs = []
        now = clock()
        for raw in txs:
            try:
                tx = _parse_block_tx(raw, raw)
            except RpcError as exc:
                log.warning("skipping malformed pending tx: %s", exc)
                continue
            if store.record_pending(
                tx_hash=tx.tx_hash,
                sender=tx.sender,
                nonce=tx.nonce,
                gas_price=tx.gas_price,
                gas_limit=tx.gas_limit,
                value=tx.value,
                timestamp_seen=now,
            ):
                recorded += 1
        polls += 1
        if stop is None or not stop.is_set():
            if max_polls is not None and polls >= max_polls:
                break
            time.sleep(client.endpoint.poll_interval)
    return recorded


def join_pending_confirmed(
    store: DatasetStore,
    block: Block,
    receipts: dict[str, dict],
) -> tuple[list[TxRecord], int]:
    """Merge a confirmed block with first-seen observations from the store.

    Returns (records, quarantined): complete records carry both
    timestamps; those never seen pending get timestamp_seen=None and are
    excluded from training by default. Clock-skewed records (confirmed
    before seen) are quarantined, not emitted.
    """
    records = []
    quarantined = 0
    for tx in block.transactions:
        seen = store.get(tx.tx_hash)
        seen_ts = seen.timestamp_seen if seen is not None else None
        receipt = receipts.get(tx.tx_hash) or {}
        status_raw = receipt.get("status")
        if status_raw is None:
            status = ReceiptStatus.SUCCESS
        else:
            status = (
                ReceiptStatus.SUCCESS
                if _hex_int(status_raw, "receipt.status", receipt) == 1
                else ReceiptStatus.FAILURE
            )
        gas_used = receipt.get("gasUsed")
        try:
            record = TxRecord(
                tx_hash=tx.tx_hash,
                sender=tx.sender,
                nonce=tx.nonce,
                gas_price=tx.gas_price,
                gas_limit=tx.gas_limit,
                gas_used=(
                    None
                    if gas_used is None
                    else min(_hex_int(gas_used, "receipt.gasUsed", receipt), tx.gas_limit)
                ),
                value=tx.value,
                receipt_status=status,
                timestamp_seen=seen_ts,
                timestamp_confirmed=float(block.timestamp),
                block_number=block.number,
            )
        except ClockSkewError:
            quarantined += 1
            log.warning(
                "quarantined %s: confirmed before first seen (clock skew)", tx.tx_hash
            )
            continue
        records.append(record)
    return records, quarantined


def watch_blocks(
    client: JsonRpcClient,
    store: DatasetStore,
    stop: Optional[threading.Event] = None,
    start_block: Optional[int] = None,
    max_polls: Optional[int] = None,
) -> int:
    """Follow the chain head, joining and appending confirmed records."""
    last = start_block if start_block is not None else None
    polls = 0
    appended = 0
    while (stop is None or not stop.is_set()) and (max_polls is None or polls < max_polls):
        polls += 1
        try:
            head = client.block_number()
            if last is None:
                last = head - 1
            while last < head:
                block = fetch_block(client, last + 1)
                receipts = {}
                for tx in block.transactions:
                    receipt = client.transaction_receipt(tx.tx_hash)
                    if receipt:
                        receipts[tx.tx_hash] = receipt
                records, _ = join_pending_confirmed(store, block, receipts)
                appended += store.append(records)
                last += 1
        except (TransportError, BlockNotFoundError) as exc:
            log.warning("block poll failed, will retry: %s", exc)
        if stop is None or not stop.is_set():
            if max_polls is not None and polls >= max_polls:
                break
            time.sleep(client.endpoint.poll_interval)
    return appended
