"""Append-only JSONL dataset store and sliding-window example extraction.

One JSON object per line; integer wei fields are written as JSON
integers (arbitrary precision, never truncated to 64 bits). A pending
observation and its later confirmation are separate lines; on load the
confirmed line wins. Appending a second confirmed line for the same
transaction hash is skipped with a warning count.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .core import (
    FEATURE_COUNT,
    SECONDS_PER_BLOCK,
    LabeledExample,
    NetworkContext,
    ReceiptStatus,
    TxRecord,
    extract_features,
    label_blocks,
)

STORE_KEYS = (
    "tx_hash",
    "sender",
    "nonce",
    "gas_price_wei",
    "gas_limit",
    "gas_used",
    "value_wei",
    "receipt_status",
    "timestamp_seen",
    "timestamp_confirmed",
    "block_number",
)


class StoreFormatError(ValueError):
    """A store line could not be parsed; carries the 1-based line number."""

    def __init__(self, path, line_number: int, reason: str):
        super().__init__(f"{path}:{line_number}: {reason}")
        self.line_number = line_number


class EmptyWindowError(LookupError):
    """No labeled examples in the requested block window."""


def record_to_json(record: TxRecord) -> dict:
    return {
        "tx_hash": record.tx_hash,
        "sender": record.sender,
        "nonce": record.nonce,
        "gas_price_wei": record.gas_price,
        "gas_limit": record.gas_limit,
        "gas_used": record.gas_used,
        "value_wei": record.value,
        "receipt_status": record.receipt_status.value,
        "timestamp_seen": record.timestamp_seen,
        "timestamp_confirmed": record.timestamp_confirmed,
        "block_number": record.block_number,
    }


def record_from_json(obj: dict) -> TxRecord:
    return TxRecord(
        tx_hash=obj["tx_hash"],
        sender=obj["sender"],
        nonce=obj["nonce"],
        gas_price=obj["gas_price_wei"],
        gas_limit=obj["gas_limit"],
        gas_used=obj["gas_used"],
        value=obj["value_wei"],
        receipt_status=ReceiptStatus(obj["receipt_status"]),
        timestamp_seen=obj["timestamp_seen"],
        timestamp_confirmed=obj["timestamp_confirmed"],
        block_number=obj["block_number"],
    )


class DatasetStore:
    """JSONL-backed transaction log with a tx_hash index.

    One writer per store; concurrent readers may open the same path and
    call refresh() to pick up appended lines.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._records: dict[str, TxRecord] = {}
        self._read_offset = 0
        self._lines_loaded = 0
        self.skipped_duplicates = 0
        if self.path.exists():
            self.refresh()

    def __len__(self) -> int:
        return len(self._records)

    def refresh(self) -> int:
        """Read lines appended since the last load; returns how many."""
        with self._lock:
            if not self.path.exists():
                return 0
            added = 0
            with self.path.open("r", encoding="utf-8") as fh:
                fh.seek(self._read_offset)
                for line in fh:
                    self._lines_loaded += 1
                    self._ingest_line(line, self._lines_loaded)
                    added += 1
                self._read_offset = fh.tell()
            return added

    def _ingest_line(self, line: str, line_number: int) -> None:
        text = line.strip()
        if not text:
            return
        try:
            obj = json.loads(text)
            record = record_from_json(obj)
        except Exception as exc:
            raise StoreFormatError(self.path, line_number, str(exc)) from exc
        self._absorb(record)

    def _absorb(self, record: TxRecord) -> bool:
        """Merge a record into the index; True if it is new information."""
        existing = self._records.get(record.tx_hash)
        if existing is None:
            self._records[record.tx_hash] = record
            return True
        if existing.is_confirmed:
            return False
        if record.is_confirmed:
            if record.timestamp_seen is None and existing.timestamp_seen is not None:
                record = TxRecord(
                    **{**record_to_dataclass_kwargs(record), "timestamp_seen": existing.timestamp_seen}
                )
            self._records[record.tx_hash] = record
            return True
        # pending twice: keep the earliest first-seen timestamp
        if (
            record.timestamp_seen is not None
            and existing.timestamp_seen is not None
            and record.timestamp_seen < existing.timestamp_seen
        ):
            self._records[record.tx_hash] = record
            return True
        return False

    def append(self, records: Iterable[TxRecord]) -> int:
        """Append new records; duplicates are skipped and counted."""
        written = 0
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                for record in records:
                    if not self._absorb(record):
                        self.skipped_duplicates += 1
                        continue
                    fh.write(json.dumps(record_to_json(self._records[record.tx_hash])))
                    fh.write("\n")
                    written += 1
                fh.flush()
                self._read_offset = fh.tell()
            self._lines_loaded += written
        return written

    def record_pending(self, tx_hash: str, sender: str, nonce: int, gas_price: int,
                       gas_limit: int, value: int, timestamp_seen: float) -> bool:
        """First sighting of a pending transaction; earliest timestamp wins."""
        with self._lock:
            existing = self._records.get(tx_hash)
        if existing is not None:
            return False
        record = TxRecord(
            tx_hash=tx_hash,
            sender=sender,
            nonce=nonce,
            gas_price=gas_price,
            gas_limit=gas_limit,
            value=value,
            receipt_status=ReceiptStatus.PENDING,
            timestamp_seen=timestamp_seen,
        )
        return self.append([record]) == 1

    def records(self) -> list[TxRecord]:
        with self._lock:
            return list(self._records.values())

    def get(self, tx_hash: str) -> Optional[TxRecord]:
        with self._lock:
            return self._records.get(tx_hash)

    def confirmed_records(self) -> list[TxRecord]:
        return [r for r in self.records() if r.is_confirmed]

    def pending_records(self) -> list[TxRecord]:
        return [r for r in self.records() if not r.is_confirmed]

    def head_block(self) -> Optional[int]:
        blocks = [r.block_number for r in self.confirmed_records()]
        return max(blocks) if blocks else None


def record_to_dataclass_kwargs(record: TxRecord) -> dict:
    return {
        "tx_hash": record.tx_hash,
        "sender": record.sender,
        "nonce": record.nonce,
        "gas_price": record.gas_price,
        "gas_limit": record.gas_limit,
        "gas_used": record.gas_used,
        "value": record.value,
        "receipt_status": record.receipt_status,
        "timestamp_seen": record.timestamp_seen,
        "timestamp_confirmed": record.timestamp_confirmed,
        "block_number": record.block_number,
    }


@dataclass(frozen=True)
class TrainingWindow:
    """Labeled examples from a trailing block range plus serving context."""

    examples: list[LabeledExample]
    first_block: int
    last_block: int
    context: NetworkContext  # as of the window head, used at serving time

    @property
    def descriptor(self) -> str:
        return f"blocks {self.first_block}-{self.last_block} (n={len(self.examples)})"


def _pool_size_at(times: np.ndarray, seen_sorted: np.ndarray, conf_sorted: np.ndarray) -> np.ndarray:
    """Backlog estimate: seen-but-unconfirmed records at each time."""
    arrived = np.searchsorted(seen_sorted, times, side="right")
    cleared = np.searchsorted(conf_sorted, times, side="right")
    return np.maximum(0, arrived - cleared)


def window_last_k_blocks(
    store: DatasetStore,
    k: Optional[int] = 100,
    include_failures: bool = False,
) -> TrainingWindow:
    """Labeled examples from the last k blocks of the store.

    k=None (or k larger than history) takes everything. Each example's
    context features are evaluated at its own first-seen time; the
    window-level context stored for serving is evaluated at the head.
    """
    if k is not None and k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    head = store.head_block()
    if head is None:
        raise EmptyWindowError(f"store {store.path} has no confirmed records")
    low = head - k if k is not None else -math.inf

    rows = [
        r
        for r in store.confirmed_records()
        if r.has_label
        and low < r.block_number <= head
        and (include_failures or r.receipt_status is ReceiptStatus.SUCCESS)
    ]
    if not rows:
        raise EmptyWindowError(
            f"no labeled examples in blocks ({low}, {head}] of {store.path}"
        )

    seen = np.array([r.timestamp_seen for r in rows])
    conf = np.array([r.timestamp_confirmed for r in rows])
    seen_sorted = np.sort(seen)
    conf_sorted = np.sort(conf)
    pool_sizes = _pool_size_at(seen, seen_sorted, conf_sorted)
    median_gas = float(np.median([r.gas_price for r in rows]))

    block_times: dict[int, float] = {}
    for r in rows:
        block_times[r.block_number] = max(
            block_times.get(r.block_number, -math.inf), r.timestamp_confirmed
        )
    ordered = [block_times[b] for b in sorted(block_times)]
    if len(ordered) >= 2:
        mean_interval = float(np.mean(np.diff(ordered)))
        if mean_interval <= 0:
            mean_interval = SECONDS_PER_BLOCK
    else:
        mean_interval = SECONDS_PER_BLOCK

    examples = []
    for r, pool in zip(rows, pool_sizes):
        ctx = NetworkContext(
            pending_pool_size=float(pool),
            median_gas_price_recent=median_gas,
            mean_block_interval_recent=mean_interval,
        )
        examples.append(
            LabeledExample(
                features=extract_features(r, ctx),
                label_blocks=label_blocks(r.timestamp_seen, r.timestamp_confirmed),
            )
        )

    head_time = max(conf)
    head_ctx = NetworkContext(
        pending_pool_size=float(
            _pool_size_at(np.array([head_time]), seen_sorted, conf_sorted)[0]
        ),
        median_gas_price_recent=median_gas,
        mean_block_interval_recent=mean_interval,
    )
    return TrainingWindow(
        examples=examples,
        first_block=int(min(r.block_number for r in rows)),
        last_block=int(head),
        context=head_ctx,
    )
