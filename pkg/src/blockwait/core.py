"""Domain types and pure helpers shared by every model and pipeline stage.

The unit conventions used throughout the package:

* gas prices are stored in wei and fed to models in gwei,
* confirmation delay (the regression target) is measured in blocks,
  floored at one block, with one block nominally 15 seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, TypeVar

import numpy as np

WEI_PER_GWEI = 10**9
SECONDS_PER_BLOCK = 15.0
FEATURE_COUNT = 7

FEATURE_NAMES = (
    "gas_price_gwei",
    "gas_limit",
    "log10_value",
    "nonce",
    "pending_pool_size",
    "median_gas_price_gwei",
    "mean_block_interval_s",
)

_UNIT_EXPONENTS = {"wei": 0, "szabo": 12, "finney": 15, "ether": 18}


class ClockSkewError(ValueError):
    """A confirmation timestamp precedes the first-seen timestamp.

    Raised instead of clamping so the offending record can be quarantined
    and the dataset stays auditable.
    """


class ReceiptStatus(str, Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    PENDING = "pending"


@dataclass(frozen=True)
class TxRecord:
    """One observed transaction, possibly not yet confirmed.

    Signature and payload bytes are carried opaquely in ``tx_hash`` /
    ``sender``; they are never interpreted. Monetary fields are integer wei
    and must not be truncated to 64 bits.
    """

    tx_hash: str
    sender: str
    nonce: int
    gas_price: int
    gas_limit: int
    value: int
    receipt_status: ReceiptStatus = ReceiptStatus.PENDING
    gas_used: Optional[int] = None
    timestamp_seen: Optional[float] = None
    timestamp_confirmed: Optional[float] = None
    block_number: Optional[int] = None

    def __post_init__(self) -> None:
        if self.gas_price < 0:
            raise ValueError(f"gas_price must be >= 0, got {self.gas_price}")
        if self.gas_limit <= 0:
            raise ValueError(f"gas_limit must be > 0, got {self.gas_limit}")
        if self.value < 0:
            raise ValueError(f"value must be >= 0, got {self.value}")
        if self.nonce < 0:
            raise ValueError(f"nonce must be >= 0, got {self.nonce}")
        if self.gas_used is not None and self.gas_used > self.gas_limit:
            raise ValueError(
                f"gas_used {self.gas_used} exceeds gas_limit {self.gas_limit}"
            )
        if (
            self.timestamp_seen is not None
            and self.timestamp_confirmed is not None
            and self.timestamp_confirmed < self.timestamp_seen
        ):
            raise ClockSkewError(
                f"tx {self.tx_hash}: confirmed at {self.timestamp_confirmed} "
                f"before seen at {self.timestamp_seen}"
            )

    @property
    def is_confirmed(self) -> bool:
        return self.timestamp_confirmed is not None and self.block_number is not None

    @property
    def has_label(self) -> bool:
        return self.is_confirmed and self.timestamp_seen is not None


@dataclass(frozen=True)
class NetworkContext:
    """Mempool-level features observed alongside a transaction."""

    pending_pool_size: float
    median_gas_price_recent: float  # wei
    mean_block_interval_recent: float  # seconds

    def __post_init__(self) -> None:
        if self.pending_pool_size < 0 or self.median_gas_price_recent < 0:
            raise ValueError("context fields must be >= 0")
        if self.mean_block_interval_recent <= 0:
            raise ValueError("mean_block_interval_recent must be > 0")


@dataclass(frozen=True)
class LabeledExample:
    """Feature vector plus confirmation delay in blocks."""

    features: np.ndarray
    label_blocks: float

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        if features.shape != (FEATURE_COUNT,):
            raise ValueError(
                f"features must have exactly {FEATURE_COUNT} entries, "
                f"got shape {features.shape}"
            )
        if not np.all(np.isfinite(features)):
            raise ValueError("features must be finite")
        if self.label_blocks < 1:
            raise ValueError(f"label_blocks must be >= 1, got {self.label_blocks}")
        features.setflags(write=False)
        object.__setattr__(self, "features", features)


def wei_to_unit(amount: int, unit: str) -> float:
    """Convert an integer wei amount into the named Ether denomination."""
    if amount < 0:
        raise ValueError(f"amount must be >= 0, got {amount}")
    try:
        exponent = _UNIT_EXPONENTS[unit]
    except KeyError:
        raise ValueError(f"unknown unit {unit!r}, expected one of {sorted(_UNIT_EXPONENTS)}")
    return amount / 10**exponent


def label_blocks(
    timestamp_seen: float,
    timestamp_confirmed: float,
    block_interval: float = SECONDS_PER_BLOCK,
) -> float:
    """Confirmation delay in whole blocks, floored at one block.

    Raises ClockSkewError when the confirmation timestamp precedes the
    first-seen timestamp; such records must be quarantined, never clamped.
    """
    if block_interval <= 0:
        raise ValueError(f"block_interval must be > 0, got {block_interval}")
    if timestamp_confirmed < timestamp_seen:
        raise ClockSkewError(
            f"confirmed at {timestamp_confirmed} before seen at {timestamp_seen}"
        )
    delay = timestamp_confirmed - timestamp_seen
    return float(max(1, math.ceil(delay / block_interval)))


def extract_features(record: TxRecord, ctx: NetworkContext) -> np.ndarray:
    """Build the 7-entry feature vector consumed by every regressor.

    receipt_status is deliberately excluded: it is unknown until after
    confirmation, so using it would leak the label.
    """
    for name in ("gas_price", "gas_limit", "value", "nonce"):
        if getattr(record, name) < 0:
            raise ValueError(f"{name} must be >= 0")
    features = np.array(
        [
            record.gas_price / WEI_PER_GWEI,
            float(record.gas_limit),
            math.log10(1 + record.value),
            float(record.nonce),
            float(ctx.pending_pool_size),
            ctx.median_gas_price_recent / WEI_PER_GWEI,
            float(ctx.mean_block_interval_recent),
        ],
        dtype=np.float64,
    )
    if not np.all(np.isfinite(features)):
        raise ValueError("feature vector contains non-finite entries")
    return features


T = TypeVar("T")


def split_dataset(
    examples: Sequence[T], train_fraction: float, seed: int
) -> tuple[list[T], list[T]]:
    """Shuffle and partition examples into (train, validation).

    Deterministic for a fixed seed; the two splits are disjoint and cover
    the input exactly once. Sizes follow round(train_fraction * n).
    """
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(examples)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    n_train = int(math.floor(train_fraction * n + 0.5))
    if n_train == 0 or n_train == n:
        raise ValueError(
            f"split of {n} examples at fraction {train_fraction} would leave "
            "an empty side"
        )
    order = np.random.default_rng(seed).permutation(n)
    train = [examples[i] for i in order[:n_train]]
    valid = [examples[i] for i in order[n_train:]]
    return train, valid


def examples_to_arrays(
    examples: Sequence[LabeledExample],
) -> tuple[np.ndarray, np.ndarray]:
    """Stack labeled examples into an (n, 7) matrix and an (n,) label vector."""
    if len(examples) == 0:
        return np.empty((0, FEATURE_COUNT)), np.empty((0,))
    X = np.stack([ex.features for ex in examples]).astype(np.float64)
    y = np.array([ex.label_blocks for ex in examples], dtype=np.float64)
    return X, y
