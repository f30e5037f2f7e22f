"""Synthetic mempool and miner: generates labeled confirmation data.

One miner holds a bounded pending pool ordered by gas price (ties go to
the earlier arrival). Each block confirms the top slice of the pool;
arrivals during the preceding interval compete for that block. When the
pool overflows, the cheapest transactions are discarded.

The records it emits use the exact store schema of live ingestion, so
training and evaluation code paths are identical for synthetic and real
data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .core import ReceiptStatus, TxRecord, label_blocks

_SENDER_POOL = 997


@dataclass(frozen=True)
class SimConfig:
    arrival_rate: float = 12.0  # transactions per second (Poisson process)
    gas_price_median_gwei: float = 20.0  # log-normal location
    gas_price_sigma_log: float = 0.6
    block_interval: float = 15.0
    exponential_blocks: bool = False  # exponential block times, same mean
    block_capacity: int = 138  # transactions confirmed per block
    pool_capacity: int = 5000
    horizon: float = 3600.0  # simulated seconds
    seed: int = 0
    failure_rate: float = 0.01  # fraction of confirmed txs that revert

    def __post_init__(self) -> None:
        positive = (
            ("arrival_rate", self.arrival_rate),
            ("gas_price_median_gwei", self.gas_price_median_gwei),
            ("block_interval", self.block_interval),
            ("block_capacity", self.block_capacity),
            ("pool_capacity", self.pool_capacity),
            ("horizon", self.horizon),
        )
        for name, val in positive:
            if val <= 0:
                raise ValueError(f"{name} must be > 0, got {val}")
        if self.gas_price_sigma_log < 0:
            raise ValueError("gas_price_sigma_log must be >= 0")
        if not 0 <= self.failure_rate < 1:
            raise ValueError("failure_rate must be in [0, 1)")

    @property
    def load_ratio(self) -> float:
        """Mean arrivals per block over block capacity."""
        return self.arrival_rate * self.block_interval / self.block_capacity


class PoolTx(NamedTuple):
    """A pending transaction as held by the miner's pool."""

    seq: int
    arrival: float
    gas_price: int  # wei
    gas_limit: int
    gas_used: int
    value: int
    sender: int
    nonce: int
    ok: bool  # confirms successfully (False -> reverted)


def pool_priority(tx: PoolTx) -> tuple:
    """Sort key: highest gas price first, earliest arrival among ties."""
    return (-tx.gas_price, tx.arrival, tx.seq)


@dataclass
class SimState:
    """Mutable simulation state; single-threaded use only."""

    rng: np.random.Generator
    clock: float = 0.0
    next_block_number: int = 1
    pending: list[PoolTx] = field(default_factory=list)
    confirmed: list[TxRecord] = field(default_factory=list)
    dropped: list[PoolTx] = field(default_factory=list)
    arrivals_total: int = 0
    next_seq: int = 0
    sender_tx_counts: np.ndarray = field(
        default_factory=lambda: np.zeros(_SENDER_POOL, dtype=np.int64)
    )


def new_state(config: SimConfig) -> SimState:
    return SimState(rng=np.random.default_rng(config.seed))


def clone_state(state: SimState, rng: np.random.Generator) -> SimState:
    """Cheap fork for probe experiments: pool entries are immutable tuples,
    so a shallow list copy suffices. Confirmed/dropped logs start empty."""
    return SimState(
        rng=rng,
        clock=state.clock,
        next_block_number=state.next_block_number,
        pending=list(state.pending),
        confirmed=[],
        dropped=[],
        arrivals_total=0,
        next_seq=state.next_seq,
        sender_tx_counts=state.sender_tx_counts.copy(),
    )


def inject_tx(
    state: SimState,
    gas_price: int,
    gas_limit: int = 21000,
    value: int = 0,
    arrival: Optional[float] = None,
) -> PoolTx:
    """Place one transaction directly into the pending pool."""
    tx = PoolTx(
        seq=state.next_seq,
        arrival=state.clock if arrival is None else arrival,
        gas_price=int(gas_price),
        gas_limit=gas_limit,
        gas_used=min(21000, gas_limit),
        value=value,
        sender=0,
        nonce=int(state.sender_tx_counts[0]),
        ok=True,
    )
    state.next_seq += 1
    state.sender_tx_counts[0] += 1
    state.arrivals_total += 1
    state.pending.append(tx)
    return tx


def _sample_arrivals(state: SimState, config: SimConfig, t_from: float, t_to: float) -> list[PoolTx]:
    rng = state.rng
    dt = t_to - t_from
    n = int(rng.poisson(config.arrival_rate * dt))
    if n == 0:
        return []
    times = np.sort(rng.uniform(t_from, t_to, size=n))
    gwei = rng.lognormal(
        math.log(config.gas_price_median_gwei), config.gas_price_sigma_log, size=n
    )
    gas_price = np.maximum(1, np.rint(gwei * 1e9)).astype(np.int64)
    is_transfer = rng.random(n) < 0.6
    gas_limit = np.where(
        is_transfer, 21000, rng.integers(30_000, 300_000, size=n)
    ).astype(np.int64)
    gas_used = np.where(
        is_transfer,
        21000,
        np.maximum(21000, (gas_limit * rng.uniform(0.3, 1.0, size=n)).astype(np.int64)),
    )
    zero_value = rng.random(n) < 0.15
    # keep the lognormal tail inside int64 range
    value = np.where(
        zero_value,
        0.0,
        np.rint(np.minimum(np.exp(rng.normal(math.log(1e17), 2.0, size=n)), 1e18)),
    )
    senders = rng.integers(0, _SENDER_POOL, size=n)
    ok = rng.random(n) >= config.failure_rate

    arrivals = []
    for i in range(n):
        sender = int(senders[i])
        arrivals.append(
            PoolTx(
                seq=state.next_seq,
                arrival=float(times[i]),
                gas_price=int(gas_price[i]),
                gas_limit=int(gas_limit[i]),
                gas_used=int(gas_used[i]),
                value=int(value[i]),
                sender=sender,
                nonce=int(state.sender_tx_counts[sender]),
                ok=bool(ok[i]),
            )
        )
        state.next_seq += 1
        state.sender_tx_counts[sender] += 1
    state.arrivals_total += n
    return arrivals


def _confirm(tx: PoolTx, block_time: float, block_number: int) -> TxRecord:
    return TxRecord(
        tx_hash=f"0x{tx.seq:064x}",
        sender=f"0x{tx.sender:040x}",
        nonce=tx.nonce,
        gas_price=tx.gas_price,
        gas_limit=tx.gas_limit,
        gas_used=tx.gas_used,
        value=tx.value,
        receipt_status=ReceiptStatus.SUCCESS if tx.ok else ReceiptStatus.FAILURE,
        timestamp_seen=tx.arrival,
        timestamp_confirmed=block_time,
        block_number=block_number,
    )


def step_block(state: SimState, config: SimConfig) -> SimState:
    """Advance the simulation by one block.

    Arrivals accrued during the interval join the pool first (the miner
    sees everything broadcast before it seals the block), the pool is
    trimmed to capacity by discarding minimum-gas transactions, and the
    top block_capacity transactions confirm at the block timestamp.
    """
    dt = (
        state.rng.exponential(config.block_interval)
        if config.exponential_blocks
        else config.block_interval
    )
    block_time = state.clock + dt

    state.pending.extend(_sample_arrivals(state, config, state.clock, block_time))
    state.pending.sort(key=pool_priority)
    if len(state.pending) > config.pool_capacity:
        state.dropped.extend(state.pending[config.pool_capacity :])
        del state.pending[config.pool_capacity :]

    block = state.pending[: config.block_capacity]
    del state.pending[: config.block_capacity]
    for tx in block:
        state.confirmed.append(_confirm(tx, block_time, state.next_block_number))

    state.clock = block_time
    state.next_block_number += 1
    return state


def run_blocks(state: SimState, config: SimConfig, n_blocks: int) -> SimState:
    for _ in range(n_blocks):
        step_block(state, config)
    return state


def generate_dataset(config: SimConfig) -> list[TxRecord]:
    """Run the simulation over its horizon and return confirmed records.

    Deterministic per seed. Transactions dropped from the pool or still
    pending at the horizon are not emitted.
    """
    n_blocks = int(config.horizon / config.block_interval)
    if n_blocks < 10:
        raise ValueError(
            f"horizon {config.horizon}s covers only {n_blocks} blocks; need >= 10"
        )
    state = new_state(config)
    if config.exponential_blocks:
        while state.clock < config.horizon:
            step_block(state, config)
    else:
        run_blocks(state, config, n_blocks)
    return state.confirmed


EFFECTIVELY_NEVER = math.inf


def ground_truth_curve(
    config: SimConfig,
    gas_grid_gwei: Optional[Sequence[float]] = None,
    trials: int = 100,
    warmup_blocks: Optional[int] = None,
    max_wait_blocks: int = 300,
) -> np.ndarray:
    """Monte-Carlo expected confirmation delay (blocks) per gas price.

    For each trial a pool is warmed to steady state; a probe transaction
    is then injected at every grid price into forks of that pool sharing
    one continuation arrival stream. Grid points whose probe fails to
    confirm in more than half the trials report math.inf.
    """
    if trials < 100:
        raise ValueError(f"need >= 100 trials per grid point, got {trials}")
    if gas_grid_gwei is None:
        gas_grid_gwei = np.arange(0, 101, dtype=np.float64)
    grid_wei = [int(round(g * 1e9)) for g in gas_grid_gwei]

    if warmup_blocks is None:
        arrivals_per_block = config.arrival_rate * config.block_interval
        surplus = arrivals_per_block - config.block_capacity
        fill = math.inf if surplus <= 0 else config.pool_capacity / surplus
        warmup_blocks = int(min(300, 30 if not math.isfinite(fill) else fill + 20))

    root = np.random.SeedSequence(config.seed)
    trial_seeds = root.spawn(trials)
    delays = np.zeros((len(grid_wei), trials))
    confirmed_mask = np.zeros((len(grid_wei), trials), dtype=bool)

    for t, seed in enumerate(trial_seeds):
        warm_rng, fork_rng_seed = seed.spawn(2)
        warm = SimState(rng=np.random.default_rng(warm_rng))
        run_blocks(warm, config, warmup_blocks)
        for g, price in enumerate(grid_wei):
            # One continuation stream per trial: probes at different prices
            # face the same competing arrivals.
            fork = clone_state(warm, np.random.default_rng(fork_rng_seed))
            probe = inject_tx(fork, gas_price=price)
            probe_hash = f"0x{probe.seq:064x}"
            seen_confirmed = 0
            seen_dropped = 0
            for _ in range(max_wait_blocks):
                step_block(fork, config)
                hit = next(
                    (
                        r
                        for r in fork.confirmed[seen_confirmed:]
                        if r.tx_hash == probe_hash
                    ),
                    None,
                )
                if hit is not None:
                    delays[g, t] = label_blocks(
                        probe.arrival,
                        hit.timestamp_confirmed,
                        config.block_interval,
                    )
                    confirmed_mask[g, t] = True
                    break
                if any(tx.seq == probe.seq for tx in fork.dropped[seen_dropped:]):
                    break
                seen_confirmed = len(fork.confirmed)
                seen_dropped = len(fork.dropped)

    curve = np.full(len(grid_wei), EFFECTIVELY_NEVER)
    for g in range(len(grid_wei)):
        hits = confirmed_mask[g]
        if hits.mean() > 0.5:
            curve[g] = delays[g, hits].mean()
    return curve
