"""Orchestration: training snapshots, retraining scheduler, curve and
split evaluation, variant sweeps, and model persistence.

A ModelSnapshot is an immutable trained model plus the metadata of the
window it was trained on. The SnapshotRegistry hands out whole snapshots
atomically: a prediction in flight always sees one complete model, never
a half-trained one. Retraining builds a snapshot off to the side and
publishes it with a single reference swap.
"""

from __future__ import annotations

import io
import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .core import (
    SECONDS_PER_BLOCK,
    LabeledExample,
    NetworkContext,
    TxRecord,
    examples_to_arrays,
    extract_features,
    split_dataset,
)
from .forest import (
    ForestConfig,
    ForestRegressor,
    forest_from_arrays,
    forest_to_arrays,
    forest_variants,
)
from .glm import PoissonGlmRegressor, glm_from_payload, glm_to_payload
from .metrics import MetricReport, render_table, report
from .mlp import MlpConfig, MlpRegressor, mlp_from_payload, mlp_to_payload, mlp_variants
from .store import DatasetStore, EmptyWindowError, TrainingWindow, window_last_k_blocks
from .validation import check_labels

log = logging.getLogger(__name__)

KINDS = ("forest", "mlp", "glm")

ModelConfig = Union[ForestConfig, MlpConfig, None]

SNAPSHOT_FORMAT = "blockwait-snapshot"
SNAPSHOT_FORMAT_VERSION = 1


class MeanBaseline(BaseEstimator, RegressorMixin):
    """Predicts the training-label mean; the floor every model must beat."""

    def fit(self, X, y) -> "MeanBaseline":
        y = check_labels(y)
        self.mean_ = float(np.mean(y))
        return self

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.full(X.shape[0], self.mean_)


def make_estimator(kind: str, config: ModelConfig = None):
    if kind == "forest":
        return ForestRegressor.from_config(config or ForestConfig())
    if kind == "mlp":
        return MlpRegressor.from_config(config or MlpConfig())
    if kind == "glm":
        return PoissonGlmRegressor()
    if kind == "baseline":
        return MeanBaseline()
    raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")


@dataclass(frozen=True)
class ModelSnapshot:
    """An immutable trained model plus its training-window metadata."""

    kind: str
    model: object
    version: int
    trained_at: float
    window_descriptor: str
    context: NetworkContext
    example_count: int
    block_range: tuple[int, int]


class SnapshotRegistry:
    """Publishes snapshots atomically; versions increase per kind with no gaps."""

    def __init__(self):
        self._lock = threading.Lock()
        self._live: dict[str, ModelSnapshot] = {}
        self._versions: dict[str, int] = {}

    def publish(self, kind: str, model, window: TrainingWindow) -> ModelSnapshot:
        with self._lock:
            version = self._versions.get(kind, 0) + 1
            snapshot = ModelSnapshot(
                kind=kind,
                model=model,
                version=version,
                trained_at=time.time(),
                window_descriptor=window.descriptor,
                context=window.context,
                example_count=len(window.examples),
                block_range=(window.first_block, window.last_block),
            )
            self._versions[kind] = version
            self._live[kind] = snapshot
            return snapshot

    def get(self, kind: str) -> Optional[ModelSnapshot]:
        with self._lock:
            return self._live.get(kind)

    def versions(self) -> dict[str, int]:
        with self._lock:
            return dict(self._versions)

    def kinds_live(self) -> tuple[str, ...]:
        with self._lock:
            return tuple(self._live)


def train_snapshot(
    store: DatasetStore,
    kind: str,
    config: ModelConfig = None,
    window_blocks: Optional[int] = 100,
    registry: Optional[SnapshotRegistry] = None,
) -> ModelSnapshot:
    """Fit one model on the trailing window and wrap it in a snapshot.

    Raises EmptyWindowError when the window holds no labeled examples;
    the scheduler treats that as "skip retrain, keep the live snapshot".
    """
    store.refresh()
    window = window_last_k_blocks(store, window_blocks)
    X, y = examples_to_arrays(window.examples)
    model = make_estimator(kind, config).fit(X, y)
    if registry is not None:
        return registry.publish(kind, model, window)
    return ModelSnapshot(
        kind=kind,
        model=model,
        version=1,
        trained_at=time.time(),
        window_descriptor=window.descriptor,
        context=window.context,
        example_count=len(window.examples),
        block_range=(window.first_block, window.last_block),
    )


@dataclass(frozen=True)
class Prediction:
    blocks: float
    seconds: float


def predict_one(
    snapshot: ModelSnapshot,
    record: TxRecord,
    ctx: Optional[NetworkContext] = None,
) -> Prediction:
    """Predict the confirmation delay of one unconfirmed transaction.

    Blocks are floored at 1; seconds are exactly blocks * 15.
    """
    context = ctx or snapshot.context
    features = extract_features(record, context)
    raw = float(snapshot.model.predict(features.reshape(1, -1))[0])
    blocks = max(1.0, raw)
    return Prediction(blocks=blocks, seconds=blocks * SECONDS_PER_BLOCK)


@dataclass(frozen=True)
class CurvePoint:
    gas_price_gwei: float
    blocks: float
    seconds: float


_CURVE_TEMPLATE = TxRecord(
    tx_hash="0x" + "0" * 64,
    sender="0x" + "0" * 40,
    nonce=0,
    gas_price=0,
    gas_limit=21000,
    value=0,
)


def predict_curve(
    snapshot: ModelSnapshot,
    template: TxRecord = _CURVE_TEMPLATE,
    ctx: Optional[NetworkContext] = None,
    gas_grid_gwei: Optional[Sequence[float]] = None,
) -> list[CurvePoint]:
    """Predicted delay across a gas-price grid (default 0..100 gwei).

    Only the gas-price feature varies; everything else comes from the
    template record and the context.
    """
    context = ctx or snapshot.context
    if gas_grid_gwei is None:
        gas_grid_gwei = np.arange(0, 101, dtype=np.float64)
    grid = np.asarray(gas_grid_gwei, dtype=np.float64)
    base = extract_features(template, context)
    X = np.tile(base, (grid.size, 1))
    X[:, 0] = grid
    raw = np.maximum(1.0, snapshot.model.predict(X))
    return [
        CurvePoint(
            gas_price_gwei=float(g),
            blocks=float(b),
            seconds=float(b) * SECONDS_PER_BLOCK,
        )
        for g, b in zip(grid, raw)
    ]


def render_curve(points: Sequence[CurvePoint]) -> str:
    lines = [
        "Gas price (gwei)  Blocks    Seconds",
        "----------------  --------  --------",
    ]
    for p in points:
        lines.append(f"{p.gas_price_gwei:>16.0f}  {p.blocks:>8.3f}  {p.seconds:>8.2f}")
    return "\n".join(lines)


def store_examples(
    store: DatasetStore, include_failures: bool = False
) -> TrainingWindow:
    """Every labeled example in the store (the static-dataset protocol)."""
    return window_last_k_blocks(store, k=None, include_failures=include_failures)


def evaluate_examples(
    examples: Sequence[LabeledExample],
    kind: str,
    config: ModelConfig = None,
    train_fraction: float = 0.8,
    seed: int = 0,
    model_name: Optional[str] = None,
    window_descriptor: str = "static split",
) -> tuple[MetricReport, float]:
    """Train on a shuffled fraction, score the rest.

    Returns (report, training seconds). The report's PRED column uses the
    0.20 threshold.
    """
    train, valid = split_dataset(list(examples), train_fraction, seed)
    X_train, y_train = examples_to_arrays(train)
    X_valid, y_valid = examples_to_arrays(valid)
    model = make_estimator(kind, config)
    t0 = time.perf_counter()
    model.fit(X_train, y_train)
    train_seconds = time.perf_counter() - t0
    predicted = model.predict(X_valid)
    name = model_name or kind
    return (
        report(y_valid, predicted, model_name=name, window_descriptor=window_descriptor),
        train_seconds,
    )


def evaluate_split(
    store: DatasetStore,
    kind: str,
    config: ModelConfig = None,
    train_fraction: float = 0.8,
    seed: int = 0,
) -> MetricReport:
    """The static-dataset protocol: 80/20 split over the whole store."""
    window = store_examples(store)
    result, _ = evaluate_examples(
        window.examples,
        kind,
        config,
        train_fraction=train_fraction,
        seed=seed,
        window_descriptor=f"{window.descriptor} {train_fraction:.0%} train",
    )
    return result


@dataclass(frozen=True)
class SweepResult:
    label: str
    train_seconds: float
    report: Optional[MetricReport] = None
    error: Optional[str] = None


def sweep(
    store: DatasetStore,
    kind: str,
    train_fraction: float = 0.8,
    seed: int = 0,
) -> list[SweepResult]:
    """Evaluate every paper variant of a model kind on the static split.

    A variant that fails to train is reported as failed; the sweep
    continues with the rest.
    """
    if kind == "forest":
        configs: list = forest_variants()
    elif kind == "mlp":
        configs = mlp_variants()
    else:
        raise ValueError(f"sweep supports 'forest' and 'mlp', not {kind!r}")
    window = store_examples(store)
    results = []
    for config in configs:
        label = config.label()
        try:
            rep, seconds = evaluate_examples(
                window.examples,
                kind,
                config,
                train_fraction=train_fraction,
                seed=seed,
                model_name=label,
                window_descriptor=f"{window.descriptor} {train_fraction:.0%} train",
            )
            results.append(SweepResult(label=label, train_seconds=seconds, report=rep))
        except Exception as exc:
            log.warning("sweep variant %s failed: %s", label, exc)
            results.append(
                SweepResult(label=label, train_seconds=0.0, error=str(exc))
            )
    return results


def render_sweep(results: Sequence[SweepResult]) -> str:
    """Metric table plus a training-time table, one row per variant."""
    ok = [r.report for r in results if r.report is not None]
    parts = []
    if ok:
        parts.append(render_table(ok))
    failed = [r for r in results if r.error is not None]
    for r in failed:
        parts.append(f"{r.label}: FAILED ({r.error})")
    time_lines = ["", "Model  Time to train (s)", "-----  -----------------"]
    width = max(len(r.label) for r in results)
    time_lines[1] = f"{'Model'.ljust(width)}  Time to train (s)"
    time_lines[2] = f"{'-' * width}  -----------------"
    for r in results:
        cell = f"{r.train_seconds:.2f}" if r.error is None else "failed"
        time_lines.append(f"{r.label.ljust(width)}  {cell}")
    parts.extend(time_lines)
    return "\n".join(parts)


@dataclass(frozen=True)
class SchedulerConfig:
    forest_interval: float = 180.0
    mlp_interval: float = 480.0
    glm_interval: float = 180.0  # aligned with the forest's retrain cadence
    window_blocks: int = 100

    def __post_init__(self) -> None:
        for name in ("forest_interval", "mlp_interval", "glm_interval"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.window_blocks < 1:
            raise ValueError("window_blocks must be >= 1")

    def interval_for(self, kind: str) -> float:
        return {
            "forest": self.forest_interval,
            "mlp": self.mlp_interval,
            "glm": self.glm_interval,
        }[kind]


class Scheduler:
    """Sliding-window retrainer: one background loop per model kind.

    Every interval the loop refits its model on the trailing window and
    publishes the snapshot. Failures (empty window, training errors)
    leave the previous snapshot live; after alert_after consecutive
    failures an operator alert is raised through alert_hook.
    """

    def __init__(
        self,
        store: DatasetStore,
        registry: SnapshotRegistry,
        config: SchedulerConfig = SchedulerConfig(),
        kinds: Sequence[str] = KINDS,
        model_configs: Optional[dict[str, ModelConfig]] = None,
        train_fn: Callable = train_snapshot,
        alert_hook: Optional[Callable[[str, Exception], None]] = None,
        alert_after: int = 3,
    ):
        unknown = set(kinds) - set(KINDS)
        if unknown:
            raise ValueError(f"unknown model kinds: {sorted(unknown)}")
        self.store = store
        self.registry = registry
        self.config = config
        self.kinds = tuple(kinds)
        self.model_configs = model_configs or {}
        self.train_fn = train_fn
        self.alert_hook = alert_hook
        self.alert_after = alert_after
        self.consecutive_skips = {kind: 0 for kind in self.kinds}
        self.alerts: list[str] = []
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    def retrain_once(self, kind: str) -> Optional[ModelSnapshot]:
        """One retrain attempt; returns the published snapshot or None."""
        try:
            snapshot = self.train_fn(
                self.store,
                kind,
                config=self.model_configs.get(kind),
                window_blocks=self.config.window_blocks,
                registry=self.registry,
            )
        except Exception as exc:
            self.consecutive_skips[kind] += 1
            log.warning("retrain of %s skipped (%d in a row): %s",
                        kind, self.consecutive_skips[kind], exc)
            if self.consecutive_skips[kind] == self.alert_after:
                message = (
                    f"{kind}: {self.alert_after} consecutive retrain failures; "
                    f"last error: {exc}"
                )
                self.alerts.append(message)
                log.error("operator alert: %s", message)
                if self.alert_hook is not None:
                    self.alert_hook(kind, exc)
            return None
        self.consecutive_skips[kind] = 0
        return snapshot

    def _loop(self, kind: str) -> None:
        interval = self.config.interval_for(kind)
        while not self._stop.is_set():
            self.retrain_once(kind)
            self._stop.wait(interval)

    def start(self) -> "Scheduler":
        if self._threads:
            raise RuntimeError("scheduler already started")
        for kind in self.kinds:
            thread = threading.Thread(
                target=self._loop, args=(kind,), name=f"retrain-{kind}", daemon=True
            )
            self._threads.append(thread)
            thread.start()
        return self

    def stop(self, timeout: float = 10.0) -> None:
        self._stop.set()
        for thread in self._threads:
            thread.join(timeout)
        self._threads.clear()


# ---------------------------------------------------------------------------
# Snapshot persistence. Forest snapshots are written as .npz (they carry
# millions of node values); MLP and GLM snapshots are JSON text.


def _snapshot_meta(snapshot: ModelSnapshot) -> dict:
    return {
        "format": SNAPSHOT_FORMAT,
        "format_version": SNAPSHOT_FORMAT_VERSION,
        "kind": snapshot.kind,
        "version": snapshot.version,
        "trained_at": snapshot.trained_at,
        "window_descriptor": snapshot.window_descriptor,
        "example_count": snapshot.example_count,
        "block_range": list(snapshot.block_range),
        "context": {
            "pending_pool_size": snapshot.context.pending_pool_size,
            "median_gas_price_recent": snapshot.context.median_gas_price_recent,
            "mean_block_interval_recent": snapshot.context.mean_block_interval_recent,
        },
    }


def _snapshot_from_meta(meta: dict, model) -> ModelSnapshot:
    if meta.get("format") != SNAPSHOT_FORMAT:
        raise ValueError(f"not a {SNAPSHOT_FORMAT} file")
    if meta.get("format_version") != SNAPSHOT_FORMAT_VERSION:
        raise ValueError(
            f"unsupported snapshot format version {meta.get('format_version')}"
        )
    return ModelSnapshot(
        kind=meta["kind"],
        model=model,
        version=meta["version"],
        trained_at=meta["trained_at"],
        window_descriptor=meta["window_descriptor"],
        context=NetworkContext(**meta["context"]),
        example_count=meta["example_count"],
        block_range=tuple(meta["block_range"]),
    )


def save_snapshot(snapshot: ModelSnapshot, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = _snapshot_meta(snapshot)
    if snapshot.kind == "forest":
        est: ForestRegressor = snapshot.model
        meta["params"] = est.get_params()
        arrays = forest_to_arrays(est)
        buf = io.BytesIO()
        np.savez_compressed(
            buf,
            meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
            **arrays,
        )
        path.write_bytes(buf.getvalue())
        return path
    if snapshot.kind == "mlp":
        meta["model"] = mlp_to_payload(snapshot.model)
    elif snapshot.kind == "glm":
        meta["model"] = glm_to_payload(snapshot.model)
    else:
        raise ValueError(f"cannot serialize model kind {snapshot.kind!r}")
    path.write_text(json.dumps(meta), encoding="utf-8")
    return path


def load_snapshot(path) -> ModelSnapshot:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:2] == b"PK":  # zip container -> npz forest snapshot
        with np.load(io.BytesIO(blob)) as data:
            meta = json.loads(bytes(data["meta"]).decode("utf-8"))
            arrays = {key: data[key] for key in data.files if key != "meta"}
        model = forest_from_arrays(meta["params"], arrays)
        return _snapshot_from_meta(meta, model)
    meta = json.loads(blob.decode("utf-8"))
    if meta.get("kind") == "mlp":
        model = mlp_from_payload(meta["model"])
    elif meta.get("kind") == "glm":
        model = glm_from_payload(meta["model"])
    else:
        raise ValueError(f"cannot load model kind {meta.get('kind')!r}")
    return _snapshot_from_meta(meta, model)
