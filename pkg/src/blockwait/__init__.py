"""blockwait: predict how many blocks an Ethereum transaction waits.

Three regressors over one 7-feature representation (random forest,
multilayer perceptron, and a Poisson-GLM baseline), a mempool simulator
for synthetic labeled data, a JSONL dataset store fed by live JSON-RPC
ingestion or the simulator, an evaluation harness (MAE/RMSE/MAPE/PRED),
and a sliding-window retraining pipeline with an HTTP prediction
service.
"""

from .core import (
    FEATURE_COUNT,
    FEATURE_NAMES,
    SECONDS_PER_BLOCK,
    ClockSkewError,
    LabeledExample,
    NetworkContext,
    ReceiptStatus,
    TxRecord,
    examples_to_arrays,
    extract_features,
    label_blocks,
    split_dataset,
    wei_to_unit,
)
from .forest import ForestConfig, ForestRegressor, Tree, fit_tree, forest_variants
from .glm import GlmConvergenceError, GlmSingularError, PoissonGlmRegressor
from .metrics import MetricReport, mae, mape, pred_n, render_table, report, rmse
from .mlp import (
    MlpConfig,
    MlpRegressor,
    MlpWeights,
    TrainingDivergedError,
    forward,
    init_mlp,
    loss_value,
    mlp_variants,
    train_weights,
)
from .pipeline import (
    KINDS,
    MeanBaseline,
    ModelSnapshot,
    Prediction,
    Scheduler,
    SchedulerConfig,
    SnapshotRegistry,
    evaluate_split,
    load_snapshot,
    predict_curve,
    predict_one,
    save_snapshot,
    sweep,
    train_snapshot,
)
from .sim import SimConfig, SimState, generate_dataset, ground_truth_curve, step_block
from .store import DatasetStore, EmptyWindowError, TrainingWindow, window_last_k_blocks

__version__ = "0.1.0"

__all__ = [
    "FEATURE_COUNT",
    "FEATURE_NAMES",
    "SECONDS_PER_BLOCK",
    "ClockSkewError",
    "LabeledExample",
    "NetworkContext",
    "ReceiptStatus",
    "TxRecord",
    "examples_to_arrays",
    "extract_features",
    "label_blocks",
    "split_dataset",
    "wei_to_unit",
    "ForestConfig",
    "ForestRegressor",
    "Tree",
    "fit_tree",
    "forest_variants",
    "GlmConvergenceError",
    "GlmSingularError",
    "PoissonGlmRegressor",
    "MetricReport",
    "mae",
    "mape",
    "pred_n",
    "render_table",
    "report",
    "rmse",
    "MlpConfig",
    "MlpRegressor",
    "MlpWeights",
    "TrainingDivergedError",
    "forward",
    "init_mlp",
    "loss_value",
    "mlp_variants",
    "train_weights",
    "KINDS",
    "MeanBaseline",
    "ModelSnapshot",
    "Prediction",
    "Scheduler",
    "SchedulerConfig",
    "SnapshotRegistry",
    "evaluate_split",
    "load_snapshot",
    "predict_curve",
    "predict_one",
    "save_snapshot",
    "sweep",
    "train_snapshot",
    "SimConfig",
    "SimState",
    "generate_dataset",
    "ground_truth_curve",
    "step_block",
    "DatasetStore",
    "EmptyWindowError",
    "TrainingWindow",
    "window_last_k_blocks",
]
