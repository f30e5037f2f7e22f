"""Evaluation measures for confirmation-time predictions.

All four measures take parallel vectors of actual and estimated delays
(in blocks). Actuals must respect the one-block label floor, which keeps
the percentage-error denominators away from zero.

PRED(n) is the fraction of samples whose absolute percentage error
|act - est| / act is at most n; reports use n = 0.20 by default.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


def _check_pairs(actual, predicted, require_floor: bool = False):
    act = np.asarray(actual, dtype=np.float64).ravel()
    est = np.asarray(predicted, dtype=np.float64).ravel()
    if act.size == 0:
        raise ValueError("cannot score an empty evaluation set")
    if act.shape != est.shape:
        raise ValueError(f"length mismatch: {act.shape[0]} actual vs {est.shape[0]} predicted")
    if not (np.all(np.isfinite(act)) and np.all(np.isfinite(est))):
        raise ValueError("evaluation pairs must be finite")
    if require_floor and np.any(act < 1.0):
        raise ValueError("actual delays below the 1-block floor")
    return act, est


def mae(actual, predicted) -> float:
    """Mean absolute error."""
    act, est = _check_pairs(actual, predicted)
    return float(np.mean(np.abs(act - est)))


def rmse(actual, predicted) -> float:
    """Root mean squared error."""
    act, est = _check_pairs(actual, predicted)
    return float(math.sqrt(np.mean((act - est) ** 2)))


def mape(actual, predicted) -> float:
    """Mean absolute percentage error, in percent."""
    act, est = _check_pairs(actual, predicted, require_floor=True)
    return float(np.mean(np.abs((act - est) / act)) * 100.0)


def pred_n(actual, predicted, threshold: float = 0.20) -> float:
    """Fraction of samples with absolute percentage error <= threshold."""
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    act, est = _check_pairs(actual, predicted, require_floor=True)
    return float(np.mean(np.abs(act - est) / act <= threshold))


@dataclass(frozen=True)
class MetricReport:
    """One evaluation row: MAE, RMSE, MAPE and PRED at chosen thresholds."""

    n: int
    mae: float
    rmse: float
    mape_pct: float
    pred: dict[float, float]
    model_name: str
    window_descriptor: str

    COLUMNS = ("Model", "MAE", "RMSE", "MAPE", "Pred (0.20)")

    def row(self) -> tuple[str, ...]:
        cells = [
            self.model_name,
            f"{self.mae:.4f}",
            f"{self.rmse:.4f}",
            f"{self.mape_pct:.2f}%",
        ]
        for threshold in sorted(self.pred):
            cells.append(f"{self.pred[threshold] * 100:.2f}%")
        return tuple(cells)

    def header(self) -> tuple[str, ...]:
        head = list(self.COLUMNS[:4])
        for threshold in sorted(self.pred):
            head.append(f"Pred ({threshold:.2f})")
        return tuple(head)

    def render(self) -> str:
        return render_table([self])

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "mae": self.mae,
                "rmse": self.rmse,
                "mape_pct": self.mape_pct,
                "pred": {f"{t:.2f}": v for t, v in sorted(self.pred.items())},
                "model": self.model_name,
                "window": self.window_descriptor,
            }
        )


def report(
    actual,
    predicted,
    model_name: str,
    window_descriptor: str = "",
    pred_thresholds: tuple[float, ...] = (0.20,),
) -> MetricReport:
    """Compute all four measures over an evaluation set."""
    act, est = _check_pairs(actual, predicted, require_floor=True)
    return MetricReport(
        n=int(act.size),
        mae=mae(act, est),
        rmse=rmse(act, est),
        mape_pct=mape(act, est),
        pred={t: pred_n(act, est, t) for t in pred_thresholds},
        model_name=model_name,
        window_descriptor=window_descriptor,
    )


def render_table(reports: list[MetricReport]) -> str:
    """Aligned text table, one row per report, in MAE/RMSE/MAPE/PRED order."""
    if not reports:
        return "(no results)"
    header = reports[0].header()
    rows = [r.row() for r in reports]
    widths = [
        max(len(header[i]), *(len(row[i]) for row in rows))
        for i in range(len(header))
    ]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip(),
        "  ".join("-" * w for w in widths),
    ]
    for row in rows:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip())
    return "\n".join(lines)
