"""Evaluation metrics for a search run."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from boxfinder.geometry import NNIndex

log = logging.getLogger(__name__)

TAU_PRECISION = 0.2


def precision_tau(X, Y, tau: float = TAU_PRECISION) -> float:
    """Half the fraction of X within ``tau`` of Y plus half the fraction of Y
    within ``tau`` of X, on raw Euclidean distances. An empty X scores 0."""
    if tau <= 0:
        raise ValueError("tau must be > 0")
    X = np.asarray(X, dtype=np.float64).reshape(-1, 3)
    Y = np.asarray(Y, dtype=np.float64).reshape(-1, 3)
    if len(Y) == 0:
        raise ValueError("Y must be non-empty")
    if len(X) == 0:
        return 0.0
    d_xy, _ = NNIndex(Y).query(X)
    d_yx, _ = NNIndex(X).query(Y)
    return float(np.count_nonzero(d_xy <= tau) / (2 * len(X)) + np.count_nonzero(d_yx <= tau) / (2 * len(Y)))


def best_curve(trace, budget: int, fill: float) -> np.ndarray:
    """Best loss after each of evaluations 1..budget as a step function:
    ``fill`` before the first recorded row, last value after the last one."""
    curve = np.full(budget, np.nan)
    for idx, b in zip(trace.eval_index, trace.best_loss):
        if 1 <= idx <= budget:
            curve[idx - 1] = b
    last = fill
    for k in range(budget):
        if np.isnan(curve[k]):
            curve[k] = last
        else:
            last = curve[k]
    return curve


def auc(trace, budget: int, fill: float | None = None) -> float:
    """Mean best loss over the budget; lower means faster convergence."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if fill is None:
        from boxfinder.objective import empty_loss

        fill = empty_loss()
    return float(np.mean(best_curve(trace, budget, fill)))


def auc_normalized(aucs):
    """Rescale per-method AUCs of one scene to [0, 1] (best 0, worst 1).

    Accepts a mapping or a sequence and returns the same kind. All-equal
    inputs map to 0.
    """
    keys = list(aucs.keys()) if isinstance(aucs, dict) else None
    vals = np.array(list(aucs.values()) if keys is not None else list(aucs), dtype=np.float64)
    lo, hi = vals.min(), vals.max()
    if hi == lo:
        log.warning("all AUC values are equal; normalised AUC set to 0")
        out = np.zeros_like(vals)
    else:
        out = (vals - lo) / (hi - lo)
    if keys is not None:
        return {k: float(v) for k, v in zip(keys, out)}
    return [float(v) for v in out]


@dataclass
class RunReport:
    method: str
    loss: float
    precision: float
    auc: float
    auc_norm: float
    n_cuboids: int
    budget: int
    seed: int

    def to_json(self) -> dict:
        return asdict(self)
