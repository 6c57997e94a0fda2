"""Evaluation metrics: variance-normalized MSE, R^2, correlation,
reconstruction error, recovered rank, and the out-minus-in gap.

Normalization and R^2 pool all response entries (the matrix is flattened);
there is no per-column treatment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import List, Optional

import numpy as np


@dataclass(frozen=True)
class MetricsReport:
    mse_in: float = math.nan
    mse_out: float = math.nan
    r2_in: float = math.nan
    r2_out: float = math.nan
    corr_out: float = math.nan
    recon_error: Optional[float] = None
    recovered_rank: float = 0.0
    gap_out_in: float = math.nan
    degenerate: bool = False


def _coef_matrix(model) -> np.ndarray:
    if isinstance(model, np.ndarray):
        return model
    return np.asarray(model.m_hat, dtype=float)


def recovered_rank_of(m_hat: np.ndarray) -> int:
    """Count of singular values above 1e-8 times the largest."""
    m_hat = np.asarray(m_hat, dtype=float)
    if not np.any(m_hat):
        return 0
    s = np.linalg.svd(m_hat, compute_uv=False)
    return int(np.count_nonzero(s > 1e-8 * s[0]))


def evaluate(
    model,
    x: np.ndarray,
    y: np.ndarray,
    m_true: Optional[np.ndarray] = None,
    split_label: str = "out",
) -> MetricsReport:
    """Score one (x, y) split of a fitted linear model.

    `model` is anything carrying an m_hat attribute, or a bare coefficient
    matrix. The named split's mse/r2 fields are filled; the correlation is
    recorded for the out-of-sample split only. A constant response makes the
    normalized MSE undefined: the report comes back with NaN there and the
    degenerate flag set.
    """
    if split_label not in ("in", "out"):
        raise ValueError("split_label must be 'in' or 'out'")
    m_hat = _coef_matrix(model)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    y_hat = x @ m_hat.T
    resid = y - y_hat

    var_y = float(np.var(y))
    degenerate = var_y == 0.0
    mse = math.nan if degenerate else float(np.mean(resid ** 2)) / var_y
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = math.nan if ss_tot == 0.0 else 1.0 - ss_res / ss_tot

    corr = math.nan
    if split_label == "out":
        yh = y_hat.ravel()
        yv = y.ravel()
        if np.std(yh) > 0 and np.std(yv) > 0:
            corr = float(np.corrcoef(yh, yv)[0, 1])

    recon = None
    if m_true is not None:
        recon = float(np.linalg.norm(np.asarray(m_true, dtype=float) - m_hat))

    kwargs = dict(
        recon_error=recon,
        recovered_rank=float(recovered_rank_of(m_hat)),
        degenerate=degenerate,
    )
    if split_label == "in":
        kwargs.update(mse_in=mse, r2_in=r2)
    else:
        kwargs.update(mse_out=mse, r2_out=r2, corr_out=corr)
    return MetricsReport(**kwargs)


def merge_splits(report_in: MetricsReport, report_out: MetricsReport) -> MetricsReport:
    """Combine an in-sample and an out-of-sample report; gap = out - in."""
    return MetricsReport(
        mse_in=report_in.mse_in,
        mse_out=report_out.mse_out,
        r2_in=report_in.r2_in,
        r2_out=report_out.r2_out,
        corr_out=report_out.corr_out,
        recon_error=report_out.recon_error
        if report_out.recon_error is not None
        else report_in.recon_error,
        recovered_rank=report_out.recovered_rank,
        gap_out_in=report_out.mse_out - report_in.mse_in,
        degenerate=report_in.degenerate or report_out.degenerate,
    )


def aggregate(reports: List[MetricsReport], stat: str) -> MetricsReport:
    """Fieldwise mean or sample std (divisor N-1) across reports.

    recon_error aggregates only when every report carries it. The std of a
    single report is reported as 0.
    """
    if not reports:
        raise ValueError("empty report list")
    if stat not in ("mean", "std"):
        raise ValueError("stat must be 'mean' or 'std'")

    def reduce(values):
        arr = np.asarray(values, dtype=float)
        # identical values must reduce exactly, not to a rounding residue
        if arr.size == 1 or np.all(arr == arr[0]):
            return float(arr[0]) if stat == "mean" else 0.0
        if stat == "mean":
            return float(np.mean(arr))
        return float(np.std(arr, ddof=1))

    out = {}
    for f in fields(MetricsReport):
        vals = [getattr(r, f.name) for r in reports]
        if f.name == "degenerate":
            out[f.name] = any(vals)
        elif f.name == "recon_error":
            out[f.name] = None if any(v is None for v in vals) else reduce(vals)
        else:
            out[f.name] = reduce(vals)
    return MetricsReport(**out)
