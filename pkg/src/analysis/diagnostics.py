"""
Diagnostics read off an evaluation report
- weight-norm balance between the old and new blocks of the head
- cross-task leakage from the confusion matrix
- disagreement between the two evaluation protocols
"""

from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ..evaluation import EvalReport
from ..utils import format_percent

RECENCY_BIAS_MARGIN = 0.20
LEAKAGE_WARNING = 0.10
PROTOCOL_GAP_WARNING = 0.10


def norm_balance_ratio(norms: Sequence[float]) -> float:
    """max/min of the head's row norms; 1.0 means perfectly balanced."""
    values = np.asarray(norms, dtype=np.float64)
    if values.size == 0:
        return float("nan")
    low = values.min()
    if low <= 0:
        return float("inf")
    return float(values.max() / low)


def block_norm_means(norms: Sequence[float], num_old: int) -> Dict[str, float]:
    values = np.asarray(norms, dtype=np.float64)
    old, new = values[:num_old], values[num_old:]
    return {
        'old': float(old.mean()) if old.size else float("nan"),
        'new': float(new.mean()) if new.size else float("nan"),
    }


def leakage_fractions(confusion: np.ndarray, num_old: int) -> Dict[str, float]:
    """
    old_to_new: share of old-class samples predicted into the new block.
    new_to_old: share of new-class samples predicted into the old block.
    """
    confusion = np.asarray(confusion)
    old_rows, new_rows = confusion[:num_old], confusion[num_old:]
    n_old, n_new = old_rows.sum(), new_rows.sum()
    return {
        'old_to_new': float(old_rows[:, num_old:].sum() / n_old) if n_old else 0.0,
        'new_to_old': float(new_rows[:, :num_old].sum() / n_new) if n_new else 0.0,
    }


def _summary(report: EvalReport) -> str:
    return (f"{report.protocol}: Old {format_percent(report.old_acc)}, "
            f"New {format_percent(report.new_acc)}, All {format_percent(report.all_acc)} "
            f"over {report.num_old} old and {report.num_new} new classes")


def analyze_eval_report(report: EvalReport, num_old: Optional[int] = None,
                        other_report: Optional[EvalReport] = None) -> Dict[str, Any]:
    """Insights and follow-up suggestions for one report."""
    if report is None:
        return {}
    num_old = report.num_old if num_old is None else num_old
    insights: List[str] = []
    recommendations: List[str] = []

    means = block_norm_means(report.head_norms, num_old)
    ratio = means['new'] / means['old'] if means['old'] > 0 else float("nan")
    recency_bias = bool(ratio > 1.0 + RECENCY_BIAS_MARGIN)
    if recency_bias:
        insights.append(f"New-class rows have {ratio:.2f}x the mean weight norm of old-class rows (task-recency bias).")
        recommendations.append("Enable feature replay so the old-class rows keep receiving gradient.")
    elif not np.isnan(ratio):
        insights.append(f"Head rows are balanced: new/old mean norm ratio {ratio:.2f}.")

    leakage = leakage_fractions(report.confusion, num_old)
    if leakage['old_to_new'] > LEAKAGE_WARNING:
        insights.append(f"{format_percent(leakage['old_to_new'])} of old-class samples are predicted as new classes.")
        recommendations.append("Check feature distillation and replay; the old block is being forgotten.")
    if leakage['new_to_old'] > LEAKAGE_WARNING:
        insights.append(f"{format_percent(leakage['new_to_old'])} of new-class samples are predicted as old classes.")
        recommendations.append("Check self-training; the joint head has not absorbed the novel clusters.")

    key_metrics = {
        'Old': format_percent(report.old_acc),
        'New': format_percent(report.new_acc),
        'All': format_percent(report.all_acc),
        'Norm ratio (new/old)': "-" if np.isnan(ratio) else f"{ratio:.2f}",
        'Norm balance (max/min)': f"{norm_balance_ratio(report.head_norms):.2f}",
        'Old -> new leakage': format_percent(leakage['old_to_new']),
        'New -> old leakage': format_percent(leakage['new_to_old']),
    }

    disagreement = None
    if other_report is not None:
        disagreement = abs(report.all_acc - other_report.all_acc)
        key_metrics['Protocol gap (All)'] = format_percent(disagreement)
        if disagreement > PROTOCOL_GAP_WARNING:
            insights.append(
                f"{report.protocol} and {other_report.protocol} disagree on All by {format_percent(disagreement)}; "
                "pooled assignment can hide cross-task confusion."
            )

    return {
        'summary': _summary(report),
        'insights': insights,
        'recommendations': recommendations,
        'key_metrics': key_metrics,
        'recency_bias': recency_bias,
        'norm_ratio': ratio,
        'leakage': leakage,
        'protocol_gap': disagreement,
    }
