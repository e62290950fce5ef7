"""
Analysis module for evaluation diagnostics
"""

from .diagnostics import (
    analyze_eval_report,
    block_norm_means,
    leakage_fractions,
    norm_balance_ratio,
)

__all__ = [
    'analyze_eval_report',
    'block_norm_means',
    'leakage_fractions',
    'norm_balance_ratio',
]
