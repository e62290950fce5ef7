"""
Evaluation protocols, confusion matrices and reference bundles
"""

from .protocols import (
    CLASS_INCD,
    ORIGINAL_RT,
    PROTOCOLS,
    rounded_metric,
    EvalReport,
    confusion_matrix,
    reassign_labels,
    eval_class_incd,
    eval_original_rt,
    evaluate,
    step_columns,
    evaluate_steps,
)
from .reference import REFERENCE_KINDS, build_reference_bundle

__all__ = [
    'CLASS_INCD',
    'ORIGINAL_RT',
    'PROTOCOLS',
    'rounded_metric',
    'EvalReport',
    'confusion_matrix',
    'reassign_labels',
    'eval_class_incd',
    'eval_original_rt',
    'evaluate',
    'step_columns',
    'evaluate_steps',
    'REFERENCE_KINDS',
    'build_reference_bundle',
]
