"""
Objectives package: loss terms and ramp-up schedules
"""

from .schedules import RampUpSchedule, ramp_up
from .losses import (
    PAIR_SIMILARITIES,
    LWF_MODES,
    LossParts,
    LossBreakdown,
    cross_entropy_supervised,
    one_hot,
    lwf_logit_kd,
    top_k_indices,
    rank_stats_pair_label,
    rank_stats_pair_labels,
    pair_probability,
    pairwise_bce,
    pairwise_bce_batch,
    make_pseudo_label,
    make_pseudo_labels,
    self_training_loss,
    consistency_mse,
    replay_loss,
    feature_kd,
    frost_total,
    average_breakdowns,
)

__all__ = [
    'RampUpSchedule',
    'ramp_up',
    'PAIR_SIMILARITIES',
    'LWF_MODES',
    'LossParts',
    'LossBreakdown',
    'cross_entropy_supervised',
    'one_hot',
    'lwf_logit_kd',
    'top_k_indices',
    'rank_stats_pair_label',
    'rank_stats_pair_labels',
    'pair_probability',
    'pairwise_bce',
    'pairwise_bce_batch',
    'make_pseudo_label',
    'make_pseudo_labels',
    'self_training_loss',
    'consistency_mse',
    'replay_loss',
    'feature_kd',
    'frost_total',
    'average_breakdowns',
]
