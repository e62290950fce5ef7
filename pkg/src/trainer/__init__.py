"""
Trainer package: configuration, optimiser, stages and multi-run drivers
"""

from .config import ARMS, ARM_NAMES, SWITCHES, TrainConfig, RunConfig, resolve_arm, load_config
from .optim import SGD
from .stages import (
    RunRecord,
    resolve_splits,
    pretrain_supervised,
    discover,
    incremental_step,
    step_prototypes,
)
from .grid import ArmResult, GridResult, StepsResult, run_ablation_grid, run_steps

__all__ = [
    'ARMS',
    'ARM_NAMES',
    'SWITCHES',
    'TrainConfig',
    'RunConfig',
    'resolve_arm',
    'load_config',
    'SGD',
    'RunRecord',
    'resolve_splits',
    'pretrain_supervised',
    'discover',
    'incremental_step',
    'step_prototypes',
    'ArmResult',
    'GridResult',
    'StepsResult',
    'run_ablation_grid',
    'run_steps',
]
