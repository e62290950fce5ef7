"""
Multi-run drivers: the ablation grid over one shared stage-1 model, and
the multi-step incremental run.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from tqdm import tqdm

from ..datagen import SplitSet
from ..model import ModelBundle
from ..prototypes import PrototypeStore
from ..utils import thread_count
from .config import ARM_NAMES, TrainConfig, resolve_arm
from .stages import RunRecord, TaskLike, resolve_splits, discover, incremental_step, pretrain_supervised

logger = logging.getLogger(__name__)


@dataclass
class ArmResult:
    arm: str
    model: ModelBundle
    record: RunRecord


@dataclass
class GridResult:
    pretrain: RunRecord
    arms: Dict[str, ArmResult] = field(default_factory=dict)

    def records(self) -> List[RunRecord]:
        return [self.arms[name].record for name in self.arms]


def run_ablation_grid(
    task: TaskLike,
    base_cfg: TrainConfig,
    arms: Sequence[str] = ARM_NAMES,
    threads: Optional[int] = None,
) -> GridResult:
    """
    Every arm discovers from the same stage-1 bundle and prototypes.

    Arms run on up to `threads` worker threads (FROST_THREADS by default);
    each one draws from its own (seed, arm) random streams, so results do not
    depend on scheduling.
    """
    splits = resolve_splits(task)
    names = [resolve_arm(a) for a in arms]
    m0, store0, pre_record = pretrain_supervised(splits, base_cfg)
    workers = threads or thread_count()
    logger.info("ablation grid: %d arms on %d thread(s)", len(names), workers)

    def run_arm(name: str) -> ArmResult:
        cfg = base_cfg.with_arm(name)
        model, record = discover(m0, store0, splits, cfg, arm=name)
        return ArmResult(name, model, record)

    result = GridResult(pretrain=pre_record)
    if workers == 1:
        outcomes = [run_arm(name) for name in tqdm(names, desc="grid", disable=not base_cfg.show_progress)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_arm, names))
    for outcome in outcomes:
        result.arms[outcome.arm] = outcome
    return result


@dataclass
class StepsResult:
    pretrain: RunRecord
    steps: List[RunRecord]
    model: ModelBundle
    store: Optional[PrototypeStore]
    rows: List[Dict[str, float]]


def run_steps(task: TaskLike, cfg: TrainConfig, arm: str = "full") -> StepsResult:
    """Pretrain, then every discovery step of the task in order."""
    splits: SplitSet = resolve_splits(task)
    arm = resolve_arm(arm)
    arm_cfg = cfg.with_arm(arm)
    m, store, pre_record = pretrain_supervised(splits, cfg)

    records, rows = [], []
    mappings: List[Dict[int, int]] = []
    for step in range(splits.spec.num_steps):
        if step == 0:
            m, record = discover(m, store, splits, arm_cfg, step=0, arm=arm)
        else:
            m, store, record = incremental_step(m, store, splits, arm_cfg, step, arm=arm, frozen_mappings=mappings)
        mappings = record.mappings
        records.append(record)
        row = {"Step": step + 1}
        row.update(record.step_metrics)
        rows.append(row)
        logger.info("step %d metrics %s", step + 1, {k: round(v, 4) for k, v in record.step_metrics.items()})
    return StepsResult(pre_record, records, m, store, rows)
