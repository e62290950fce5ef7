"""
Synthetic task generation, correlated views and CSV ingestion
"""

from .synthetic import (
    DEFAULT_PROFILE,
    PLACEMENTS,
    PROFILES,
    TaskSpec,
    LabeledSet,
    UnlabeledSet,
    SplitSet,
    class_means,
    parent_classes,
    generate,
    correlated_view,
)
from .ingest import ingest_csv, export_csv

__all__ = [
    'DEFAULT_PROFILE',
    'PLACEMENTS',
    'PROFILES',
    'TaskSpec',
    'LabeledSet',
    'UnlabeledSet',
    'SplitSet',
    'class_means',
    'parent_classes',
    'generate',
    'correlated_view',
    'ingest_csv',
    'export_csv',
]
