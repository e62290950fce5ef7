"""
Model package: backbone, heads, bundle and checkpoints
"""

from .network import (
    Dense,
    Backbone,
    Head,
    ModelBundle,
    init_bundle,
    forward_features,
    extend_head,
    snapshot_frozen,
    head_weight_norms,
    concat_heads,
)
from .checkpoint import (
    save_checkpoint,
    load_checkpoint,
    bundle_to_document,
    bundle_from_document,
)

__all__ = [
    'Dense',
    'Backbone',
    'Head',
    'ModelBundle',
    'init_bundle',
    'forward_features',
    'extend_head',
    'snapshot_frozen',
    'head_weight_norms',
    'concat_heads',
    'save_checkpoint',
    'load_checkpoint',
    'bundle_to_document',
    'bundle_from_document',
]
