"""
Prototype store for generative feature replay
"""

from .store import (
    ClassPrototype,
    PrototypeStore,
    compute_prototypes,
    sample_replay,
    sample_replay_batch,
    store_to_document,
    store_from_document,
    save_prototypes,
    load_prototypes,
)

__all__ = [
    'ClassPrototype',
    'PrototypeStore',
    'compute_prototypes',
    'sample_replay',
    'sample_replay_batch',
    'store_to_document',
    'store_from_document',
    'save_prototypes',
    'load_prototypes',
]
