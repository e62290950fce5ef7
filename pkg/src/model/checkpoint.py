"""
JSON checkpoints for ModelBundle.

Document layout:
    format_version, classes {base, steps}, parameters [{name, shape, values}]
Values are written with Python's shortest round-trip float repr, which
reads back to the identical 64-bit value.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from ..autodiff import Tensor
from ..errors import ParseError
from ..utils import read_json, write_json
from .network import Backbone, Dense, Head, ModelBundle

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def _param_entry(name: str, tensor: Tensor) -> Dict[str, Any]:
    return {
        "name": name,
        "shape": list(tensor.shape),
        "values": [float(v) for v in tensor.data.reshape(-1)],
    }


def _backbone_entries(prefix: str, backbone: Backbone) -> List[Dict[str, Any]]:
    entries = []
    for index, layer in enumerate(backbone.layers):
        entries.append(_param_entry(f"{prefix}.{index}.weight", layer.weight))
        entries.append(_param_entry(f"{prefix}.{index}.bias", layer.bias))
    return entries


def _head_entries(prefix: str, head: Head) -> List[Dict[str, Any]]:
    return [_param_entry(f"{prefix}.weight", head.weight), _param_entry(f"{prefix}.bias", head.bias)]


def bundle_to_document(m: ModelBundle) -> Dict[str, Any]:
    parameters = _backbone_entries("backbone", m.backbone)
    if m.frozen_backbone is not None:
        parameters += _backbone_entries("frozen", m.frozen_backbone)
    parameters += _head_entries("old_head", m.old_head)
    parameters += _head_entries("joint_head", m.joint_head)
    if m.novel_head is not None:
        parameters += _head_entries("novel_head", m.novel_head)
    for index, head in enumerate(m.retired_heads):
        parameters += _head_entries(f"retired.{index}", head)
    return {
        "format_version": FORMAT_VERSION,
        "classes": {
            "base": m.base_classes,
            "steps": list(m.step_sizes),
            "old": m.num_old,
            "new": m.num_new,
            "all": m.num_all,
        },
        "parameters": parameters,
    }


def _read_parameters(doc: Dict[str, Any]) -> Dict[str, np.ndarray]:
    entries = doc.get("parameters")
    if not isinstance(entries, list):
        raise ParseError("checkpoint has no 'parameters' list")
    arrays: Dict[str, np.ndarray] = {}
    for position, entry in enumerate(entries):
        try:
            name = str(entry["name"])
            shape = tuple(int(s) for s in entry["shape"])
            values = np.array(entry["values"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"parameter entry {position} is malformed: {e}") from e
        if int(np.prod(shape)) != values.size:
            raise ParseError(f"parameter {name}: shape {list(shape)} does not match {values.size} values")
        if name in arrays:
            raise ParseError(f"parameter {name} appears twice")
        arrays[name] = values.reshape(shape)
    return arrays


def _take_backbone(arrays: Dict[str, np.ndarray], prefix: str, trainable: bool) -> Optional[Backbone]:
    layers = []
    index = 0
    while f"{prefix}.{index}.weight" in arrays:
        weight = arrays[f"{prefix}.{index}.weight"]
        bias = arrays.get(f"{prefix}.{index}.bias")
        if bias is None:
            raise ParseError(f"{prefix}.{index}.bias missing")
        layers.append(Dense(
            Tensor(weight, requires_grad=trainable, name=f"backbone.{index}.weight"),
            Tensor(bias, requires_grad=trainable, name=f"backbone.{index}.bias"),
        ))
        index += 1
    return Backbone(layers) if layers else None


def _take_head(arrays: Dict[str, np.ndarray], prefix: str) -> Optional[Head]:
    weight = arrays.get(f"{prefix}.weight")
    if weight is None:
        return None
    bias = arrays.get(f"{prefix}.bias")
    if bias is None:
        raise ParseError(f"{prefix}.bias missing")
    return Head(Tensor(weight, requires_grad=True, name=f"{prefix}.weight"),
                Tensor(bias, requires_grad=True, name=f"{prefix}.bias"))


def bundle_from_document(doc: Dict[str, Any]) -> ModelBundle:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported checkpoint format_version {version!r}")
    classes = doc.get("classes") or {}
    try:
        base = int(classes["base"])
        steps = [int(s) for s in classes.get("steps", [])]
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"checkpoint class counts are malformed: {e}") from e

    arrays = _read_parameters(doc)
    backbone = _take_backbone(arrays, "backbone", trainable=True)
    old_head = _take_head(arrays, "old_head")
    joint_head = _take_head(arrays, "joint_head")
    if backbone is None or old_head is None or joint_head is None:
        raise ParseError("checkpoint needs backbone, old_head and joint_head parameters")

    retired = []
    while f"retired.{len(retired)}.weight" in arrays:
        retired.append(_take_head(arrays, f"retired.{len(retired)}"))

    m = ModelBundle(
        backbone=backbone,
        old_head=old_head,
        joint_head=joint_head,
        base_classes=base,
        novel_head=_take_head(arrays, "novel_head"),
        frozen_backbone=_take_backbone(arrays, "frozen", trainable=False),
        step_sizes=steps,
        retired_heads=retired,
    )
    if m.joint_head.num_classes != m.num_all:
        raise ParseError(f"joint head has {m.joint_head.num_classes} rows, class counts say {m.num_all}")
    if m.novel_head is not None and m.novel_head.num_classes != m.num_new:
        raise ParseError(f"novel head has {m.novel_head.num_classes} rows, class counts say {m.num_new}")
    return m


def save_checkpoint(m: ModelBundle, path: Union[str, Path]) -> Path:
    return write_json(path, bundle_to_document(m))


def load_checkpoint(path: Union[str, Path]) -> ModelBundle:
    m = bundle_from_document(read_json(path))
    logger.info("loaded checkpoint %s (%d classes)", path, m.num_all)
    return m
