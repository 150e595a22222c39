"""Fine-tuning configuration emitter for the upstream trainer.

The adapter never launches training; it only writes a YAML config embedding
every hyperparameter so an external trainer can consume it. The published
training protocol states two different checkpoint intervals (2 and 5
epochs), so the interval is a required field with no default rather than a
silently chosen value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .errors import AdapterError

DEFAULT_AUGMENTATIONS = ("horizontal_flip", "affine", "resize", "color_jitter")
DEFAULT_TRAINABLE = ("image_encoder", "mask_decoder")


@dataclass(frozen=True)
class FinetuneSpec:
    checkpoint_interval: int  # epochs; intentionally no default
    optimizer: str = "AdamW"
    base_lr: float = 5.0e-6
    vision_lr: float = 3.0e-6
    weight_decay: float = 0.1
    loss_weights: dict = field(
        default_factory=lambda: {"mask": 20.0, "dice": 1.0, "iou": 1.0, "class": 1.0}
    )
    epochs: int = 30
    batch_size: int = 1
    augmentations: tuple = DEFAULT_AUGMENTATIONS
    trainable: tuple = DEFAULT_TRAINABLE

    def __post_init__(self):
        if self.base_lr <= 0 or self.vision_lr <= 0:
            raise AdapterError("learning rates must be > 0")
        if self.weight_decay < 0:
            raise AdapterError("weight decay must be >= 0")
        if any(w < 0 for w in self.loss_weights.values()):
            raise AdapterError("loss weights must be >= 0")
        if set(self.loss_weights) != {"mask", "dice", "iou", "class"}:
            raise AdapterError(f"loss weights must name mask/dice/iou/class, got {sorted(self.loss_weights)}")
        if self.epochs < 1 or self.batch_size < 1:
            raise AdapterError("epochs and batch_size must be >= 1")
        if self.checkpoint_interval < 1:
            raise AdapterError("checkpoint_interval must be >= 1")
        object.__setattr__(self, "augmentations", tuple(self.augmentations))
        object.__setattr__(self, "trainable", tuple(self.trainable))

    def to_obj(self) -> dict:
        return {
            "optimizer": self.optimizer,
            "base_lr": self.base_lr,
            "vision_lr": self.vision_lr,
            "weight_decay": self.weight_decay,
            "loss_weights": dict(self.loss_weights),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "augmentations": list(self.augmentations),
            "trainable": list(self.trainable),
            "checkpoint_interval": self.checkpoint_interval,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "FinetuneSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise AdapterError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(obj)
        for key in ("augmentations", "trainable"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        if "checkpoint_interval" not in kwargs:
            raise AdapterError("config is missing checkpoint_interval")
        return cls(**kwargs)


def emit_finetune_config(spec: FinetuneSpec, path: str):
    """Write the given spec as YAML; parse_finetune_config(path) round-trips it."""
    with open(path, "w") as f:
        yaml.safe_dump(spec.to_obj(), f, sort_keys=True, default_flow_style=False)


def parse_finetune_config(path: str) -> FinetuneSpec:
    with open(path) as f:
        obj = yaml.safe_load(f)
    if not isinstance(obj, dict):
        raise AdapterError(f"{path} does not contain a config mapping")
    return FinetuneSpec.from_obj(obj)
