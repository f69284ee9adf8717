"""Export channel-summed shallow-layer feature maps from vision models.

A forward hook on the selected layer captures its post-activation output;
summing over the channel axis gives the 2D map the detector pipeline
consumes.  Outputs are plain NPY files (2D float32) plus a JSONL manifest
fragment with the caller-supplied labeling.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torchvision import models


class ExtractError(Exception):
    """Base for extraction failures the caller can act on."""


class UnknownLayerError(ExtractError):
    pass


class WeightsError(ExtractError):
    """Weights could not be obtained (download failure, bad file)."""


# Per-architecture name of the activation module that follows the first
# convolution.  Other torchvision models work with an explicit layer name.
FIRST_CONV_ACT = {
    "resnet18": "relu",
    "resnet34": "relu",
    "resnet50": "relu",
    "resnet101": "relu",
    "resnet152": "relu",
}

RESIZE_POLICIES = ("stretch", "center-crop", "none")

# ImageNet channel statistics used by the pretrained torchvision models.
_MEAN = torch.tensor([0.485, 0.456, 0.406]).view(3, 1, 1)
_STD = torch.tensor([0.229, 0.224, 0.225]).view(3, 1, 1)


@dataclass(frozen=True)
class ExtractSpec:
    """What to extract, from which model, and how to label the outputs."""

    images: tuple[str, ...]
    out_dir: str
    model: str = "resnet50"
    layer: str | None = None  # None: first conv's activation for the model
    weights: str = "pretrained"  # "pretrained" | "none" | state-dict path
    resize: str = "stretch"
    size: int = 224
    label: int = 0
    split: str = "test"
    seed: int = 0
    manifest_name: str = "extracted.jsonl"

    def __post_init__(self):
        if not self.images:
            raise ValueError("no input images")
        if self.resize not in RESIZE_POLICIES:
            raise ValueError(f"resize must be one of {RESIZE_POLICIES}, got {self.resize!r}")
        if self.size < 1:
            raise ValueError(f"size must be positive, got {self.size}")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if self.split not in ("train", "test", "val"):
            raise ValueError(f"split must be train/test/val, got {self.split!r}")


def build_model(spec: ExtractSpec) -> torch.nn.Module:
    """Instantiate the named model in eval mode with the requested weights."""
    try:
        builder = models.get_model_builder(spec.model)
    except ValueError as e:
        raise ExtractError(f"unknown model {spec.model!r}") from e
    if spec.weights == "none":
        torch.manual_seed(spec.seed)
        model = builder(weights=None)
    elif spec.weights == "pretrained":
        try:
            weights = models.get_model_weights(spec.model).DEFAULT
            model = builder(weights=weights)
        except Exception as e:  # urllib/socket errors vary by cause
            raise WeightsError(f"could not obtain pretrained weights: {e}") from e
    else:
        model = builder(weights=None)
        try:
            state = torch.load(spec.weights, map_location="cpu", weights_only=True)
            model.load_state_dict(state)
        except Exception as e:
            raise WeightsError(f"could not load weights from {spec.weights}: {e}") from e
    return model.eval()


def resolve_layer(model: torch.nn.Module, spec: ExtractSpec) -> torch.nn.Module:
    name = spec.layer
    if name is None:
        name = FIRST_CONV_ACT.get(spec.model)
        if name is None:
            raise UnknownLayerError(
                f"no default layer registered for {spec.model!r}; pass one explicitly"
            )
    modules = dict(model.named_modules())
    if name not in modules:
        raise UnknownLayerError(f"model {spec.model!r} has no layer {name!r}")
    return modules[name]


def load_image(path: str | Path, resize: str, size: int) -> torch.Tensor:
    """Image file -> normalized (1, 3, H, W) float tensor."""
    with Image.open(path) as img:
        img = img.convert("RGB")
        if resize == "stretch":
            img = img.resize((size, size), Image.BILINEAR)
        elif resize == "center-crop":
            w, h = img.size
            scale = size / min(w, h)
            img = img.resize((max(size, round(w * scale)), max(size, round(h * scale))),
                             Image.BILINEAR)
            w, h = img.size
            left, top = (w - size) // 2, (h - size) // 2
            img = img.crop((left, top, left + size, top + size))
        arr = np.asarray(img, dtype=np.float32) / 255.0
    t = torch.from_numpy(arr).permute(2, 0, 1)
    return ((t - _MEAN) / _STD).unsqueeze(0)


def extract(spec: ExtractSpec) -> tuple[list[Path], Path]:
    """Run each image to the selected layer; write maps + manifest fragment.

    Returns (map file paths, fragment path).  The layer's first forward
    invocation is captured, its output summed over the channel axis, and the
    2D result written as float32 NPY named after the input image.
    """
    model = build_model(spec)
    layer = resolve_layer(model, spec)
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    captured: list[torch.Tensor] = []

    def keep_first(_module, _inputs, output):
        if not captured:
            captured.append(output.detach())

    handle = layer.register_forward_hook(keep_first)
    written: list[Path] = []
    lines: list[str] = []
    try:
        for i, image in enumerate(spec.images):
            captured.clear()
            batch = load_image(image, spec.resize, spec.size)
            with torch.no_grad():
                model(batch)
            if not captured:
                raise ExtractError(
                    f"layer {spec.layer!r} never ran in the forward pass"
                )
            fmap = captured[0][0].sum(dim=0).numpy().astype(np.float32)
            name = f"{i:05d}_{Path(image).stem}.npy"
            np.save(out_dir / name, fmap)
            written.append(out_dir / name)
            lines.append(json.dumps(
                {"map_path": name, "label": spec.label, "split": spec.split}
            ))
    finally:
        handle.remove()

    fragment = out_dir / spec.manifest_name
    fragment.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return written, fragment
