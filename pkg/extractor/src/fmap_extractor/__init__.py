"""Channel-summed shallow-layer feature-map extraction for vision models."""

from .extract import (
    ExtractError,
    ExtractSpec,
    FIRST_CONV_ACT,
    RESIZE_POLICIES,
    UnknownLayerError,
    WeightsError,
    build_model,
    extract,
    load_image,
    resolve_layer,
)

__version__ = "0.1.0"

__all__ = [
    "ExtractError",
    "ExtractSpec",
    "FIRST_CONV_ACT",
    "RESIZE_POLICIES",
    "UnknownLayerError",
    "WeightsError",
    "build_model",
    "extract",
    "load_image",
    "resolve_layer",
]
