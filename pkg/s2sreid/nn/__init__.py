"""Layer engine and the part-based embedding network."""

from .gradcheck import check_gradient, gradient_check, network_loss_closure
from .layers import LayerKind, LayerSpec
from .network import (
    PartNetwork,
    ScaleConfig,
    SequentialConfig,
    Tape,
    backward,
    build_linear_network,
    build_network,
    build_part_network,
    build_sequential_network,
    forward,
    init_params,
)
from .serialize import load_model, save_model

__all__ = [
    "LayerKind",
    "LayerSpec",
    "PartNetwork",
    "ScaleConfig",
    "SequentialConfig",
    "Tape",
    "backward",
    "build_linear_network",
    "build_network",
    "build_part_network",
    "build_sequential_network",
    "check_gradient",
    "forward",
    "gradient_check",
    "init_params",
    "load_model",
    "network_loss_closure",
    "save_model",
]
