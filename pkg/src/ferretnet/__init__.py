"""Synthetic-image detection with local pixel dependency maps and FerretNet."""
from .lpd import CenterStrategy, NeighborhoodSpec, Statistic, lpd_map, lpd_to_uint8, reconstruct, zero_pad
from .metrics import accuracy, average_precision
from .model import FerretNet, FerretVariant, ModelDescription, VARIANTS, build_ferretnet, describe_model

__version__ = "0.1.0"

__all__ = [
    "CenterStrategy",
    "FerretNet",
    "FerretVariant",
    "ModelDescription",
    "NeighborhoodSpec",
    "Statistic",
    "VARIANTS",
    "accuracy",
    "average_precision",
    "build_ferretnet",
    "describe_model",
    "lpd_map",
    "lpd_to_uint8",
    "reconstruct",
    "zero_pad",
]
