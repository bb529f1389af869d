"""Python bindings for the cellflow core library."""

from ._cellflow import (
    InputError,
    IoError,
    compute_flow,
    patch_grid,
    polygon_area,
    polygon_perimeter,
    read_cflo,
    read_cvid,
    sample_constant,
    schedule,
    ttest,
)

__all__ = [
    "InputError",
    "IoError",
    "compute_flow",
    "patch_grid",
    "polygon_area",
    "polygon_perimeter",
    "read_cflo",
    "read_cvid",
    "sample_constant",
    "schedule",
    "ttest",
]
