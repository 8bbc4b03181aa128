"""Filtered backprojection with fixed and learnable interpolation."""

from ._accel import BACKEND
from .geometry import Geometry, GridSpec, coordinate_field, make_geometry, project_coordinate
from .interp import BasisSet, CoeffTensor, default_basis
from .phantom import analytic_sinogram, random_phantom, rasterize, shepp_logan
from .projector import ImageGrid, Sinogram, apply_low_dose, forward_project, subsample_views
from .recon import fbp, linfbp_forward
from .spectral import filter_sinogram, make_filter

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BasisSet",
    "CoeffTensor",
    "Geometry",
    "GridSpec",
    "ImageGrid",
    "Sinogram",
    "analytic_sinogram",
    "apply_low_dose",
    "coordinate_field",
    "default_basis",
    "fbp",
    "filter_sinogram",
    "forward_project",
    "linfbp_forward",
    "make_filter",
    "make_geometry",
    "project_coordinate",
    "random_phantom",
    "rasterize",
    "shepp_logan",
    "subsample_views",
]
