"""Integer wavelet and block ripplet transforms plus coefficient selection."""

from .drt import (
    TransformParams,
    atom_labels,
    basis_matrix,
    drt_forward,
    drt_inverse,
    int_forward,
    int_inverse,
    orientation_counts,
    orientation_groups,
)
from .iwt import iwt_block_forward, iwt_block_groups, iwt_block_inverse, iwt_forward, iwt_inverse
from .pyramid import CoefficientPyramid
from .selection import (
    SelectedCoeffs,
    best_orientation,
    build_selection,
    population_variance,
    select_orientation,
    select_top,
)

__all__ = [
    "CoefficientPyramid",
    "SelectedCoeffs",
    "TransformParams",
    "atom_labels",
    "basis_matrix",
    "best_orientation",
    "build_selection",
    "drt_forward",
    "drt_inverse",
    "int_forward",
    "int_inverse",
    "iwt_block_forward",
    "iwt_block_groups",
    "iwt_block_inverse",
    "iwt_forward",
    "iwt_inverse",
    "orientation_counts",
    "orientation_groups",
    "population_variance",
    "select_orientation",
    "select_top",
]
