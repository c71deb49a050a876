"""Finite-scale numerics for locality classes, indices and homotopies of
operators on quasi-two-dimensional lattices and star graphs."""

from .lattice import (
    HalfLineN,
    InvalidParameter,
    InvariantViolation,
    LineZ,
    LinOp,
    ProjectionFamily,
    SiteMap,
    SiteMapMismatch,
    SquareZ2,
    StarGraph,
    build_site_map,
    load_linop,
    save_linop,
    star_leg_family,
)
from .factory import (
    ArcInterval,
    IndexMode,
    IndexPrescription,
    canonical_sau,
    laughlin_family,
    laughlin_flux,
    prescribed_index_unitary,
    shift,
)
from .index import SpatialWindow, index_vector, window_from_block_bases, window_from_sites

__version__ = "0.1.0"
