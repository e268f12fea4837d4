"""Dimer statistics on isoradial rhombus-with-diagonals graphs (quadri-tilings)."""

from isodimer.errors import (
    BranchError,
    GeometryError,
    HeightError,
    IsodimerError,
    MoveError,
    OrientationError,
)

__all__ = [
    "BranchError",
    "GeometryError",
    "HeightError",
    "IsodimerError",
    "MoveError",
    "OrientationError",
]

__version__ = "0.1.0"
