"""Exception types shared across the package."""

from __future__ import annotations


class TetradecError(Exception):
    """Base class for all library errors."""


class DegenerateGeometry(TetradecError):
    """Geometric construction is singular (collinear corners, non-invertible map)."""


class ShapeError(TetradecError):
    """A tensor has the wrong number of dimensions."""


class ShapeMismatch(TetradecError):
    """Two tensors that must agree in shape do not."""


class InvalidAnnotation(TetradecError):
    """An annotation is out of bounds, has a bad class id, or an invalid tetragon."""


class EmptyMask(TetradecError):
    """A binary mask contains no set pixels."""


class DegenerateMask(TetradecError):
    """All set pixels of a mask are collinear; no tetragon can cover them."""


class ConfigInfeasible(TetradecError):
    """Scene generation exhausted its rejection-sampling budget."""


class BadGtCardinality(TetradecError):
    """Use-case evaluation requires exactly two ground-truth sides per image."""


class FormatError(TetradecError):
    """A file on disk is malformed. Carries the path and byte offset."""

    def __init__(self, path: str, offset: int, message: str):
        super().__init__(f"{path}: byte {offset}: {message}")
        self.path = str(path)
        self.offset = int(offset)
        self.reason = message
