# coding=utf-8
"""
Occupancy canvas of one synthetic mask.

Cells are written into an int32 label grid (0 = free). Cells may touch but
never overlap. Border cells are clipped to the image; when clipping splits a
cell, only its largest 4-connected piece is kept so that every cell in the
output is a single blob.
"""
import math
from dataclasses import dataclass
from typing import Optional, Set, Tuple

import numpy as np
from scipy import ndimage

from .augment import largest_component
from .maskdb import CellShape

PLACED = "placed"
OVERLAP = "overlap"
OUT_OF_BOUNDS = "out-of-bounds"


@dataclass(frozen=True, eq=False)
class Placement:
    """
    A shape anchored on the canvas.

    :ivar location: (x, y) where the shape centroid was anchored
    :ivar window: (y0, y1, x0, x1) tight bounds of the visible pixels
    :ivar bitmap: visible pixels inside window
    :ivar clipped: True when part of the shape fell outside the image
    """

    location: Tuple[int, int]
    window: Tuple[int, int, int, int]
    bitmap: np.ndarray
    clipped: bool

    @property
    def slices(self):
        y0, y1, x0, x1 = self.window
        return slice(y0, y1), slice(x0, x1)

    @property
    def bbox(self) -> Tuple[int, int, int, int]:
        """(x, y, w, h)"""
        y0, y1, x0, x1 = self.window
        return x0, y0, x1 - x0, y1 - y0

    @property
    def area(self) -> int:
        return int(self.bitmap.sum())


@dataclass(frozen=True, eq=False)
class PlaceResult:
    status: str
    placement: Optional[Placement] = None


class Canvas:
    def __init__(self, width: int, height: int) -> None:
        self.width = int(width)
        self.height = int(height)
        self.labels = np.zeros((self.height, self.width), dtype=np.int32)
        # color id of every committed label, index 0 is the empty canvas
        self.colors = [-1]

    @property
    def n_cells(self) -> int:
        return len(self.colors) - 1

    @property
    def occupied(self) -> np.ndarray:
        return self.labels > 0

    def anchor(self, shape: CellShape, l) -> Tuple[int, int]:
        """top-left (x, y) that puts the shape centroid on l"""
        x = int(math.floor(l[0] - shape.centroid[0] + 0.5))
        y = int(math.floor(l[1] - shape.centroid[1] + 0.5))
        return x, y

    def try_place(self, shape: CellShape, l, commit_color: Optional[int] = None) -> PlaceResult:
        """
        Check whether shape fits with its centroid on l = (x, y).

        :param commit_color: when given, a successful placement is written
            right away with this color id
        """
        left, top = self.anchor(shape, l)
        y0, y1 = max(0, top), min(self.height, top + shape.height)
        x0, x1 = max(0, left), min(self.width, left + shape.width)
        if y0 >= y1 or x0 >= x1:
            return PlaceResult(OUT_OF_BOUNDS)
        visible = shape.bitmap[y0 - top : y1 - top, x0 - left : x1 - left]
        clipped = visible.shape != shape.bitmap.shape
        if clipped:
            if not visible.any():
                return PlaceResult(OUT_OF_BOUNDS)
            visible = largest_component(visible)
            rows = np.flatnonzero(visible.any(axis=1))
            cols = np.flatnonzero(visible.any(axis=0))
            visible = visible[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
            y0, x0 = y0 + int(rows[0]), x0 + int(cols[0])
            y1, x1 = y0 + visible.shape[0], x0 + visible.shape[1]

        if (self.labels[y0:y1, x0:x1][visible] > 0).any():
            return PlaceResult(OVERLAP)

        placement = Placement(
            location=(int(l[0]), int(l[1])),
            window=(y0, y1, x0, x1),
            bitmap=np.ascontiguousarray(visible),
            clipped=bool(clipped),
        )
        if commit_color is not None:
            self.commit(placement, commit_color)
        return PlaceResult(PLACED, placement)

    def neighbor_colors(self, placement: Placement) -> Set[int]:
        """colors of the committed cells 8-adjacent to a placement"""
        y0, y1, x0, x1 = placement.window
        # one pixel margin, clipped to the canvas
        ey0, ey1 = max(0, y0 - 1), min(self.height, y1 + 1)
        ex0, ex1 = max(0, x0 - 1), min(self.width, x1 + 1)
        own = np.zeros((ey1 - ey0, ex1 - ex0), dtype=bool)
        own[y0 - ey0 : y1 - ey0, x0 - ex0 : x1 - ex0] = placement.bitmap
        ring = ndimage.binary_dilation(own, structure=np.ones((3, 3), dtype=bool)) & ~own
        touching = np.unique(self.labels[ey0:ey1, ex0:ex1][ring])
        return {self.colors[label] for label in touching if label > 0}

    def commit(self, placement: Placement, color_id: int) -> int:
        """write a placement, returns its label"""
        label = len(self.colors)
        view = self.labels[placement.slices]
        view[placement.bitmap] = label
        self.colors.append(int(color_id))
        return label

    def color_grid(self) -> np.ndarray:
        """color id + 1 per pixel, 0 on background"""
        lut = np.asarray(self.colors, dtype=np.int32) + 1
        lut[0] = 0
        return lut[self.labels]


def try_place(canvas: Canvas, shape: CellShape, l, color_id: int = 0) -> PlaceResult:
    """check and, on success, write the shape into the canvas"""
    return canvas.try_place(shape, l, commit_color=color_id)
