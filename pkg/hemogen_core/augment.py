# coding=utf-8
"""
Exemplar shape sampling with probabilistic augmentation.

A shape is drawn uniformly from the database, then rotated, scaled and
flipped. Resampling is nearest-neighbor so bitmaps stay binary. Quarter turns
go through np.rot90 and are exact; the residual angle and the scale go through
one scipy affine resampling.
"""
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .maskdb import FOUR_CONNECTED, CellShape, ShapeDatabase

# an augmentation that collapses the shape is redrawn at most this many times
MAX_SHAPE_DRAWS = 50


@dataclass(frozen=True)
class AugmentationConfig:
    rotation: Tuple[float, float] = (0.0, 360.0)
    scale: Tuple[float, float] = (0.8, 1.2)
    flip_horizontal_prob: float = 0.5
    flip_vertical_prob: float = 0.5

    def __post_init__(self):
        if len(self.rotation) != 2 or self.rotation[0] > self.rotation[1]:
            raise ConfigError("rotation must be a (low, high) range, got {}".format(self.rotation))
        if len(self.scale) != 2 or self.scale[0] <= 0 or self.scale[0] > self.scale[1]:
            raise ConfigError("scale must be a positive (low, high) range, got {}".format(self.scale))
        for name in ("flip_horizontal_prob", "flip_vertical_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError("{} must be in [0, 1], got {}".format(name, p))

    @classmethod
    def identity(cls) -> "AugmentationConfig":
        return cls(rotation=(0.0, 0.0), scale=(1.0, 1.0), flip_horizontal_prob=0.0, flip_vertical_prob=0.0)

    def to_dict(self) -> dict:
        return {
            "rotation": list(self.rotation),
            "scale": list(self.scale),
            "flip_horizontal_prob": self.flip_horizontal_prob,
            "flip_vertical_prob": self.flip_vertical_prob,
        }


@dataclass(frozen=True)
class Transform:
    """rotation in degrees (counter-clockwise as displayed), then scale, then flips"""

    rotation: float = 0.0
    scale: float = 1.0
    flip_horizontal: bool = False
    flip_vertical: bool = False

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation,
            "scale": self.scale,
            "flip_horizontal": self.flip_horizontal,
            "flip_vertical": self.flip_vertical,
        }


@dataclass(frozen=True, eq=False)
class ShapeSample:
    shape_id: int
    transform: Transform
    shape: CellShape


def _rotate_scale(bitmap: np.ndarray, degrees: float, scale: float) -> np.ndarray:
    quarter = int(math.floor(degrees / 90.0)) % 4
    residual = degrees - 90.0 * math.floor(degrees / 90.0)
    out = np.rot90(bitmap, k=quarter)
    if residual == 0.0 and scale == 1.0:
        return out

    theta = math.radians(residual)
    c, s = math.cos(theta), math.sin(theta)
    h, w = out.shape
    # output extent of the rotated, scaled box
    out_h = int(math.ceil(scale * (abs(c) * h + abs(s) * w)))
    out_w = int(math.ceil(scale * (abs(s) * h + abs(c) * w)))
    out_h, out_w = max(out_h, 1), max(out_w, 1)
    # inverse map on (row, col): input = R^T / scale (output - c_out) + c_in
    inverse = np.array([[c, s], [-s, c]]) / scale
    c_in = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    c_out = np.array([(out_h - 1) / 2.0, (out_w - 1) / 2.0])
    offset = c_in - inverse @ c_out
    return ndimage.affine_transform(
        out.astype(np.uint8), inverse, offset=offset, output_shape=(out_h, out_w), order=0, mode="grid-constant", cval=0
    ).astype(bool)


def largest_component(bitmap: np.ndarray) -> np.ndarray:
    """keep the largest 4-connected component, ties go to the first one in raster order"""
    labels, n = ndimage.label(bitmap, structure=FOUR_CONNECTED)
    if n <= 1:
        return bitmap.astype(bool)
    sizes = np.bincount(labels.ravel())[1:]
    return labels == int(np.argmax(sizes)) + 1


def apply_transform(shape: CellShape, transform: Transform) -> CellShape:
    """
    :return: the augmented shape, re-tightened to its bounding box
    :raises ValueError: when the augmented bitmap has no pixel left
    """
    bitmap = _rotate_scale(shape.bitmap, transform.rotation, transform.scale)
    if transform.flip_horizontal:
        bitmap = bitmap[:, ::-1]
    if transform.flip_vertical:
        bitmap = bitmap[::-1, :]
    if not bitmap.any():
        raise ValueError("augmentation collapsed the shape to 0 pixels")
    return CellShape.from_bitmap(largest_component(bitmap), source=shape.source)


def draw_transform(augmentation: AugmentationConfig, rng: np.random.Generator) -> Transform:
    # draw order is part of the determinism contract, every draw happens even for fixed ranges
    rotation = float(rng.uniform(*augmentation.rotation))
    scale = float(rng.uniform(*augmentation.scale))
    flip_h = bool(rng.random() < augmentation.flip_horizontal_prob)
    flip_v = bool(rng.random() < augmentation.flip_vertical_prob)
    return Transform(rotation=rotation % 360.0, scale=scale, flip_horizontal=flip_h, flip_vertical=flip_v)


def sample_shape(db: ShapeDatabase, augmentation: AugmentationConfig, rng: np.random.Generator) -> ShapeSample:
    """
    Pick an exemplar uniformly and augment it. Collapsed results are redrawn.
    """
    if len(db) == 0:
        raise ValueError("the shape database is empty")
    for _ in range(MAX_SHAPE_DRAWS):
        shape_id = int(rng.integers(len(db)))
        transform = draw_transform(augmentation, rng)
        try:
            shape = apply_transform(db.shapes[shape_id], transform)
        except ValueError:
            continue
        return ShapeSample(shape_id=shape_id, transform=transform, shape=shape)
    raise ValueError("could not draw a non-empty augmented shape in {} attempts".format(MAX_SHAPE_DRAWS))
