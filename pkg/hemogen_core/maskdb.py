# coding=utf-8
"""
Instance mask ingestion and the cell shape database.

An instance mask is an RGB image where every cell is painted with a color from
a small palette and touching cells never share a color. Ingestion turns such
images into `InstanceMask` objects (color-id grids), cuts every cell out as a
`CellShape` and accumulates the shapes plus the dataset statistics into a
`ShapeDatabase` that parameterizes synthesis.

Conventions used throughout hemogen:
    - pixel coordinates are (x, y) = (column, row); numpy grids are indexed [y, x]
    - cell regions are maximal 8-connected same-color areas
    - regions are ordered by their first pixel in row-major order
"""
import json
import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image
from scipy import ndimage

from utils.util import canonical_json, pretty_json, sha256_hex

from . import CONSTS
from .errors import (
    DatabaseChecksumError,
    DatabaseFormatError,
    DatabaseTruncatedError,
    DatabaseVersionError,
    MaskValidationError,
)
from .rle import decode_bitmap, encode_bitmap
from .shares import logger

RGB = Tuple[int, int, int]

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True, eq=False)
class InstanceMask:
    """
    :ivar pixels: int32 grid of color ids, shape (height, width)
    :ivar palette: RGB triple of every color id
    :ivar background_id: the reserved background color id
    :ivar source: identifier of the mask, usually its file name
    """

    pixels: np.ndarray
    palette: Tuple[RGB, ...]
    background_id: int = 0
    source: str = ""

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def background(self) -> RGB:
        return self.palette[self.background_id]

    @property
    def foreground(self) -> np.ndarray:
        return self.pixels != self.background_id

    def to_rgb(self) -> np.ndarray:
        lut = np.asarray(self.palette, dtype=np.uint8).reshape(-1, 3)
        return lut[self.pixels]

    def __eq__(self, other):
        if not isinstance(other, InstanceMask):
            return NotImplemented
        return np.array_equal(self.to_rgb(), other.to_rgb()) and self.background == other.background


@dataclass(frozen=True, eq=False)
class CellShape:
    """
    One extracted cell.

    :ivar bitmap: bool grid cropped to the tight bounding box
    :ivar centroid: (x, y) sub-pixel centroid inside the bitmap
    :ivar area: number of set pixels
    :ivar source: (mask identifier, region index)
    """

    bitmap: np.ndarray
    centroid: Tuple[float, float]
    area: int
    source: Tuple[str, int] = ("", -1)

    @classmethod
    def from_bitmap(cls, bitmap, source=("", -1)) -> "CellShape":
        """crop to the tight bounding box and compute the centroid"""
        bitmap = np.asarray(bitmap, dtype=bool)
        rows = np.flatnonzero(bitmap.any(axis=1))
        cols = np.flatnonzero(bitmap.any(axis=0))
        if len(rows) == 0:
            raise ValueError("a cell shape needs at least one set pixel")
        bitmap = np.ascontiguousarray(bitmap[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1])
        ys, xs = np.nonzero(bitmap)
        return cls(
            bitmap=bitmap,
            centroid=(float(xs.mean()), float(ys.mean())),
            area=int(len(xs)),
            source=(str(source[0]), int(source[1])),
        )

    @property
    def width(self) -> int:
        return int(self.bitmap.shape[1])

    @property
    def height(self) -> int:
        return int(self.bitmap.shape[0])

    def __eq__(self, other):
        if not isinstance(other, CellShape):
            return NotImplemented
        return (
            np.array_equal(self.bitmap, other.bitmap)
            and self.centroid == other.centroid
            and self.area == other.area
            and tuple(self.source) == tuple(other.source)
        )


@dataclass(frozen=True)
class DatasetStats:
    """
    Statistics of an annotated train set, the parameters of synthesis.

    extents are bounding-box sides in pixels, widths and heights pooled;
    the equivalent and ellipse diameters are reported alongside because it is
    not settled which of them "cell size" refers to
    """

    mu_n: float
    sigma_n: float
    mean_cell_extent: float
    std_cell_extent: float
    image_width: int
    image_height: int
    n_images: int
    mean_cell_area: float = 0.0
    mean_equivalent_diameter: float = 0.0
    mean_ellipse_diameter: float = 0.0
    counts: Tuple[int, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "mu_n": self.mu_n,
            "sigma_n": self.sigma_n,
            "mean_cell_extent": self.mean_cell_extent,
            "std_cell_extent": self.std_cell_extent,
            "image_width": self.image_width,
            "image_height": self.image_height,
            "n_images": self.n_images,
            "mean_cell_area": self.mean_cell_area,
            "mean_equivalent_diameter": self.mean_equivalent_diameter,
            "mean_ellipse_diameter": self.mean_ellipse_diameter,
            "counts": list(self.counts),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetStats":
        return cls(
            mu_n=float(d["mu_n"]),
            sigma_n=float(d["sigma_n"]),
            mean_cell_extent=float(d["mean_cell_extent"]),
            std_cell_extent=float(d["std_cell_extent"]),
            image_width=int(d["image_width"]),
            image_height=int(d["image_height"]),
            n_images=int(d["n_images"]),
            mean_cell_area=float(d.get("mean_cell_area", 0.0)),
            mean_equivalent_diameter=float(d.get("mean_equivalent_diameter", 0.0)),
            mean_ellipse_diameter=float(d.get("mean_ellipse_diameter", 0.0)),
            counts=tuple(int(c) for c in d.get("counts", ())),
        )

    def summary_lines(self) -> List[str]:
        """the count and size summary printed by build-db and stats"""
        return [
            "images:                {}".format(self.n_images),
            "cells per image:       mean {:.1f}  std {:.1f}".format(self.mu_n, self.sigma_n),
            "cell extent (bbox):    mean {:.1f}  std {:.1f}".format(self.mean_cell_extent, self.std_cell_extent),
            "equivalent diameter:   mean {:.1f}".format(self.mean_equivalent_diameter),
            "ellipse diameter:      mean {:.1f}".format(self.mean_ellipse_diameter),
            "image size:            {}x{}".format(self.image_width, self.image_height),
        ]


@dataclass(frozen=True, eq=False)
class ShapeDatabase:
    shapes: Tuple[CellShape, ...]
    stats: DatasetStats
    format_version: int = CONSTS.DB_FORMAT_VERSION

    def __len__(self):
        return len(self.shapes)

    @property
    def mean_area(self) -> float:
        if not self.shapes:
            return 0.0
        return float(np.mean([s.area for s in self.shapes]))

    def __eq__(self, other):
        if not isinstance(other, ShapeDatabase):
            return NotImplemented
        return (
            self.format_version == other.format_version
            and self.stats == other.stats
            and len(self.shapes) == len(other.shapes)
            and all(a == b for a, b in zip(self.shapes, other.shapes))
        )


######### masks #########


def _pack_rgb(rgb: np.ndarray) -> np.ndarray:
    rgb = rgb.astype(np.uint32)
    return (rgb[..., 0] << 16) | (rgb[..., 1] << 8) | rgb[..., 2]


def _unpack_rgb(code) -> RGB:
    code = int(code)
    return ((code >> 16) & 255, (code >> 8) & 255, code & 255)


def mask_from_rgb(rgb, background: Optional[RGB] = None, source="", validate=True) -> InstanceMask:
    """
    Build an InstanceMask from an (h, w, 3) uint8 array.

    :param background: background color, default is the most frequent color of the image
    :raises MaskValidationError: when two touching cells share a color (and validate is set)
    """
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("expected an (h, w, 3) RGB array, got shape {}".format(rgb.shape))
    codes, inverse, counts = np.unique(_pack_rgb(rgb).ravel(), return_inverse=True, return_counts=True)
    palette = [_unpack_rgb(c) for c in codes]

    if background is None:
        background_id = int(np.argmax(counts))
    else:
        background = tuple(int(v) for v in background)
        if background in palette:
            background_id = palette.index(background)
        else:
            # no background pixel at all, reserve an id for it anyway
            palette.append(background)
            background_id = len(palette) - 1

    mask = InstanceMask(
        pixels=inverse.reshape(rgb.shape[:2]).astype(np.int32),
        palette=tuple(palette),
        background_id=background_id,
        source=source,
    )
    if validate:
        violations = find_color_violations(mask)
        if violations:
            raise MaskValidationError(violations, source=source)
    return mask


def load_mask(image_file, background: Optional[RGB] = None, validate=True) -> InstanceMask:
    """
    Read an RGB raster (PNG) into an InstanceMask

    :raises OSError: unreadable or corrupt file
    :raises MaskValidationError: coloring rule violated
    """
    with Image.open(image_file) as img:
        rgb = np.asarray(img.convert("RGB"))
    logger.debug("loaded mask", image_file, "size", rgb.shape[1], "x", rgb.shape[0], v=4)
    return mask_from_rgb(rgb, background=background, source=os.path.basename(str(image_file)), validate=validate)


def save_mask(mask: InstanceMask, path) -> None:
    Image.fromarray(mask.to_rgb(), "RGB").save(path, format="PNG")


def _color_slices(mask: InstanceMask):
    """yield (color_id, bbox slice) of every non-background color present"""
    for color_id, sl in enumerate(ndimage.find_objects(mask.pixels + 1)):
        if sl is None or color_id == mask.background_id:
            continue
        yield color_id, sl


def find_color_violations(mask: InstanceMask) -> List[Tuple[Tuple[int, int], Tuple[int, int]]]:
    """
    Find same-color cells that touch.

    A well-formed cell is a 4-connected blob, so two 4-connected pieces of the
    same color meeting only at a corner are two cells touching diagonally. The
    returned pairs are ((x1, y1), (x2, y2)) of the touching pixels.
    """
    violations = []
    for color_id, sl in _color_slices(mask):
        pieces, n = ndimage.label(mask.pixels[sl] == color_id, structure=FOUR_CONNECTED)
        if n < 2:
            continue
        y0, x0 = sl[0].start, sl[1].start
        # "\" diagonal: (x, y) touches (x+1, y+1)
        a, b = pieces[:-1, :-1], pieces[1:, 1:]
        for y, x in zip(*np.nonzero((a > 0) & (b > 0) & (a != b))):
            violations.append(((int(x + x0), int(y + y0)), (int(x + x0 + 1), int(y + y0 + 1))))
        # "/" diagonal: (x+1, y) touches (x, y+1)
        a, b = pieces[:-1, 1:], pieces[1:, :-1]
        for y, x in zip(*np.nonzero((a > 0) & (b > 0) & (a != b))):
            violations.append(((int(x + x0 + 1), int(y + y0)), (int(x + x0), int(y + y0 + 1))))
    return sorted(violations)


def label_regions(mask: InstanceMask) -> Tuple[np.ndarray, int]:
    """
    Label every maximal 8-connected same-color region.

    :return: (int32 label grid with 0 as background, number of regions);
        regions are numbered 1..K in row-major order of their first pixel
    """
    labels = np.zeros(mask.pixels.shape, dtype=np.int32)
    total = 0
    for color_id, sl in _color_slices(mask):
        local, n = ndimage.label(mask.pixels[sl] == color_id, structure=EIGHT_CONNECTED)
        if n == 0:
            continue
        view = labels[sl]
        view[local > 0] = local[local > 0] + total
        total += n
    if total == 0:
        return labels, 0

    # renumber by first pixel in raster order
    ids, first = np.unique(labels.ravel(), return_index=True)
    first = first[ids > 0]
    ids = ids[ids > 0]
    remap = np.zeros(total + 1, dtype=np.int32)
    remap[ids[np.argsort(first, kind="stable")]] = np.arange(1, total + 1, dtype=np.int32)
    return remap[labels], total


def extract_cells(mask: InstanceMask, labels=None) -> List[CellShape]:
    """
    Cut every cell region out of a validated mask.

    :param labels: optional precomputed result of label_regions(mask)
    """
    if labels is None:
        labels = label_regions(mask)
    grid, n = labels
    cells = []
    for index, sl in enumerate(ndimage.find_objects(grid, max_label=n)):
        cells.append(CellShape.from_bitmap(grid[sl] == index + 1, source=(mask.source, index)))
    return cells


######### statistics #########


def _sample_std(values) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1))


def _ellipse_diameter(shape: CellShape) -> float:
    """mean of the major and minor axis lengths of the moment-equivalent ellipse"""
    ys, xs = np.nonzero(shape.bitmap)
    if len(xs) < 2:
        return 1.0
    cov = np.cov(np.vstack([xs, ys]), bias=True)
    # a uniform ellipse with semi-axis a has variance a^2/4 along it
    eig = np.clip(np.linalg.eigvalsh(cov), 0.0, None)
    return float((4.0 * np.sqrt(eig)).mean())


def compute_stats(masks: Sequence[InstanceMask], cells: Optional[Sequence[Sequence[CellShape]]] = None) -> DatasetStats:
    """
    :param masks: at least one mask
    :param cells: optional extract_cells() result per mask, computed when missing
    """
    if len(masks) == 0:
        raise ValueError("compute_stats needs at least one mask")
    if cells is None:
        cells = [extract_cells(m) for m in masks]

    # every reduction runs on sorted values, the result doesn't depend on the input order
    counts = sorted(len(c) for c in cells)
    every_cell = [s for per_mask in cells for s in per_mask]
    extents = sorted([float(s.width) for s in every_cell] + [float(s.height) for s in every_cell])
    areas = sorted(float(s.area) for s in every_cell)
    eq_diameters = sorted(math.sqrt(4.0 * s.area / math.pi) for s in every_cell)
    ellipse_diameters = sorted(_ellipse_diameter(s) for s in every_cell)

    # most common image size, larger wins ties
    sizes = Counter((m.width, m.height) for m in masks)
    image_width, image_height = max(sizes, key=lambda wh: (sizes[wh], wh[0] * wh[1], wh))

    def _mean(values):
        return float(np.mean(values)) if values else 0.0

    return DatasetStats(
        mu_n=_mean(counts),
        sigma_n=_sample_std(counts),
        mean_cell_extent=_mean(extents),
        std_cell_extent=_sample_std(extents),
        image_width=int(image_width),
        image_height=int(image_height),
        n_images=len(masks),
        mean_cell_area=_mean(areas),
        mean_equivalent_diameter=_mean(eq_diameters),
        mean_ellipse_diameter=_mean(ellipse_diameters),
        counts=tuple(counts),
    )


######### database #########


def build_db(masks: Sequence[InstanceMask]) -> ShapeDatabase:
    """Accumulate every cell of every mask; stats come from the same run"""
    cells = [extract_cells(m) for m in masks]
    stats = compute_stats(masks, cells)
    shapes = tuple(s for per_mask in cells for s in per_mask)
    logger.info("shape database built from", len(masks), "masks,", len(shapes), "shapes")
    return ShapeDatabase(shapes=shapes, stats=stats)


def ingest_files(paths, background=None, keep_going=False, parallelism=1):
    """
    Load many mask files, one file per task.

    :return: (list of InstanceMask in input order, list of (path, error))
    :raises MaskValidationError, OSError: first failure, unless keep_going
    """

    def _load(path):
        try:
            return load_mask(path, background=background), None
        except (OSError, ValueError) as e:
            return None, e

    with ThreadPoolExecutor(max_workers=max(1, int(parallelism))) as pool:
        results = list(pool.map(_load, paths))

    masks, errors = [], []
    for path, (mask, error) in zip(paths, results):
        if error is None:
            masks.append(mask)
            continue
        if not keep_going:
            raise error
        logger.warn("skipping", path, ":", error)
        errors.append((str(path), error))
    return masks, errors


def _shape_to_dict(shape: CellShape) -> dict:
    return {
        "bitmap": encode_bitmap(shape.bitmap),
        "centroid": [shape.centroid[0], shape.centroid[1]],
        "area": shape.area,
        "source": [shape.source[0], shape.source[1]],
    }


def _shape_from_dict(d: dict) -> CellShape:
    bitmap = decode_bitmap(d["bitmap"])
    return CellShape(
        bitmap=bitmap,
        centroid=(float(d["centroid"][0]), float(d["centroid"][1])),
        area=int(d["area"]),
        source=(str(d["source"][0]), int(d["source"][1])),
    )


def save_db(db: ShapeDatabase, path) -> None:
    """write the versioned JSON container, atomically"""
    payload = {
        "stats": db.stats.to_dict(),
        "shapes": [_shape_to_dict(s) for s in db.shapes],
    }
    container = {
        "format": CONSTS.DB_FORMAT_NAME,
        "format_version": db.format_version,
        "generator": "{} {}".format(CONSTS.__PROJECT__, CONSTS.__VERSION__),
        "checksum": sha256_hex(canonical_json(payload)),
        "payload": payload,
    }
    tmp_path = str(path) + ".tmp"
    with open(tmp_path, "w", encoding="utf-8") as fp:
        fp.write(pretty_json(container))
    os.replace(tmp_path, path)
    logger.info("saved shape database", path, "(", len(db.shapes), "shapes )")


def load_db(path) -> ShapeDatabase:
    """
    :raises DatabaseTruncatedError: the file is not complete JSON
    :raises DatabaseVersionError: unknown format_version
    :raises DatabaseChecksumError: payload does not match its checksum
    :raises DatabaseFormatError: anything else malformed
    """
    with open(path, "r", encoding="utf-8") as fp:
        text = fp.read()
    try:
        container = json.loads(text)
    except ValueError as e:
        raise DatabaseTruncatedError("{}: not a complete database file ({})".format(path, e)) from e

    if not isinstance(container, dict) or container.get("format") != CONSTS.DB_FORMAT_NAME:
        raise DatabaseFormatError("{}: not a {} file".format(path, CONSTS.DB_FORMAT_NAME))
    version = container.get("format_version")
    if version != CONSTS.DB_FORMAT_VERSION:
        raise DatabaseVersionError(
            "{}: format_version {!r} is not supported (expected {})".format(path, version, CONSTS.DB_FORMAT_VERSION)
        )
    payload = container.get("payload")
    if sha256_hex(canonical_json(payload)) != container.get("checksum"):
        raise DatabaseChecksumError("{}: checksum mismatch".format(path))

    try:
        shapes = tuple(_shape_from_dict(d) for d in payload["shapes"])
        stats = DatasetStats.from_dict(payload["stats"])
    except (KeyError, TypeError, ValueError) as e:
        raise DatabaseFormatError("{}: malformed payload ({})".format(path, e)) from e
    return ShapeDatabase(shapes=shapes, stats=stats, format_version=version)
