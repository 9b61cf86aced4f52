# coding=utf-8
"""
Evaluation of segmentation and detection outputs.

    dice                   overlap of two binary masks
    extract_instances      blob detection on objectness minus contour maps
    match_and_ap           greedy IoU matching and all-point interpolated AP
    adhesion_stats         how much the cells of one mask stick together
    compare_adhesion       one-sided comparison of two groups of masks

All functions are pure.
"""
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image
from scipy import ndimage, stats
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import DimensionMismatchError
from .maskdb import EIGHT_CONNECTED, InstanceMask, label_regions

DEFAULT_OBJECTNESS_THRESHOLD = 0.5
DEFAULT_CONTOUR_THRESHOLD = 0.5
DEFAULT_MIN_BLOB_SIZE = 50
DEFAULT_CONTOUR_WIDTH = 2
DEFAULT_IOU_THRESHOLD = 0.5

Box = Tuple[float, float, float, float]


@dataclass(frozen=True, eq=False)
class BinaryMask:
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 2:
            raise ValueError("a binary mask must be 2D, got shape {}".format(pixels.shape))
        object.__setattr__(self, "pixels", pixels.astype(bool))

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


@dataclass(frozen=True)
class Detection:
    """bbox is (x, y, w, h) in pixels, score in [0, 1]"""

    bbox: Box
    score: float = 1.0

    def __post_init__(self):
        if len(self.bbox) != 4:
            raise ValueError("bbox must be (x, y, w, h), got {}".format(self.bbox))
        if self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise ValueError("bbox width and height must be positive, got {}".format(self.bbox))
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))

    def to_dict(self) -> dict:
        return {"bbox": list(self.bbox), "score": self.score}


@dataclass(frozen=True, eq=False)
class InstanceExtraction:
    """
    :ivar labels: int32 grid, 0 background, instances 1..K
    :ivar components: one {id, bbox, area} per instance
    """

    labels: np.ndarray
    components: List[dict]

    def __len__(self):
        return len(self.components)

    def to_dict(self) -> dict:
        return {"count": len(self.components), "components": self.components}


def _as_binary(mask) -> np.ndarray:
    if isinstance(mask, BinaryMask):
        return mask.pixels
    if isinstance(mask, InstanceMask):
        return mask.foreground
    return BinaryMask(mask).pixels


def _check_same_shape(a: np.ndarray, b: np.ndarray, what="inputs"):
    if a.shape != b.shape:
        raise DimensionMismatchError("{} differ in size: {} vs {}".format(what, a.shape[::-1], b.shape[::-1]))


######### dice #########


def dice(prediction, target) -> float:
    """
    DSC = 2 |p.t| / (|p|^2 + |t|^2) over binary vectors; 1.0 when both are empty
    """
    p = _as_binary(prediction)
    t = _as_binary(target)
    _check_same_shape(p, t, "prediction and target")
    denominator = int(p.sum()) + int(t.sum())
    if denominator == 0:
        return 1.0
    return 2.0 * int(np.logical_and(p, t).sum()) / denominator


######### instance extraction #########


def instance_targets(labels, contour_width: int = DEFAULT_CONTOUR_WIDTH) -> Tuple[np.ndarray, np.ndarray]:
    """
    Objectness and contour maps of an instance label grid, as float arrays in {0, 1}.

    A cell pixel is contour when a pixel within contour_width // 2 (at least 1)
    carries another label, background included. The image border is not a
    contour. Between two touching cells this gives a band contour_width wide.
    """
    if isinstance(labels, InstanceMask):
        labels, _ = label_regions(labels)
    labels = np.asarray(labels)
    radius = max(1, int(contour_width) // 2)
    size = 2 * radius + 1
    high = ndimage.grey_dilation(labels, size=(size, size), mode="nearest")
    low = ndimage.grey_erosion(labels, size=(size, size), mode="nearest")
    cells = labels > 0
    contour = cells & ((high != labels) | (low != labels))
    return cells.astype(np.float64), contour.astype(np.float64)


def _components(labels: np.ndarray) -> List[dict]:
    components = []
    areas = np.bincount(labels.ravel())
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        ys, xs = sl
        components.append(
            {
                "id": i,
                "bbox": [xs.start, ys.start, xs.stop - xs.start, ys.stop - ys.start],
                "area": int(areas[i]),
            }
        )
    return components


def extract_instances(
    objectness,
    contour,
    objectness_threshold: float = DEFAULT_OBJECTNESS_THRESHOLD,
    contour_threshold: float = DEFAULT_CONTOUR_THRESHOLD,
    min_blob_size: int = DEFAULT_MIN_BLOB_SIZE,
    contour_width: int = DEFAULT_CONTOUR_WIDTH,
) -> InstanceExtraction:
    """
    Fuse objectness and contour predictions into instances.

    Blobs of (objectness >= t_o) & (contour < t_c) are labelled 8-connected and
    the ones smaller than min_blob_size dropped. Each survivor then grows back
    over the contour band, one 3x3 step per contour pixel of width, only into
    contour pixels of the objectness foreground and only where all labelled
    neighbors agree, so instances never merge.
    """
    objectness = np.asarray(objectness, dtype=np.float64)
    contour = np.asarray(contour, dtype=np.float64)
    _check_same_shape(objectness, contour, "objectness and contour maps")

    allowed = objectness >= objectness_threshold
    band = allowed & (contour >= contour_threshold)
    labels, n = ndimage.label(allowed & (contour < contour_threshold), structure=EIGHT_CONNECTED)
    if n:
        sizes = np.bincount(labels.ravel())
        keep = sizes >= int(min_blob_size)
        keep[0] = False
        remap = np.zeros(n + 1, dtype=np.int32)
        remap[keep] = np.arange(1, int(keep.sum()) + 1, dtype=np.int32)
        labels = remap[labels]
    labels = labels.astype(np.int32)

    if labels.any():
        big = np.iinfo(np.int32).max
        footprint = np.ones((3, 3), dtype=bool)
        for _ in range(int(contour_width)):
            high = ndimage.grey_dilation(labels, footprint=footprint, mode="constant", cval=0)
            low = ndimage.grey_erosion(np.where(labels > 0, labels, big), footprint=footprint, mode="constant", cval=big)
            grow = band & (labels == 0) & (high > 0) & (high == low)
            if not grow.any():
                break
            labels[grow] = high[grow]

    return InstanceExtraction(labels=labels, components=_components(labels))


def extraction_to_detections(extraction: InstanceExtraction) -> List[Detection]:
    """score-free instances become detections with score 1.0"""
    return [Detection(bbox=tuple(c["bbox"]), score=1.0) for c in extraction.components]


######### average precision #########


@dataclass(frozen=True)
class APResult:
    ap: float
    precision: Tuple[float, ...] = ()
    recall: Tuple[float, ...] = ()
    true_positives: int = 0
    false_positives: int = 0
    n_ground_truth: int = 0
    iou_threshold: float = DEFAULT_IOU_THRESHOLD

    @property
    def final_precision(self) -> Optional[float]:
        return self.precision[-1] if self.precision else None

    @property
    def final_recall(self) -> Optional[float]:
        return self.recall[-1] if self.recall else None

    def to_dict(self) -> dict:
        return {
            "ap": self.ap,
            "iou_threshold": self.iou_threshold,
            "n_ground_truth": self.n_ground_truth,
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "precision": self.final_precision,
            "recall": self.final_recall,
            "pr_curve": [[r, p] for r, p in zip(self.recall, self.precision)],
        }


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """pairwise IoU of (x, y, w, h) boxes covering [x, x + w) x [y, y + h)"""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    ax1, ay1 = a[:, 0] + a[:, 2], a[:, 1] + a[:, 3]
    bx1, by1 = b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]
    iw = np.clip(np.minimum(ax1[:, None], bx1[None, :]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0, None)
    ih = np.clip(np.minimum(ay1[:, None], by1[None, :]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0, None)
    inter = iw * ih
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(union > 0, inter / union, 0.0)


def _all_point_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    # precision envelope, right to left
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def match_and_ap(
    detections: Sequence[Detection], ground_truth: Sequence[Box], iou_threshold: float = DEFAULT_IOU_THRESHOLD
) -> APResult:
    """
    Greedy one-to-one matching in descending score order (ties keep input
    order); each detection takes the unmatched ground truth box of highest IoU
    at or above iou_threshold.
    """
    n_gt = len(ground_truth)
    if not detections:
        return APResult(ap=1.0 if n_gt == 0 else 0.0, n_ground_truth=n_gt, iou_threshold=iou_threshold)
    order = sorted(range(len(detections)), key=lambda i: -detections[i].score)
    if n_gt == 0:
        zeros = tuple(0.0 for _ in order)
        return APResult(
            ap=0.0, precision=zeros, recall=zeros, false_positives=len(order), iou_threshold=iou_threshold
        )

    ious = iou_matrix([detections[i].bbox for i in order], ground_truth)
    matched = np.zeros(n_gt, dtype=bool)
    hits = np.zeros(len(order), dtype=bool)
    for rank in range(len(order)):
        candidates = np.where(matched | (ious[rank] < iou_threshold), -1.0, ious[rank])
        best = int(np.argmax(candidates))
        if candidates[best] >= 0:
            matched[best] = True
            hits[rank] = True

    tp = np.cumsum(hits)
    fp = np.cumsum(~hits)
    recall = tp / float(n_gt)
    precision = tp / (tp + fp)
    return APResult(
        ap=_all_point_ap(recall, precision),
        precision=tuple(float(v) for v in precision),
        recall=tuple(float(v) for v in recall),
        true_positives=int(tp[-1]),
        false_positives=int(fp[-1]),
        n_ground_truth=n_gt,
        iou_threshold=iou_threshold,
    )


######### adhesion #########


@dataclass(frozen=True, eq=False)
class AdhesionStats:
    n_cells: int
    touch_fraction: float
    nn_distances: np.ndarray
    cluster_sizes: Dict[int, int] = field(default_factory=dict)

    def nn_histogram(self, bins=20):
        """(counts, edges) of nearest-neighbor centroid distances"""
        if len(self.nn_distances) == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        return np.histogram(self.nn_distances, bins=bins)

    def to_dict(self, bins=20) -> dict:
        counts, edges = self.nn_histogram(bins)
        return {
            "n_cells": self.n_cells,
            "touch_fraction": self.touch_fraction,
            "mean_nn_distance": float(self.nn_distances.mean()) if len(self.nn_distances) else None,
            "nn_center_distances": {"counts": counts.tolist(), "edges": edges.tolist()},
            "cluster_size_distribution": {str(k): v for k, v in sorted(self.cluster_sizes.items())},
        }


def _touching_pairs(labels: np.ndarray) -> np.ndarray:
    """(k, 2) array of label pairs that are 8-adjacent"""
    pairs = []
    shifted = (
        (labels[:, :-1], labels[:, 1:]),
        (labels[:-1, :], labels[1:, :]),
        (labels[:-1, :-1], labels[1:, 1:]),
        (labels[:-1, 1:], labels[1:, :-1]),
    )
    for a, b in shifted:
        hit = (a > 0) & (b > 0) & (a != b)
        if hit.any():
            pairs.append(np.stack([a[hit], b[hit]], axis=1))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(np.sort(np.concatenate(pairs), axis=1), axis=0)


def adhesion_stats(mask) -> AdhesionStats:
    """
    :param mask: an InstanceMask, or an instance label grid (0 background)
    """
    if isinstance(mask, InstanceMask):
        labels, n = label_regions(mask)
    else:
        labels = np.asarray(mask)
        n = int(labels.max()) if labels.size else 0
    if n == 0:
        return AdhesionStats(n_cells=0, touch_fraction=0.0, nn_distances=np.zeros(0))

    pairs = _touching_pairs(labels) - 1
    touching = np.zeros(n, dtype=bool)
    touching[pairs.ravel()] = True

    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, membership = connected_components(graph, directed=False)
    sizes = np.bincount(np.bincount(membership))
    cluster_sizes = {int(size): int(count) for size, count in enumerate(sizes) if size > 0 and count > 0}

    if n > 1:
        centers = np.asarray(ndimage.center_of_mass(np.ones(labels.shape), labels, np.arange(1, n + 1)))
        distances, _ = cKDTree(centers).query(centers, k=2)
        nn = distances[:, 1]
    else:
        nn = np.zeros(0)
    return AdhesionStats(n_cells=n, touch_fraction=float(touching.mean()), nn_distances=nn, cluster_sizes=cluster_sizes)


def compare_adhesion(first: Sequence[float], second: Sequence[float], names=("adhesion", "uniform-random"), alpha=0.05):
    """
    Compare touch fractions of two groups of masks; one-sided Welch t-test of
    mean(first) > mean(second).
    """
    first = np.asarray(first, dtype=np.float64)
    second = np.asarray(second, dtype=np.float64)

    def summary(values):
        return {
            "n": int(len(values)),
            "mean": float(values.mean()) if len(values) else None,
            "sem": float(stats.sem(values)) if len(values) > 1 else None,
        }

    report = {names[0]: summary(first), names[1]: summary(second), "alpha": alpha}
    if len(first) > 1 and len(second) > 1:
        t, p = stats.ttest_ind(first, second, equal_var=False, alternative="greater")
        report.update({"t": float(t), "p_value": float(p), "first_greater": bool(p < alpha)})
    else:
        report.update({"t": None, "p_value": None, "first_greater": None})
    return report


######### loaders #########


def load_map(path) -> np.ndarray:
    """
    A prediction map in [0, 1]: .npy float raster, or an image
    (8-bit grayscale rescaled by 1/255, float TIFF kept as is)
    """
    path = str(path)
    if path.endswith(".npy"):
        return np.load(path).astype(np.float64)
    with Image.open(path) as img:
        if img.mode == "F":
            return np.asarray(img, dtype=np.float64)
        return np.asarray(img.convert("L"), dtype=np.float64) / 255.0


def load_binary(path, background=(0, 0, 0)) -> BinaryMask:
    """any non-background pixel is foreground"""
    path = str(path)
    if path.endswith(".npy"):
        return BinaryMask(np.load(path) > 0)
    with Image.open(path) as img:
        if img.mode in ("1", "L", "I", "F"):
            return BinaryMask(np.asarray(img) > 0)
        rgb = np.asarray(img.convert("RGB"))
    return BinaryMask((rgb != np.asarray(background, dtype=rgb.dtype)).any(axis=2))


def load_boxes(path) -> List[Detection]:
    """
    Detections from JSON: a synthesis sidecar (its cells' bboxes), a list of
    {"bbox": [x, y, w, h], "score": s} entries or a list of bare boxes.
    Missing scores are 1.0.
    """
    with open(path, "r", encoding="utf-8") as fp:
        data = json.load(fp)
    if isinstance(data, dict):
        data = data.get("cells", data.get("detections", []))
    out = []
    for entry in data:
        if isinstance(entry, dict):
            out.append(Detection(bbox=tuple(entry["bbox"]), score=float(entry.get("score", 1.0))))
        else:
            out.append(Detection(bbox=tuple(entry)))
    return out
