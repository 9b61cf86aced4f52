# coding=utf-8
"""
The evolving probability map that drives cell placement.

The location of the i-th cell is drawn from a discrete density P(i) over the
image pixels. P(i) is uniform for the first n_init cells, becomes the average
excitation of the n_init warm-up cells at i = n_init + 1 and afterwards is
updated as a convex blend

    P(i) = (1 - a_i) P(i-1) + a_i z(l_{i-1}),    a_i = 1 / i

where z(l) is a truncated isotropic Gaussian around the last placed center
whose core (r <= cell_size) is reverted to G_max - G(r). Each z is normalized to
unit mass so P keeps summing to one.

Storage: the density is kept as `raw * scale`. A blend multiplies the scale by
(1 - a) and adds the patch into `raw` inside the excitation window only, so an
update costs O(window) instead of O(image). Sampling goes through a two-level
index: per-row prefix sums (refreshed for touched rows) below a Fenwick tree of
row totals.
"""
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from lru import LRU
from PIL import Image

from . import CONSTS
from .errors import ConfigError, DegenerateMapError, OutOfBoundsError
from .fenwick import FenwickTree
from .shares import logger

# fold the scale back into raw before it underflows
MIN_SCALE = 1e-200

# reverted-core Gaussian kernels, keyed by (sigma, cell_size, support_radius)
_kernel_cache = LRU(16)


def hwhm_sigma(cell_size: float) -> float:
    """sigma of the Gaussian whose half width at half maximum equals cell_size"""
    return cell_size / math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class SamplerParams:
    """
    :ivar cell_size: pixels, radius of the reverted core
    :ivar sigma: pixels, default cell_size / sqrt(2 ln 2) (HWHM = cell_size)
    :ivar n_init: number of warm-up cells placed uniformly
    :ivar support_radius: pixels, Gaussian truncation, default ceil(3 sigma)
    :ivar zero_occupied: also force P to zero on every occupied pixel
    """

    cell_size: float = CONSTS.DEFAULT_CELL_SIZE
    sigma: Optional[float] = None
    n_init: int = CONSTS.DEFAULT_N_INIT
    support_radius: Optional[int] = None
    zero_occupied: bool = False

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ConfigError("cell_size must be positive, got {}".format(self.cell_size))
        if self.sigma is None:
            object.__setattr__(self, "sigma", hwhm_sigma(self.cell_size))
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive, got {}".format(self.sigma))
        if self.support_radius is None:
            object.__setattr__(self, "support_radius", int(math.ceil(3.0 * self.sigma)))
        if self.support_radius < self.cell_size:
            raise ConfigError(
                "support_radius ({}) must be at least cell_size ({})".format(self.support_radius, self.cell_size)
            )
        if int(self.n_init) < 1:
            raise ConfigError("n_init must be >= 1, got {}".format(self.n_init))

    @staticmethod
    def a(i: int) -> float:
        """harmonic blending coefficient a_i = 1/i"""
        return 1.0 / i

    def to_dict(self) -> dict:
        return {
            "cell_size": self.cell_size,
            "sigma": self.sigma,
            "n_init": self.n_init,
            "support_radius": self.support_radius,
            "zero_occupied": self.zero_occupied,
            "a_schedule": "1/i",
        }


def excitation_value(r, params: SamplerParams):
    """
    Unnormalized excitation at distance r from the center, with G_max = 1.
    Inside the core the Gaussian is reverted, outside the support it is 0.
    """
    r = np.asarray(r, dtype=np.float64)
    g = np.exp(-(r * r) / (2.0 * params.sigma * params.sigma))
    z = np.where(r <= params.cell_size, 1.0 - g, g)
    return np.where(r <= params.support_radius, z, 0.0)


def _kernel(params: SamplerParams) -> np.ndarray:
    key = (params.sigma, params.cell_size, params.support_radius)
    if key in _kernel_cache:
        return _kernel_cache[key]
    radius = params.support_radius
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    r = np.hypot(offsets[None, :], offsets[:, None])
    kernel = excitation_value(r, params)
    kernel.setflags(write=False)
    _kernel_cache[key] = kernel
    return kernel


@dataclass(frozen=True, eq=False)
class ExcitationPatch:
    """
    z(l) restricted to its in-bounds window, normalized to unit mass.

    :ivar center: (x, y)
    :ivar window: (y0, y1, x0, x1) slice bounds inside the map
    :ivar values: float grid of shape (y1 - y0, x1 - x0)
    """

    center: Tuple[int, int]
    sigma: float
    cell_size: float
    support_radius: int
    window: Tuple[int, int, int, int]
    values: np.ndarray

    @property
    def slices(self):
        y0, y1, x0, x1 = self.window
        return slice(y0, y1), slice(x0, x1)


def excitation(l, params: SamplerParams, width: Optional[int] = None, height: Optional[int] = None) -> ExcitationPatch:
    """
    Build the normalized excitation patch around l = (x, y).
    With width/height given the patch is clipped at the image border and
    renormalized over the visible pixels.
    """
    x, y = int(l[0]), int(l[1])
    radius = params.support_radius
    kernel = _kernel(params)
    if width is None or height is None:
        y0, y1, x0, x1 = y - radius, y + radius + 1, x - radius, x + radius + 1
        values = kernel
    else:
        y0, y1 = max(0, y - radius), min(height, y + radius + 1)
        x0, x1 = max(0, x - radius), min(width, x + radius + 1)
        values = kernel[y0 - (y - radius) : y1 - (y - radius), x0 - (x - radius) : x1 - (x - radius)]
    mass = values.sum()
    if mass > 0:
        values = values / mass
    else:
        # only the reverted center is visible (1x1 image)
        values = np.full(values.shape, 1.0 / values.size)
    return ExcitationPatch(
        center=(x, y),
        sigma=params.sigma,
        cell_size=params.cell_size,
        support_radius=radius,
        window=(y0, y1, x0, x1),
        values=values,
    )


class ProbabilityMap:
    """
    Discrete density over the pixels of a width x height image.

    The density is confined to one generation job; nothing here is thread safe.
    """

    def __init__(self, raw: np.ndarray) -> None:
        raw = np.array(raw, dtype=np.float64)
        if raw.ndim != 2 or raw.shape[0] < 1 or raw.shape[1] < 1:
            raise ValueError("a probability map needs a non-empty 2D grid, got shape {}".format(raw.shape))
        if (raw < 0).any() or not np.isfinite(raw).all():
            raise ValueError("density values must be finite and >= 0")
        self.height, self.width = raw.shape
        self._raw = raw
        self._scale = 1.0
        self.step_index = 0
        self._warmup = []
        self.rebuild_index()

    @classmethod
    def uniform(cls, width, height) -> "ProbabilityMap":
        if int(width) < 1 or int(height) < 1:
            raise ValueError("map dimensions must be >= 1, got {}x{}".format(width, height))
        return cls(np.ones((int(height), int(width)), dtype=np.float64))

    @classmethod
    def from_density(cls, grid) -> "ProbabilityMap":
        """any non-negative grid with positive mass, normalized on the way in"""
        return cls(grid)

    ######### index #########

    def rebuild_index(self):
        """Full rebuild of the sampling index from raw. Never called per placement."""
        self._row_cum = np.cumsum(self._raw, axis=1)
        self._row_totals = self._row_cum[:, -1].copy()
        self._rows = FenwickTree(self._row_totals)
        self.running_total = float(self._row_totals.sum())
        self._renormalize()

    def _refresh_rows(self, y0, y1):
        fresh = np.cumsum(self._raw[y0:y1], axis=1)
        self._row_cum[y0:y1] = fresh
        deltas = fresh[:, -1] - self._row_totals[y0:y1]
        self._row_totals[y0:y1] = fresh[:, -1]
        for offset in np.flatnonzero(deltas):
            self._rows.add(y0 + int(offset), float(deltas[offset]))
        self.running_total += float(deltas.sum())

    def _renormalize(self):
        if self.running_total > 0:
            self._scale = 1.0 / self.running_total
        if self._scale < MIN_SCALE:
            logger.debug("folding probability map scale", self._scale, v=5)
            self._raw *= self._scale
            self._scale = 1.0
            self.rebuild_index()

    def index_discrepancy(self) -> float:
        """
        Largest absolute difference, in density units, between the prefix sums
        held by the index and the ones recomputed from scratch.
        """
        row_cum = np.cumsum(self._raw, axis=1)
        in_rows = float(np.abs(row_cum - self._row_cum).max())
        exact = np.cumsum(row_cum[:, -1])
        held = np.array([self._rows.prefix(j + 1) for j in range(self.height)])
        across = float(np.abs(exact - held).max())
        return max(in_rows, across) * self._scale

    ######### density #########

    @property
    def density(self) -> np.ndarray:
        return self._raw * self._scale

    @property
    def scale(self) -> float:
        return self._scale

    def total(self) -> float:
        return float(self._raw.sum()) * self._scale

    def _check_bounds(self, l):
        x, y = int(l[0]), int(l[1])
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise OutOfBoundsError("location {} is outside the {}x{} map".format((x, y), self.width, self.height))
        return x, y

    def blend(self, l, a: float, params: SamplerParams) -> None:
        """P <- (1 - a) P + a z(l); touches the excitation window only"""
        x, y = self._check_bounds(l)
        if not 0.0 < a <= 1.0:
            raise ValueError("blend coefficient must be in (0, 1], got {}".format(a))
        patch = excitation((x, y), params, self.width, self.height)
        if a == 1.0:
            self._raw[:] = 0.0
            self._raw[patch.slices] = patch.values
            self.rebuild_index()
            return
        new_scale = (1.0 - a) * self._scale
        self._raw[patch.slices] += (a / new_scale) * patch.values
        self._scale = new_scale
        y0, y1 = patch.window[0], patch.window[1]
        self._refresh_rows(y0, y1)
        self._renormalize()

    def _warmup_average(self, params: SamplerParams) -> None:
        raw = np.zeros_like(self._raw)
        for loc in self._warmup:
            patch = excitation(loc, params, self.width, self.height)
            raw[patch.slices] += patch.values / len(self._warmup)
        self._raw = raw
        self._scale = 1.0
        self._warmup = []
        self.rebuild_index()

    def advance(self, l, params: SamplerParams) -> None:
        """
        Account for one more placed cell at l = (x, y), or for a batch of
        locations given as a sequence of (x, y) pairs.

        After k placed cells the map holds P(k + 1):
            k <  n_init   warm-up, density untouched
            k == n_init   average excitation of the warm-up cells
            k >  n_init   blend with a = 1 / (k + 1)
        """
        if len(l) and np.ndim(l[0]) > 0:
            for loc in l:
                self.advance(loc, params)
            return
        x, y = self._check_bounds(l)
        placed = self.step_index + 1
        if placed < params.n_init:
            self._warmup.append((x, y))
        elif placed == params.n_init:
            self._warmup.append((x, y))
            self._warmup_average(params)
        else:
            self.blend((x, y), params.a(placed + 1), params)
        self.step_index = placed

    def suppress(self, window, mask) -> None:
        """
        Force the density to zero on the masked pixels of a window
        (y0, y1, x0, x1), then renormalize.
        """
        y0, y1, x0, x1 = window
        view = self._raw[y0:y1, x0:x1]
        view[np.asarray(mask, dtype=bool)] = 0.0
        self._refresh_rows(y0, y1)
        self._renormalize()

    ######### sampling #########

    def sample_location(self, rng: np.random.Generator) -> Tuple[int, int]:
        """draw one pixel (x, y) with probability proportional to its density"""
        if self.running_total <= 0 or not (self._row_totals > 0).any():
            raise DegenerateMapError("probability map has no mass left")
        u = rng.random() * self.running_total
        row = self._rows.find(u)
        if row >= self.height or self._row_totals[row] <= 0:
            # float drift pushed u past the last row, or onto an empty one
            nonzero = np.flatnonzero(self._row_totals > 0)
            row = int(nonzero[min(np.searchsorted(nonzero, row), len(nonzero) - 1)])
        u_row = min(max(u - self._rows.prefix(row), 0.0), self._row_totals[row])
        col = int(np.searchsorted(self._row_cum[row], u_row, side="right"))
        if col >= self.width:
            col = int(np.flatnonzero(self._raw[row] > 0)[-1])
        return col, int(row)

    def sample_many(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """
        n independent draws as an (n, 2) array of (x, y), vectorized over a
        flat cumulative table; same distribution as sample_location
        """
        flat = np.cumsum(self._raw.ravel())
        if flat[-1] <= 0:
            raise DegenerateMapError("probability map has no mass left")
        u = rng.random(int(n)) * flat[-1]
        idx = np.searchsorted(flat, u, side="right")
        last = int(np.flatnonzero(self._raw.ravel() > 0)[-1])
        idx = np.minimum(idx, last)
        return np.stack([idx % self.width, idx // self.width], axis=1)

    ######### debug #########

    def dump(self, prefix) -> Tuple[str, str]:
        """
        write <prefix>.npy (float32 density raster) and <prefix>.png (false color)
        :return: both paths
        """
        from matplotlib import colormaps

        density = self.density.astype(np.float32)
        npy_path, png_path = str(prefix) + ".npy", str(prefix) + ".png"
        np.save(npy_path, density)
        peak = float(density.max())
        normed = density / peak if peak > 0 else density
        rgb = (colormaps["viridis"](normed)[..., :3] * 255).astype(np.uint8)
        Image.fromarray(rgb, "RGB").save(png_path, format="PNG")
        return npy_path, png_path


def new_map(width, height) -> ProbabilityMap:
    return ProbabilityMap.uniform(width, height)


def advance(prob_map: ProbabilityMap, l, params: SamplerParams) -> None:
    prob_map.advance(l, params)


def sample_location(prob_map: ProbabilityMap, rng: np.random.Generator) -> Tuple[int, int]:
    return prob_map.sample_location(rng)
