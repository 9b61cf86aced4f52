# coding=utf-8
"""
Synthetic instance mask generation.

A mask is a set of (shape, location) pairs on a background. For one mask:

    1. draw the cell count n ~ Norm(mu_n, sigma_n), clamped
    2. for every cell draw an augmented exemplar shape, then draw locations
       until the shape fits without overlap and a color not used by any
       touching cell is available
    3. the first n_init cells are located uniformly; afterwards locations come
       from the probability map, which is advanced after each placement
       (strategy "uniform-random" never uses the map)
    4. render the color mask and the per-cell record

Retry policy per cell: up to max_location_retries locations for a shape (a
location rejected for color exhaustion counts too, and max_color_retries such
rejections end the round early), then one fresh shape with a fresh budget,
then the cell is abandoned and recorded as such.
"""
import os
import secrets
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from time import perf_counter
from typing import List, Optional, Set, Tuple

import numpy as np
from tqdm import tqdm

from utils.util import canonical_json, pretty_json, sha256_hex

from . import CONSTS
from .augment import AugmentationConfig, Transform, sample_shape
from .canvas import OUT_OF_BOUNDS, OVERLAP, Canvas, Placement
from .errors import ConfigError, DegenerateMapError
from .maskdb import RGB, InstanceMask, ShapeDatabase, save_mask
from .sampler import ProbabilityMap, SamplerParams, excitation
from .shares import logger

STRATEGY_ADHESION = "adhesion"
STRATEGY_UNIFORM = "uniform-random"
STRATEGIES = (STRATEGY_ADHESION, STRATEGY_UNIFORM)

SEED_MASK = (1 << 64) - 1

RECORD_FORMAT_NAME = "hemogen-synthesis-record"


@dataclass(frozen=True)
class SynthesisConfig:
    width: int = CONSTS.DEFAULT_WIDTH
    height: int = CONSTS.DEFAULT_HEIGHT
    mu_n: float = CONSTS.DEFAULT_MU_N
    sigma_n: float = CONSTS.DEFAULT_SIGMA_N
    # fixed cell count, skips the normal draw
    count: Optional[int] = None
    sampler: SamplerParams = field(default_factory=SamplerParams)
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    palette: Tuple[RGB, ...] = CONSTS.DEFAULT_PALETTE
    background: RGB = CONSTS.DEFAULT_BACKGROUND
    max_location_retries: int = 100
    max_color_retries: int = 20
    strategy: str = STRATEGY_ADHESION
    seed: Optional[int] = None
    density_cap: float = 0.6

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise ConfigError("image dimensions must be positive, got {}x{}".format(self.width, self.height))
        palette = tuple(tuple(int(v) for v in c) for c in self.palette)
        background = tuple(int(v) for v in self.background)
        object.__setattr__(self, "palette", palette)
        object.__setattr__(self, "background", background)
        if len(palette) < 2:
            raise ConfigError("the palette needs at least 2 colors")
        if len(set(palette)) != len(palette):
            raise ConfigError("palette colors must be distinct")
        if background in palette:
            raise ConfigError("background color {} is also in the palette".format(background))
        if self.strategy not in STRATEGIES:
            raise ConfigError("strategy must be one of {}, got {!r}".format(STRATEGIES, self.strategy))
        if self.mu_n <= 0 and self.count is None:
            raise ConfigError("mu_n must be positive, got {}".format(self.mu_n))
        if self.sigma_n < 0:
            raise ConfigError("sigma_n must be >= 0, got {}".format(self.sigma_n))
        if self.max_location_retries < 1 or self.max_color_retries < 1:
            raise ConfigError("retry budgets must be >= 1")
        if not 0.0 < self.density_cap <= 1.0:
            raise ConfigError("density_cap must be in (0, 1], got {}".format(self.density_cap))

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "mu_n": self.mu_n,
            "sigma_n": self.sigma_n,
            "count": self.count,
            "sampler": self.sampler.to_dict(),
            "augmentation": self.augmentation.to_dict(),
            "palette": [list(c) for c in self.palette],
            "background": list(self.background),
            "max_location_retries": self.max_location_retries,
            "max_color_retries": self.max_color_retries,
            "strategy": self.strategy,
            "seed": self.seed,
            "density_cap": self.density_cap,
        }

    @property
    def config_hash(self) -> str:
        return sha256_hex(canonical_json(self.to_dict()))


@dataclass(frozen=True, eq=False)
class PlacedCell:
    shape_id: int
    transform: Transform
    color_id: int
    placement: Placement

    @property
    def location(self) -> Tuple[int, int]:
        return self.placement.location

    @property
    def clipped(self) -> bool:
        return self.placement.clipped

    @property
    def realized_bitmap(self) -> np.ndarray:
        return self.placement.bitmap

    @property
    def bbox(self) -> Tuple[int, int, int, int]:
        return self.placement.bbox

    @property
    def area(self) -> int:
        return self.placement.area

    def to_dict(self) -> dict:
        return {
            "shape_id": self.shape_id,
            "transform": self.transform.to_dict(),
            "location": list(self.location),
            "color_id": self.color_id,
            "bbox": list(self.bbox),
            "area": self.area,
            "clipped": self.clipped,
        }


def new_counters() -> dict:
    return {
        "iterations": 0,
        "overlap": 0,
        "color": 0,
        "border": 0,
        "shape_resamples": 0,
        "abandoned": 0,
    }


@dataclass(eq=False)
class SynthesisRecord:
    config: SynthesisConfig
    seed: int
    n_drawn: int = 0
    placed: List[PlacedCell] = field(default_factory=list)
    rejected: dict = field(default_factory=new_counters)
    warnings: List[str] = field(default_factory=list)
    density_cap_bound: bool = False
    elapsed: float = 0.0
    job_index: int = 0
    run: Optional[dict] = None

    @property
    def config_hash(self) -> str:
        """hash of the resolved run config when known, else of the synthesis config"""
        if self.run is not None:
            return sha256_hex(canonical_json(self.run))
        return self.config.config_hash

    def warn(self, message):
        self.warnings.append(message)
        logger.warn("seed", self.seed, ":", message)

    def to_dict(self, include_timing=False) -> dict:
        """sidecar content; timing is left out by default so sidecars are reproducible"""
        d = {
            "format": RECORD_FORMAT_NAME,
            "generator": "{} {}".format(CONSTS.__PROJECT__, CONSTS.__VERSION__),
            "seed": self.seed,
            "job_index": self.job_index,
            "strategy": self.config.strategy,
            "config": self.config.to_dict(),
            "config_hash": self.config_hash,
            "palette": [list(c) for c in self.config.palette],
            "background": list(self.config.background),
            "n_drawn": self.n_drawn,
            "n_placed": len(self.placed),
            "density_cap_bound": self.density_cap_bound,
            "rejected": dict(self.rejected),
            "warnings": list(self.warnings),
            "cells": [c.to_dict() for c in self.placed],
        }
        if self.run is not None:
            d["run"] = self.run
        if include_timing:
            d["elapsed"] = self.elapsed
        return d


######### operations #########


def count_cap(config: SynthesisConfig, mean_cell_area: float) -> Optional[int]:
    """largest cell count that keeps the expected coverage under density_cap"""
    if mean_cell_area <= 0:
        return None
    return int(np.floor(config.density_cap * config.width * config.height / mean_cell_area))


def sample_cell_count(config: SynthesisConfig, rng: np.random.Generator, mean_cell_area: float = 0.0) -> Tuple[int, bool]:
    """
    n ~ Norm(mu_n, sigma_n) rounded half up, clamped to [n_init, cap]

    :return: (n, whether the density cap bound)
    """
    if config.count is not None:
        n = int(config.count)
    else:
        draw = float(rng.normal(config.mu_n, config.sigma_n))
        n = max(int(np.floor(draw + 0.5)), int(config.sampler.n_init))
    cap = count_cap(config, mean_cell_area)
    if cap is not None and n > cap:
        return cap, True
    return n, False


def assign_color(neighbor_colors: Set[int], palette_size: int, rng: np.random.Generator) -> Optional[int]:
    """
    uniform choice among the palette colors no touching cell uses,
    None when all of them are taken
    """
    feasible = [c for c in range(palette_size) if c not in neighbor_colors]
    if not feasible:
        return None
    return feasible[int(rng.integers(len(feasible)))]


class MaskSynthesizer:
    """one generation job; owns its canvas, probability map and generator"""

    def __init__(self, db: ShapeDatabase, config: SynthesisConfig, seed: int, job_index: int = 0) -> None:
        if len(db) == 0:
            raise ValueError("cannot synthesize from an empty shape database")
        self.db = db
        self.config = config
        self.params = config.sampler
        self.rng = np.random.default_rng(int(seed) & SEED_MASK)
        self.canvas = Canvas(config.width, config.height)
        self.prob_map = ProbabilityMap.uniform(config.width, config.height) if config.strategy == STRATEGY_ADHESION else None
        self.record = SynthesisRecord(config=config, seed=int(seed) & SEED_MASK, job_index=job_index)

    def draw_location(self) -> Tuple[int, int]:
        if self.prob_map is not None and len(self.record.placed) >= self.params.n_init:
            try:
                return self.prob_map.sample_location(self.rng)
            except DegenerateMapError:
                # only reachable with zero_occupied once every pixel with mass is taken
                self.record.warn("probability map lost all mass, falling back to uniform locations")
                self.prob_map = None
        # warm-up cells ignore the map
        return int(self.rng.integers(self.config.width)), int(self.rng.integers(self.config.height))

    def place_one(self) -> Optional[PlacedCell]:
        counters = self.record.rejected
        for shape_round in range(2):
            if shape_round:
                counters["shape_resamples"] += 1
            sample = sample_shape(self.db, self.config.augmentation, self.rng)
            color_failures = 0
            for _ in range(self.config.max_location_retries):
                counters["iterations"] += 1
                result = self.canvas.try_place(sample.shape, self.draw_location())
                if result.status == OUT_OF_BOUNDS:
                    counters["border"] += 1
                    continue
                if result.status == OVERLAP:
                    counters["overlap"] += 1
                    continue
                color = assign_color(self.canvas.neighbor_colors(result.placement), len(self.config.palette), self.rng)
                if color is None:
                    counters["color"] += 1
                    color_failures += 1
                    if color_failures >= self.config.max_color_retries:
                        break
                    continue
                self.canvas.commit(result.placement, color)
                return PlacedCell(
                    shape_id=sample.shape_id, transform=sample.transform, color_id=color, placement=result.placement
                )
        counters["abandoned"] += 1
        return None

    def _after_placement(self, cell: PlacedCell):
        if self.prob_map is None:
            return
        self.prob_map.advance(cell.location, self.params)
        if not self.params.zero_occupied or self.prob_map.step_index < self.params.n_init:
            return
        occupied = self.canvas.occupied
        if self.prob_map.step_index == self.params.n_init:
            # the warm-up average just replaced the uniform map
            self.prob_map.suppress((0, self.config.height, 0, self.config.width), occupied)
            return
        # the blend only touched the excitation window, and the new cell may reach past it
        y0, y1, x0, x1 = excitation(cell.location, self.params, self.config.width, self.config.height).window
        c_y0, c_y1, c_x0, c_x1 = cell.placement.window
        y0, y1, x0, x1 = min(y0, c_y0), max(y1, c_y1), min(x0, c_x0), max(x1, c_x1)
        self.prob_map.suppress((y0, y1, x0, x1), occupied[y0:y1, x0:x1])

    def run(self, dump_prefix=None) -> Tuple[InstanceMask, SynthesisRecord]:
        start = perf_counter()
        record = self.record
        record.n_drawn, record.density_cap_bound = sample_cell_count(self.config, self.rng, self.db.mean_area)
        if record.density_cap_bound:
            record.warn("density cap {} bound the cell count to {}".format(self.config.density_cap, record.n_drawn))

        for _ in range(record.n_drawn):
            cell = self.place_one()
            if cell is None:
                continue
            record.placed.append(cell)
            self._after_placement(cell)

        if len(record.placed) < record.n_drawn:
            record.warn(
                "retry budget exhausted, placed {} of {} cells".format(len(record.placed), record.n_drawn)
            )
        if dump_prefix is not None and self.prob_map is not None:
            self.prob_map.dump(dump_prefix)

        mask = InstanceMask(
            pixels=self.canvas.color_grid(),
            palette=(self.config.background,) + self.config.palette,
            background_id=0,
            source="synthetic-{}".format(record.seed),
        )
        record.elapsed = perf_counter() - start
        logger.debug(
            "seed", record.seed, "placed", len(record.placed), "cells in", "{:.2f}s".format(record.elapsed), v=3
        )
        return mask, record


def generate_mask(db: ShapeDatabase, config: SynthesisConfig, seed: Optional[int] = None, dump_prefix=None):
    """
    :param seed: job seed, defaults to config.seed
    :return: (InstanceMask, SynthesisRecord)
    """
    if seed is None:
        seed = config.seed
    if seed is None:
        raise ConfigError("generate_mask needs a seed (config.seed or the seed argument)")
    return MaskSynthesizer(db, config, seed).run(dump_prefix=dump_prefix)


######### batches #########


@dataclass(eq=False)
class JobResult:
    index: int
    seed: int
    mask: Optional[InstanceMask] = None
    record: Optional[SynthesisRecord] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def resolve_seed(config: SynthesisConfig) -> SynthesisConfig:
    """fill in a random base seed when none is configured"""
    if config.seed is not None:
        return config
    return replace(config, seed=secrets.randbits(63))


def job_seed(base_seed: int, index: int) -> int:
    return (int(base_seed) + int(index)) & SEED_MASK


_worker_state = {}


def _init_worker(db, config, dump_dir):
    _worker_state["db"] = db
    _worker_state["config"] = config
    _worker_state["dump_dir"] = dump_dir


def _run_job(index, db=None, config=None, dump_dir=None) -> JobResult:
    db = db if db is not None else _worker_state["db"]
    config = config if config is not None else _worker_state["config"]
    dump_dir = dump_dir if dump_dir is not None else _worker_state.get("dump_dir")
    seed = job_seed(config.seed, index)
    dump_prefix = None
    if dump_dir is not None:
        dump_prefix = os.path.join(dump_dir, output_name(index) + "_map")
    try:
        synthesizer = MaskSynthesizer(db, config, seed, job_index=index)
        mask, record = synthesizer.run(dump_prefix=dump_prefix)
        return JobResult(index=index, seed=seed, mask=mask, record=record)
    except Exception:
        return JobResult(index=index, seed=seed, error=traceback.format_exc())


def batch_generate(
    db: ShapeDatabase, config: SynthesisConfig, count: int, parallelism: int = 1, dump_dir=None, progress=False
) -> List[JobResult]:
    """
    Run `count` independent jobs, job k seeded with base + k.
    The result list is ordered by k and does not depend on parallelism.
    """
    if int(count) < 1:
        raise ConfigError("count must be >= 1, got {}".format(count))
    config = resolve_seed(config)
    results = [None] * int(count)
    with tqdm(total=int(count), desc="masks", unit="mask", disable=not progress) as bar:
        if int(parallelism) <= 1:
            for k in range(int(count)):
                results[k] = _run_job(k, db, config, dump_dir)
                bar.update(1)
        else:
            with ProcessPoolExecutor(
                max_workers=int(parallelism), initializer=_init_worker, initargs=(db, config, dump_dir)
            ) as pool:
                futures = {pool.submit(_run_job, k): k for k in range(int(count))}
                for future in as_completed(futures):
                    k = futures[future]
                    try:
                        results[k] = future.result()
                    except Exception:
                        results[k] = JobResult(index=k, seed=job_seed(config.seed, k), error=traceback.format_exc())
                    bar.update(1)

    for result in results:
        if not result.ok:
            logger.error("job", result.index, "(seed", result.seed, ") failed:\n" + result.error)
    return results


def output_name(index: int) -> str:
    return "mask_{:05d}".format(index)


def write_outputs(result: JobResult, out_dir) -> Tuple[str, str]:
    """
    write <out_dir>/mask_NNNNN.png and its JSON sidecar
    :return: (png path, sidecar path)
    """
    base = os.path.join(str(out_dir), output_name(result.index))
    png_path, json_path = base + ".png", base + ".json"
    save_mask(result.mask, png_path)
    with open(json_path, "w", encoding="utf-8") as fp:
        fp.write(pretty_json(result.record.to_dict()))
    return png_path, json_path
