import glob
import os
from time import perf_counter

import numpy as np

from utils.util import pretty_json

from . import CONSTS
from .maskdb import build_db, compute_stats, ingest_files, load_db, load_mask, save_db
from .metrics import (
    adhesion_stats,
    compare_adhesion,
    dice,
    extract_instances,
    extraction_to_detections,
    load_binary,
    load_boxes,
    load_map,
    match_and_ap,
)
from .shares import Shares
from .synth import batch_generate, resolve_seed, write_outputs


def list_masks(source):
    """PNG files of a directory (sorted), or the given files themselves"""
    if isinstance(source, (list, tuple)):
        paths = []
        for item in source:
            paths.extend(list_masks(item))
        return paths
    if os.path.isdir(source):
        return sorted(p for p in glob.glob(os.path.join(source, "*")) if p.lower().endswith(".png"))
    if not os.path.exists(source):
        raise FileNotFoundError(f"no such file or directory: {source}")
    return [source]


class HemogenApp:
    """
    every command of the cli, operating on a resolved Config
    commands return a JSON-ready report, `emit` writes it out
    """

    def __init__(self, conf) -> None:
        self.G = Shares(conf)
        self.conf = conf
        self.logger = self.G.logger

    def emit(self, report: dict, out_path=None) -> None:
        text = pretty_json(report)
        if out_path:
            with open(out_path, "w", encoding="utf-8") as fp:
                fp.write(text)
            self.logger.info("report written to", out_path)
        else:
            print(text, end="")

    ######### shape database #########

    def build_db(self, masks_dir=None, out_path=None) -> dict:
        masks_dir = masks_dir or self.conf.input_dir
        out_path = out_path or self.conf.db_path
        paths = list_masks(masks_dir)
        if not paths:
            raise ValueError(f"no PNG masks found in {masks_dir}")
        masks, errors = ingest_files(
            paths,
            background=self.conf.ingest_background,
            keep_going=self.conf.keep_going,
            parallelism=self.conf.parallelism,
        )
        if not masks:
            raise ValueError(f"none of the {len(paths)} masks in {masks_dir} is valid")

        db = build_db(masks)
        save_db(db, out_path)
        stats_path = os.path.splitext(out_path)[0] + ".stats.json"
        report = {
            "db_path": out_path,
            "n_shapes": len(db),
            "stats": db.stats.to_dict(),
            "skipped": [{"path": p, "error": str(e)} for p, e in errors],
        }
        with open(stats_path, "w", encoding="utf-8") as fp:
            fp.write(pretty_json(report))
        for line in db.stats.summary_lines():
            self.logger.important_print(line)
        if errors:
            self.logger.warn(len(errors), "of", len(paths), "masks were skipped")
        return report

    def stats(self, source=None) -> dict:
        """stats of a shape database file, or of a directory of masks"""
        source = source or self.conf.db_path
        if os.path.isdir(source):
            masks, errors = ingest_files(
                list_masks(source),
                background=self.conf.ingest_background,
                keep_going=self.conf.keep_going,
                parallelism=self.conf.parallelism,
            )
            stats = compute_stats(masks)
        else:
            stats = load_db(source).stats
        for line in stats.summary_lines():
            self.logger.important_print(line)
        return {"source": source, "stats": stats.to_dict()}

    ######### synthesis #########

    def generate(self, out_dir=None):
        """
        :return: (report, number of failed jobs)
        """
        out_dir = out_dir or self.conf.output_dir
        os.makedirs(out_dir, exist_ok=True)
        db = load_db(self.conf.db_path)
        config = resolve_seed(self.conf.synthesis_config(db.stats))
        run = self.conf.run_dict()
        run["seed"] = config.seed
        self.logger.info(
            "generating",
            self.conf.batch_count,
            "masks",
            f"{config.width}x{config.height}",
            "base seed",
            config.seed,
            "strategy",
            config.strategy,
        )

        start = perf_counter()
        results = batch_generate(
            db,
            config,
            self.conf.batch_count,
            parallelism=self.conf.parallelism,
            dump_dir=out_dir if self.conf.dump_maps else None,
            progress=self.conf.progress,
        )
        wall = perf_counter() - start

        timings, failed = [], []
        for result in results:
            if not result.ok:
                failed.append({"index": result.index, "seed": result.seed, "error": result.error})
                continue
            result.record.run = run
            png_path, _ = write_outputs(result, out_dir)
            timings.append({"index": result.index, "seed": result.seed, "elapsed": result.record.elapsed})
            self.logger.info(
                png_path,
                len(result.record.placed),
                "cells",
                "{:.2f}s".format(result.record.elapsed),
                v=3,
            )

        throughput = len(timings) / wall if wall > 0 else None
        placed = [len(r.record.placed) for r in results if r.ok]
        report = {
            "output_dir": out_dir,
            "base_seed": config.seed,
            "masks": len(timings),
            "failed": failed,
            "mean_cells": float(np.mean(placed)) if placed else None,
            "wall_seconds": wall,
            "masks_per_second": throughput,
            "per_mask": timings,
        }
        with open(os.path.join(out_dir, "timing.json"), "w", encoding="utf-8") as fp:
            fp.write(pretty_json(report))
        if throughput is not None:
            self.logger.important_print(
                "{} masks in {:.2f}s, {:.3f} masks/s".format(len(timings), wall, throughput)
            )
        if failed:
            self.logger.error(len(failed), "of", len(results), "jobs failed")
        return report, len(failed)

    ######### evaluation #########

    def eval_dice(self, prediction_path, target_path) -> dict:
        background = self.conf.ingest_background or CONSTS.DEFAULT_BACKGROUND
        score = dice(load_binary(prediction_path, background), load_binary(target_path, background))
        return {"prediction": prediction_path, "target": target_path, "dice": score}

    def eval_ap(self, detections_path, ground_truth_path) -> dict:
        detections = load_boxes(detections_path)
        ground_truth = [d.bbox for d in load_boxes(ground_truth_path)]
        result = match_and_ap(detections, ground_truth, self.conf.iou_threshold)
        report = result.to_dict()
        report.update({"detections": detections_path, "ground_truth": ground_truth_path})
        return report

    def eval_instances(self, objectness_path, contour_path, ground_truth_path=None) -> dict:
        extraction = extract_instances(
            load_map(objectness_path),
            load_map(contour_path),
            objectness_threshold=self.conf.objectness_threshold,
            contour_threshold=self.conf.contour_threshold,
            min_blob_size=self.conf.min_blob_size,
            contour_width=self.conf.contour_width,
        )
        report = extraction.to_dict()
        if ground_truth_path:
            ground_truth = [d.bbox for d in load_boxes(ground_truth_path)]
            result = match_and_ap(extraction_to_detections(extraction), ground_truth, self.conf.iou_threshold)
            report["ap"] = result.to_dict()
        return report

    def _touch_fractions(self, source):
        per_mask = []
        for path in list_masks(source):
            mask = load_mask(path, background=self.conf.ingest_background)
            stats = adhesion_stats(mask)
            entry = stats.to_dict(bins=self.conf.histogram_bins)
            entry["path"] = path
            per_mask.append(entry)
        if not per_mask:
            raise ValueError(f"no PNG masks found in {source}")
        return per_mask

    def eval_adhesion(self, sources) -> dict:
        per_mask = self._touch_fractions(list(sources))
        fractions = np.array([m["touch_fraction"] for m in per_mask])
        return {
            "masks": per_mask,
            "mean_touch_fraction": float(fractions.mean()),
        }

    def compare_distribution(self, first, second, names=("adhesion", "uniform-random")) -> dict:
        groups = [self._touch_fractions(first), self._touch_fractions(second)]
        fractions = [[m["touch_fraction"] for m in g] for g in groups]
        report = compare_adhesion(fractions[0], fractions[1], names=tuple(names))
        report["sources"] = {names[0]: first, names[1]: second}
        verdict = report["first_greater"]
        self.logger.important_print(
            "{}: {:.4f} vs {}: {:.4f}, one-sided p = {}".format(
                names[0],
                report[names[0]]["mean"],
                names[1],
                report[names[1]]["mean"],
                "n/a" if report["p_value"] is None else "{:.3g}".format(report["p_value"]),
            )
        )
        if verdict is not None:
            self.logger.important_print(
                "{} touch fraction is {}greater".format(names[0], "" if verdict else "not significantly ")
            )
        return report
