import json
from dataclasses import replace
from time import perf_counter

import numpy as np
import pytest

from hemogen_core.augment import AugmentationConfig
from hemogen_core.errors import ConfigError
from hemogen_core import synth
from hemogen_core.maskdb import ShapeDatabase, find_color_violations, label_regions, load_mask
from hemogen_core.metrics import adhesion_stats, compare_adhesion
from hemogen_core.sampler import SamplerParams
from hemogen_core.synth import (
    STRATEGY_UNIFORM,
    SynthesisConfig,
    assign_color,
    batch_generate,
    count_cap,
    generate_mask,
    job_seed,
    sample_cell_count,
    write_outputs,
)

from .conftest import BLACK, PALETTE, write_mask


def assert_same_result(a, b):
    mask_a, record_a = a
    mask_b, record_b = b
    assert mask_a == mask_b
    assert record_a.to_dict() == record_b.to_dict()


def test_zero_sigma_count_is_the_mean():
    config = SynthesisConfig(mu_n=669, sigma_n=0)
    assert sample_cell_count(config, np.random.default_rng(0)) == (669, False)


def test_count_is_clamped_to_warmup_size():
    config = SynthesisConfig(mu_n=3, sigma_n=0)
    assert sample_cell_count(config, np.random.default_rng(0)) == (20, False)


def test_count_follows_the_seeded_normal_draw():
    config = SynthesisConfig()
    for seed in (0, 1, 42, 2 ** 40):
        expected = max(int(np.floor(np.random.default_rng(seed).normal(669.0, 149.0) + 0.5)), 20)
        assert sample_cell_count(config, np.random.default_rng(seed))[0] == expected


def test_density_cap():
    config = SynthesisConfig(width=10, height=10, count=5)
    assert count_cap(config, 50.0) == 1
    assert count_cap(config, 0.0) is None
    assert sample_cell_count(config, np.random.default_rng(0), mean_cell_area=50.0) == (1, True)
    assert sample_cell_count(config, np.random.default_rng(0), mean_cell_area=5.0) == (5, False)


def test_assign_color_picks_the_free_color():
    rng = np.random.default_rng(0)
    assert assign_color({0, 1}, 3, rng) == 2
    assert assign_color({0, 1, 2}, 3, rng) is None
    assert assign_color(set(), 1, rng) == 0


def test_assign_color_is_uniform_over_free_colors():
    rng = np.random.default_rng(5)
    picks = [assign_color({1}, 4, rng) for _ in range(600)]
    counts = np.bincount(picks, minlength=4)
    assert counts[1] == 0
    assert all(150 < c < 250 for c in counts[[0, 2, 3]])


def test_invalid_config():
    with pytest.raises(ConfigError):
        SynthesisConfig(width=0)
    with pytest.raises(ConfigError):
        SynthesisConfig(palette=((1, 2, 3),))
    with pytest.raises(ConfigError):
        SynthesisConfig(palette=PALETTE, background=PALETTE[0])
    with pytest.raises(ConfigError):
        SynthesisConfig(strategy="clustered")
    with pytest.raises(ConfigError):
        SynthesisConfig(density_cap=0.0)


def test_config_hash_tracks_values():
    a = SynthesisConfig(seed=1)
    assert a.config_hash == SynthesisConfig(seed=1).config_hash
    assert a.config_hash != SynthesisConfig(seed=2).config_hash


def test_same_seed_same_mask(small_db, tiny_config):
    assert_same_result(generate_mask(small_db, tiny_config), generate_mask(small_db, tiny_config))
    override, _ = generate_mask(small_db, tiny_config, seed=99)
    assert override == generate_mask(small_db, replace(tiny_config, seed=99))[0]


def test_generate_needs_a_seed(small_db, tiny_config):
    with pytest.raises(ConfigError):
        generate_mask(small_db, replace(tiny_config, seed=None))


def test_tiny_round_trip(tmp_path, small_db, tiny_config):
    mask, record = generate_mask(small_db, tiny_config)
    assert record.n_drawn == 3
    assert len(record.placed) == 3
    assert mask.background == BLACK

    # the written mask passes validation and decomposes into the placed cells
    loaded = load_mask(write_mask(tmp_path / "synthetic.png", mask), background=BLACK)
    labels, n = label_regions(loaded)
    assert n == 3
    for cell in record.placed:
        region = labels[cell.placement.slices][cell.realized_bitmap]
        assert len(set(region.tolist())) == 1
        assert (labels == region[0]).sum() == cell.area
        y0, y1, x0, x1 = cell.placement.window
        assert loaded.palette[loaded.pixels[y0:y1, x0:x1][cell.realized_bitmap][0]] == PALETTE[cell.color_id]


def test_retry_accounting(small_db, small_config):
    _, record = generate_mask(small_db, small_config)
    counters = record.rejected
    assert counters["iterations"] == len(record.placed) + counters["overlap"] + counters["color"] + counters["border"]
    assert len(record.placed) + counters["abandoned"] == record.n_drawn
    assert record.n_drawn >= small_config.sampler.n_init


def test_abandoned_cells_are_recorded(monkeypatch, small_db):
    # with the density cap out of the way a 4x4 image cannot take 30 cells
    monkeypatch.setattr(synth, "count_cap", lambda config, mean_cell_area: None)
    config = SynthesisConfig(
        width=4,
        height=4,
        count=30,
        sampler=SamplerParams(cell_size=2, n_init=1),
        palette=PALETTE,
        max_location_retries=5,
        seed=3,
    )
    _, record = generate_mask(small_db, config)
    assert len(record.placed) < 30
    assert record.rejected["abandoned"] == 30 - len(record.placed)
    assert record.rejected["shape_resamples"] >= record.rejected["abandoned"]
    assert any("retry budget exhausted" in w for w in record.warnings)


def test_touching_cells_never_share_a_color(small_db, small_config):
    config = replace(small_config, augmentation=AugmentationConfig.identity(), palette=PALETTE[:3])
    mask, record = generate_mask(small_db, config)
    assert find_color_violations(mask) == []
    assert label_regions(mask)[1] == len(record.placed) > 0


def test_uniform_strategy(small_db, tiny_config):
    config = replace(tiny_config, strategy=STRATEGY_UNIFORM)
    mask, record = generate_mask(small_db, config)
    assert record.to_dict()["strategy"] == STRATEGY_UNIFORM
    assert len(record.placed) == 3


def test_zero_occupied_variant(small_db, small_config):
    sampler = SamplerParams(cell_size=6, n_init=5, zero_occupied=True)
    _, record = generate_mask(small_db, replace(small_config, count=30, sampler=sampler))
    assert len(record.placed) > 5
    assert not any("lost all mass" in w for w in record.warnings)


def test_zero_occupied_keeps_every_placed_cell_at_zero(small_db, small_config):
    sampler = SamplerParams(cell_size=6, n_init=5, zero_occupied=True)
    synthesizer = synth.MaskSynthesizer(small_db, replace(small_config, count=30, sampler=sampler), seed=3)
    _, record = synthesizer.run()
    assert len(record.placed) > sampler.n_init
    assert synthesizer.prob_map is not None
    occupied = synthesizer.canvas.occupied
    assert occupied.any()
    assert synthesizer.prob_map.density[occupied].sum() == 0.0
    assert synthesizer.prob_map.total() == pytest.approx(1.0, abs=1e-9)


def test_sidecar_content(tmp_path, small_db, tiny_config):
    (result,) = batch_generate(small_db, tiny_config, 1)
    png_path, json_path = write_outputs(result, tmp_path)
    assert png_path.endswith("mask_00000.png")
    with open(json_path, "r", encoding="utf-8") as fp:
        sidecar = json.load(fp)
    assert sidecar["seed"] == 11
    assert sidecar["n_placed"] == len(sidecar["cells"]) == 3
    assert sidecar["config_hash"] == tiny_config.config_hash
    assert "elapsed" not in sidecar
    assert sidecar["palette"] == [list(c) for c in PALETTE]
    for cell in sidecar["cells"]:
        assert set(cell) == {"shape_id", "transform", "location", "color_id", "bbox", "area", "clipped"}


def test_batch_of_one_equals_generate(small_db, tiny_config):
    (result,) = batch_generate(small_db, tiny_config, 1)
    assert result.ok
    assert result.seed == 11
    assert_same_result((result.mask, result.record), generate_mask(small_db, tiny_config))


def test_batch_does_not_depend_on_parallelism(small_db, tiny_config):
    serial = batch_generate(small_db, tiny_config, 4, parallelism=1)
    pooled = batch_generate(small_db, tiny_config, 4, parallelism=2)
    assert [r.index for r in pooled] == [0, 1, 2, 3]
    assert [r.seed for r in pooled] == [11, 12, 13, 14]
    for a, b in zip(serial, pooled):
        assert_same_result((a.mask, a.record), (b.mask, b.record))


def test_batch_draws_a_base_seed(small_db, tiny_config):
    results = batch_generate(small_db, replace(tiny_config, seed=None), 3)
    base = results[0].seed
    assert 0 <= base < 2 ** 63
    assert [r.seed for r in results] == [job_seed(base, k) for k in range(3)]
    assert job_seed(2 ** 64 - 1, 1) == 0


def test_failed_jobs_are_captured(small_db, tiny_config):
    empty = ShapeDatabase(shapes=(), stats=small_db.stats)
    results = batch_generate(empty, tiny_config, 2)
    assert [r.ok for r in results] == [False, False]
    assert "empty shape database" in results[0].error
    with pytest.raises(ConfigError):
        batch_generate(small_db, tiny_config, 0)


def test_map_dumps(tmp_path, small_db, small_config):
    (result,) = batch_generate(small_db, small_config, 1, dump_dir=str(tmp_path))
    assert result.ok
    assert (tmp_path / "mask_00000_map.npy").exists()
    assert (tmp_path / "mask_00000_map.png").exists()


def test_twenty_masks_count_around_the_default_mean(rbc_db):
    config = SynthesisConfig()
    counts = [
        sample_cell_count(config, np.random.default_rng(job_seed(42, k)), rbc_db.mean_area)[0] for k in range(20)
    ]
    assert abs(np.mean(counts) - 669) <= 3 * 149 / np.sqrt(20)


@pytest.mark.slow
def test_full_size_mask_is_fast(rbc_db):
    config = SynthesisConfig(seed=1, palette=PALETTE, background=BLACK)
    assert (config.width, config.height) == (1920, 1200)
    start = perf_counter()
    _, record = generate_mask(rbc_db, config)
    assert perf_counter() - start < 15.0
    assert record.n_drawn >= 20
    assert len(record.placed) >= 0.9 * record.n_drawn


@pytest.mark.slow
def test_adhesion_strategy_makes_cells_touch_more(rbc_db):
    base = SynthesisConfig(palette=PALETTE, background=BLACK, seed=100)
    touch = {}
    for strategy in ("adhesion", STRATEGY_UNIFORM):
        config = replace(base, strategy=strategy)
        touch[strategy] = [
            adhesion_stats(generate_mask(rbc_db, config, seed=job_seed(base.seed, k))[0]).touch_fraction
            for k in range(20)
        ]
    report = compare_adhesion(touch["adhesion"], touch[STRATEGY_UNIFORM])
    assert report["adhesion"]["mean"] > report[STRATEGY_UNIFORM]["mean"]
    assert report["adhesion"]["sem"] is not None and report[STRATEGY_UNIFORM]["sem"] is not None
    assert report["first_greater"]


@pytest.mark.slow
def test_many_seeds_round_trip(tmp_path, small_db, small_config):
    for seed in range(50):
        mask, record = generate_mask(small_db, small_config, seed=seed)
        loaded = load_mask(write_mask(tmp_path / "m.png", mask), background=BLACK)
        assert label_regions(loaded)[1] == len(record.placed)
