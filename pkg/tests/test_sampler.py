import math

import numpy as np
import pytest
from scipy import stats

from hemogen_core.errors import ConfigError, DegenerateMapError, OutOfBoundsError
from hemogen_core.sampler import (
    ProbabilityMap,
    SamplerParams,
    advance,
    excitation,
    excitation_value,
    new_map,
    sample_location,
)


def dense_excitation(l, params, width, height):
    """the excitation over the whole grid, normalized, computed from scratch"""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    r = np.hypot(xx - l[0], yy - l[1])
    g = np.exp(-(r ** 2) / (2.0 * params.sigma ** 2))
    z = np.where(r <= params.cell_size, 1.0 - g, g)
    z[r > params.support_radius] = 0.0
    return z / z.sum()


class DenseMap:
    """brute force reference of the probability map update rule"""

    def __init__(self, width, height, params):
        self.width, self.height, self.params = width, height, params
        self.density = np.full((height, width), 1.0 / (width * height))
        self.placed = []

    def advance(self, l):
        self.placed.append(l)
        k = len(self.placed)
        n_init = self.params.n_init
        if k < n_init:
            return
        if k == n_init:
            self.density = sum(dense_excitation(p, self.params, self.width, self.height) for p in self.placed) / n_init
            return
        a = 1.0 / (k + 1)
        self.density = (1 - a) * self.density + a * dense_excitation(l, self.params, self.width, self.height)


def test_default_parameters():
    params = SamplerParams()
    assert params.cell_size == 46
    assert params.sigma == pytest.approx(46 / math.sqrt(2 * math.log(2)), rel=1e-6)
    assert params.sigma == pytest.approx(39.07, abs=5e-3)
    assert params.n_init == 20
    assert params.support_radius == math.ceil(3 * params.sigma)
    assert params.a(1) == 1.0
    assert params.a(20) == 1 / 20


def test_invalid_parameters():
    with pytest.raises(ConfigError):
        SamplerParams(cell_size=0)
    with pytest.raises(ConfigError):
        SamplerParams(cell_size=46, support_radius=10)
    with pytest.raises(ConfigError):
        SamplerParams(n_init=0)


def test_excitation_profile():
    params = SamplerParams()
    assert float(excitation_value(0.0, params)) == 0.0
    inside = float(excitation_value(46 - 1e-3, params))
    outside = float(excitation_value(46 + 1e-3, params))
    assert abs(inside - outside) <= 1e-4
    assert float(excitation_value(46.0, params)) == pytest.approx(0.5, abs=1e-12)
    assert float(excitation_value(3 * params.sigma, params)) == pytest.approx(math.exp(-4.5), rel=1e-9)
    assert float(excitation_value(params.support_radius + 1, params)) == 0.0


def test_excitation_patch_is_clipped_and_normalized():
    params = SamplerParams(cell_size=5)
    patch = excitation((0, 0), params, width=40, height=30)
    assert patch.window == (0, params.support_radius + 1, 0, params.support_radius + 1)
    assert patch.values.sum() == pytest.approx(1.0, abs=1e-12)
    assert patch.values[0, 0] == 0.0
    assert (patch.values >= 0).all()


def test_uniform_map():
    prob_map = new_map(2, 2)
    assert np.allclose(prob_map.density, 0.25)
    big = new_map(1920, 1200)
    assert big.density[0, 0] == pytest.approx(1 / 2304000, rel=1e-12)
    assert abs(big.total() - 1.0) <= 1e-9
    assert abs(big.running_total * big.scale - 1.0) <= 1e-9


def test_warmup_leaves_density_untouched():
    params = SamplerParams(cell_size=5, n_init=4)
    prob_map = ProbabilityMap.uniform(32, 32)
    before = prob_map.density.copy()
    for l in [(3, 3), (20, 5), (10, 28)]:
        prob_map.advance(l, params)
        assert np.array_equal(prob_map.density, before)
    prob_map.advance((30, 30), params)
    expected = DenseMap(32, 32, params)
    for l in [(3, 3), (20, 5), (10, 28), (30, 30)]:
        expected.advance(l)
    assert np.abs(prob_map.density - expected.density).max() <= 1e-12


def test_single_blend_against_dense_recomputation():
    params = SamplerParams(cell_size=5)
    prob_map = ProbabilityMap.uniform(48, 40)
    prob_map.blend((20, 18), 0.05, params)
    patch = dense_excitation((20, 18), params, 48, 40)
    expected = 0.95 / (48 * 40) + 0.05 * patch
    assert np.abs(prob_map.density - expected).max() <= 1e-15
    untouched = patch == 0
    assert np.allclose(prob_map.density[untouched], 0.95 / (48 * 40), rtol=1e-12, atol=0)


def test_batch_advance_equals_sequential():
    params = SamplerParams(cell_size=4, n_init=3)
    locations = [(1, 1), (10, 12), (30, 5), (7, 20), (25, 25)]
    one = ProbabilityMap.uniform(32, 32)
    one.advance(locations, params)
    two = ProbabilityMap.uniform(32, 32)
    for l in locations:
        advance(two, l, params)
    assert one.step_index == two.step_index == 5
    assert np.array_equal(one.density, two.density)


def test_incremental_map_matches_dense_oracle():
    rng = np.random.default_rng(2024)
    params = SamplerParams(cell_size=5, n_init=3)
    for _ in range(200):
        prob_map = ProbabilityMap.uniform(64, 64)
        oracle = DenseMap(64, 64, params)
        for _ in range(int(rng.integers(1, 12))):
            l = (int(rng.integers(64)), int(rng.integers(64)))
            prob_map.advance(l, params)
            oracle.advance(l)
        assert np.abs(prob_map.density - oracle.density).max() <= 1e-12
        assert prob_map.index_discrepancy() <= 1e-12


def test_sum_to_unity_small():
    rng = np.random.default_rng(9)
    params = SamplerParams(cell_size=8, n_init=5)
    prob_map = ProbabilityMap.uniform(200, 150)
    for _ in range(300):
        prob_map.advance((int(rng.integers(200)), int(rng.integers(150))), params)
        assert abs(prob_map.total() - 1.0) <= 1e-9
        assert (prob_map.density >= 0).all()
    assert prob_map.index_discrepancy() <= 1e-9


@pytest.mark.slow
def test_sum_to_unity_full_resolution():
    rng = np.random.default_rng(10)
    params = SamplerParams()
    prob_map = ProbabilityMap.uniform(1920, 1200)
    for _ in range(1000):
        prob_map.advance((int(rng.integers(1920)), int(rng.integers(1200))), params)
        assert abs(prob_map.total() - 1.0) <= 1e-9
    assert prob_map.index_discrepancy() <= 1e-9


def test_out_of_bounds_location():
    prob_map = ProbabilityMap.uniform(10, 10)
    with pytest.raises(OutOfBoundsError):
        prob_map.advance((10, 3), SamplerParams(cell_size=2))
    with pytest.raises(OutOfBoundsError):
        prob_map.blend((-1, 0), 0.5, SamplerParams(cell_size=2))


def test_delta_distribution():
    grid = np.zeros((5, 9))
    grid[3, 7] = 2.5
    prob_map = ProbabilityMap.from_density(grid)
    rng = np.random.default_rng(0)
    assert {sample_location(prob_map, rng) for _ in range(200)} == {(7, 3)}
    assert (prob_map.sample_many(1000, rng) == [7, 3]).all()


def test_zero_density_region_never_sampled():
    grid = np.ones((8, 8))
    grid[2:5] = 0.0
    grid[:, 6] = 0.0
    prob_map = ProbabilityMap.from_density(grid)
    rng = np.random.default_rng(1)
    draws = prob_map.sample_many(10 ** 6, rng)
    assert (grid[draws[:, 1], draws[:, 0]] > 0).all()
    for _ in range(5000):
        x, y = prob_map.sample_location(rng)
        assert grid[y, x] > 0


def test_uniform_chi_square():
    prob_map = ProbabilityMap.uniform(16, 16)
    rng = np.random.default_rng(12345)
    counts = np.zeros((16, 16), dtype=np.int64)
    for _ in range(10 ** 5):
        x, y = prob_map.sample_location(rng)
        counts[y, x] += 1
    assert stats.chisquare(counts.ravel()).pvalue > 0.001


def test_sample_many_matches_density():
    grid = np.arange(1, 13, dtype=float).reshape(3, 4)
    prob_map = ProbabilityMap.from_density(grid)
    draws = prob_map.sample_many(200000, np.random.default_rng(4))
    freq = np.bincount(draws[:, 1] * 4 + draws[:, 0], minlength=12) / len(draws)
    total_variation = 0.5 * np.abs(freq - grid.ravel() / grid.sum()).sum()
    assert total_variation < 0.01


def test_sample_location_after_updates_matches_density():
    params = SamplerParams(cell_size=3, n_init=2)
    prob_map = ProbabilityMap.uniform(12, 10)
    prob_map.advance([(2, 2), (9, 7), (5, 5), (1, 8)], params)
    rng = np.random.default_rng(8)
    counts = np.zeros(120)
    for _ in range(150000):
        x, y = prob_map.sample_location(rng)
        counts[y * 12 + x] += 1
    total_variation = 0.5 * np.abs(counts / counts.sum() - prob_map.density.ravel()).sum()
    assert total_variation < 0.03


def test_suppress_and_degenerate_map():
    prob_map = ProbabilityMap.uniform(6, 4)
    occupied = np.zeros((4, 6), dtype=bool)
    occupied[1:3, 2:5] = True
    prob_map.suppress((0, 4, 0, 6), occupied)
    assert (prob_map.density[occupied] == 0).all()
    assert prob_map.total() == pytest.approx(1.0, abs=1e-12)

    prob_map.suppress((0, 4, 0, 6), np.ones((4, 6), dtype=bool))
    with pytest.raises(DegenerateMapError):
        prob_map.sample_location(np.random.default_rng(0))
    with pytest.raises(DegenerateMapError):
        ProbabilityMap.from_density(np.zeros((3, 3))).sample_many(5, np.random.default_rng(0))


def test_dump_writes_raster_and_preview(tmp_path):
    params = SamplerParams(cell_size=3, n_init=1)
    prob_map = ProbabilityMap.uniform(20, 10)
    prob_map.advance((4, 4), params)
    npy_path, png_path = prob_map.dump(tmp_path / "map")
    raster = np.load(npy_path)
    assert raster.dtype == np.float32
    assert raster.shape == (10, 20)
    assert np.allclose(raster, prob_map.density, atol=1e-7)
    assert (tmp_path / "map.png").exists()
