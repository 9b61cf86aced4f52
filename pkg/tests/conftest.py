import numpy as np
import pytest

from hemogen_core.augment import AugmentationConfig
from hemogen_core.maskdb import InstanceMask, build_db, save_mask
from hemogen_core.sampler import SamplerParams
from hemogen_core.synth import SynthesisConfig

BLACK = (0, 0, 0)
PALETTE = ((255, 0, 0), (0, 255, 0), (0, 0, 255), (255, 255, 0))


def disc(radius):
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (xx * xx + yy * yy) <= radius * radius


def ellipse(a, b):
    """a: half width, b: half height"""
    yy, xx = np.mgrid[-b : b + 1, -a : a + 1]
    return (xx / a) ** 2 + (yy / b) ** 2 <= 1.0


def paint(width, height, cells, palette=PALETTE, background=BLACK, source="fixture"):
    """
    InstanceMask from [(bitmap, (x, y) top-left, palette index), ...]
    color id 0 is the background, palette index i is color id i + 1
    """
    pixels = np.zeros((height, width), dtype=np.int32)
    for bitmap, (x, y), color in cells:
        h, w = bitmap.shape
        view = pixels[y : y + h, x : x + w]
        view[bitmap] = color + 1
    return InstanceMask(pixels=pixels, palette=(background,) + tuple(palette), background_id=0, source=source)


def write_mask(path, mask):
    save_mask(mask, str(path))
    return str(path)


@pytest.fixture
def two_disc_mask():
    # two discs and an ellipse, none touching
    return paint(
        64,
        48,
        [
            (disc(6), (2, 2), 0),
            (disc(6), (30, 10), 1),
            (ellipse(8, 4), (43, 14), 0),
        ],
    )


@pytest.fixture
def small_db():
    """shapes of radius 3..6 discs and two ellipses, stats of three tiny masks"""
    masks = [
        paint(64, 64, [(disc(4), (2, 2), 0), (disc(5), (30, 30), 1)]),
        paint(64, 64, [(disc(3), (2, 2), 0), (disc(6), (20, 30), 1), (ellipse(6, 3), (40, 5), 2)]),
        paint(
            64,
            64,
            [(disc(4), (2, 40), 0), (disc(5), (30, 2), 1), (ellipse(3, 6), (45, 40), 2), (disc(3), (20, 20), 3)],
        ),
    ]
    return build_db(masks)


@pytest.fixture(scope="session")
def rbc_db():
    """red blood cell sized exemplars, bounding boxes around 46 px"""
    masks = [
        paint(256, 256, [(disc(22), (4, 4), 0), (disc(23), (64, 4), 1), (ellipse(23, 20), (124, 4), 2)]),
        paint(256, 256, [(ellipse(20, 23), (4, 80), 0), (ellipse(24, 22), (64, 80), 1)]),
    ]
    return build_db(masks)


@pytest.fixture
def tiny_config():
    return SynthesisConfig(
        width=64,
        height=64,
        count=3,
        sampler=SamplerParams(cell_size=5, n_init=2),
        augmentation=AugmentationConfig(),
        palette=PALETTE,
        background=BLACK,
        seed=11,
    )


@pytest.fixture
def small_config():
    """256x256, 10 to 30 cells"""
    return SynthesisConfig(
        width=256,
        height=256,
        mu_n=20,
        sigma_n=5,
        sampler=SamplerParams(cell_size=6, n_init=5),
        palette=PALETTE,
        background=BLACK,
        seed=5,
    )
