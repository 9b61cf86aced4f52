import json
import os

import numpy as np
import pytest
from PIL import Image

from hemogen_core import CONSTS
from hemogen_core.cli import main

from .conftest import disc, ellipse, paint, write_mask


@pytest.fixture(autouse=True)
def in_tmp_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(CONSTS.ENV_THREADS, raising=False)


@pytest.fixture
def masks_dir(tmp_path):
    root = tmp_path / "masks"
    root.mkdir()
    write_mask(root / "a.png", paint(64, 64, [(disc(4), (2, 2), 0), (disc(5), (30, 30), 1)]))
    write_mask(root / "b.png", paint(64, 64, [(disc(3), (2, 2), 0), (ellipse(6, 3), (40, 5), 2), (disc(6), (20, 30), 1)]))
    write_mask(root / "c.png", paint(64, 64, [(disc(5), (10, 10), 3)]))
    return root


@pytest.fixture
def db_path(tmp_path, masks_dir):
    path = str(tmp_path / "db.json")
    assert main(["build-db", str(masks_dir), "-o", path, "--background", "0,0,0", "-q"]) == CONSTS.EXIT_OK
    return path


def read_json(path):
    with open(path, "r", encoding="utf-8") as fp:
        return json.load(fp)


def test_build_db(tmp_path, db_path):
    report = read_json(tmp_path / "db.stats.json")
    assert report["n_shapes"] == 6
    assert report["stats"]["counts"] == [1, 2, 3]
    assert report["stats"]["mu_n"] == 2.0
    assert report["skipped"] == []


def test_build_db_without_masks(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["build-db", str(tmp_path / "empty"), "-q"]) == CONSTS.EXIT_VALIDATION
    assert main(["build-db", str(tmp_path / "nowhere"), "-q"]) == CONSTS.EXIT_IO


def test_build_db_keep_going(tmp_path, masks_dir):
    rgb = np.zeros((4, 4, 3), dtype=np.uint8)
    rgb[0, 0] = rgb[1, 1] = (255, 0, 0)
    Image.fromarray(rgb, "RGB").save(masks_dir / "bad.png")
    out = str(tmp_path / "db.json")

    assert main(["build-db", str(masks_dir), "-o", out, "-q"]) == CONSTS.EXIT_VALIDATION
    assert not os.path.exists(out)

    assert main(["build-db", str(masks_dir), "-o", out, "--keep-going", "-q"]) == CONSTS.EXIT_OK
    report = read_json(tmp_path / "db.stats.json")
    assert [os.path.basename(s["path"]) for s in report["skipped"]] == ["bad.png"]
    assert report["n_shapes"] == 6


def test_stats(capsys, db_path, masks_dir):
    assert main(["stats", db_path, "-q"]) == CONSTS.EXIT_OK
    from_db = json.loads(capsys.readouterr().out)
    assert main(["stats", str(masks_dir), "-q"]) == CONSTS.EXIT_OK
    from_masks = json.loads(capsys.readouterr().out)
    assert from_db["stats"] == from_masks["stats"]


def generate(db_path, out_dir, *extra):
    argv = ["generate", "--db", db_path, "--out-dir", str(out_dir), "--cells", "3", "--no-progress", "-q"]
    argv += ["--set", "sampler.n_init=2", "--set", "sampler.cell_size=5"]
    return main(argv + list(extra))


def test_generate_is_reproducible(tmp_path, db_path):
    out = tmp_path / "out"
    assert generate(db_path, out, "--count", "2", "--seed", "7") == CONSTS.EXIT_OK
    names = sorted(os.listdir(out))
    assert names == ["mask_00000.json", "mask_00000.png", "mask_00001.json", "mask_00001.png", "timing.json"]
    first = {name: (out / name).read_bytes() for name in names if name != "timing.json"}

    assert generate(db_path, out, "--count", "2", "--seed", "7", "--parallelism", "2") == CONSTS.EXIT_OK
    assert {name: (out / name).read_bytes() for name in first} == first

    sidecar = read_json(out / "mask_00001.json")
    assert sidecar["seed"] == 8
    assert sidecar["n_placed"] == 3
    assert sidecar["run"]["seed"] == 7
    assert sidecar["config"]["width"] == 64
    timing = read_json(out / "timing.json")
    assert timing["masks"] == 2
    assert timing["base_seed"] == 7


def test_generate_from_a_sidecar(tmp_path, db_path):
    out = tmp_path / "out"
    assert generate(db_path, out, "--seed", "21") == CONSTS.EXIT_OK
    original = (out / "mask_00000.png").read_bytes()
    sidecar = str(out / "mask_00000.json")

    again = tmp_path / "again"
    assert main(["generate", "-c", sidecar, "--out-dir", str(again), "-q"]) == CONSTS.EXIT_OK
    assert (again / "mask_00000.png").read_bytes() == original


def test_generate_errors(tmp_path, db_path):
    assert generate(str(tmp_path / "missing.json"), tmp_path / "out") == CONSTS.EXIT_IO
    assert generate(db_path, tmp_path / "out", "--set", "strategy=clustered") == CONSTS.EXIT_VALIDATION


def test_eval_dice_and_ap(tmp_path, db_path):
    out = tmp_path / "out"
    assert generate(db_path, out, "--seed", "3") == CONSTS.EXIT_OK
    mask, sidecar = str(out / "mask_00000.png"), str(out / "mask_00000.json")

    assert main(["eval", "dice", mask, mask, "--out", "dice.json", "-q"]) == CONSTS.EXIT_OK
    assert read_json("dice.json")["dice"] == 1.0

    assert main(["eval", "ap", sidecar, sidecar, "--out", "ap.json", "-q"]) == CONSTS.EXIT_OK
    report = read_json("ap.json")
    assert report["ap"] == pytest.approx(1.0)
    assert report["n_ground_truth"] == 3


def test_eval_dice_size_mismatch(tmp_path):
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8), "L").save(tmp_path / "a.png")
    Image.fromarray(np.zeros((4, 5), dtype=np.uint8), "L").save(tmp_path / "b.png")
    assert main(["eval", "dice", str(tmp_path / "a.png"), str(tmp_path / "b.png"), "-q"]) == CONSTS.EXIT_VALIDATION


def test_eval_instances(tmp_path):
    objectness = np.zeros((40, 40))
    objectness[2:12, 2:12] = 1.0
    objectness[20:35, 20:30] = 1.0
    np.save(tmp_path / "obj.npy", objectness)
    np.save(tmp_path / "contour.npy", np.zeros((40, 40)))
    (tmp_path / "truth.json").write_text(json.dumps([[2, 2, 10, 10], [20, 20, 10, 15]]))

    argv = ["eval", "instances", "obj.npy", "contour.npy", "--ground-truth", "truth.json", "--out", "inst.json", "-q"]
    assert main(argv) == CONSTS.EXIT_OK
    report = read_json("inst.json")
    assert report["count"] == 2
    assert report["ap"]["ap"] == pytest.approx(1.0)


def test_eval_adhesion_and_compare(masks_dir):
    assert main(["eval", "adhesion", str(masks_dir), "--out", "adhesion.json", "-q"]) == CONSTS.EXIT_OK
    report = read_json("adhesion.json")
    assert len(report["masks"]) == 3
    assert report["mean_touch_fraction"] == 0.0

    argv = ["compare-distribution", str(masks_dir), str(masks_dir), "--names", "left", "right", "--out", "cmp.json"]
    assert main(argv + ["-q"]) == CONSTS.EXIT_OK
    report = read_json("cmp.json")
    assert report["left"]["n"] == 3
    assert report["sources"] == {"left": str(masks_dir), "right": str(masks_dir)}


def test_config_help(capsys):
    assert main(["config-help"]) == CONSTS.EXIT_OK
    out = capsys.readouterr().out
    assert "iou_threshold:" in out
    assert "cell_size" in out
