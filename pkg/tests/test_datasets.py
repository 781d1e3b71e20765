import os

import numpy as np
import pytest

from app.config import MANIFEST_COLUMNS
from app.datasets import (
    SyntheticSpec,
    build_synthetic_manifest,
    by_class,
    degrade_gblur,
    degrade_wn,
    gaussian_kernel,
    load_manifest,
    make_base_images,
    manifest_counts,
    subset,
)
from app.errors import MissingFile, SchemaError, ScoreOutOfRange
from app.image_io import GrayImage, save_gray

HEADER = ",".join(MANIFEST_COLUMNS)


def _write_manifest(tmp_path, rows, header=HEADER):
    path = tmp_path / "manifest.csv"
    path.write_text("\n".join([header, *rows]) + "\n")
    return path


def _image(tmp_path, name):
    save_gray(GrayImage(np.full((256, 256), 128, dtype=np.uint8)), tmp_path / name)
    return name


def test_load_manifest_resolves_paths_and_counts(tmp_path):
    a = _image(tmp_path, "a.png")
    b = _image(tmp_path, "b.png")
    path = _write_manifest(
        tmp_path,
        [
            f"{a},ref1,wn,30.5,0,100,lower-is-better",
            f"{b},ref2,GBLUR,60,0,100,lower-is-better",
        ],
    )
    manifest = load_manifest(path)
    assert len(manifest) == 2
    assert manifest.dataset_id == "manifest"
    assert manifest.labels() == ["wn", "gblur"]
    assert manifest.scores().tolist() == [30.5, 60.0]
    assert manifest.reference_ids() == ["ref1", "ref2"]
    assert manifest.polarity == "lower-is-better"
    assert manifest.records[0].image_path == str(tmp_path / a)
    assert manifest_counts(manifest) == {"jp2k": 0, "jpeg": 0, "wn": 1, "gblur": 1}
    assert len(subset(manifest, ["ref2"])) == 1
    assert by_class(manifest, "wn").labels() == ["wn"]


@pytest.mark.parametrize(
    "row, error, where",
    [
        ("a.png,ref1,blocky,30,0,100,lower-is-better", SchemaError, "line 2"),
        ("a.png,ref1,wn,130,0,100,lower-is-better", ScoreOutOfRange, "line 2"),
        ("a.png,ref1,wn,abc,0,100,lower-is-better", SchemaError, "line 2"),
        ("a.png,ref1,wn,30,0,100,sideways", SchemaError, "line 2"),
        ("a.png,ref1,wn,30,100,0,lower-is-better", SchemaError, "line 2"),
        ("gone.png,ref1,wn,30,0,100,lower-is-better", MissingFile, "line 2"),
    ],
)
def test_load_manifest_reports_bad_rows(tmp_path, row, error, where):
    _image(tmp_path, "a.png")
    path = _write_manifest(tmp_path, [row])
    with pytest.raises(error, match=where):
        load_manifest(path)


def test_load_manifest_reports_later_line_numbers(tmp_path):
    _image(tmp_path, "a.png")
    path = _write_manifest(
        tmp_path,
        ["a.png,ref1,wn,30,0,100,lower-is-better", "a.png,ref1,jpeg,-1,0,100,lower-is-better"],
    )
    with pytest.raises(ScoreOutOfRange, match="line 3"):
        load_manifest(path)


def test_load_manifest_checks_header(tmp_path):
    path = _write_manifest(tmp_path, [], header="path,ref,class,score")
    with pytest.raises(SchemaError):
        load_manifest(path)
    with pytest.raises(MissingFile):
        load_manifest(tmp_path / "nope.csv")


def test_mixed_polarity_is_rejected(tmp_path):
    _image(tmp_path, "a.png")
    manifest = load_manifest(
        _write_manifest(
            tmp_path,
            ["a.png,r1,wn,3,0,9,lower-is-better", "a.png,r2,wn,3,0,9,higher-is-better"],
        )
    )
    with pytest.raises(SchemaError):
        manifest.polarity


def test_white_noise_level_and_seed():
    base = GrayImage(np.full((256, 256), 128, dtype=np.uint8))
    noisy = degrade_wn(base, 10.0, seed=3)
    diff = noisy.pixels.astype(float) - 128.0
    assert diff.std() == pytest.approx(10.0, rel=0.05)
    assert np.array_equal(noisy.pixels, degrade_wn(base, 10.0, seed=3).pixels)
    assert not np.array_equal(noisy.pixels, degrade_wn(base, 10.0, seed=4).pixels)


def test_gaussian_blur_properties():
    assert gaussian_kernel(1.6).sum() == pytest.approx(1.0, abs=1e-12)
    assert gaussian_kernel(1.0).size == 7

    flat = GrayImage(np.full((256, 256), 77, dtype=np.uint8))
    assert np.array_equal(degrade_gblur(flat, 3.2).pixels, flat.pixels)

    base = make_base_images(1, seed=1)[0]
    variances = [np.var(degrade_gblur(base, s).pixels.astype(float)) for s in (0.8, 1.6, 3.2, 6.4)]
    assert all(a > b for a, b in zip(variances, variances[1:]))


def test_synthetic_manifest(tmp_path):
    bases = tuple(make_base_images(5, seed=2))
    spec = SyntheticSpec(bases)
    manifest = build_synthetic_manifest(spec, tmp_path / "one")
    assert len(manifest) == 5 * 2 * 4
    assert manifest_counts(manifest)["wn"] == 20
    assert manifest_counts(manifest)["gblur"] == 20
    assert len(manifest.reference_ids()) == 5

    for distortion in ("wn", "gblur"):
        scores = [r.score for r in manifest.records if r.reference_id == "ref00" and r.distortion == distortion]
        assert scores == sorted(scores) and len(set(scores)) == 4

    reloaded = load_manifest(tmp_path / "one" / "manifest.csv")
    assert reloaded.scores().tolist() == manifest.scores().tolist()

    build_synthetic_manifest(spec, tmp_path / "two")
    for name in ("ref00_wn_3.png", "ref04_gblur_0.png"):
        first = (tmp_path / "one" / "images" / name).read_bytes()
        assert first == (tmp_path / "two" / "images" / name).read_bytes()


def test_synthetic_spec_validation():
    base = tuple(make_base_images(1))
    with pytest.raises(SchemaError):
        SyntheticSpec(()).validate()
    with pytest.raises(SchemaError):
        SyntheticSpec(base, wn_sigmas=(5.0,)).validate()
    with pytest.raises(SchemaError):
        SyntheticSpec(base, gblur_sigmas=(3.0, 1.0)).validate()


LIVE_MANIFEST = os.getenv("CURVIQA_LIVE_MANIFEST", "")


@pytest.mark.skipif(not LIVE_MANIFEST, reason="set CURVIQA_LIVE_MANIFEST to a converted LIVE manifest")
def test_live_manifest_counts():
    live = load_manifest(LIVE_MANIFEST)
    assert len(live) == 634
    assert len(live.reference_ids()) == 29
    assert live.polarity == "lower-is-better"
