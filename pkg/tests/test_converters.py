import numpy as np
import pandas as pd
import pytest
from scipy.io import savemat

from scripts import convert_csiq, convert_live, convert_tid2013

LIVE_TOTAL = 227 + 233 + 174 + 174 + 174


def _live_dir(tmp_path, low=0.0):
    dmos = np.linspace(10.0, 90.0, LIVE_TOTAL)
    dmos[5] = low or dmos[5]
    orgs = np.zeros(LIVE_TOTAL)
    orgs[0] = 1  # jp2k img1 is a reference copy
    orgs[300] = 1  # so is jpeg img74
    savemat(tmp_path / "dmos.mat", {"dmos": dmos.reshape(1, -1), "orgs": orgs.reshape(1, -1)})
    names = np.empty((1, LIVE_TOTAL), dtype=object)
    for i in range(LIVE_TOTAL):
        names[0, i] = f"ref{i % 29:02d}.bmp"
    savemat(tmp_path / "refnames_all.mat", {"refnames_all": names})
    return tmp_path


def test_live_drops_references_and_fast_fading(tmp_path):
    manifest = convert_live.convert(_live_dir(tmp_path))
    assert convert_live.manifest_counts(manifest) == {"jp2k": 226, "jpeg": 232, "wn": 174, "gblur": 174}

    first = manifest.records[0]
    assert first.image_path.endswith("jp2k/img2.bmp")
    assert first.reference_id == "ref01"
    assert first.score == pytest.approx(np.linspace(10.0, 90.0, LIVE_TOTAL)[1])
    assert (first.score_min, first.score_max, first.polarity) == (0.0, 100.0, "lower-is-better")
    assert manifest.records[-1].image_path.endswith("gblur/img174.bmp")
    assert manifest.dataset_id == "live"


def test_live_realigned_scores_below_zero_widen_the_range(tmp_path):
    manifest = convert_live.convert(_live_dir(tmp_path, low=-2.5))
    assert {r.score_min for r in manifest.records} == {-2.5}
    assert min(r.score for r in manifest.records) == -2.5


def _tid_dir(tmp_path):
    names = ["I01_01_1.bmp", "I01_08_2.bmp", "I02_10_3.bmp", "I02_11_4.bmp", "I03_02_1.bmp", "I25_01_1.bmp"]
    (tmp_path / "distorted_images").mkdir()
    for name in names:
        (tmp_path / "distorted_images" / name).write_bytes(b"")
    mos = [5.5, 4.25, 3.0, 2.75, 6.0, 1.0]
    (tmp_path / "mos_with_names.txt").write_text("".join(f"{m} {n}\n" for m, n in zip(mos, names)))
    return tmp_path


def test_tid2013_keeps_mapped_codes_and_natural_references(tmp_path):
    manifest = convert_tid2013.convert(_tid_dir(tmp_path))
    assert [r.distortion for r in manifest.records] == ["wn", "gblur", "jpeg", "jp2k"]
    assert [r.reference_id for r in manifest.records] == ["i01", "i01", "i02", "i02"]
    assert manifest.records[0].image_path.endswith("I01_01_1.bmp")
    assert manifest.scores().tolist() == [5.5, 4.25, 3.0, 2.75]
    assert manifest.polarity == "higher-is-better"
    assert {(r.score_min, r.score_max) for r in manifest.records} == {(0.0, 9.0)}


def test_tid2013_mapping_override(tmp_path):
    mapping = convert_tid2013.parse_mapping(["02=wn", "08 = jpeg"])
    manifest = convert_tid2013.convert(_tid_dir(tmp_path), mapping)
    assert [r.distortion for r in manifest.records] == ["wn", "jpeg", "jpeg", "jp2k", "wn"]
    assert "i25" not in manifest.reference_ids()


def test_csiq_reads_the_dmos_sheet(tmp_path):
    df = pd.DataFrame(
        {
            "image": [1600, 1600, "aerial_city", "aerial_city", "fisher", "fisher"],
            "dst_type": ["noise", "blur", "jpeg", "jpeg 2000", "contrast", "noise"],
            "dst_lev": [1, 2, 3, 4, 1, 2],
            "dmos": [0.06, 0.2, 0.3, 0.5, 0.1, np.nan],
        }
    )
    df.to_excel(tmp_path / "csiq.DMOS.xlsx", sheet_name="all_by_image", index=False, engine="openpyxl")

    manifest = convert_csiq.convert(tmp_path)
    assert [r.distortion for r in manifest.records] == ["wn", "gblur", "jpeg", "jp2k"]
    assert manifest.reference_ids() == ["1600", "aerial_city"]
    paths = [r.image_path.replace("\\", "/") for r in manifest.records]
    assert paths[0].endswith("dst_imgs/awgn/1600.AWGN.1.png")
    assert paths[3].endswith("dst_imgs/jpeg2000/aerial_city.jpeg2000.4.png")
    assert manifest.scores().tolist() == [0.06, 0.2, 0.3, 0.5]
    assert manifest.polarity == "lower-is-better"
