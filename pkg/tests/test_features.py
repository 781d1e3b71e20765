import numpy as np
import pytest

import app.features as features
from app.config import FEATURE_NAMES
from app.datasets import degrade_gblur, degrade_wn, make_base_images
from app.errors import InsufficientSamples, SchemaError, ShapeError
from app.fdct import CoefficientPyramid, forward
from app.features import (
    EMO4Series,
    FeatureVector,
    emo4,
    extract_block,
    extract_image,
    extract_manifest,
    get_extractor,
    mean_log_energy,
    mes_features,
    near_zero_eigenvalues,
    oed4_features,
    read_features_csv,
    redundancy_check,
    sfs5_features,
    write_features_csv,
)
from app.image_io import GrayImage, save_gray
from app.robust_stats import bowley_skew, mad, moors_kurt, octiles, qcd, rmad


def _pyramid(fill_by_scale):
    """Small hand-made pyramid: 1/1/1/64/1 panels filled with the given values."""
    scales = []
    for j, values in enumerate(fill_by_scale):
        count = 64 if j == 3 else 1
        panels = tuple(np.asarray(values, dtype=complex).reshape(1, -1).copy() for _ in range(count))
        scales.append(panels)
    return CoefficientPyramid(tuple(scales))


def _block(seed):
    return np.random.default_rng(seed).uniform(0, 255, size=(256, 256))


def _hash_noise_block(seed):
    """Integer-hash noise; identical on every platform, unlike float generators."""
    i, j = np.indices((256, 256), dtype=np.int64)
    h = i * 256 + j + seed * 65536
    for _ in range(2):
        h ^= h >> 16
        h = (h * 73244475) % 2**32
    h ^= h >> 16
    return (h & 255).astype(float)


# extract_block(_hash_noise_block(3)) as recorded when the transform layout was fixed.
NOISE_BLOCK_FEATURES = [
    1.6427918289293915,
    -0.053197087393409115,
    -0.064518232818097321,
    0.0074628522727572576,
    0.0072574683161236607,
    1715.9513526990384,
    1.1818182974712437,
    0.55285939624560354,
    0.261302039773746,
    -0.17683788701903722,
    1.2982609726851149,
]


class _PathManifest:
    def __init__(self, paths):
        self._paths = paths

    def paths(self):
        return list(self._paths)


def test_mean_log_energy_and_clamp_floor():
    pyr = _pyramid([[10.0, -10.0, 10j]] * 5)
    assert mean_log_energy(pyr, 2) == 1.0

    zero = forward(np.zeros((256, 256)))
    assert [mean_log_energy(zero, j) for j in range(1, 6)] == pytest.approx([-30.0] * 5, abs=1e-12)
    assert mes_features(zero) == (0.0, 0.0, 0.0)


def test_mean_log_energy_matches_flatten_and_average():
    pyr = forward(_block(1))
    for j in range(1, 6):
        flat = np.concatenate([np.abs(p).ravel() for p in pyr.panels(j)])
        assert mean_log_energy(pyr, j) == pytest.approx(np.mean(np.log10(flat)), abs=1e-12)

    d1, d2, d3 = mes_features(pyr)
    e = [mean_log_energy(pyr, j) for j in (1, 2, 3, 4)]
    assert (d1, d2, d3) == (e[0] - e[1], e[1] - e[2], e[2] - e[3])


def test_emo4_is_per_panel_mean():
    pyr = forward(_block(2))
    series = emo4(pyr)
    assert len(series.values) == 64
    for value, panel in zip(series.values, pyr.panels(4)):
        assert value == pytest.approx(np.mean(np.abs(panel)), abs=1e-12)
    assert emo4(forward(np.zeros((256, 256)))).values == (0.0,) * 64


def test_emo4_is_nearly_flat_for_white_noise():
    rng = np.random.default_rng(3)
    series = np.mean([emo4(forward(rng.normal(size=(256, 256)))).values for _ in range(5)], axis=0)
    assert np.std(series) / np.mean(series) < 0.2


def test_oed4_features_examples():
    assert oed4_features(EMO4Series((2.5,) * 64)) == (0.0, 0.0, 160.0)
    assert oed4_features(EMO4Series((0.0,) * 64)) == (0.0, 0.0, 0.0)

    ramp = np.arange(1, 65, dtype=float)
    q, r, area = oed4_features(EMO4Series(tuple(ramp)))
    assert q == pytest.approx(qcd(ramp), abs=1e-15)
    assert r == pytest.approx(rmad(ramp), abs=1e-15)
    assert area == 2080.0

    q_k, r_k, area_k = oed4_features(EMO4Series(tuple(4.0 * ramp)))
    assert q_k == pytest.approx(q, abs=1e-12)
    assert r_k == pytest.approx(r, abs=1e-12)
    assert area_k == pytest.approx(4.0 * area)


def test_emo4_series_rejects_bad_length():
    with pytest.raises(ShapeError):
        EMO4Series((1.0,) * 63)


def test_sfs5_constant_and_log_uniform():
    const = _pyramid([[1.0]] * 4 + [[100.0] * 50])
    assert sfs5_features(const) == (2.0, 0.0, 0.0, 0.0, 0.0)

    log_uniform = _pyramid([[1.0]] * 4 + [10.0 ** np.linspace(-2.0, 2.0, 80_001)])
    med, iqr, _, skew, kurt = sfs5_features(log_uniform)
    assert med == pytest.approx(0.0, abs=1e-9)
    assert iqr == pytest.approx(2.0, abs=1e-9)
    assert skew == pytest.approx(0.0, abs=1e-6)
    assert kurt == pytest.approx(1.0, abs=1e-6)


def test_sfs5_matches_robust_stats():
    pyr = forward(_block(4))
    e5 = np.log10(np.abs(pyr.panels(5)[0]).ravel())
    oc = octiles(e5)
    expected = (oc[4], oc[6] - oc[2], mad(e5), bowley_skew(oc), moors_kurt(oc))
    assert sfs5_features(pyr) == pytest.approx(expected, abs=1e-12)


def test_extract_block_layout_and_determinism():
    block = _block(5)
    first = extract_block(block)
    second = extract_block(block)
    assert tuple(first.as_dict()) == FEATURE_NAMES
    assert np.all(np.isfinite(first.to_array()))
    assert np.array_equal(first.to_array(), second.to_array())
    assert -1.0 <= first.skew5 <= 1.0
    assert first.kurt5 >= 0.0


def test_seeded_noise_block_matches_recorded_features():
    block = _hash_noise_block(3)
    assert block.min() == 0.0 and block.max() == 255.0
    np.testing.assert_allclose(extract_block(block).to_array(), NOISE_BLOCK_FEATURES, rtol=1e-8, atol=1e-10)


def test_zero_block_takes_degenerate_paths():
    vec = extract_block(np.zeros((256, 256)))
    assert vec.to_array().tolist() == pytest.approx([0.0] * 6 + [-30.0, 0.0, 0.0, 0.0, 0.0], abs=1e-12)


def test_contrast_scaling_invariance():
    block = _block(6) + 1.0
    base = extract_block(block)
    scaled = extract_block(3.0 * block)
    for name in ("d1", "d2", "d3", "qcd4", "rmad4", "iqr5", "mad5", "skew5", "kurt5"):
        assert getattr(scaled, name) == pytest.approx(getattr(base, name), abs=1e-9)
    assert scaled.area4 == pytest.approx(3.0 * base.area4, rel=1e-9)
    assert scaled.med5 == pytest.approx(base.med5 + np.log10(3.0), abs=1e-9)


def test_extract_image_pools_blocks_by_mean():
    rng = np.random.default_rng(7)
    pixels = rng.integers(0, 256, size=(512, 512), dtype=np.uint8)
    pooled = extract_image(GrayImage(pixels)).to_array()
    blocks = [pixels[r : r + 256, c : c + 256] for r in (0, 256) for c in (0, 256)]
    expected = np.mean([extract_block(b).to_array() for b in blocks], axis=0)
    assert np.allclose(pooled, expected, atol=1e-12)

    tile = rng.integers(0, 256, size=(256, 256), dtype=np.uint8)
    twin = GrayImage(np.hstack([tile, tile]))
    assert np.allclose(extract_image(twin).to_array(), extract_block(tile).to_array(), atol=1e-12)

    single = GrayImage(tile)
    assert np.array_equal(extract_image(single).to_array(), extract_block(tile).to_array())


def test_redundancy_check_flags_linear_dependence():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(10_000, 11))
    eig = redundancy_check(X)
    assert np.all(np.diff(eig) <= 0)
    assert np.allclose(eig, 1.0, atol=0.1)
    assert near_zero_eigenvalues(eig) == 0

    with_sum = np.column_stack([X, X[:, 0] + X[:, 1]])
    assert near_zero_eigenvalues(redundancy_check(with_sum)) == 1

    duplicated = np.column_stack([X[:200], X[:200, 4]])
    assert redundancy_check(duplicated)[-1] <= 1e-10

    with pytest.raises(InsufficientSamples):
        redundancy_check(X[:11])


def test_redundancy_check_on_textured_images_has_no_null_direction():
    rows = []
    for k, base in enumerate(make_base_images(8, seed=4)):
        rows.append(extract_block(base.pixels).to_array())
        rows.append(extract_block(degrade_wn(base, 5.0 + 3.0 * k, seed=k).pixels).to_array())
        rows.append(extract_block(degrade_gblur(base, 0.8 + 0.3 * k).pixels).to_array())
    X = np.array(rows)
    Z = (X - X.mean(axis=0)) / X.std(axis=0)

    eig = redundancy_check(Z)
    assert eig.shape == (11,)
    assert np.all(np.diff(eig) <= 1e-12)
    assert eig.sum() == pytest.approx(11.0 * 24 / 23)
    assert near_zero_eigenvalues(eig) == 0


def test_feature_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(9)
    rows = [(f"img_{i}.png", rng.normal(size=11) * 10.0 ** rng.integers(-8, 8)) for i in range(4)]
    path = tmp_path / "features.csv"
    write_features_csv(rows, path)

    header = path.read_text().splitlines()[0]
    assert header == "image_path," + ",".join(FEATURE_NAMES)
    paths, values = read_features_csv(path)
    assert paths == [r[0] for r in rows]
    assert np.array_equal(values, np.vstack([r[1] for r in rows]))


def test_extractor_registry():
    extractor = get_extractor("m1")
    assert extractor.name == "m1"
    assert extractor.feature_names == FEATURE_NAMES
    with pytest.raises(SchemaError):
        get_extractor("curvelet2014")


def test_extract_manifest_reuses_cache(tmp_path, monkeypatch):
    rng = np.random.default_rng(10)
    paths = []
    for i in range(2):
        path = tmp_path / f"img_{i}.png"
        save_gray(GrayImage(rng.integers(0, 256, size=(256, 256), dtype=np.uint8)), path)
        paths.append(str(path))

    manifest = _PathManifest(paths + paths[:1])
    cache = tmp_path / "cache.csv"
    first = extract_manifest(manifest, cache_path=str(cache))
    assert first.shape == (3, 11)
    assert np.array_equal(first[0], first[2])

    def fail(job):
        raise AssertionError(f"recomputed {job}")

    monkeypatch.setattr(features, "_extract_path", fail)
    second = extract_manifest(manifest, cache_path=str(cache))
    assert np.array_equal(first, second)


def test_feature_vector_from_array_checks_length():
    vec = FeatureVector.from_array(np.arange(11.0))
    assert vec.kurt5 == 10.0
    with pytest.raises(ShapeError):
        FeatureVector.from_array(np.arange(10.0))
