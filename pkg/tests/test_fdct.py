import numpy as np
import pytest

from app.errors import ConfigError, NonFinite, ScaleOutOfRange, ShapeError
from app.fdct import (
    CurveletConfig,
    ScipyFFT,
    build_plan,
    coefficient_counts,
    dump_pyramid,
    forward,
    inverse,
    load_pyramid,
    structure,
    window_partition_check,
    zero_pyramid,
)


def _inner(pyr_a, pyr_b):
    return sum(
        np.vdot(pa, pb) for sa, sb in zip(pyr_a.scales, pyr_b.scales) for pa, pb in zip(sa, sb)
    )


def _block(seed):
    return np.random.default_rng(seed).uniform(0, 255, size=(256, 256))


def test_default_config_has_five_scale_layout():
    cfg = CurveletConfig()
    assert cfg.n_scales == 5
    assert cfg.angles_per_scale == (1, 32, 64, 64, 1)
    assert CurveletConfig.from_coarse_angles(5, 32).angles_per_scale == (1, 32, 64, 64, 1)


def test_window_partition_is_tight():
    assert window_partition_check(CurveletConfig()) <= 1e-10


def test_single_scale_window_is_identity():
    cfg = CurveletConfig(n_scales=1, angles_per_scale=(1,))
    assert window_partition_check(cfg) <= 1e-12


@pytest.mark.parametrize(
    "angles",
    [(1, 30, 64, 64, 1), (1, 32, 64, 64), (2, 32, 64, 64, 1), (1, 32, 64, 64, 8)],
)
def test_malformed_angle_layout_is_rejected(angles):
    with pytest.raises(ConfigError):
        window_partition_check(CurveletConfig(angles_per_scale=angles))


def test_zero_block_gives_zero_coefficients():
    pyr = forward(np.zeros((256, 256)))
    assert structure(pyr) == [1, 32, 64, 64, 1]
    assert all(not np.any(p) for scale in pyr.scales for p in scale)


def test_forward_is_linear():
    x, y = _block(1), _block(2)
    fx, fy = forward(x), forward(y)
    fxy = forward(3.0 * x - 2.0 * y)
    for sxy, sx, sy in zip(fxy.scales, fx.scales, fy.scales):
        for pxy, px, py in zip(sxy, sx, sy):
            expected = 3.0 * px - 2.0 * py
            assert np.allclose(pxy, expected, rtol=1e-10, atol=1e-9)


def test_forward_preserves_energy_and_inner_products():
    x, y = _block(3), _block(4)
    fx, fy = forward(x), forward(y)
    assert fx.energy() / np.sum(x**2) == pytest.approx(1.0, abs=1e-9)
    assert _inner(fx, fy).real == pytest.approx(np.sum(x * y), rel=1e-9)


def test_inverse_reconstructs_block():
    rng = np.random.default_rng(5)
    for _ in range(3):
        x = rng.normal(size=(256, 256))
        err = np.linalg.norm(inverse(forward(x)) - x) / np.linalg.norm(x)
        assert err <= 1e-6


def test_inverse_is_linear_and_zero_preserving():
    x, y = _block(6), _block(7)
    assert not np.any(inverse(zero_pyramid()))

    fx, fy = forward(x), forward(y)
    summed = type(fx)(
        tuple(tuple(a + b for a, b in zip(sa, sb)) for sa, sb in zip(fx.scales, fy.scales))
    )
    assert np.allclose(inverse(summed), x + y, atol=1e-8)


def test_scale_four_is_dense_and_finest_scale_is_one_panel():
    counts = coefficient_counts()
    assert counts == (1849, 30880, 128976, 259266, 65536)
    assert counts[3] > 98_000
    pyr = forward(_block(8))
    assert pyr.count(4) == counts[3]
    assert len(pyr.panels(5)) == 1


def test_panels_outside_range_raise():
    pyr = zero_pyramid()
    with pytest.raises(ScaleOutOfRange):
        pyr.panels(6)
    with pytest.raises(ScaleOutOfRange):
        pyr.panels(0)


def test_wrong_block_shape_and_non_finite_values_are_rejected():
    with pytest.raises(ShapeError):
        forward(np.zeros((128, 256)))
    block = np.zeros((256, 256))
    block[3, 4] = np.nan
    with pytest.raises(NonFinite):
        forward(block)


def test_scipy_backend_matches_numpy_backend():
    x = _block(9)
    a = forward(x)
    b = forward(x, backend=ScipyFFT())
    for sa, sb in zip(a.scales, b.scales):
        for pa, pb in zip(sa, sb):
            assert np.allclose(pa, pb, atol=1e-9)


def test_plan_is_cached_per_config():
    assert build_plan(CurveletConfig()) is build_plan(CurveletConfig())


def test_pyramid_dump_round_trip(tmp_path):
    pyr = forward(_block(10))
    path = tmp_path / "block.cvpy"
    dump_pyramid(pyr, path)

    loaded = load_pyramid(path)
    assert structure(loaded) == structure(pyr)
    for sa, sb in zip(pyr.scales, loaded.scales):
        for pa, pb in zip(sa, sb):
            assert pa.shape == pb.shape
            assert np.array_equal(pa, pb)
