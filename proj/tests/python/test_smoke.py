"""Smoke tests for the python extension module."""

import math

import numpy as np
import pytest

import litformer as lf


def test_phantom_is_deterministic_and_ranged():
    a = lf.make_phantom(9, 8, 32, 32)
    b = lf.make_phantom(9, 8, 32, 32)
    assert a.shape == (8, 32, 32)
    assert np.array_equal(a, b)
    assert a.min() >= -1024.0
    assert a.max() <= 3071.0
    assert (a == -1000.0).any()  # background
    c = lf.make_phantom(10, 8, 32, 32)
    assert not np.array_equal(a, c)


def test_degrade_halves_depth_and_averages():
    full = lf.make_phantom(1, 8, 16, 16)
    low = lf.degrade(full, depth_factor=2, noise_sigma_hu=0.0, seed=0)
    assert low.shape == (4, 16, 16)
    expected = (full[0::2].astype(np.float64) + full[1::2].astype(np.float64)) / 2
    np.testing.assert_allclose(low, expected.astype(np.float32), rtol=0, atol=0)


def test_normalize_window():
    hu = np.array([[[-1000.0, 2000.0, 500.0, 2500.0]]], dtype=np.float32)
    unit = lf.normalize(hu)
    np.testing.assert_allclose(unit.ravel(), [0.0, 1.0, 0.5, 1.0])
    back = lf.denormalize(unit)
    np.testing.assert_allclose(back.ravel()[:3], [-1000.0, 2000.0, 500.0], atol=1e-3)


def test_volume_file_round_trip(tmp_path):
    v = lf.make_phantom(4, 4, 8, 8)
    path = str(tmp_path / "vol.vol")
    lf.write_volume(path, v, (3.0, 1.0, 1.0))
    back, spacing = lf.read_volume(path)
    assert np.array_equal(v, back)
    assert spacing == [3.0, 1.0, 1.0]
    assert (tmp_path / "vol.vol").stat().st_size == 8 + 12 + 4 + 12 + 4 * v.size


def test_forward_shapes_for_both_depth_scales():
    m2 = lf.Model(lf.ModelConfig(base_channels=4, levels=3, depth_scale=2.0), seed=1)
    y = m2.forward(np.zeros((1, 1, 4, 16, 16), dtype=np.float32))
    assert y.shape == (1, 1, 8, 16, 16)
    m25 = lf.Model(lf.ModelConfig(base_channels=4, levels=3, depth_scale=2.5), seed=1)
    y = m25.forward(np.zeros((1, 1, 4, 16, 16), dtype=np.float32))
    assert y.shape == (1, 1, 10, 16, 16)
    with pytest.raises(ValueError):
        m2.forward(np.zeros((1, 1, 4, 10, 10), dtype=np.float32))


def test_published_parameter_totals():
    rep = lf.analyze(lf.ModelConfig(), [1, 1, 16, 64, 64])
    assert abs(rep["params"] - 7.2e6) / 7.2e6 < 0.20
    assert abs(rep["params_no_attention"] - 5.8e6) / 5.8e6 < 0.20
    assert rep["macs"] > 0
    assert any(l["path"].startswith("enc1/attn") for l in rep["layers"])


def test_metrics_closed_forms():
    x = np.random.default_rng(5).uniform(0, 0.9, size=(6, 16, 16))
    assert lf.psnr(x + 0.1, x) == pytest.approx(20.0, abs=1e-6)
    assert lf.rmse(x + 0.1, x) == pytest.approx(0.1, abs=1e-9)
    assert lf.ssim2d(x[0], x[0]) == pytest.approx(1.0, abs=1e-9)
    assert lf.ssim3d(x, x) == pytest.approx(1.0, abs=1e-9)


def test_losses():
    x = np.random.default_rng(7).uniform(0, 1, size=(1, 1, 2, 16, 16))
    assert lf.charbonnier(x, x) == pytest.approx(1e-3, abs=1e-12)
    assert lf.ssim_loss(x, x) == pytest.approx(0.0, abs=1e-9)
    assert lf.total_loss(x, x, mode="charbonnier_plus_ssim", lambda_=2.0) == pytest.approx(
        1e-3, abs=1e-9
    )
    y = np.random.default_rng(8).uniform(0, 1, size=(1, 1, 2, 16, 16))
    assert lf.total_loss(x, y, mode="mse") == pytest.approx(np.mean((x - y) ** 2), rel=1e-9)


def test_restore_and_baseline_shapes():
    full = lf.make_phantom(2, 8, 16, 16)
    low = lf.degrade(full, depth_factor=2, noise_sigma_hu=30.0, seed=1)
    m = lf.Model(lf.ModelConfig(base_channels=4, levels=2), seed=3)
    restored = m.restore(low)
    assert restored.shape == full.shape
    baseline = lf.trilinear_baseline(low, depth_scale=2.0)
    assert baseline.shape == full.shape
    # constant columns survive depth interpolation
    flat = lf.trilinear_baseline(np.full((2, 16, 16), 40.0, dtype=np.float32), 2.0)
    np.testing.assert_allclose(flat, 40.0, atol=1e-3)


def test_checkpoint_round_trip(tmp_path):
    cfg = lf.ModelConfig(base_channels=4, levels=2)
    m = lf.Model(cfg, seed=11)
    path = str(tmp_path / "model.litckpt")
    m.save(path)
    back = lf.Model.from_checkpoint(path)
    assert back.param_count() == m.param_count()
    x = np.random.default_rng(3).uniform(0, 1, size=(1, 1, 4, 8, 8)).astype(np.float32)
    np.testing.assert_array_equal(m.forward(x), back.forward(x))


def test_lr_schedule():
    assert lf.lr_at(0, 1000, 100) == 0.0
    assert lf.lr_at(100, 1000, 100) == pytest.approx(2e-4)
    assert lf.lr_at(1000, 1000, 100) == pytest.approx(1e-6, abs=1e-12)


def test_ablation_variants_differ():
    x = np.random.default_rng(9).uniform(0, 1, size=(1, 1, 4, 16, 16)).astype(np.float32)
    outputs = []
    for kwargs in (
        dict(attn_bypass=True),
        dict(attn_throughplane=False),
        dict(attn_inplane=False),
        dict(attn_fusion="cascaded"),
        dict(),
    ):
        m = lf.Model(lf.ModelConfig(base_channels=4, levels=2, **kwargs), seed=21)
        outputs.append(m.forward(x))
    for i in range(len(outputs)):
        for j in range(i + 1, len(outputs)):
            assert not np.array_equal(outputs[i], outputs[j])
