import numpy as np
import pytest
from PIL import Image

from posevid import metrics


def random_pair(rng, h=16, w=16):
    return rng.uniform(0, 255, (h, w, 3)), rng.uniform(0, 255, (h, w, 3))


def ssim_reference(a, b):
    """Independent sliding-window SSIM: explicit loops, same constants."""
    r = np.arange(11) - 5.0
    g = np.exp(-(r**2) / (2 * 1.5**2))
    w = np.outer(g, g)
    w = w / w.sum()
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2

    def lum(img):
        return img @ np.array([0.299, 0.587, 0.114]) if img.ndim == 3 else img

    ga, gb = lum(np.asarray(a, float)), lum(np.asarray(b, float))
    vals = []
    for i in range(ga.shape[0] - 10):
        for j in range(ga.shape[1] - 10):
            wa = ga[i : i + 11, j : j + 11]
            wb = gb[i : i + 11, j : j + 11]
            mua = (w * wa).sum()
            mub = (w * wb).sum()
            va = (w * wa * wa).sum() - mua * mua
            vb = (w * wb * wb).sum() - mub * mub
            vab = (w * wa * wb).sum() - mua * mub
            vals.append(
                ((2 * mua * mub + c1) * (2 * vab + c2))
                / ((mua * mua + mub * mub + c1) * (va + vb + c2))
            )
    return float(np.mean(vals))


# ------------------------------------------------------------------ mse

def test_mse_self_is_zero():
    img = np.random.default_rng(0).uniform(0, 255, (8, 8, 3))
    assert metrics.mse(img, img) == 0.0


def test_mse_uniform_offset():
    a = np.full((8, 8, 3), 100.0)
    assert metrics.mse(a, a + 16.0) == 256.0


def test_mse_matches_loop_oracle():
    rng = np.random.default_rng(1)
    a, b = random_pair(rng, 8, 8)
    total = 0.0
    for i in range(8):
        for j in range(8):
            for c in range(3):
                total += (a[i, j, c] - b[i, j, c]) ** 2
    assert abs(metrics.mse(a, b) - total / (8 * 8 * 3)) < 1e-9


def test_mse_translation_invariant():
    rng = np.random.default_rng(2)
    a, b = random_pair(rng)
    assert np.isclose(metrics.mse(a + 7.0, b + 7.0), metrics.mse(a, b))


def test_mse_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        metrics.mse(np.zeros((4, 4, 3)), np.zeros((5, 4, 3)))


# ----------------------------------------------------------------- psnr

def test_psnr_cap_on_identical():
    img = np.random.default_rng(3).uniform(0, 255, (8, 8, 3))
    assert metrics.psnr(img, img) == metrics.PSNR_CAP


def test_psnr_formula_oracle():
    a = np.full((8, 8, 3), 100.0)
    b = a + 16.0  # mse exactly 256
    expected = 10.0 * np.log10(255.0**2 / 256.0)
    assert abs(metrics.psnr(a, b) - expected) < 1e-12
    assert abs(expected - 24.0486) < 1e-3


def test_psnr_symmetric():
    rng = np.random.default_rng(4)
    a, b = random_pair(rng)
    assert metrics.psnr(a, b) == metrics.psnr(b, a)


def test_psnr_monotone_in_mse():
    base = np.full((8, 8, 3), 10.0)
    values = [metrics.psnr(base, base + c) for c in (1.0, 2.0, 4.0, 8.0, 16.0)]
    assert all(x > y for x, y in zip(values, values[1:]))


# ----------------------------------------------------------------- ssim

def test_ssim_self_is_exactly_one():
    rng = np.random.default_rng(5)
    img = rng.uniform(0, 255, (16, 16, 3))
    assert metrics.ssim(img, img) == 1.0


def test_ssim_luminance_shift_below_one():
    a = np.full((16, 16, 3), 100.0)
    b = np.clip(a + 255.0, 0, 255)
    assert metrics.ssim(a, b) < 1.0


def test_ssim_matches_sliding_window_oracle():
    rng = np.random.default_rng(6)
    for _ in range(5):
        a, b = random_pair(rng, 16, 16)
        assert abs(metrics.ssim(a, b) - ssim_reference(a, b)) < 1e-6


def test_ssim_symmetric_and_bounded():
    rng = np.random.default_rng(7)
    for _ in range(10):
        a, b = random_pair(rng, 12, 14)
        v = metrics.ssim(a, b)
        assert abs(v - metrics.ssim(b, a)) < 1e-12
        assert -1.0 <= v <= 1.0


def test_ssim_window_too_large():
    with pytest.raises(ValueError, match="smaller than"):
        metrics.ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


# ----------------------------------------------------------- evaluate_set

def _write_images(directory, images):
    directory.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(images):
        Image.fromarray(img.astype(np.uint8)).save(directory / f"frame_{i:06d}.png")


def test_evaluate_identical_dirs(tmp_path):
    rng = np.random.default_rng(8)
    imgs = [rng.uniform(0, 255, (16, 16, 3)) for _ in range(3)]
    _write_images(tmp_path / "a", imgs)
    _write_images(tmp_path / "b", imgs)
    reports, means = metrics.evaluate_set(tmp_path / "a", tmp_path / "b")
    assert len(reports) == 3
    assert means.mse == 0.0
    assert means.psnr == metrics.PSNR_CAP
    assert means.ssim == 1.0


def test_evaluate_single_pair_equals_report(tmp_path):
    rng = np.random.default_rng(9)
    a = rng.uniform(0, 255, (16, 16, 3)).astype(np.uint8)
    b = rng.uniform(0, 255, (16, 16, 3)).astype(np.uint8)
    _write_images(tmp_path / "a", [a])
    _write_images(tmp_path / "b", [b])
    reports, means = metrics.evaluate_set(tmp_path / "a", tmp_path / "b")
    only = next(iter(reports.values()))
    assert means == only
    direct = metrics.metric_report(a.astype(float), b.astype(float))
    assert np.isclose(only.mse, direct.mse)


def test_evaluate_means_match_hand_average(tmp_path):
    rng = np.random.default_rng(10)
    pred = [rng.uniform(0, 255, (16, 16, 3)).astype(np.uint8) for _ in range(10)]
    truth = [rng.uniform(0, 255, (16, 16, 3)).astype(np.uint8) for _ in range(10)]
    _write_images(tmp_path / "p", pred)
    _write_images(tmp_path / "t", truth)
    reports, means = metrics.evaluate_set(tmp_path / "p", tmp_path / "t")
    # averaging oracle over the per-pair reports
    assert abs(means.mse - sum(r.mse for r in reports.values()) / 10) < 1e-12
    assert abs(means.psnr - sum(r.psnr for r in reports.values()) / 10) < 1e-12
    assert abs(means.ssim - sum(r.ssim for r in reports.values()) / 10) < 1e-12


def test_evaluate_manifest_mismatch(tmp_path):
    rng = np.random.default_rng(11)
    _write_images(tmp_path / "a", [rng.uniform(0, 255, (16, 16, 3)) for _ in range(2)])
    _write_images(tmp_path / "b", [rng.uniform(0, 255, (16, 16, 3)) for _ in range(3)])
    with pytest.raises(ValueError, match="manifest mismatch"):
        metrics.evaluate_set(tmp_path / "a", tmp_path / "b")


def test_report_csv(tmp_path):
    rng = np.random.default_rng(12)
    imgs = [rng.uniform(0, 255, (16, 16, 3)).astype(np.uint8) for _ in range(2)]
    _write_images(tmp_path / "a", imgs)
    _write_images(tmp_path / "b", imgs)
    reports, means = metrics.evaluate_set(tmp_path / "a", tmp_path / "b")
    out = tmp_path / "report.csv"
    metrics.write_report_csv(out, reports, means)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "frame,mse,psnr,ssim"
    assert len(lines) == 4
    assert lines[-1].startswith("mean,")
