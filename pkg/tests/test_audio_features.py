import numpy as np
import pytest

from posevid import audio_features as af


def sine(freq, seconds, rate, amp=0.5):
    t = np.arange(int(round(seconds * rate))) / rate
    return af.Waveform(amp * np.sin(2 * np.pi * freq * t), rate)


# ---------------------------------------------------------------- resample

def test_resample_preserves_dc():
    w = af.Waveform(np.full(48000, 0.25), 48000)
    out = af.resample(w, 16000)
    assert out.sample_rate == 16000
    assert np.allclose(out.samples, 0.25, atol=1e-9)


def test_resample_length_ratio():
    w = af.Waveform(np.random.default_rng(0).standard_normal(48000) * 0.1, 48000)
    assert len(af.resample(w, 16000)) == 16000


def test_resample_tone_peak_within_one_bin():
    # oracle: locate the spectral peak of the resampled output by FFT
    out = af.resample(sine(440.0, 1.0, 48000), 16000)
    spectrum = np.abs(np.fft.rfft(out.samples * np.hanning(len(out))))
    peak_hz = np.argmax(spectrum) * out.sample_rate / len(out)
    bin_hz = out.sample_rate / len(out)
    assert abs(peak_hz - 440.0) <= bin_hz


def test_resample_errors():
    with pytest.raises(ValueError, match="empty"):
        af.resample(af.Waveform(np.zeros(0), 16000), 8000)
    with pytest.raises(ValueError, match="positive"):
        af.resample(af.Waveform(np.zeros(10), 16000), 0)


# ------------------------------------------------------------ tick grid

def test_tick_starts_follow_drift_pattern():
    starts = af.tick_starts(7, 16000)
    assert starts.tolist() == [0, 533, 1066, 1600, 2133, 2666, 3200]


def test_row_count_round_half_up():
    # clock law: rows == floor(30*n/sr + 1/2)
    rng = np.random.default_rng(7)
    for n in rng.integers(16000, 160000, size=50):
        expected = int(np.floor(30 * int(n) / 16000 + 0.5))
        assert af.feature_row_count(int(n), 16000) == expected


# --------------------------------------------------------- extract_log_mel

def test_silence_hits_log_floor():
    cfg = af.FeatureConfig()
    rows = af.extract_log_mel(af.Waveform(np.zeros(16000), 16000), cfg)
    assert rows.shape == (30, 40)
    assert np.all(rows == np.log(cfg.log_floor))


def test_two_seconds_gives_sixty_rows():
    rows = af.extract_log_mel(af.Waveform(np.zeros(32000), 16000))
    assert rows.shape[0] == 60


def test_row_count_matches_whole_seconds():
    for secs in (1, 3, 7):
        w = af.Waveform(
            np.random.default_rng(secs).standard_normal(16000 * secs) * 0.1, 16000
        )
        assert af.extract_log_mel(w).shape[0] == 30 * secs


def test_tone_lands_in_nearest_mel_filter():
    # oracle: recompute the filter center frequencies from the mel formula
    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    centers = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(8000.0), 42))[1:-1]
    expected_bin = int(np.argmin(np.abs(centers - 440.0)))
    rows = af.extract_log_mel(sine(440.0, 1.0, 16000))
    argmax = np.argmax(rows, axis=1)
    assert np.all(argmax == expected_bin)


def test_extract_deterministic():
    w = af.Waveform(np.random.default_rng(3).standard_normal(20000) * 0.3, 16000)
    a = af.extract_log_mel(w)
    b = af.extract_log_mel(w)
    assert np.array_equal(a, b)


def test_extract_too_short():
    with pytest.raises(ValueError, match="too short"):
        af.extract_log_mel(af.Waveform(np.zeros(500), 16000))


def test_extract_rate_mismatch():
    with pytest.raises(ValueError, match="resample"):
        af.extract_log_mel(af.Waveform(np.zeros(48000), 48000))


# --------------------------------------------------------------- stats

def test_identical_rows_clamped_std():
    row = np.linspace(-1, 1, 40)
    stats = af.fit_norm_stats([np.tile(row, (5, 1))])
    assert np.allclose(stats.mean, row)
    assert np.all(stats.std == af.STD_FLOOR)


def test_two_row_population_std():
    seq = np.stack([np.zeros(4), np.full(4, 2.0)])
    stats = af.fit_norm_stats([seq])
    assert np.allclose(stats.mean, 1.0)
    assert np.allclose(stats.std, 1.0)


def test_stats_match_two_pass_oracle():
    rng = np.random.default_rng(11)
    rows = rng.standard_normal((100, 40)) * 3.0 + 1.5
    stats = af.fit_norm_stats([rows])
    # independent two-pass computation, explicit loops over dimensions
    for j in range(40):
        mean_j = sum(rows[i, j] for i in range(100)) / 100.0
        var_j = sum((rows[i, j] - mean_j) ** 2 for i in range(100)) / 100.0
        assert abs(stats.mean[j] - mean_j) < 1e-10
        assert abs(stats.std[j] - np.sqrt(var_j)) < 1e-10


def test_fit_empty_rejected():
    with pytest.raises(ValueError, match="at least one"):
        af.fit_norm_stats([])


def test_normalize_mean_rows_to_zero():
    rng = np.random.default_rng(2)
    rows = rng.standard_normal((50, 8))
    stats = af.fit_norm_stats([rows])
    out = af.normalize(np.tile(stats.mean, (4, 1)), stats)
    assert np.allclose(out, 0.0)


def test_normalize_identity_stats():
    rows = np.random.default_rng(5).standard_normal((10, 6))
    stats = af.NormStats(np.zeros(6), np.ones(6))
    assert np.array_equal(af.normalize(rows, stats), rows)


def test_normalize_roundtrip_statistics():
    rng = np.random.default_rng(9)
    rows = rng.standard_normal((200, 40)) * 5 + 2
    out = af.normalize(rows, af.fit_norm_stats([rows]))
    assert np.all(np.abs(out.mean(axis=0)) < 1e-8)
    assert np.all(np.abs(out.std(axis=0) - 1.0) < 1e-6)


def test_normalize_idempotent():
    rng = np.random.default_rng(13)
    rows = rng.standard_normal((120, 40)) * 2 + 0.5
    once = af.normalize(rows, af.fit_norm_stats([rows]))
    twice = af.normalize(once, af.fit_norm_stats([once]))
    assert np.max(np.abs(twice - once)) < 1e-6


def test_normalize_shape_mismatch():
    stats = af.NormStats(np.zeros(6), np.ones(6))
    with pytest.raises(ValueError, match="does not match"):
        af.normalize(np.zeros((4, 5)), stats)


# -------------------------------------------------------------- windows

def test_single_row_window_replicates():
    seq = np.arange(4)[None, :].astype(float)
    wins = af.make_windows(seq, 3)
    assert wins.shape == (1, 3, 4)
    assert np.array_equal(wins[0], np.tile(seq[0], (3, 1)))


def test_window_one_is_identity():
    seq = np.random.default_rng(1).standard_normal((5, 3))
    wins = af.make_windows(seq, 1)
    assert wins.shape == (5, 1, 3)
    assert np.array_equal(wins[:, 0], seq)


def test_window_slices_match_index_oracle():
    seq = np.random.default_rng(4).standard_normal((20, 6))
    wins = af.make_windows(seq, 15)
    assert len(wins) == 20
    assert np.array_equal(wins[19], seq[5:20])
    # index-slice oracle for every fully-interior window
    for t in range(14, 20):
        assert np.array_equal(wins[t], seq[t - 14 : t + 1])


def test_window_count_always_matches_ticks():
    rng = np.random.default_rng(21)
    for _ in range(30):
        t = int(rng.integers(1, 40))
        w = int(rng.integers(1, 25))
        wins = af.make_windows(rng.standard_normal((t, 5)), w)
        assert wins.shape == (t, w, 5)


def test_window_rejects_bad_length():
    with pytest.raises(ValueError, match=">= 1"):
        af.make_windows(np.zeros((3, 2)), 0)


# ------------------------------------------------------------------- io

def test_wav_round_trip(tmp_path):
    w = sine(440.0, 1.0, 16000)
    af.save_wav(tmp_path / "t.wav", w)
    back = af.load_wav(tmp_path / "t.wav")
    assert back.sample_rate == 16000
    assert np.max(np.abs(back.samples - w.samples)) < 1e-4


def test_wav_stereo_downmix(tmp_path):
    from scipy.io import wavfile

    left = np.full(1000, 8000, dtype=np.int16)
    right = np.full(1000, 16000, dtype=np.int16)
    wavfile.write(tmp_path / "s.wav", 16000, np.stack([left, right], axis=1))
    w = af.load_wav(tmp_path / "s.wav")
    assert np.allclose(w.samples, 12000 / 32768.0)


def test_feature_file_round_trip(tmp_path):
    rows = np.random.default_rng(6).standard_normal((30, 40))
    af.save_features(tmp_path / "f.npz", rows)
    assert np.array_equal(af.load_features(tmp_path / "f.npz"), rows)


def test_norm_stats_round_trip(tmp_path):
    stats = af.NormStats(np.arange(40, dtype=float), np.ones(40))
    af.save_norm_stats(tmp_path / "n.npz", stats)
    back = af.load_norm_stats(tmp_path / "n.npz")
    assert np.array_equal(back.mean, stats.mean)
    assert np.array_equal(back.std, stats.std)
