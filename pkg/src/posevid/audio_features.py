"""Log mel-filterbank features locked to the 30 Hz video frame clock.

One feature row per video tick.  16 kHz does not divide into 30 evenly, so
the framing grid uses hops of 533, 533, 534 samples (every third hop absorbs
the remainder) and lands exactly on a second boundary every 3 ticks.
"""

from dataclasses import dataclass

import numpy as np
import scipy.signal
from scipy.io import wavfile

from . import containers

FRAME_RATE = 30

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Waveform:
    """Mono audio samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class FeatureConfig:
    """Analysis constants: 40 mel filters, 1024-point FFT, 44 ms window."""

    sample_rate: int = 16000
    n_mels: int = 40
    fft_size: int = 1024
    window_length: float = 0.044
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")
        if self.fft_size < self.window_samples:
            raise ValueError(
                f"fft_size {self.fft_size} shorter than analysis window "
                f"({self.window_samples} samples)"
            )

    @property
    def window_samples(self):
        return int(round(self.window_length * self.sample_rate))


@dataclass(frozen=True)
class NormStats:
    """Per-dimension mean/std fitted over a feature corpus."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ValueError("mean/std must be matching 1-D vectors")
        if np.any(std <= 0):
            raise ValueError("std entries must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


def load_wav(path):
    """Read a PCM WAV file; multi-channel input is downmixed by averaging."""
    rate, data = wavfile.read(path)
    data = np.asarray(data)
    if data.dtype == np.int16:
        scale, offset = 32768.0, 0.0
    elif data.dtype == np.int32:
        scale, offset = 2147483648.0, 0.0
    elif data.dtype == np.uint8:
        scale, offset = 128.0, 128.0
    else:
        scale, offset = 1.0, 0.0
    samples = (data.astype(np.float64) - offset) / scale
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return Waveform(samples, rate)


def save_wav(path, waveform):
    """Write 16-bit PCM, clipping to [-1, 1]."""
    clipped = np.clip(waveform.samples, -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype(np.int16)
    wavfile.write(path, waveform.sample_rate, pcm)


def resample(waveform, target_rate):
    """Band-limited resampling; output length is round(n * target / source)."""
    if target_rate <= 0:
        raise ValueError(f"target rate must be positive, got {target_rate}")
    if len(waveform) == 0:
        raise ValueError("cannot resample an empty waveform")
    target_rate = int(target_rate)
    if target_rate == waveform.sample_rate:
        return Waveform(waveform.samples.copy(), target_rate)
    num = int(round(len(waveform) * target_rate / waveform.sample_rate))
    out = scipy.signal.resample(waveform.samples, num)
    return Waveform(out, target_rate)


def feature_row_count(n_samples, sample_rate):
    """Rows produced for a signal: round-half-up of 30 Hz ticks."""
    return (2 * FRAME_RATE * n_samples + sample_rate) // (2 * sample_rate)


def tick_starts(n_ticks, sample_rate):
    """Sample offsets of the 30 Hz analysis grid, drift-corrected.

    Hops repeat in groups of k ticks whose total is exactly k/30 seconds;
    at 16 kHz that is (533, 533, 534).
    """
    k, group = _tick_group(sample_rate)
    base = sample_rate // FRAME_RATE
    t = np.arange(int(n_ticks), dtype=np.int64)
    return (t // k) * group + (t % k) * base


def _tick_group(sample_rate):
    for k in range(1, FRAME_RATE + 1):
        if (sample_rate * k) % FRAME_RATE == 0:
            return k, sample_rate * k // FRAME_RATE
    raise AssertionError("unreachable")


def mel_filterbank(cfg):
    """Triangular filters on HTK mel points, shape (n_mels, fft_size//2 + 1)."""
    n_bins = cfg.fft_size // 2 + 1
    bin_hz = np.arange(n_bins) * cfg.sample_rate / cfg.fft_size
    points = _mel_to_hz(
        np.linspace(_hz_to_mel(0.0), _hz_to_mel(cfg.sample_rate / 2), cfg.n_mels + 2)
    )
    lower = points[:-2, None]
    center = points[1:-1, None]
    upper = points[2:, None]
    rising = (bin_hz[None, :] - lower) / (center - lower)
    falling = (upper - bin_hz[None, :]) / (upper - center)
    return np.clip(np.minimum(rising, falling), 0.0, None)


def mel_center_frequencies(cfg):
    """Center frequency (Hz) of each mel filter."""
    points = _mel_to_hz(
        np.linspace(_hz_to_mel(0.0), _hz_to_mel(cfg.sample_rate / 2), cfg.n_mels + 2)
    )
    return points[1:-1]


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def extract_log_mel(waveform, cfg=FeatureConfig()):
    """Log mel-filterbank rows, one per 30 Hz tick.

    Windows are left-aligned on the tick grid and zero-padded past the end of
    the signal; zero energy bottoms out at log(log_floor).
    """
    if waveform.sample_rate != cfg.sample_rate:
        raise ValueError(
            f"waveform rate {waveform.sample_rate} != config rate {cfg.sample_rate}; "
            "resample first"
        )
    x = waveform.samples
    win = cfg.window_samples
    if len(x) < win:
        raise ValueError(
            f"audio too short: {len(x)} samples < one {win}-sample analysis window"
        )
    n_rows = feature_row_count(len(x), cfg.sample_rate)
    starts = tick_starts(n_rows, cfg.sample_rate)
    pad = int(starts[-1]) + win - len(x)
    if pad > 0:
        x = np.concatenate([x, np.zeros(pad)])
    frames = x[starts[:, None] + np.arange(win)[None, :]]
    frames = frames * np.hanning(win)[None, :]
    spectrum = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    energies = power @ mel_filterbank(cfg).T
    return np.log(np.maximum(energies, cfg.log_floor))


def fit_norm_stats(seqs):
    """Population mean/std per feature dimension over all rows of all sequences."""
    if not len(seqs):
        raise ValueError("need at least one feature sequence")
    rows = np.concatenate([np.asarray(s, dtype=np.float64) for s in seqs], axis=0)
    if rows.ndim != 2:
        raise ValueError("feature sequences must be 2-D (ticks x mels)")
    mean = rows.mean(axis=0)
    std = np.sqrt(((rows - mean) ** 2).mean(axis=0))
    return NormStats(mean, np.maximum(std, STD_FLOOR))


def normalize(seq, stats):
    """(rows - mean) / std, elementwise per feature dimension."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[1] != stats.mean.shape[0]:
        raise ValueError(
            f"feature shape {seq.shape} does not match stats dim {stats.mean.shape[0]}"
        )
    return (seq - stats.mean) / stats.std


def make_windows(seq, window):
    """Look-back windows, shape (T, window, n_mels); window t covers rows
    t-window+1 .. t with the left edge padded by replicating row 0."""
    if window < 1:
        raise ValueError(f"window length must be >= 1, got {window}")
    seq = np.asarray(seq)
    if seq.ndim != 2 or seq.shape[0] < 1:
        raise ValueError("feature sequence must be a non-empty 2-D matrix")
    t = np.arange(seq.shape[0])[:, None] + np.arange(-(window - 1), 1)[None, :]
    return seq[np.clip(t, 0, None)]


def save_features(path, rows):
    rows = np.asarray(rows, dtype=np.float64)
    containers.save_arrays(
        path, {"rows": rows}, kind="features", meta={"frame_rate": FRAME_RATE}
    )


def load_features(path):
    arrays, _ = containers.load_arrays(path, kind="features")
    return arrays["rows"]


def save_norm_stats(path, stats):
    containers.save_arrays(
        path, {"mean": stats.mean, "std": stats.std}, kind="norm_stats"
    )


def load_norm_stats(path):
    arrays, _ = containers.load_arrays(path, kind="norm_stats")
    return NormStats(arrays["mean"], arrays["std"])
