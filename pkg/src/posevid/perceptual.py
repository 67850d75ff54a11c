"""Fixed convolutional feature extractor and the perceptual distance.

Three tapped stages (channel widths 64/128/256, each ending in a 2x max
pool) mirror the first three pooled blocks of a VGG-19 classifier.  Weights
are frozen: either loaded from a named-array container holding pretrained
values, or drawn from a fixed-seed generator as a self-contained fallback.
Images are consumed as raw RGB in [0, 1] for both backends, so the zero
image maps to the zero feature stack whenever biases are zero.
"""

from dataclasses import dataclass

import numpy as np
import torch

from . import containers

# (in_channels, out_channels) per conv; pools sit after indices 1, 3, 7
STAGE_CONVS = ((3, 64), (64, 64), (64, 128), (128, 128),
               (128, 256), (256, 256), (256, 256), (256, 256))
STAGE_ENDS = (1, 3, 7)
STAGE_CHANNELS = (64, 128, 256)


@dataclass(frozen=True)
class FeatureStack:
    """Three feature maps (C, H, W) with channels 64/128/256."""

    stages: tuple

    def __post_init__(self):
        if len(self.stages) != len(STAGE_CHANNELS):
            raise ValueError(f"expected {len(STAGE_CHANNELS)} stages")
        for arr, c in zip(self.stages, STAGE_CHANNELS):
            if arr.shape[0] != c:
                raise ValueError(f"stage has {arr.shape[0]} channels, expected {c}")


class PerceptualExtractor:
    """Immutable-after-load feature extractor Phi."""

    def __init__(self, weights=None, seed=0, dtype=torch.float32):
        self.dtype = dtype
        self._convs = []
        if weights is None:
            self.backend_id = f"random-seed{seed}"
            rng = np.random.default_rng(seed)
            for i, (cin, cout) in enumerate(STAGE_CONVS):
                scale = np.sqrt(2.0 / (cin * 9))
                w = rng.standard_normal((cout, cin, 3, 3)) * scale
                b = np.zeros(cout)
                self._convs.append(self._make_conv(w, b))
        else:
            arrays, checksum = weights
            self.backend_id = f"pretrained:{checksum[:12]}"
            for i, (cin, cout) in enumerate(STAGE_CONVS):
                w = arrays[f"conv{i}.weight"]
                b = arrays[f"conv{i}.bias"]
                if w.shape != (cout, cin, 3, 3) or b.shape != (cout,):
                    raise ValueError(
                        f"conv{i} weights have shape {w.shape}, "
                        f"expected {(cout, cin, 3, 3)}"
                    )
                self._convs.append(self._make_conv(w, b))

    def _make_conv(self, w, b):
        conv = torch.nn.Conv2d(w.shape[1], w.shape[0], 3, padding=1, dtype=self.dtype)
        with torch.no_grad():
            conv.weight.copy_(torch.from_numpy(np.asarray(w)))
            conv.bias.copy_(torch.from_numpy(np.asarray(b)))
        conv.weight.requires_grad_(False)
        conv.bias.requires_grad_(False)
        return conv

    def features_t(self, batch):
        """Torch path: (N, 3, H, W) -> list of three stage tensors.

        Differentiable with respect to the input; weights stay frozen.
        """
        if batch.ndim != 4 or batch.shape[1] != 3:
            raise ValueError(f"expected (N, 3, H, W) batch, got {tuple(batch.shape)}")
        h, w = batch.shape[2], batch.shape[3]
        if h % 8 or w % 8 or h < 8 or w < 8:
            raise ValueError(f"spatial size {h}x{w} must be a multiple of 8 and >= 8")
        out = []
        x = batch
        for i, conv in enumerate(self._convs):
            x = torch.relu(conv(x))
            if i in STAGE_ENDS:
                x = torch.nn.functional.max_pool2d(x, 2)
                out.append(x)
        return out

    def features(self, image):
        """Numpy path: (H, W, 3) image in [0, 1] -> FeatureStack."""
        batch = self._validate_image(image)
        with torch.no_grad():
            stages = self.features_t(batch)
        return FeatureStack(tuple(s[0].double().numpy() for s in stages))

    def distance_t(self, a, b):
        """Sum over stages of the mean squared feature difference (torch)."""
        fa = self.features_t(a)
        fb = self.features_t(b)
        return sum(((x - y) ** 2).mean() for x, y in zip(fa, fb))

    def _validate_image(self, image):
        image = np.asarray(image, dtype=np.float64)
        if image.ndim != 3 or image.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) image, got shape {image.shape}")
        if image.min() < -1e-6 or image.max() > 1.0 + 1e-6:
            raise ValueError("image values must lie in [0, 1]")
        return torch.from_numpy(image.transpose(2, 0, 1)[None]).to(self.dtype)


def perceptual_distance(a, b, extractor):
    """Nonnegative distance between two images; zero iff stacks are equal."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    fa = extractor.features(a)
    fb = extractor.features(b)
    return float(
        sum(np.mean((x - y) ** 2) for x, y in zip(fa.stages, fb.stages))
    )


def load_extractor(path, dtype=torch.float32):
    """Build the pretrained backend from a named-array weight container."""
    arrays, _ = containers.load_arrays(path, kind="perceptual_weights")
    checksum = containers.file_checksum(path)
    return PerceptualExtractor(weights=(arrays, checksum), dtype=dtype)


def save_extractor_weights(path, arrays):
    """Write conv0..conv7 weight/bias arrays in the documented layout."""
    expected = {f"conv{i}.{part}" for i in range(len(STAGE_CONVS)) for part in ("weight", "bias")}
    if set(arrays) != expected:
        raise ValueError(f"weight container must hold exactly {sorted(expected)}")
    containers.save_arrays(path, arrays, kind="perceptual_weights")
