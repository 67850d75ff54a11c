"""Paired pose-to-frame GAN with structural and temporal constraints.

Three trainable parts: a U-Net generator mapping a pose image to a frame, a
DCGAN-style discriminator scoring whole frames (one scalar each, no patch
grid), and a temporal predictor, a U-Net over the channel-concatenated last
L frames that guesses the next frame.  The generator objective is a
least-squares GAN term over the L+1 memory window plus three weighted
constraint penalties: perceptual (structural) on the current tick, and L1
temporal terms against predictor rollouts of generated and of real history.
Inference uses the generator only.
"""

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from . import containers, nets


@dataclass(frozen=True)
class LossWeights:
    """Constraint weights (lambda0, lambda1, lambda2) and memory length L."""

    structural: float = 0.05
    temporal_generated: float = 10.0
    temporal_real: float = 10.0
    memory: int = 2

    def __post_init__(self):
        if min(self.structural, self.temporal_generated, self.temporal_real) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.memory < 1:
            raise ValueError("memory length must be >= 1")


class UNet(nn.Module):
    """Strided conv encoder/decoder with skip connections, sigmoid output."""

    def __init__(self, in_channels, out_channels, image_size, depth=7, base=64,
                 seed=0, dtype=torch.float32):
        super().__init__()
        if depth < 2:
            raise ValueError("U-Net depth must be >= 2")
        if image_size % (1 << depth):
            raise ValueError(f"image size {image_size} not divisible by 2^{depth}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.image_size = image_size
        self.depth = depth
        self.base = base
        channels = [min(base << i, base * 8) for i in range(depth)]
        downs, ups = [], []
        for i in range(depth):
            cin = in_channels if i == 0 else channels[i - 1]
            downs.append(nn.Conv2d(cin, channels[i], 4, 2, 1, dtype=dtype))
        for j in range(depth):
            cin = channels[depth - 1] if j == 0 else 2 * channels[depth - 1 - j]
            cout = channels[depth - 2 - j] if j < depth - 1 else out_channels
            ups.append(nn.ConvTranspose2d(cin, cout, 4, 2, 1, dtype=dtype))
        self.downs = nn.ModuleList(downs)
        self.ups = nn.ModuleList(ups)
        nets.seeded_init(self, seed)

    def forward(self, x):
        if x.shape[1] != self.in_channels or x.shape[2] != self.image_size:
            raise ValueError(
                f"expected (N, {self.in_channels}, {self.image_size}, "
                f"{self.image_size}) input, got {tuple(x.shape)}"
            )
        feats = []
        for conv in self.downs:
            x = nn.functional.leaky_relu(conv(x), 0.2)
            feats.append(x)
        for j, upconv in enumerate(self.ups):
            x = upconv(x)
            if j < self.depth - 1:
                x = torch.relu(x)
                x = torch.cat([x, feats[self.depth - 2 - j]], dim=1)
        return torch.sigmoid(x)


class FrameDiscriminator(nn.Module):
    """Strided conv classifier over the full image; one scalar per image."""

    def __init__(self, image_size, base=64, seed=0, dtype=torch.float32):
        super().__init__()
        if image_size < 8 or image_size & (image_size - 1):
            raise ValueError("discriminator image size must be a power of two >= 8")
        self.image_size = image_size
        self.base = base
        layers = []
        ch, spatial = 3, image_size
        width = base
        while spatial > 4:
            layers.append(nn.Conv2d(ch, width, 4, 2, 1, dtype=dtype))
            ch, spatial = width, spatial // 2
            width = min(width * 2, base * 8)
        self.convs = nn.ModuleList(layers)
        self.head = nn.Conv2d(ch, 1, spatial, 1, 0, dtype=dtype)
        nets.seeded_init(self, seed)

    def forward(self, x):
        if x.shape[2] != self.image_size or x.shape[3] != self.image_size:
            raise ValueError(
                f"expected {self.image_size}x{self.image_size} frames, "
                f"got {tuple(x.shape[2:])}"
            )
        for conv in self.convs:
            x = nn.functional.leaky_relu(conv(x), 0.2)
        return self.head(x).flatten()


def build_generator(image_size, depth=None, base=64, seed=0, dtype=torch.float32):
    depth = default_depth(image_size) if depth is None else depth
    return UNet(3, 3, image_size, depth, base, seed, dtype)


def build_predictor(image_size, memory=2, depth=None, base=64, seed=0,
                    dtype=torch.float32):
    depth = default_depth(image_size) if depth is None else depth
    net = UNet(3 * memory, 3, image_size, depth, base, seed, dtype)
    net.memory = memory
    return net


def default_depth(image_size):
    return min(7, int(np.log2(image_size)))


def generate(pose, gen):
    """One pose image -> one frame, deterministic."""
    batch = nets.to_batch(pose, next(gen.parameters()).dtype)
    with torch.no_grad():
        return nets.to_images(gen(batch))[0]


def synthesize_frames(poses, gen, chunk=16):
    """Elementwise generator map over a pose sequence."""
    poses = np.asarray(poses)
    if poses.ndim != 4 or len(poses) == 0:
        raise ValueError("expected a non-empty (N, S, S, 3) pose sequence")
    dtype = next(gen.parameters()).dtype
    out = []
    with torch.no_grad():
        for i in range(0, len(poses), chunk):
            out.append(nets.to_images(gen(nets.to_batch(poses[i : i + chunk], dtype))))
    return np.concatenate(out, axis=0)


def predict_next(history, pred):
    """Exactly L previous frames -> the predicted next frame."""
    history = np.asarray(history, dtype=np.float64)
    if history.ndim != 4 or history.shape[0] != pred.memory:
        raise ValueError(
            f"predictor needs exactly {pred.memory} history frames, "
            f"got {history.shape[0] if history.ndim == 4 else 'malformed input'}"
        )
    batch = nets.to_batch(history, next(pred.parameters()).dtype)
    stacked = batch.reshape(1, -1, batch.shape[2], batch.shape[3])
    with torch.no_grad():
        return nets.to_images(pred(stacked))[0]


def lsgan_losses(real_scores, fake_scores):
    """Least-squares GAN terms over aligned score lists.

    gan_d = mean[(real - 1)^2 + fake^2]; gan_g = mean[(fake - 1)^2].
    """
    real = np.asarray(real_scores, dtype=np.float64).ravel()
    fake = np.asarray(fake_scores, dtype=np.float64).ravel()
    if real.size == 0 or fake.size == 0:
        raise ValueError("score lists must be non-empty")
    if real.size != fake.size:
        raise ValueError(f"score lists differ in length: {real.size} vs {fake.size}")
    gan_d = float(np.mean((real - 1.0) ** 2 + fake**2))
    gan_g = float(np.mean((fake - 1.0) ** 2))
    return gan_g, gan_d


@dataclass(frozen=True)
class SeqLossReport:
    gan_g: float
    gan_d: float
    structural: float
    temporal_gen: float
    temporal_real: float
    total_g: float


def _stack_history(batch):
    # (L, 3, S, S) -> (1, 3L, S, S), frame order preserved
    return batch.reshape(1, -1, batch.shape[2], batch.shape[3])


def objective_terms_t(pose_clip, frame_clip, gen, disc, pred, phi):
    """Torch scalars for every objective term on one L+1 clip."""
    fakes = gen(pose_clip)
    real_scores = disc(frame_clip)
    fake_scores = disc(fakes)
    gan_g = ((fake_scores - 1.0) ** 2).mean()
    gan_d = ((real_scores - 1.0) ** 2 + fake_scores.detach() ** 2).mean()
    structural = phi.distance_t(frame_clip[-1:], fakes[-1:])
    mem = pred.memory
    pred_from_fake = pred(_stack_history(fakes[:mem]))
    pred_from_real = pred(_stack_history(frame_clip[:mem]))
    temporal_gen = (frame_clip[-1:] - pred_from_fake).abs().mean()
    temporal_real = (frame_clip[-1:] - pred_from_real).abs().mean()
    return gan_g, gan_d, structural, temporal_gen, temporal_real


def sequence_objective(poses, frames, gen, disc, pred, phi, weights=LossWeights()):
    """Loss report for one aligned clip of exactly memory+1 ticks."""
    mem = weights.memory
    poses = np.asarray(poses, dtype=np.float64)
    frames = np.asarray(frames, dtype=np.float64)
    if len(poses) != mem + 1 or len(frames) != mem + 1:
        raise ValueError(
            f"clip must hold exactly memory+1 = {mem + 1} ticks, "
            f"got {len(poses)} poses / {len(frames)} frames"
        )
    if pred.memory != mem:
        raise ValueError(f"predictor memory {pred.memory} != weights.memory {mem}")
    dtype = next(gen.parameters()).dtype
    w_b = nets.to_batch(poses, dtype)
    y_b = nets.to_batch(frames, dtype)
    with torch.no_grad():
        gan_g, gan_d, structural, t_gen, t_real = objective_terms_t(
            w_b, y_b, gen, disc, pred, phi
        )
    return _report(
        float(gan_g), float(gan_d), float(structural), float(t_gen), float(t_real),
        weights,
    )


def _report(gan_g, gan_d, structural, t_gen, t_real, weights):
    total = (
        gan_g
        + weights.structural * structural
        + weights.temporal_generated * t_gen
        + weights.temporal_real * t_real
    )
    return SeqLossReport(gan_g, gan_d, structural, t_gen, t_real, total)


@dataclass
class GanTrainConfig:
    lr: float = 0.0002
    beta1: float = 0.5
    beta2: float = 0.999
    steps: int = 2000
    seed: int = 0
    clip_stride: int = 1
    base_channels: int = 64
    depth: int = 0  # 0 = derived from image size
    weights: LossWeights = LossWeights()


def train_temporal_gan(clips, cfg=GanTrainConfig(), phi=None, models=None):
    """Alternating D / (G, P) least-squares updates over contiguous clips.

    ``clips`` is one (poses, frames) pair or a list of them; each must span
    at least memory+1 ticks.  Training windows start every ``clip_stride``
    ticks.  Deterministic for a fixed seed.
    """
    if isinstance(clips, tuple):
        clips = [clips]
    if not clips:
        raise ValueError("training set is empty")
    mem = cfg.weights.memory
    tensors = []
    for poses, frames in clips:
        poses = np.asarray(poses, dtype=np.float64)
        frames = np.asarray(frames, dtype=np.float64)
        if len(poses) != len(frames) or len(poses) < mem + 1:
            raise ValueError(
                f"each clip needs >= memory+1 = {mem + 1} aligned ticks"
            )
        tensors.append((nets.to_batch(poses), nets.to_batch(frames)))
    size = tensors[0][0].shape[2]
    windows = [
        (c, s)
        for c, (p, _) in enumerate(tensors)
        for s in range(0, p.shape[0] - mem, max(1, cfg.clip_stride))
    ]
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(cfg.seed).spawn(4)]
    depth = cfg.depth or default_depth(size)
    if models is None:
        gen = build_generator(size, depth, cfg.base_channels, seed=seeds[0])
        disc = FrameDiscriminator(size, cfg.base_channels, seed=seeds[1])
        pred = build_predictor(size, mem, depth, cfg.base_channels, seed=seeds[2])
    else:
        gen, disc, pred = models
    if phi is None:
        from .perceptual import PerceptualExtractor

        phi = PerceptualExtractor(seed=0)
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    opt_gp = torch.optim.Adam(
        list(gen.parameters()) + list(pred.parameters()),
        lr=cfg.lr, betas=(cfg.beta1, cfg.beta2),
    )
    rng = np.random.default_rng(seeds[3])
    history = []
    for _ in range(cfg.steps):
        c, s = windows[int(rng.integers(len(windows)))]
        w_b = tensors[c][0][s : s + mem + 1]
        y_b = tensors[c][1][s : s + mem + 1]

        with torch.no_grad():
            fakes = gen(w_b)
        d_loss = ((disc(y_b) - 1.0) ** 2 + disc(fakes) ** 2).mean()
        opt_d.zero_grad()
        d_loss.backward()
        opt_d.step()

        gan_g, _, structural, t_gen, t_real = objective_terms_t(
            w_b, y_b, gen, disc, pred, phi
        )
        g_loss = (
            gan_g
            + cfg.weights.structural * structural
            + cfg.weights.temporal_generated * t_gen
            + cfg.weights.temporal_real * t_real
        )
        opt_gp.zero_grad()
        g_loss.backward()
        opt_gp.step()

        history.append(
            _report(
                gan_g.item(), d_loss.item(), structural.item(),
                t_gen.item(), t_real.item(), cfg.weights,
            )
        )
    return gen, disc, pred, history


def save_unet(path, net, kind):
    meta = {
        "in_channels": net.in_channels,
        "out_channels": net.out_channels,
        "image_size": net.image_size,
        "depth": net.depth,
        "base": net.base,
        "memory": getattr(net, "memory", 0),
    }
    containers.save_arrays(path, nets.state_arrays(net), kind=kind, meta=meta)


def load_unet(path, kind, dtype=torch.float32):
    arrays, meta = containers.load_arrays(path, kind=kind)
    net = UNet(
        meta["in_channels"], meta["out_channels"], meta["image_size"],
        meta["depth"], meta["base"], dtype=dtype,
    )
    if meta.get("memory"):
        net.memory = meta["memory"]
    return nets.load_state_arrays(net, arrays)


def save_discriminator(path, disc):
    meta = {"image_size": disc.image_size, "base": disc.base}
    containers.save_arrays(
        path, nets.state_arrays(disc), kind="discriminator", meta=meta
    )


def load_discriminator(path, dtype=torch.float32):
    arrays, meta = containers.load_arrays(path, kind="discriminator")
    disc = FrameDiscriminator(meta["image_size"], meta["base"], dtype=dtype)
    return nets.load_state_arrays(disc, arrays)
