"""VAE over pose images: 128-dim latent codes, perceptual reconstruction loss.

Encoder: three 3x3 conv stages (ReLU, 2x max pool) into parallel mean and
log-variance heads.  Decoder: a linear projection followed by four 3x3 conv
stages, each after a 2x upsample, with a final logistic squash to [0, 1].
The reconstruction term is the perceptual distance, not a pixel loss.
"""

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from . import containers, nets
from .perceptual import PerceptualExtractor, perceptual_distance

LATENT_DIM = 128

# keeps early reparameterization noise well below the code spread
LOGVAR_INIT_BIAS = -4.0


@dataclass(frozen=True)
class VaeConfig:
    image_size: int = 256
    latent_dim: int = LATENT_DIM
    enc_channels: tuple = (32, 64, 128)
    dec_channels: tuple = (128, 64, 32)

    def __post_init__(self):
        if self.image_size < 16 or self.image_size % 16:
            raise ValueError("image_size must be a multiple of 16 (>= 16)")
        if len(self.enc_channels) != 3 or len(self.dec_channels) != 3:
            raise ValueError("expected 3 encoder and 3 hidden decoder widths")


class PoseVae(nn.Module):
    """Trainable parameters for encode/decode; topology fixed by VaeConfig."""

    def __init__(self, cfg=VaeConfig(), seed=0, dtype=torch.float32):
        super().__init__()
        self.cfg = cfg
        self.dtype_ = dtype
        c1, c2, c3 = cfg.enc_channels
        self.enc = nn.Sequential(
            nn.Conv2d(3, c1, 3, padding=1, dtype=dtype), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(c1, c2, 3, padding=1, dtype=dtype), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(c2, c3, 3, padding=1, dtype=dtype), nn.ReLU(), nn.MaxPool2d(2),
        )
        enc_side = cfg.image_size // 8
        flat = c3 * enc_side * enc_side
        self.fc_mean = nn.Linear(flat, cfg.latent_dim, dtype=dtype)
        self.fc_logvar = nn.Linear(flat, cfg.latent_dim, dtype=dtype)
        self.dec_side = cfg.image_size // 16
        d1, d2, d3 = cfg.dec_channels
        self.fc_dec = nn.Linear(cfg.latent_dim, d1 * self.dec_side**2, dtype=dtype)
        self.dec = nn.ModuleList([
            nn.Conv2d(d1, d1, 3, padding=1, dtype=dtype),
            nn.Conv2d(d1, d2, 3, padding=1, dtype=dtype),
            nn.Conv2d(d2, d3, 3, padding=1, dtype=dtype),
            nn.Conv2d(d3, 3, 3, padding=1, dtype=dtype),
        ])
        nets.seeded_init(self, seed)
        with torch.no_grad():
            self.fc_logvar.bias.fill_(LOGVAR_INIT_BIAS)

    def encode_t(self, x):
        if x.shape[2] != self.cfg.image_size or x.shape[3] != self.cfg.image_size:
            raise ValueError(
                f"expected {self.cfg.image_size}x{self.cfg.image_size} input, "
                f"got {tuple(x.shape[2:])}"
            )
        h = self.enc(x).flatten(1)
        return self.fc_mean(h), self.fc_logvar(h)

    def decode_t(self, z):
        if z.shape[1] != self.cfg.latent_dim:
            raise ValueError(f"code length {z.shape[1]} != {self.cfg.latent_dim}")
        d1 = self.cfg.dec_channels[0]
        h = self.fc_dec(z).view(-1, d1, self.dec_side, self.dec_side)
        for i, conv in enumerate(self.dec):
            h = nn.functional.interpolate(h, scale_factor=2, mode="nearest")
            h = conv(h)
            h = torch.sigmoid(h) if i == len(self.dec) - 1 else torch.relu(h)
        return h


def encode(image, vae):
    """Pose image -> (mean, logvar) vectors, deterministic."""
    batch = nets.to_batch(image, vae.dtype_)
    with torch.no_grad():
        mean, logvar = vae.encode_t(batch)
    return mean[0].double().numpy(), logvar[0].double().numpy()


def decode(code, vae):
    """Latent code -> pose image in [0, 1]."""
    code = np.asarray(code, dtype=np.float64)
    if code.shape != (vae.cfg.latent_dim,):
        raise ValueError(f"code shape {code.shape} != ({vae.cfg.latent_dim},)")
    with torch.no_grad():
        out = vae.decode_t(torch.from_numpy(code[None]).to(vae.dtype_))
    return nets.to_images(out)[0]


def decode_sequence(codes, vae, chunk=64):
    """Batched decode of (T, latent) codes -> (T, S, S, 3) images."""
    codes = np.asarray(codes, dtype=np.float64)
    out = []
    with torch.no_grad():
        for i in range(0, len(codes), chunk):
            z = torch.from_numpy(codes[i : i + chunk]).to(vae.dtype_)
            out.append(nets.to_images(vae.decode_t(z)))
    return np.concatenate(out, axis=0)


def encode_dataset(images, vae, chunk=64):
    """Encoder means for a pose image stack; the BLSTM regression targets."""
    images = np.asarray(images)
    out = []
    with torch.no_grad():
        for i in range(0, len(images), chunk):
            batch = nets.to_batch(images[i : i + chunk], vae.dtype_)
            mean, _ = vae.encode_t(batch)
            out.append(mean.double().numpy())
    return np.concatenate(out, axis=0)


def sample_latent(mean, logvar, seed=0):
    """Reparameterized draw z = mean + exp(logvar/2) * eps, seeded."""
    mean = np.asarray(mean, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if mean.shape != logvar.shape:
        raise ValueError("mean and logvar must have matching shapes")
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(logvar))):
        raise ValueError("mean/logvar must be finite")
    eps = np.random.default_rng(seed).standard_normal(mean.shape)
    return mean + np.exp(0.5 * logvar) * eps


def gaussian_kl(mean, logvar):
    """KL(q || N(0, I)) = 0.5 * sum(exp(logvar) + mean^2 - 1 - logvar)."""
    mean = np.asarray(mean, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    return float(0.5 * np.sum(np.exp(logvar) + mean**2 - 1.0 - logvar))


@dataclass(frozen=True)
class VaeLossReport:
    total: float
    perceptual_term: float
    kl_term: float
    kl_weight: float


def vae_loss(image, vae, phi, kl_weight=1e-3, seed=0):
    """Loss report for one image: perceptual + kl_weight * KL."""
    mean, logvar = encode(image, vae)
    z = sample_latent(mean, logvar, seed=seed)
    recon = decode(z, vae)
    perc = perceptual_distance(np.asarray(image, dtype=np.float64), recon, phi)
    kl = gaussian_kl(mean, logvar)
    return VaeLossReport(
        total=perc + kl_weight * kl,
        perceptual_term=perc,
        kl_term=kl,
        kl_weight=kl_weight,
    )


def loss_terms_t(batch, vae, phi, eps, target_stages=None):
    """Differentiable (perceptual, kl) batch means; shared by training/tests."""
    mean, logvar = vae.encode_t(batch)
    z = mean + torch.exp(0.5 * logvar) * eps
    recon = vae.decode_t(z)
    if target_stages is None:
        target_stages = phi.features_t(batch)
    recon_stages = phi.features_t(recon)
    perc = sum(
        ((a - b) ** 2).flatten(1).mean(dim=1)
        for a, b in zip(recon_stages, target_stages)
    ).mean()
    kl = (0.5 * (torch.exp(logvar) + mean**2 - 1.0 - logvar).sum(dim=1)).mean()
    return perc, kl


@dataclass
class VaeTrainConfig:
    lr: float = 0.00025
    kl_weight: float = 1e-3
    steps: int = 2000
    batch_size: int = 8
    seed: int = 0
    log_every: int = 1


def train_vae(images, cfg=VaeTrainConfig(), phi=None, vae_cfg=None):
    """RMSProp training; deterministic for a fixed seed.

    Returns the trained model and the per-logged-step loss history.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[0] < 1:
        raise ValueError("dataset must be a non-empty (N, S, S, 3) array")
    if vae_cfg is None:
        vae_cfg = VaeConfig(image_size=images.shape[1])
    vae = PoseVae(vae_cfg, seed=cfg.seed)
    if phi is None:
        phi = PerceptualExtractor(seed=0, dtype=vae.dtype_)
    data = nets.to_batch(images, vae.dtype_)
    with torch.no_grad():
        all_stages = phi.features_t(data)
    optimizer = torch.optim.RMSprop(vae.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    n = data.shape[0]
    history = []
    for step in range(cfg.steps):
        if cfg.batch_size < n:
            idx = rng.choice(n, size=cfg.batch_size, replace=False)
        else:
            idx = np.arange(n)
        eps = rng.standard_normal((len(idx), vae_cfg.latent_dim))
        batch = data[idx]
        targets = [s[idx] for s in all_stages]
        perc, kl = loss_terms_t(
            batch, vae, phi, torch.from_numpy(eps).to(vae.dtype_), targets
        )
        loss = perc + cfg.kl_weight * kl
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            p, k = perc.item(), kl.item()
            history.append(
                VaeLossReport(p + cfg.kl_weight * k, p, k, cfg.kl_weight)
            )
    return vae, history


def save_codes(path, codes):
    """Latent code sequence (T, latent_dim) as a named-array container."""
    containers.save_arrays(
        path, {"codes": np.asarray(codes, dtype=np.float64)}, kind="codes"
    )


def load_codes(path):
    arrays, _ = containers.load_arrays(path, kind="codes")
    return arrays["codes"]


def save_vae(path, vae):
    meta = {
        "image_size": vae.cfg.image_size,
        "latent_dim": vae.cfg.latent_dim,
        "enc_channels": list(vae.cfg.enc_channels),
        "dec_channels": list(vae.cfg.dec_channels),
    }
    containers.save_arrays(path, nets.state_arrays(vae), kind="vae", meta=meta)


def load_vae(path, dtype=torch.float32):
    arrays, meta = containers.load_arrays(path, kind="vae")
    cfg = VaeConfig(
        image_size=meta["image_size"],
        latent_dim=meta["latent_dim"],
        enc_channels=tuple(meta["enc_channels"]),
        dec_channels=tuple(meta["dec_channels"]),
    )
    vae = PoseVae(cfg, dtype=dtype)
    return nets.load_state_arrays(vae, arrays)
