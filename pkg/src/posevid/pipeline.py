"""End-to-end orchestration: dataset preparation, staged training, inference.

The pipeline factorizes as audio -> latent codes -> pose images -> frames;
stages hold no hidden coupling, so any stage can be swapped behind its
interface (the frame stage accepts an override callable for exactly that).
"""

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import yaml
from PIL import Image

from . import audio2code, audio_features, containers, nets, pose_codec, pose_provider, temporal_gan
from .audio_features import FeatureConfig, NormStats, Waveform
from .perceptual import PerceptualExtractor, load_extractor
from .temporal_gan import LossWeights

STORE_MANIFEST = "store.json"

# footage is resized to this aspect before the central square crop
RESIZE_NUMERATOR = 455
RESIZE_DENOMINATOR = 256


class DependencyError(RuntimeError):
    """A training stage was requested before the stage it depends on."""


@dataclass(frozen=True)
class PipelineConfig:
    """Every architecture and optimizer constant, with paper defaults."""

    image_size: int = 256
    window: int = 15
    memory: int = 2
    latent_dim: int = 128
    sample_rate: int = 16000
    n_mels: int = 40
    fft_size: int = 1024
    window_length: float = 0.044
    vae_lr: float = 0.00025
    kl_weight: float = 1e-3
    vae_steps: int = 2000
    vae_batch: int = 8
    blstm_lr: float = 0.000001
    blstm_steps: int = 2000
    gan_lr: float = 0.0002
    gan_beta1: float = 0.5
    gan_beta2: float = 0.999
    gan_steps: int = 2000
    gan_base: int = 64
    gan_depth: int = 0
    lambda0: float = 0.05
    lambda1: float = 10.0
    lambda2: float = 10.0
    clip_stride: int = 30
    seed: int = 0
    perceptual: str = "random"

    def __post_init__(self):
        if self.image_size < 16 or self.image_size % 16:
            raise ValueError("image_size must be a multiple of 16")
        for name in ("window", "memory", "latent_dim", "sample_rate"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("vae_lr", "blstm_lr", "gan_lr"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def feature_config(self):
        return FeatureConfig(
            sample_rate=self.sample_rate,
            n_mels=self.n_mels,
            fft_size=self.fft_size,
            window_length=self.window_length,
        )

    @property
    def loss_weights(self):
        return LossWeights(self.lambda0, self.lambda1, self.lambda2, self.memory)


def load_config(path=None, **overrides):
    """Config from defaults <- YAML file <- environment <- explicit overrides."""
    values = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        unknown = set(data) - set(PipelineConfig.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(data)
    env_seed = os.environ.get("POSEVID_SEED")
    if env_seed is not None:
        values["seed"] = int(env_seed)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig(**values)


def build_phi(cfg, dtype=torch.float32):
    """Perceptual backend selected by config: 'random' or 'pretrained:<path>'."""
    if cfg.perceptual == "random":
        return PerceptualExtractor(seed=0, dtype=dtype)
    if cfg.perceptual.startswith("pretrained:"):
        return load_extractor(cfg.perceptual.split(":", 1)[1], dtype=dtype)
    raise ValueError(f"unknown perceptual backend {cfg.perceptual!r}")


def resize_and_crop(frame, size):
    """Bilinear resize to the footage aspect, then the central square crop."""
    width = int(round(size * RESIZE_NUMERATOR / RESIZE_DENOMINATOR))
    img = Image.fromarray(pose_provider.to_uint8(frame))
    img = img.resize((width, size), Image.BILINEAR)
    offset = (width - size) // 2
    return pose_provider.to_float(np.asarray(img)[:, offset : offset + size])


def crop_column_offset(size=256):
    width = int(round(size * RESIZE_NUMERATOR / RESIZE_DENOMINATOR))
    return (width - size) // 2


def prepare_dataset(frames, audio, out_dir, cfg=PipelineConfig(), poses=None):
    """Build an aligned (features, poses, frames) store on disk.

    Frames are resized/cropped to the configured square size, audio is
    resampled to the featurizer rate, and both are trimmed to a shared tick
    count (they must already agree within one tick).  Poses may be passed in
    (precomputed estimator output, array or directory) or are estimated from
    the frames.
    """
    frames = np.asarray(frames)
    if frames.ndim != 4 or len(frames) == 0:
        raise ValueError("expected a non-empty (N, H, W, 3) frame array")
    if frames.dtype == np.uint8:
        frames = pose_provider.to_float(frames)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if audio.sample_rate != cfg.sample_rate:
        audio = audio_features.resample(audio, cfg.sample_rate)
    # quantize to the stored 16-bit values before featurizing, so preparing
    # an already-prepared store is a checksum no-op
    samples = np.round(np.clip(audio.samples, -1.0, 1.0) * 32767.0) / 32768.0
    audio = Waveform(samples, cfg.sample_rate)

    rows = audio_features.extract_log_mel(audio, cfg.feature_config)
    n_ticks, n_frames = len(rows), len(frames)
    if abs(n_ticks - n_frames) > 1:
        raise ValueError(
            f"audio yields {n_ticks} ticks but there are {n_frames} frames; "
            "misaligned by more than one tick"
        )
    ticks = min(n_ticks, n_frames)
    rows = rows[:ticks]
    frames = frames[:ticks]

    size = cfg.image_size
    if frames.shape[1] != size or frames.shape[2] != size:
        frames = np.stack([resize_and_crop(f, size) for f in frames])
    frames = pose_provider.to_float(pose_provider.to_uint8(frames))

    if poses is None:
        poses = pose_provider.poses_from_frames(frames)
    elif isinstance(poses, (str, Path)):
        poses, _ = pose_provider.load_image_dir(poses)
    poses = np.asarray(poses)[:ticks]
    if poses.shape != frames.shape:
        raise ValueError(f"pose stack {poses.shape} does not match frames {frames.shape}")

    stats = audio_features.fit_norm_stats([rows])

    audio_features.save_wav(out_dir / "audio.wav", audio)
    audio_features.save_features(out_dir / "features.npz", rows)
    audio_features.save_norm_stats(out_dir / "norm_stats.npz", stats)
    audio_checksum = containers.file_checksum(out_dir / "audio.wav")
    pose_provider.save_image_dir(out_dir / "frames", frames, source_checksum=audio_checksum)
    pose_provider.save_image_dir(out_dir / "poses", poses, source_checksum=audio_checksum)
    manifest = {
        "format_version": containers.FORMAT_VERSION,
        "ticks": int(ticks),
        "image_size": int(size),
        "synthetic": True,
        "checksums": {
            "audio.wav": audio_checksum,
            "features.npz": containers.file_checksum(out_dir / "features.npz"),
            "norm_stats.npz": containers.file_checksum(out_dir / "norm_stats.npz"),
            "frames": _dir_checksum(out_dir / "frames"),
            "poses": _dir_checksum(out_dir / "poses"),
        },
    }
    with open(out_dir / STORE_MANIFEST, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return out_dir


def _dir_checksum(directory):
    parts = [
        containers.file_checksum(p)
        for p in sorted(Path(directory).glob("frame_*.png"))
    ]
    return hashlib.sha256("".join(parts).encode()).hexdigest()


class DataStore:
    """In-memory view of a prepared dataset directory."""

    def __init__(self, root, manifest, features, stats, poses, frames, audio):
        self.root = Path(root)
        self.manifest = manifest
        self.features = features
        self.stats = stats
        self.poses = poses
        self.frames = frames
        self.audio = audio

    @property
    def ticks(self):
        return self.manifest["ticks"]

    @property
    def image_size(self):
        return self.manifest["image_size"]

    @classmethod
    def load(cls, root):
        root = Path(root)
        with open(root / STORE_MANIFEST) as fh:
            manifest = json.load(fh)
        features = audio_features.load_features(root / "features.npz")
        stats = audio_features.load_norm_stats(root / "norm_stats.npz")
        poses, _ = pose_provider.load_image_dir(root / "poses")
        frames, _ = pose_provider.load_image_dir(root / "frames")
        audio = audio_features.load_wav(root / "audio.wav")
        return cls(root, manifest, features, stats, poses, frames, audio)


@dataclass
class ModelBundle:
    """Trained parameters for the whole pipeline plus featurizer stats.

    The discriminator and temporal predictor are training-time devices and
    may be absent; everything else is required for inference.
    """

    vae: object
    blstm: object
    generator: object
    norm_stats: NormStats
    feature_config: FeatureConfig
    window: int
    weights: LossWeights
    perceptual_backend: str
    discriminator: object = None
    predictor: object = None

    def __post_init__(self):
        if self.vae is not None and self.blstm is not None:
            if self.vae.cfg.latent_dim != self.blstm.cfg.latent_dim:
                raise ValueError(
                    "latent dims disagree: vae "
                    f"{self.vae.cfg.latent_dim} vs blstm {self.blstm.cfg.latent_dim}"
                )

    def require_complete(self):
        missing = [
            name
            for name, part in (
                ("vae", self.vae), ("blstm", self.blstm),
                ("generator", self.generator), ("norm_stats", self.norm_stats),
            )
            if part is None
        ]
        if missing:
            raise ValueError(f"bundle incomplete for inference, missing: {missing}")

    def save(self, path):
        arrays = {
            "norm/mean": self.norm_stats.mean,
            "norm/std": self.norm_stats.std,
        }
        for prefix, module in self._modules().items():
            for key, value in nets.state_arrays(module).items():
                arrays[f"{prefix}/{key}"] = value
        meta = {
            "window": self.window,
            "memory": self.weights.memory,
            "lambdas": [
                self.weights.structural,
                self.weights.temporal_generated,
                self.weights.temporal_real,
            ],
            "perceptual_backend": self.perceptual_backend,
            "feature_config": {
                "sample_rate": self.feature_config.sample_rate,
                "n_mels": self.feature_config.n_mels,
                "fft_size": self.feature_config.fft_size,
                "window_length": self.feature_config.window_length,
                "log_floor": self.feature_config.log_floor,
            },
            "vae": {
                "image_size": self.vae.cfg.image_size,
                "latent_dim": self.vae.cfg.latent_dim,
                "enc_channels": list(self.vae.cfg.enc_channels),
                "dec_channels": list(self.vae.cfg.dec_channels),
            },
            "blstm": {
                "input_dim": self.blstm.cfg.input_dim,
                "hidden": self.blstm.cfg.hidden,
                "latent_dim": self.blstm.cfg.latent_dim,
            },
            "generator": {
                "image_size": self.generator.image_size,
                "depth": self.generator.depth,
                "base": self.generator.base,
            },
            "has_discriminator": self.discriminator is not None,
            "has_predictor": self.predictor is not None,
        }
        if self.discriminator is not None:
            meta["discriminator"] = {
                "image_size": self.discriminator.image_size,
                "base": self.discriminator.base,
            }
        containers.save_arrays(path, arrays, kind="model_bundle", meta=meta)
        return containers.file_checksum(path)

    def _modules(self):
        modules = {"vae": self.vae, "blstm": self.blstm, "gen": self.generator}
        if self.discriminator is not None:
            modules["disc"] = self.discriminator
        if self.predictor is not None:
            modules["pred"] = self.predictor
        return modules

    @classmethod
    def load(cls, path, dtype=torch.float32):
        arrays, meta = containers.load_arrays(path, kind="model_bundle")
        fc = meta["feature_config"]
        feature_config = FeatureConfig(
            sample_rate=fc["sample_rate"], n_mels=fc["n_mels"],
            fft_size=fc["fft_size"], window_length=fc["window_length"],
            log_floor=fc["log_floor"],
        )
        vae_meta = meta["vae"]
        vae = pose_codec.PoseVae(
            pose_codec.VaeConfig(
                image_size=vae_meta["image_size"],
                latent_dim=vae_meta["latent_dim"],
                enc_channels=tuple(vae_meta["enc_channels"]),
                dec_channels=tuple(vae_meta["dec_channels"]),
            ),
            dtype=dtype,
        )
        nets.load_state_arrays(vae, arrays, prefix="vae/")
        bl = meta["blstm"]
        blstm = audio2code.WindowBlstm(
            audio2code.BlstmConfig(bl["input_dim"], bl["hidden"], bl["latent_dim"]),
            dtype=dtype,
        )
        nets.load_state_arrays(blstm, arrays, prefix="blstm/")
        g = meta["generator"]
        generator = temporal_gan.UNet(
            3, 3, g["image_size"], g["depth"], g["base"], dtype=dtype
        )
        nets.load_state_arrays(generator, arrays, prefix="gen/")
        lambdas = meta["lambdas"]
        weights = LossWeights(lambdas[0], lambdas[1], lambdas[2], meta["memory"])
        discriminator = predictor = None
        if meta.get("has_discriminator"):
            d = meta["discriminator"]
            discriminator = temporal_gan.FrameDiscriminator(
                d["image_size"], d["base"], dtype=dtype
            )
            nets.load_state_arrays(discriminator, arrays, prefix="disc/")
        if meta.get("has_predictor"):
            predictor = temporal_gan.UNet(
                3 * meta["memory"], 3, g["image_size"], g["depth"], g["base"],
                dtype=dtype,
            )
            predictor.memory = meta["memory"]
            nets.load_state_arrays(predictor, arrays, prefix="pred/")
        return cls(
            vae=vae, blstm=blstm, generator=generator,
            norm_stats=NormStats(arrays["norm/mean"], arrays["norm/std"]),
            feature_config=feature_config, window=meta["window"], weights=weights,
            perceptual_backend=meta["perceptual_backend"],
            discriminator=discriminator, predictor=predictor,
        )


def train_vae_stage(store, cfg, phi=None):
    """Stage 1: fit the pose codec, then emit codes for every store pose."""
    phi = phi or build_phi(cfg)
    train_cfg = pose_codec.VaeTrainConfig(
        lr=cfg.vae_lr, kl_weight=cfg.kl_weight, steps=cfg.vae_steps,
        batch_size=cfg.vae_batch, seed=cfg.seed,
    )
    vae_cfg = pose_codec.VaeConfig(
        image_size=store.image_size, latent_dim=cfg.latent_dim
    )
    vae, history = pose_codec.train_vae(store.poses, train_cfg, phi, vae_cfg)
    codes = pose_codec.encode_dataset(store.poses, vae)
    return vae, history, codes


def train_blstm_stage(store, cfg, codes):
    """Stage 2a: regress look-back windows onto the stage-1 codes."""
    if codes is None:
        raise DependencyError(
            "BLSTM stage requires latent codes; run the VAE stage first"
        )
    codes = np.asarray(codes)
    if len(codes) != store.ticks:
        raise DependencyError(
            f"code count {len(codes)} does not match store ticks {store.ticks}"
        )
    normalized = audio_features.normalize(store.features, store.stats)
    windows = audio_features.make_windows(normalized, cfg.window)
    train_cfg = audio2code.BlstmTrainConfig(
        lr=cfg.blstm_lr, steps=cfg.blstm_steps, seed=cfg.seed
    )
    return audio2code.train_blstm((windows, codes), train_cfg)


def train_gan_stage(store, cfg, phi=None):
    """Stage 2b: adversarial pose-to-frame training on contiguous clips."""
    phi = phi or build_phi(cfg)
    train_cfg = temporal_gan.GanTrainConfig(
        lr=cfg.gan_lr, beta1=cfg.gan_beta1, beta2=cfg.gan_beta2,
        steps=cfg.gan_steps, seed=cfg.seed, clip_stride=cfg.clip_stride,
        base_channels=cfg.gan_base, depth=cfg.gan_depth, weights=cfg.loss_weights,
    )
    return temporal_gan.train_temporal_gan(
        (store.poses, store.frames), train_cfg, phi=phi
    )


def train_all(store, cfg=PipelineConfig()):
    """Stage 1 (VAE), then stages 2a/2b (BLSTM, GAN); returns the bundle."""
    phi = build_phi(cfg)
    vae, _, codes = train_vae_stage(store, cfg, phi)
    blstm, _ = train_blstm_stage(store, cfg, codes)
    gen, disc, pred, _ = train_gan_stage(store, cfg, phi)
    return ModelBundle(
        vae=vae, blstm=blstm, generator=gen,
        norm_stats=store.stats, feature_config=cfg.feature_config,
        window=cfg.window, weights=cfg.loss_weights,
        perceptual_backend=phi.backend_id,
        discriminator=disc, predictor=pred,
    )


def audio_to_codes(audio, bundle):
    """Featurize, normalize, window, and regress one code per tick."""
    if audio.sample_rate != bundle.feature_config.sample_rate:
        audio = audio_features.resample(audio, bundle.feature_config.sample_rate)
    rows = audio_features.extract_log_mel(audio, bundle.feature_config)
    normalized = audio_features.normalize(rows, bundle.norm_stats)
    windows = audio_features.make_windows(normalized, bundle.window)
    return audio2code.forward_windows(windows, bundle.blstm)


def synthesize(audio, bundle, frame_stage=None):
    """Audio of any length -> frame sequence, one frame per 30 Hz tick.

    ``frame_stage`` replaces the generator stage when given (a callable from
    a pose stack to a frame stack); the stages share no hidden state.
    """
    bundle.require_complete()
    if audio.duration < 1.0:
        raise ValueError(f"audio too short: {audio.duration:.3f} s < 1 s")
    codes = audio_to_codes(audio, bundle)
    poses = pose_codec.decode_sequence(codes, bundle.vae)
    if frame_stage is None:
        frames = temporal_gan.synthesize_frames(poses, bundle.generator)
    else:
        frames = frame_stage(poses)
    if len(frames) != len(codes):
        raise RuntimeError("frame stage changed the tick count")
    return frames


def export_frames(frames, out_dir, bundle_checksum=None):
    """Lossless frame files plus a manifest stamped synthetic."""
    frames = np.asarray(frames)
    if frames.ndim != 4 or len(frames) == 0:
        raise ValueError("expected a non-empty (N, S, S, 3) frame array")
    return pose_provider.save_image_dir(
        out_dir, frames,
        source_checksum=bundle_checksum or "unknown",
        extra_meta={"bundle_checksum": bundle_checksum or "unknown"},
    )
