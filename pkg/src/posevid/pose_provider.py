"""Pose-image source: a deterministic articulated-figure renderer.

Stands in for an external pose estimator at desk scale.  Pose images are
flat-color renderings of body segments on a black background; the matching
"camera" frames are textured renderings of the same figure, so frame -> pose
estimation can be exercised as a render-then-detect round trip.  Externally
precomputed pose-image directories are accepted through the same directory
format, so a real estimator's output can be dropped in unchanged.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter1d

from . import containers
from .audio_features import FRAME_RATE, Waveform, tick_starts

# figure proportions, fractions of the image side
TORSO_HALF_W = 0.085
TORSO_HALF_H = 0.16
HEAD_RADIUS = 0.065
NECK_GAP = 0.02
UPPER_ARM = 0.13
FOREARM = 0.12
LIMB_RADIUS = 0.028

POSITION_RANGE = (0.30, 0.70)
SHOULDER_RANGE = (-0.6, 1.3)
ELBOW_RANGE = (-2.2, 2.2)

PALETTE = {
    "torso": (0.85, 0.20, 0.20),
    "head": (0.95, 0.75, 0.55),
    "left_upper_arm": (0.20, 0.40, 0.90),
    "left_forearm": (0.20, 0.80, 0.90),
    "right_upper_arm": (0.20, 0.75, 0.30),
    "right_forearm": (0.90, 0.80, 0.20),
}

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class FigureSpec:
    """Torso position (normalized image coords) plus four joint angles.

    Angles are radians: (left shoulder, left elbow, right shoulder, right
    elbow).  Shoulder angles are measured from straight down, positive
    swinging outward; elbow angles are relative bends.
    """

    torso_xy: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        xy = np.asarray(self.torso_xy, dtype=np.float64)
        ang = np.asarray(self.angles, dtype=np.float64)
        if xy.shape != (2,) or ang.shape != (4,):
            raise ValueError("torso_xy must be length 2, angles length 4")
        if np.any(xy < POSITION_RANGE[0]) or np.any(xy > POSITION_RANGE[1]):
            raise ValueError(f"torso position {xy} outside frame range {POSITION_RANGE}")
        for i in (0, 2):
            if not SHOULDER_RANGE[0] <= ang[i] <= SHOULDER_RANGE[1]:
                raise ValueError(f"shoulder angle {ang[i]} outside {SHOULDER_RANGE}")
        for i in (1, 3):
            if not ELBOW_RANGE[0] <= ang[i] <= ELBOW_RANGE[1]:
                raise ValueError(f"elbow angle {ang[i]} outside {ELBOW_RANGE}")
        object.__setattr__(self, "torso_xy", xy)
        object.__setattr__(self, "angles", ang)


def _side_dir(theta, side):
    # direction of a limb at angle theta from straight down; side=+1 right, -1 left
    return np.array([side * np.sin(theta), np.cos(theta)])


def _figure_segments(spec, size):
    """Segment geometry in pixel units, in draw order (arms under torso/head)."""
    center = spec.torso_xy * size
    l_sh, l_el, r_sh, r_el = spec.angles
    segs = []
    for side, name_u, name_f, th_s, th_e in (
        (-1.0, "left_upper_arm", "left_forearm", l_sh, l_el),
        (+1.0, "right_upper_arm", "right_forearm", r_sh, r_el),
    ):
        shoulder = center + size * np.array(
            [side * TORSO_HALF_W, -TORSO_HALF_H + LIMB_RADIUS]
        )
        elbow = shoulder + size * UPPER_ARM * _side_dir(th_s, side)
        hand = elbow + size * FOREARM * _side_dir(th_s + th_e, side)
        segs.append(("capsule", name_u, shoulder, elbow))
        segs.append(("capsule", name_f, elbow, hand))
    segs.append(("rect", "torso", center, None))
    head_center = center + size * np.array(
        [0.0, -(TORSO_HALF_H + NECK_GAP + HEAD_RADIUS)]
    )
    segs.append(("disc", "head", head_center, None))
    return segs


def render_synthetic_pose(spec, size=256):
    """Flat-color figure on an exactly-zero background."""
    return _render(spec, size, textured=False)


def render_textured_frame(spec, size=256):
    """Shaded figure on a dim gray gradient, the synthetic camera frame."""
    return _render(spec, size, textured=True)


def _render(spec, size, textured):
    xs = np.arange(size) + 0.5
    xx, yy = np.meshgrid(xs, xs)
    img = np.zeros((size, size, 3))
    if textured:
        bg = 0.06 + 0.06 * (yy / size) + 0.03 * (xx / size)
        img[:] = bg[:, :, None]
    radius = LIMB_RADIUS * size
    for i, (kind, name, a, b) in enumerate(_figure_segments(spec, size)):
        if kind == "capsule":
            mask = _capsule_mask(xx, yy, a, b, radius)
        elif kind == "rect":
            mask = (np.abs(xx - a[0]) <= TORSO_HALF_W * size) & (
                np.abs(yy - a[1]) <= TORSO_HALF_H * size
            )
        else:
            mask = (xx - a[0]) ** 2 + (yy - a[1]) ** 2 <= (HEAD_RADIUS * size) ** 2
        color = np.array(PALETTE[name])
        if textured:
            shade = 0.85 + 0.15 * np.sin(
                2.0 * np.pi * (3.0 * xx + 2.0 * yy) / size + 1.7 * i
            )
            img[mask] = color[None, :] * shade[mask, None]
        else:
            img[mask] = color
    return np.clip(img, 0.0, 1.0)


def _capsule_mask(xx, yy, p0, p1, radius):
    d = p1 - p0
    dd = float(d @ d)
    px = xx - p0[0]
    py = yy - p0[1]
    if dd < 1e-12:
        t = 0.0
    else:
        t = np.clip((px * d[0] + py * d[1]) / dd, 0.0, 1.0)
    dx = px - t * d[0]
    dy = py - t * d[1]
    return dx * dx + dy * dy <= radius * radius


class SyntheticPoseEstimator:
    """Recovers a FigureSpec from a textured frame by color classification.

    Pixels are split into figure/background by chroma, assigned to the
    nearest palette hue, and each joint angle is read off from the segment
    centroid relative to its anchor.
    """

    chroma_threshold = 0.12

    def __call__(self, frames):
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 4 or frames.shape[0] < 1:
            raise ValueError("expected a non-empty (N, H, W, 3) frame array")
        size = frames.shape[1]
        return np.stack(
            [render_synthetic_pose(self.estimate(f), size) for f in frames]
        )

    def estimate(self, frame):
        size = frame.shape[0]
        names = list(PALETTE)
        directions = np.array([PALETTE[n] for n in names])
        directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)
        chroma = frame.max(axis=2) - frame.min(axis=2)
        fg = chroma > self.chroma_threshold
        norms = np.linalg.norm(frame, axis=2)
        unit = frame / np.maximum(norms, 1e-9)[:, :, None]
        labels = np.argmax(unit @ directions.T, axis=2)
        centroids = {}
        xs = np.arange(size) + 0.5
        xx, yy = np.meshgrid(xs, xs)
        for i, name in enumerate(names):
            mask = fg & (labels == i)
            if mask.sum() == 0:
                centroids[name] = None
            else:
                centroids[name] = np.array([xx[mask].mean(), yy[mask].mean()])
        if centroids["torso"] is None:
            raise ValueError("no torso found in frame")
        center = centroids["torso"]
        torso_xy = np.clip(center / size, POSITION_RANGE[0], POSITION_RANGE[1])
        angles = []
        for side, name_u, name_f in (
            (-1.0, "left_upper_arm", "left_forearm"),
            (+1.0, "right_upper_arm", "right_forearm"),
        ):
            shoulder = center + size * np.array(
                [side * TORSO_HALF_W, -TORSO_HALF_H + LIMB_RADIUS]
            )
            th_s = self._limb_angle(centroids[name_u], shoulder, side, default=0.5)
            th_s = float(np.clip(th_s, *SHOULDER_RANGE))
            elbow = shoulder + size * UPPER_ARM * _side_dir(th_s, side)
            th_abs = self._limb_angle(centroids[name_f], elbow, side, default=th_s)
            th_e = float(np.clip(th_abs - th_s, *ELBOW_RANGE))
            angles.append((th_s, th_e))
        (l_sh, l_el), (r_sh, r_el) = angles
        return FigureSpec(torso_xy, np.array([l_sh, l_el, r_sh, r_el]))

    @staticmethod
    def _limb_angle(centroid, anchor, side, default):
        if centroid is None:
            return default
        v = centroid - anchor
        return float(np.arctan2(side * v[0], v[1]))


def poses_from_frames(frames, estimator=None):
    """One pose image per frame; deterministic for a fixed estimator."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 4 or frames.shape[0] < 1:
        raise ValueError("expected a non-empty (N, H, W, 3) frame array")
    if estimator is None:
        estimator = SyntheticPoseEstimator()
    return estimator(frames)


def synthesize_lecture_dataset(seed, n_frames, size=256, sample_rate=16000):
    """Deterministic (frames, poses, audio) triple for training and tests.

    The figure follows a band-limited random walk; frames are textured
    renderings, poses flat renderings, and the audio track is noise
    amplitude-modulated by the figure's motion energy, sample-aligned to the
    30 Hz tick grid.
    """
    if n_frames < 1:
        raise ValueError(f"n_frames must be >= 1, got {n_frames}")
    rng = np.random.default_rng(seed)
    walk = np.cumsum(rng.standard_normal((n_frames, 6)), axis=0)
    smooth = gaussian_filter1d(walk, sigma=5.0, axis=0, mode="nearest")
    z = (smooth - smooth.mean(axis=0)) / np.maximum(smooth.std(axis=0), 1e-9)
    params = np.empty_like(z)
    params[:, 0] = 0.50 + 0.07 * np.tanh(0.9 * z[:, 0])
    params[:, 1] = 0.50 + 0.06 * np.tanh(0.9 * z[:, 1])
    params[:, 2] = 0.60 + 0.35 * np.tanh(0.8 * z[:, 2])
    params[:, 3] = 0.70 * np.tanh(0.8 * z[:, 3])
    params[:, 4] = 0.60 + 0.35 * np.tanh(0.8 * z[:, 4])
    params[:, 5] = 0.70 * np.tanh(0.8 * z[:, 5])

    frames = np.empty((n_frames, size, size, 3))
    poses = np.empty((n_frames, size, size, 3))
    for i in range(n_frames):
        spec = FigureSpec(params[i, :2], params[i, 2:])
        frames[i] = render_textured_frame(spec, size)
        poses[i] = render_synthetic_pose(spec, size)

    starts = tick_starts(n_frames + 1, sample_rate)
    counts = np.diff(starts)
    total = int(starts[-1])
    if n_frames > 1:
        energy = np.linalg.norm(np.diff(params, axis=0), axis=1)
        energy = np.concatenate([[energy[0]], energy])
    else:
        energy = np.zeros(1)
    peak = energy.max()
    envelope = 0.25 + 0.75 * (energy / peak if peak > 0 else energy)
    per_sample = envelope[np.repeat(np.arange(n_frames), counts)]
    audio = np.clip(0.25 * rng.standard_normal(total) * per_sample, -0.999, 0.999)
    return frames, poses, Waveform(audio, sample_rate)


def to_uint8(images):
    return np.round(np.clip(images, 0.0, 1.0) * 255.0).astype(np.uint8)


def to_float(images):
    return np.asarray(images, dtype=np.float64) / 255.0


def save_image_dir(directory, images, source_checksum=None, extra_meta=None):
    """Write frame_%06d.png files plus a manifest.

    Every manifest carries a mandatory ``"synthetic": true`` tag.
    """
    images = np.asarray(images)
    if images.ndim != 4 or images.shape[0] < 1:
        raise ValueError("expected a non-empty (N, H, W, 3) image array")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    data = to_uint8(images) if images.dtype != np.uint8 else images
    for i in range(data.shape[0]):
        Image.fromarray(data[i]).save(directory / f"frame_{i:06d}.png")
    manifest = {
        "format_version": containers.FORMAT_VERSION,
        "fps": FRAME_RATE,
        "frame_rate": FRAME_RATE,
        "count": int(data.shape[0]),
        "source_checksum": source_checksum or "unknown",
        "synthetic": True,
    }
    manifest.update(extra_meta or {})
    with open(directory / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def load_image_dir(directory):
    """Read a pose/frame directory back to (float images in [0,1], manifest)."""
    directory = Path(directory)
    with open(directory / MANIFEST_NAME) as fh:
        manifest = json.load(fh)
    paths = sorted(directory.glob("frame_*.png"))
    if len(paths) != manifest["count"]:
        raise ValueError(
            f"{directory}: manifest count {manifest['count']} != {len(paths)} files"
        )
    images = np.stack(
        [np.asarray(Image.open(p).convert("RGB"), dtype=np.uint8) for p in paths]
    )
    return to_float(images), manifest
