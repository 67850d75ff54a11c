"""Command-line front end.

Verbs: prepare, train-vae, train-blstm, train-s2p, train-all, synth, eval,
ablate-window, make-synthetic.  Flags override config-file values; the
POSEVID_SEED and POSEVID_OUT_ROOT environment variables override the seed
and root output directory.
"""

import argparse
import os
import sys
from pathlib import Path

from . import audio2code, audio_features, containers, metrics, pose_codec, pose_provider, temporal_gan
from .pipeline import (
    DataStore,
    ModelBundle,
    PipelineConfig,
    build_phi,
    export_frames,
    load_config,
    prepare_dataset,
    synthesize,
    train_all,
    train_blstm_stage,
    train_gan_stage,
    train_vae_stage,
)


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return 2
    return args.func(args) or 0


def _out_path(path):
    path = Path(path)
    root = os.environ.get("POSEVID_OUT_ROOT")
    if root and not path.is_absolute():
        return Path(root) / path
    return path


def _config(args, **overrides):
    return load_config(getattr(args, "config", None), **overrides)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="posevid",
        description="Audio-driven full-pose video synthesis pipeline",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("make-synthetic", help="generate a synthetic lecture dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=120)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_make_synthetic)

    p = sub.add_parser("prepare", help="build an aligned training store")
    p.add_argument("--frames", required=True, help="frame image directory")
    p.add_argument("--audio", required=True, help="WAV narration")
    p.add_argument("--poses", default=None, help="precomputed pose-image directory")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--size", type=int, default=None)
    p.set_defaults(func=_cmd_prepare)

    p = sub.add_parser("train-vae", help="stage 1: pose codec")
    p.add_argument("--data", required=True, help="store dir or pose-image dir")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--kl-weight", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--perceptual", default=None, help="random | pretrained:<path>")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--codes-out", default=None, help="also write encoder means")
    p.set_defaults(func=_cmd_train_vae)

    p = sub.add_parser("train-blstm", help="stage 2a: audio to latent codes")
    p.add_argument("--features", required=True)
    p.add_argument("--codes", required=True)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_blstm)

    p = sub.add_parser("train-s2p", help="stage 2b: pose-to-frame GAN")
    p.add_argument("--clips", required=True, help="store dir with poses/ and frames/")
    p.add_argument("--lambda0", type=float, default=None)
    p.add_argument("--lambda1", type=float, default=None)
    p.add_argument("--lambda2", type=float, default=None)
    p.add_argument("--memory", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--beta1", type=float, default=None)
    p.add_argument("--beta2", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--perceptual", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="checkpoint prefix (gen/disc/pred)")
    p.set_defaults(func=_cmd_train_s2p)

    p = sub.add_parser("train-all", help="all three stages into one bundle")
    p.add_argument("--store", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--perceptual", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="bundle path")
    p.set_defaults(func=_cmd_train_all)

    p = sub.add_parser("synth", help="audio to frames through a trained bundle")
    p.add_argument("--audio", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True, help="frame directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("eval", help="MSE/PSNR/SSIM against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True, help="report CSV")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate-window", help="look-back window length sweep")
    p.add_argument("--features", required=True)
    p.add_argument("--codes", required=True)
    p.add_argument("--list", required=True, help="comma-separated window lengths")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=_cmd_ablate)

    return parser


def _cmd_make_synthetic(args):
    out = _out_path(args.out)
    frames, poses, audio = pose_provider.synthesize_lecture_dataset(
        args.seed, args.frames, size=args.size
    )
    out.mkdir(parents=True, exist_ok=True)
    audio_features.save_wav(out / "audio.wav", audio)
    checksum = containers.file_checksum(out / "audio.wav")
    pose_provider.save_image_dir(out / "frames", frames, source_checksum=checksum)
    pose_provider.save_image_dir(out / "poses", poses, source_checksum=checksum)
    print(f"wrote {args.frames} frames/poses and {audio.duration:.2f}s audio to {out}")


def _cmd_prepare(args):
    cfg = _config(args, image_size=args.size)
    frames, _ = pose_provider.load_image_dir(args.frames)
    audio = audio_features.load_wav(args.audio)
    out = prepare_dataset(frames, audio, _out_path(args.out), cfg, poses=args.poses)
    store = DataStore.load(out)
    print(f"prepared store at {out}: {store.ticks} ticks @ {store.image_size}px")


def _cmd_train_vae(args):
    cfg = _config(
        args, vae_lr=args.lr, kl_weight=args.kl_weight, vae_steps=args.steps,
        seed=args.seed, perceptual=args.perceptual,
    )
    data = Path(args.data)
    if (data / "store.json").exists():
        store = DataStore.load(data)
    else:
        poses, _ = pose_provider.load_image_dir(data)
        store = _pose_only_store(poses)
    vae, history, codes = train_vae_stage(store, cfg)
    out = _out_path(args.out)
    pose_codec.save_vae(out, vae)
    print(f"vae: {len(history)} logged steps, final loss {history[-1].total:.6f} -> {out}")
    if args.codes_out:
        pose_codec.save_codes(_out_path(args.codes_out), codes)
        print(f"codes: {codes.shape} -> {args.codes_out}")


def _pose_only_store(poses):
    class _PoseStore:
        pass

    store = _PoseStore()
    store.poses = poses
    store.image_size = poses.shape[1]
    store.ticks = len(poses)
    return store


def _cmd_train_blstm(args):
    cfg = _config(
        args, blstm_lr=args.lr, blstm_steps=args.steps, seed=args.seed,
        window=args.window,
    )
    rows = audio_features.load_features(args.features)
    codes = pose_codec.load_codes(args.codes)
    stats = audio_features.fit_norm_stats([rows])
    windows = audio_features.make_windows(
        audio_features.normalize(rows, stats), cfg.window
    )
    train_cfg = audio2code.BlstmTrainConfig(
        lr=cfg.blstm_lr, steps=cfg.blstm_steps, seed=cfg.seed
    )
    model, history = audio2code.train_blstm((windows, codes), train_cfg)
    out = _out_path(args.out)
    audio2code.save_blstm(out, model)
    print(f"blstm: mse {history[0]:.6f} -> {history[-1]:.6f} over {len(history)} steps -> {out}")


def _cmd_train_s2p(args):
    cfg = _config(
        args, lambda0=args.lambda0, lambda1=args.lambda1, lambda2=args.lambda2,
        memory=args.memory, gan_lr=args.lr, gan_beta1=args.beta1,
        gan_beta2=args.beta2, gan_steps=args.steps, seed=args.seed,
        perceptual=args.perceptual,
    )
    clips = Path(args.clips)
    poses, _ = pose_provider.load_image_dir(clips / "poses")
    frames, _ = pose_provider.load_image_dir(clips / "frames")

    class _ClipStore:
        pass

    store = _ClipStore()
    store.poses = poses
    store.frames = frames
    gen, disc, pred, history = train_gan_stage(store, cfg)
    out = _out_path(args.out)
    temporal_gan.save_unet(Path(f"{out}.gen.npz"), gen, kind="generator")
    temporal_gan.save_discriminator(Path(f"{out}.disc.npz"), disc)
    temporal_gan.save_unet(Path(f"{out}.pred.npz"), pred, kind="predictor")
    print(
        f"gan: total_g {history[-1].total_g:.4f} after {len(history)} steps "
        f"-> {out}.{{gen,disc,pred}}.npz"
    )


def _cmd_train_all(args):
    cfg = _config(args, seed=args.seed, perceptual=args.perceptual)
    store = DataStore.load(args.store)
    bundle = train_all(store, cfg)
    out = _out_path(args.out)
    checksum = bundle.save(out)
    print(f"bundle -> {out} (sha256 {checksum[:12]})")


def _cmd_synth(args):
    bundle_path = Path(args.bundle)
    bundle = ModelBundle.load(bundle_path)
    audio = audio_features.load_wav(args.audio)
    frames = synthesize(audio, bundle)
    out = _out_path(args.out)
    export_frames(frames, out, bundle_checksum=containers.file_checksum(bundle_path))
    print(f"synthesized {len(frames)} frames -> {out}")


def _cmd_eval(args):
    reports, means = metrics.evaluate_set(args.pred, args.truth)
    out = _out_path(args.out)
    metrics.write_report_csv(out, reports, means)
    print(
        f"{len(reports)} frames: mse {means.mse:.3f}, psnr {means.psnr:.3f} dB, "
        f"ssim {means.ssim:.4f} -> {out}"
    )


def _cmd_ablate(args):
    cfg = _config(args, blstm_lr=args.lr, blstm_steps=args.steps, seed=args.seed)
    rows = audio_features.load_features(args.features)
    codes = pose_codec.load_codes(args.codes)
    stats = audio_features.fit_norm_stats([rows])
    normalized = audio_features.normalize(rows, stats)
    window_list = [int(w) for w in args.list.split(",") if w.strip()]
    train_cfg = audio2code.BlstmTrainConfig(
        lr=cfg.blstm_lr, steps=cfg.blstm_steps, seed=cfg.seed
    )
    table = audio2code.window_ablation(normalized, codes, window_list, train_cfg)
    print(audio2code.format_ablation_table(table))
    out = _out_path(args.out)
    audio2code.write_ablation_csv(out, table)
    print(f"csv -> {out}")


if __name__ == "__main__":
    sys.exit(main())
