"""Audio-driven full-pose video synthesis through pose-image latent codes.

The pipeline maps a narration to frames in three learned stages: audio
features to 128-dim latent codes (bidirectional LSTM over look-back
windows), codes to pose images (VAE decoder), and pose images to frames
(paired GAN with structural and temporal constraints).
"""

from .audio_features import (
    FeatureConfig,
    NormStats,
    Waveform,
    extract_log_mel,
    fit_norm_stats,
    load_wav,
    make_windows,
    normalize,
    resample,
    save_wav,
)
from .audio2code import (
    BlstmConfig,
    BlstmTrainConfig,
    WindowBlstm,
    blstm_forward,
    predict_sequence,
    train_blstm,
    window_ablation,
)
from .metrics import MetricReport, evaluate_set, metric_report, mse, psnr, ssim
from .perceptual import FeatureStack, PerceptualExtractor, perceptual_distance
from .pipeline import (
    DataStore,
    DependencyError,
    ModelBundle,
    PipelineConfig,
    export_frames,
    prepare_dataset,
    synthesize,
    train_all,
)
from .pose_codec import (
    PoseVae,
    VaeConfig,
    VaeLossReport,
    VaeTrainConfig,
    decode,
    encode,
    gaussian_kl,
    sample_latent,
    train_vae,
    vae_loss,
)
from .pose_provider import (
    FigureSpec,
    SyntheticPoseEstimator,
    poses_from_frames,
    render_synthetic_pose,
    synthesize_lecture_dataset,
)
from .temporal_gan import (
    FrameDiscriminator,
    GanTrainConfig,
    LossWeights,
    SeqLossReport,
    UNet,
    generate,
    lsgan_losses,
    predict_next,
    sequence_objective,
    synthesize_frames,
    train_temporal_gan,
)

__version__ = "0.1.0"
