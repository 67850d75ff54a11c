"""Audio-to-latent regression: one bidirectional LSTM layer per look-back
window, trained with an L2 loss against the pose encoder's mean codes.

Each window of W feature rows predicts the latent code of its final tick.
The forward cell reads rows left to right, the backward cell right to left;
their final hidden states are concatenated and affinely mapped to the code.
"""

import csv
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from . import containers, nets
from .audio_features import make_windows

INIT_SPAN = 0.08


@dataclass(frozen=True)
class BlstmConfig:
    input_dim: int = 40
    hidden: int = 256
    latent_dim: int = 128


class WindowBlstm(nn.Module):
    def __init__(self, cfg=BlstmConfig(), seed=0, dtype=torch.float32):
        super().__init__()
        self.cfg = cfg
        self.dtype_ = dtype
        self.lstm = nn.LSTM(
            cfg.input_dim, cfg.hidden, bidirectional=True, batch_first=True,
            dtype=dtype,
        )
        self.fc = nn.Linear(2 * cfg.hidden, cfg.latent_dim, dtype=dtype)
        self._init_params(seed)

    def _init_params(self, seed):
        # weights uniform in +-0.08; biases zero except forget-gate bias = 1
        rng = np.random.default_rng(seed)
        hidden = self.cfg.hidden
        with torch.no_grad():
            for name, p in self.named_parameters():
                if "bias" in name:
                    values = np.zeros(tuple(p.shape))
                    if name.startswith("lstm.bias_ih"):
                        values[hidden : 2 * hidden] = 1.0
                else:
                    values = rng.uniform(-INIT_SPAN, INIT_SPAN, tuple(p.shape))
                p.copy_(torch.from_numpy(values).to(p.dtype))

    def hidden_t(self, windows):
        """(N, W, input_dim) -> (N, 2*hidden) concat of final directional states."""
        if windows.ndim != 3 or windows.shape[2] != self.cfg.input_dim:
            raise ValueError(
                f"expected (N, W, {self.cfg.input_dim}) windows, "
                f"got {tuple(windows.shape)}"
            )
        _, (h_n, _) = self.lstm(windows)
        return torch.cat([h_n[0], h_n[1]], dim=1)

    def forward(self, windows):
        return self.fc(self.hidden_t(windows))


def blstm_hidden(window, model):
    """Pre-affine concatenated hidden vector for one window."""
    t = torch.from_numpy(np.asarray(window, dtype=np.float64)[None]).to(model.dtype_)
    with torch.no_grad():
        return model.hidden_t(t)[0].double().numpy()


def blstm_forward(window, model):
    """One look-back window -> one latent code."""
    t = torch.from_numpy(np.asarray(window, dtype=np.float64)[None]).to(model.dtype_)
    with torch.no_grad():
        return model(t)[0].double().numpy()


def forward_windows(windows, model, chunk=256):
    """Batched window inference, (T, W, F) -> (T, latent)."""
    windows = np.asarray(windows, dtype=np.float64)
    out = []
    with torch.no_grad():
        for i in range(0, len(windows), chunk):
            t = torch.from_numpy(windows[i : i + chunk]).to(model.dtype_)
            out.append(model(t).double().numpy())
    return np.concatenate(out, axis=0)


def predict_sequence(features, model, window):
    """Feature rows -> one latent code per tick via look-back windows."""
    return forward_windows(make_windows(features, window), model)


@dataclass
class BlstmTrainConfig:
    lr: float = 0.000001
    steps: int = 2000
    batch_size: int = 0  # 0 = full batch
    seed: int = 0


def _stack_pairs(pairs):
    if isinstance(pairs, tuple) and len(pairs) == 2:
        windows, targets = pairs
        windows = np.asarray(windows, dtype=np.float64)
        targets = np.asarray(targets, dtype=np.float64)
    else:
        pairs = list(pairs)
        if not pairs:
            raise ValueError("training set is empty")
        widths = {np.asarray(w).shape for w, _ in pairs}
        if len(widths) != 1:
            raise ValueError(f"window shapes differ across pairs: {sorted(widths)}")
        windows = np.stack([np.asarray(w, dtype=np.float64) for w, _ in pairs])
        targets = np.stack([np.asarray(t, dtype=np.float64) for _, t in pairs])
    if windows.ndim != 3 or len(windows) == 0:
        raise ValueError("training set is empty or malformed")
    if len(windows) != len(targets):
        raise ValueError("windows and targets differ in length")
    return windows, targets


def train_blstm(pairs, cfg=BlstmTrainConfig(), model=None):
    """Minimize mean squared code error with RMSProp; seed-deterministic."""
    windows, targets = _stack_pairs(pairs)
    if model is None:
        model = WindowBlstm(
            BlstmConfig(input_dim=windows.shape[2], latent_dim=targets.shape[1]),
            seed=cfg.seed,
        )
    w_t = torch.from_numpy(windows).to(model.dtype_)
    t_t = torch.from_numpy(targets).to(model.dtype_)
    optimizer = torch.optim.RMSprop(model.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    n = len(windows)
    history = []
    for _ in range(cfg.steps):
        if cfg.batch_size and cfg.batch_size < n:
            idx = torch.from_numpy(rng.choice(n, size=cfg.batch_size, replace=False))
            batch_w, batch_t = w_t[idx], t_t[idx]
        else:
            batch_w, batch_t = w_t, t_t
        loss = ((model(batch_w) - batch_t) ** 2).mean()
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        history.append(loss.item())
    return model, history


@dataclass(frozen=True)
class AblationRow:
    window: int
    train_mse: float
    val_mse: float


def window_ablation(features, targets, window_list, cfg=BlstmTrainConfig()):
    """Train one model per window length under identical seeds and budget.

    The last 10% of ticks (at least one) is held out contiguously as the
    validation split.
    """
    if not len(window_list):
        raise ValueError("window_list is empty")
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = len(features)
    if len(targets) != n:
        raise ValueError("features and targets differ in tick count")
    n_val = max(1, n // 10)
    split = n - n_val
    if split < 1:
        raise ValueError("too few ticks to split off a validation set")
    rows = []
    for w in window_list:
        windows = make_windows(features, int(w))
        model, _ = train_blstm((windows[:split], targets[:split]), cfg)
        train_mse = float(
            np.mean((forward_windows(windows[:split], model) - targets[:split]) ** 2)
        )
        val_mse = float(
            np.mean((forward_windows(windows[split:], model) - targets[split:]) ** 2)
        )
        rows.append(AblationRow(int(w), train_mse, val_mse))
    return rows


def write_ablation_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window", "train_mse", "val_mse"])
        for row in rows:
            writer.writerow([row.window, f"{row.train_mse:.8f}", f"{row.val_mse:.8f}"])


def format_ablation_table(rows):
    lines = [f"{'window':>8} {'train_mse':>14} {'val_mse':>14}"]
    for row in rows:
        lines.append(f"{row.window:>8d} {row.train_mse:>14.6e} {row.val_mse:>14.6e}")
    return "\n".join(lines)


def save_blstm(path, model):
    meta = {
        "input_dim": model.cfg.input_dim,
        "hidden": model.cfg.hidden,
        "latent_dim": model.cfg.latent_dim,
    }
    containers.save_arrays(path, nets.state_arrays(model), kind="blstm", meta=meta)


def load_blstm(path, dtype=torch.float32):
    arrays, meta = containers.load_arrays(path, kind="blstm")
    model = WindowBlstm(
        BlstmConfig(meta["input_dim"], meta["hidden"], meta["latent_dim"]),
        dtype=dtype,
    )
    return nets.load_state_arrays(model, arrays)
