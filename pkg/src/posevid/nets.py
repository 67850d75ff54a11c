"""Shared helpers for the torch-backed models.

All parameter initialization is drawn from numpy generators so that model
construction, and therefore training, is bit-reproducible for a given seed.
"""

import numpy as np
import torch


def seeded_init(module, seed):
    """Fill parameters deterministically: He-scaled weights, zero biases."""
    rng = np.random.default_rng(seed)
    with torch.no_grad():
        for name, p in module.named_parameters():
            if p.ndim > 1:
                fan_in = int(np.prod(p.shape[1:]))
                values = rng.standard_normal(tuple(p.shape)) * np.sqrt(2.0 / fan_in)
            else:
                values = np.zeros(tuple(p.shape))
            p.copy_(torch.from_numpy(values).to(p.dtype))
    return module


def to_batch(images, dtype=torch.float32):
    """(H, W, 3) or (N, H, W, 3) numpy in [0,1] -> torch (N, 3, H, W)."""
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[3] != 3:
        raise ValueError(f"expected (N, H, W, 3) images, got shape {arr.shape}")
    return torch.from_numpy(arr.transpose(0, 3, 1, 2)).to(dtype).contiguous()


def to_images(batch):
    """torch (N, 3, H, W) -> numpy (N, H, W, 3) float64."""
    return batch.detach().double().numpy().transpose(0, 2, 3, 1)


def state_arrays(module):
    """state_dict as plain numpy arrays for the container format."""
    return {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def load_state_arrays(module, arrays, prefix=""):
    state = {}
    for key, tensor in module.state_dict().items():
        full = prefix + key
        if full not in arrays:
            raise ValueError(f"checkpoint missing parameter {full!r}")
        state[key] = torch.from_numpy(np.asarray(arrays[full])).to(tensor.dtype)
    module.load_state_dict(state)
    return module


def parameters_unchanged(module, snapshot):
    """True when every parameter still equals the snapshot bitwise."""
    current = state_arrays(module)
    return all(np.array_equal(current[k], snapshot[k]) for k in snapshot)
