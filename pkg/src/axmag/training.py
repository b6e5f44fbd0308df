"""Training loop for the learned magnifier: Adam, shuffling, checkpoints.

Dataset directories follow the generator's layout (one numbered directory
per sample). Samples are loaded lazily per batch; an epoch's order comes
from an RNG keyed by (seed, epoch). Loss components are appended to a CSV
per optimizer step. Single-threaded runs are bit-reproducible for fixed
seeds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import backward
from .datagen import list_samples, read_sample
from .model import Model, ModelConfig, loss_terms, save_model


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    learning_rate: float = 2e-4
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    checkpoint_every: int = 1  # epochs


class Adam:
    """Adaptive-moment optimizer over a named parameter dict."""

    def __init__(self, params: dict, config: TrainConfig):
        self.params = params
        self.config = config
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def step(self) -> None:
        cfg = self.config
        self.step_count += 1
        b1t = 1.0 - cfg.beta1**self.step_count
        b2t = 1.0 - cfg.beta2**self.step_count
        for name, tensor in self.params.items():
            g = tensor.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m += (1.0 - cfg.beta1) * (g - m)
            v += (1.0 - cfg.beta2) * (g * g - v)
            update = (m / b1t) / (np.sqrt(v / b2t) + cfg.eps)
            tensor.data = tensor.data - cfg.learning_rate * update.astype(tensor.data.dtype)

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.grad = None


def load_batch(sample_dirs) -> dict:
    """Stack sample directories into batched training arrays."""
    i1, i2, imag, angles, maps = [], [], [], [], []
    for d in sample_dirs:
        s = read_sample(d)
        i1.append(s["i1"])
        i2.append(s["i2"])
        imag.append(s["i_mag"])
        angles.append(s["angle_deg"])
        maps.append(s["mag_map"])
    return {
        "i1": np.stack(i1),
        "i2": np.stack(i2),
        "i_mag": np.stack(imag),
        "angle": np.asarray(angles, dtype=np.float64),
        "mag_map": np.stack(maps).astype(np.float32),
    }


def train(
    data_dir,
    out_dir,
    model: Model | None = None,
    model_config: ModelConfig | None = None,
    train_config: TrainConfig | None = None,
    log_path=None,
    progress=None,
) -> Model:
    """Train (or continue training) on a generated dataset.

    Writes per-epoch checkpoints to ``<out>/epoch_NNN`` and the final
    weights to ``<out>/final``; the step log goes to ``<out>/train_log.csv``
    unless ``log_path`` overrides it. Aborts with a diagnostic on a
    non-finite loss.
    """
    tc = train_config or TrainConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if model is None:
        model = Model.initialize(model_config or ModelConfig())
    model.set_trainable(True)
    samples = list_samples(data_dir)
    if not samples:
        raise ValueError(f"no samples under {data_dir}")
    optimizer = Adam(model.params, tc)
    log_path = Path(log_path) if log_path else out / "train_log.csv"
    step = 0
    with open(log_path, "w", newline="") as log_file:
        writer = csv.writer(log_file)
        writer.writerow(["step", "loss", "l_recon", "l_texture", "l_shape_x", "l_shape_y"])
        for epoch in range(tc.epochs):
            order = np.random.default_rng([tc.seed, epoch]).permutation(len(samples))
            for start in range(0, len(order), tc.batch_size):
                idx = order[start : start + tc.batch_size]
                batch = load_batch([samples[i] for i in idx])
                rng = np.random.default_rng([tc.seed, epoch, step])
                optimizer.zero_grad()
                terms = loss_terms(model, batch, rng)
                loss_val = float(terms["total"].data)
                if not np.isfinite(loss_val):
                    raise RuntimeError(
                        f"non-finite loss {loss_val} at epoch {epoch} step {step}; "
                        "lower the learning rate or inspect the dataset"
                    )
                backward(terms["total"])
                optimizer.step()
                writer.writerow(
                    [step, loss_val]
                    + [float(terms[k].data) for k in ("l_recon", "l_texture", "l_shape_x", "l_shape_y")]
                )
                step += 1
                if progress is not None:
                    progress(epoch, step, loss_val)
            log_file.flush()
            if (epoch + 1) % tc.checkpoint_every == 0:
                save_model(model, out / f"epoch_{epoch + 1:03d}")
    save_model(model, out / "final")
    return model
