"""Training and evaluation loops for FerretNet on labelled image folders."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import EVAL_CROP, TRAIN_CROP, LabeledDataset, PerturbationSpec, eval_transform, perturb, train_transform
from .lpd import NeighborhoodSpec, lpd_map
from .metrics import accuracy, average_precision
from .model import FerretNet, build_ferretnet
from .nn import Adam, Tensor, no_grad, read_checkpoint, save_checkpoint
from .nn import functional as F
from .nn.checkpoint import CheckpointError
from .validation import check_positive_int, check_seed

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 2e-4
    betas: tuple = (0.937, 0.999)
    weight_decay: float = 5e-4
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    crop_size: int = TRAIN_CROP

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise ValueError(f"betas must be two values in [0, 1), got {self.betas}")
        check_positive_int(self.batch_size, "batch_size")
        check_positive_int(self.epochs, "epochs")
        check_positive_int(self.crop_size, "crop_size")
        check_seed(self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


@dataclass
class TrainResult:
    model: FerretNet
    history: list = field(default_factory=list)
    seconds: float = 0.0


def model_input(image: np.ndarray, spec: NeighborhoodSpec | None) -> np.ndarray:
    """Network input for one transformed image: its LPD map, or the image itself when `spec` is None."""
    if spec is None:
        return np.asarray(image, dtype=np.float32)
    return lpd_map(image, spec).astype(np.float32, copy=False)


def _sample_rng(*key) -> np.random.Generator:
    return np.random.default_rng([int(k) for k in key])


def train(model: FerretNet, dataset: LabeledDataset, config: TrainConfig,
          spec: NeighborhoodSpec | None = NeighborhoodSpec(), progress=None) -> TrainResult:
    """Mini-batch Adam on BCE-with-logits; returns the model and per-epoch loss/ACC.

    Shuffling and augmentation draw from streams keyed on (seed, epoch) and
    (seed, epoch, sample), so a fixed seed reproduces the run exactly.
    """
    labels = dataset.labels
    if len(np.unique(labels)) < 2:
        raise ValueError("single-class dataset: training needs both real and fake images")
    opt = Adam(model.parameters(), lr=config.lr, betas=config.betas, weight_decay=config.weight_decay)
    result = TrainResult(model)
    start = time.perf_counter()
    model.train()
    for epoch in range(config.epochs):
        order = _sample_rng(config.seed, epoch).permutation(len(dataset))
        losses, correct, seen = [], 0, 0
        for s in range(0, len(order), config.batch_size):
            idx = order[s:s + config.batch_size]
            x = np.stack([
                model_input(train_transform(dataset.image(i), _sample_rng(config.seed, epoch, i), config.crop_size),
                            spec)
                for i in idx
            ])
            y = labels[idx].astype(np.float32)
            opt.zero_grad()
            logits = model(Tensor(x))
            loss = F.bce_with_logits(logits, y)
            loss.backward()
            opt.step()
            losses.append(float(loss.data) * len(idx))
            correct += int(((logits.data[:, 0] >= 0) == (y == 1)).sum())
            seen += len(idx)
        rec = {"epoch": epoch + 1, "loss": sum(losses) / seen, "acc": correct / seen}
        result.history.append(rec)
        log.info("epoch %d/%d loss %.4f acc %.4f", epoch + 1, config.epochs, rec["loss"], rec["acc"])
        if progress is not None:
            progress(rec)
    model.eval()
    result.seconds = time.perf_counter() - start
    return result


def predict_logits(model: FerretNet, inputs: np.ndarray, batch_size: int = 32) -> np.ndarray:
    """Eval-mode logits for already preprocessed (N, C, H, W) inputs."""
    model.eval()
    out = []
    with no_grad():
        for s in range(0, len(inputs), batch_size):
            out.append(model(Tensor(np.ascontiguousarray(inputs[s:s + batch_size], dtype=np.float32))).data[:, 0])
    return np.concatenate(out) if out else np.empty(0, dtype=np.float32)


def evaluate(model: FerretNet, dataset: LabeledDataset, spec: NeighborhoodSpec | None = NeighborhoodSpec(),
             perturbation: PerturbationSpec | None = None, seed: int = 0, batch_size: int = 32,
             crop_size: int = EVAL_CROP) -> dict:
    """ACC and AP on `dataset`; an optional perturbation precedes the eval transform."""
    model.eval()
    logits = []
    for s in range(0, len(dataset), batch_size):
        batch = []
        for i in range(s, min(s + batch_size, len(dataset))):
            img = dataset.image(i)
            if perturbation is not None:
                img = perturb(img, perturbation, _sample_rng(seed, i))
            batch.append(model_input(eval_transform(img, crop_size), spec))
        logits.append(predict_logits(model, np.stack(batch), batch_size))
    logits = np.concatenate(logits)
    scores = F.sigmoid(logits.astype(np.float64))
    labels = dataset.labels
    return {"acc": accuracy(scores, labels), "ap": average_precision(scores, labels),
            "n": int(len(labels)), "n_real": int((labels == 0).sum()), "n_fake": int((labels == 1).sum()),
            "perturbation": None if perturbation is None else str(perturbation)}


# --- checkpoints with a training manifest ------------------------------------

def sidecar_path(ckpt) -> Path:
    ckpt = Path(ckpt)
    return ckpt.with_name(ckpt.name + ".json")


def save_trained(path, model: FerretNet, config: TrainConfig, spec: NeighborhoodSpec | None, history) -> None:
    """Write the checkpoint and its ``<path>.json`` training manifest."""
    meta = {"model": model.config(), "lpd": None if spec is None else spec.to_dict()}
    save_checkpoint(path, model, seed=config.seed, metadata=meta)
    manifest = {"model": model.config(), "lpd": meta["lpd"], "train": config.to_dict(),
                "seed": config.seed, "history": list(history)}
    sidecar_path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_trained(path):
    """Rebuild a model from a checkpoint; returns (model, NeighborhoodSpec or None)."""
    manifest, state = read_checkpoint(path)
    meta = manifest.get("metadata") or {}
    cfg = meta.get("model")
    if not cfg:
        raise CheckpointError(f"{path}: checkpoint has no model configuration")
    model = build_ferretnet(cfg["variant"], in_channels=cfg["in_channels"], dropout_p=cfg["dropout_p"],
                            seed=cfg.get("seed", 0))
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    model.eval()
    lpd = meta.get("lpd")
    return model, None if lpd is None else NeighborhoodSpec.from_dict(lpd)
