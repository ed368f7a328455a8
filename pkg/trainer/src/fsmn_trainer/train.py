"""Training loop: Adam + MSE on PSM targets, plateau-based lr decay."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import ClipData
from .model import FsmnNet

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 3e-4
    lr_decay: float = 0.6
    plateau_eps: float = 1e-3   # decay lr when val loss improves by less
    epochs: int = 100
    batch_size: int = 4         # clips per batch
    val_split: float = 0.2
    seed: int = 0
    input_dim: int = 240
    n_blocks: int = 9
    hidden: int = 256
    proj: int = 256
    lookback: int = 20
    mask_dim: int = 161


@dataclass
class TrainResult:
    net: FsmnNet
    norm_mean: np.ndarray
    norm_std: np.ndarray
    history: list[dict] = field(default_factory=list)
    best_val: float = float("inf")

    def history_table(self) -> str:
        cols = ["epoch", "train_mse", "val_mse", "best_val_mse", "lr", "decayed"]
        lines = ["\t".join(cols)]
        for h in self.history:
            lines.append("\t".join([
                str(h["epoch"]), f"{h['train_mse']:.6f}", f"{h['val_mse']:.6f}",
                f"{h['best_val_mse']:.6f}", f"{h['lr']:.2e}",
                "1" if h["decayed"] else "0"]))
        return "\n".join(lines) + "\n"


def _batch(clips: list[ClipData], mean, std):
    """Stack clips into padded (B, T, dim) tensors plus a frame mask."""
    T = max(len(c.features) for c in clips)
    B = len(clips)
    feats = np.zeros((B, T, clips[0].features.shape[1]), dtype=np.float32)
    targets = np.zeros((B, T, clips[0].targets.shape[1]), dtype=np.float32)
    frame_mask = np.zeros((B, T, 1), dtype=np.float32)
    for i, c in enumerate(clips):
        n = len(c.features)
        feats[i, :n] = (c.features - mean) / std
        targets[i, :n] = c.targets
        frame_mask[i, :n] = 1.0
    return (torch.from_numpy(feats), torch.from_numpy(targets),
            torch.from_numpy(frame_mask))


def _masked_mse(pred, target, frame_mask):
    err = (pred - target) ** 2 * frame_mask
    return err.sum() / (frame_mask.sum() * target.shape[-1])


def _epoch_loss(net, batches):
    net.eval()
    total = weight = 0.0
    with torch.no_grad():
        for feats, targets, fm in batches:
            w = float(fm.sum()) * targets.shape[-1]
            total += float(_masked_mse(net(feats), targets, fm)) * w
            weight += w
    return total / weight


def train(clips: list[ClipData], cfg: TrainConfig,
          norm: tuple[np.ndarray, np.ndarray],
          checkpoint: str | Path | None = None,
          resume: bool = False) -> TrainResult:
    """Train on fixed-seed shuffled clips; returns the best-validation
    model. `checkpoint` is written each epoch and can resume training."""
    torch.manual_seed(cfg.seed)
    mean, std = norm

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(clips))
    n_val = max(1, int(round(cfg.val_split * len(clips)))) if len(clips) > 1 else 0
    val_clips = [clips[i] for i in order[:n_val]]
    tr_clips = [clips[i] for i in order[n_val:]]
    if not tr_clips:
        raise ValueError("validation split leaves no training clips")

    tr_batches = [_batch(tr_clips[i: i + cfg.batch_size], mean, std)
                  for i in range(0, len(tr_clips), cfg.batch_size)]
    val_batches = ([_batch(val_clips[i: i + cfg.batch_size], mean, std)
                    for i in range(0, len(val_clips), cfg.batch_size)]
                   or tr_batches)

    net = FsmnNet(cfg.input_dim, cfg.n_blocks, cfg.hidden, cfg.proj,
                  cfg.lookback, cfg.mask_dim)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.learning_rate)
    result = TrainResult(net=net, norm_mean=mean, norm_std=std)
    best_state = {k: v.clone() for k, v in net.state_dict().items()}
    start_epoch = 0
    prev_val = float("inf")

    if resume and checkpoint and Path(checkpoint).exists():
        ck = torch.load(checkpoint, weights_only=False)
        net.load_state_dict(ck["model"])
        opt.load_state_dict(ck["optimizer"])
        torch.set_rng_state(ck["torch_rng"])
        result.history = ck["history"]
        result.best_val = ck["best_val"]
        best_state = ck["best_state"]
        prev_val = ck["prev_val"]
        start_epoch = ck["epoch"] + 1
        log.info("resumed from %s at epoch %d", checkpoint, start_epoch)

    for epoch in range(start_epoch, cfg.epochs):
        net.train()
        for feats, targets, fm in tr_batches:
            opt.zero_grad()
            loss = _masked_mse(net(feats), targets, fm)
            loss.backward()
            opt.step()

        train_mse = _epoch_loss(net, tr_batches)
        val_mse = _epoch_loss(net, val_batches)
        # decay the rate when the best seen so far stops improving
        decayed = False
        if min(prev_val, result.best_val) - val_mse < cfg.plateau_eps:
            for group in opt.param_groups:
                group["lr"] *= cfg.lr_decay
            decayed = cfg.lr_decay != 1.0
        prev_val = val_mse
        if val_mse < result.best_val:
            result.best_val = val_mse
            best_state = {k: v.clone() for k, v in net.state_dict().items()}
        result.history.append({
            "epoch": epoch, "train_mse": train_mse, "val_mse": val_mse,
            "best_val_mse": result.best_val,
            "lr": opt.param_groups[0]["lr"], "decayed": decayed})
        log.info("epoch %d train %.5f val %.5f lr %.2e%s", epoch, train_mse,
                 val_mse, opt.param_groups[0]["lr"],
                 " (decayed)" if decayed else "")
        if checkpoint:
            torch.save({"model": net.state_dict(),
                        "optimizer": opt.state_dict(),
                        "torch_rng": torch.get_rng_state(),
                        "history": result.history,
                        "best_val": result.best_val,
                        "best_state": best_state,
                        "prev_val": prev_val,
                        "epoch": epoch,
                        "config": cfg.__dict__}, checkpoint)

    net.load_state_dict(best_state)
    return result
