"""Training loop for the context-aware element classifier.

Each epoch shuffles pages with a seeded generator, draws a fresh background
subsample per page (kept elements enter the loss; every element still
serves as a graph neighbor), and averages cross-entropy over the kept rows
of a page batch. Validation after every epoch measures per-class accuracy
on held-out domains; the best-epoch weights are restored at the end.
"""

from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

from .errors import ConfigError, DivergenceError, EmptyDatasetError, ShapeError
from .evaluate import accuracy_report, predict_pages
from .graph import ContextGraph, build_graph
from .ingest import FOREGROUND, Webpage
from .model import ContextAwareDetector, ModelConfig, forward_page, page_image_tensor


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-4
    batch_pages: int = 5
    weight_decay: float = 1e-3
    max_epochs: int = 50
    bg_sample_frac: float = 0.9
    early_stop_patience: int = 5
    seed: int = 0
    k: int = 24
    use_positional: bool = True
    use_context: bool = True
    bg_sampling: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.bg_sample_frac <= 1.0:
            raise ConfigError(f"bg_sample_frac must lie in [0, 1], got {self.bg_sample_frac}")
        if self.batch_pages < 1:
            raise ConfigError("batch_pages must be at least 1")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ConfigError("lr must be positive and weight_decay nonnegative")
        if self.max_epochs < 1 or self.early_stop_patience < 1:
            raise ConfigError("max_epochs and early_stop_patience must be at least 1")
        if self.k < 0:
            raise ConfigError("k cannot be negative")


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    train_loss: float
    val_price_acc: float
    val_title_acc: float
    val_image_acc: float
    wall_time: float

    @property
    def mean_val_acc(self) -> float:
        return (self.val_price_acc + self.val_title_acc + self.val_image_acc) / 3.0

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_price_acc": self.val_price_acc,
            "val_title_acc": self.val_title_acc,
            "val_image_acc": self.val_image_acc,
            "mean_val_acc": self.mean_val_acc,
            "wall_time": self.wall_time,
        }


def sample_background(page: Webpage, frac: float, rng: np.random.Generator) -> frozenset[int]:
    """Element ids kept for the loss: all foreground plus floor(frac*B) background."""
    fg = [el.element_id for el in page.elements if el.label in FOREGROUND]
    bg = sorted(el.element_id for el in page.elements if el.label not in FOREGROUND)
    take = math.floor(frac * len(bg))
    kept_bg = rng.choice(len(bg), size=take, replace=False) if take else []
    return frozenset(fg) | {bg[int(i)] for i in kept_bg}


def loss(logits: Tensor, labels: Tensor, keep_rows: Sequence[int]) -> Tensor:
    """Mean cross-entropy over the kept element rows."""
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (N, C), got {tuple(logits.shape)}")
    if labels.shape[0] != logits.shape[0]:
        raise ShapeError(f"{labels.shape[0]} labels for {logits.shape[0]} logit rows")
    rows = torch.as_tensor(list(keep_rows), dtype=torch.long)
    if rows.numel() == 0:
        raise ShapeError("cannot average a loss over zero kept elements")
    return F.cross_entropy(logits[rows], labels[rows])


@dataclass
class _PagePack:
    page: Webpage
    graph: ContextGraph
    labels: Tensor  # (N,) long, preorder row order
    row_of: dict[int, int]
    fg_rows: list[int]
    bg_rows: list[int]
    roi_flat: Optional[Tensor]  # cached pooled features when the backbone is frozen


def _ordered(page: Webpage):
    return sorted(page.elements, key=lambda e: e.preorder_index)


def _pack_page(
    page: Webpage,
    k: int,
    model: ContextAwareDetector,
    feature_cache: Optional[dict[str, Tensor]],
) -> _PagePack:
    graph = build_graph(page, k)
    elements = _ordered(page)
    labels = torch.tensor([el.label.value for el in elements], dtype=torch.long)
    row_of = {el.element_id: i for i, el in enumerate(elements)}
    fg_rows = [i for i, el in enumerate(elements) if el.label in FOREGROUND]
    bg_rows = [i for i, el in enumerate(elements) if el.label not in FOREGROUND]
    roi = None
    if model.config.freeze_backbone:
        if feature_cache is not None and page.page_id in feature_cache:
            roi = feature_cache[page.page_id]
        else:
            was_training = model.training
            model.eval()
            with torch.no_grad():
                image = page_image_tensor(page, model.config)
                roi = model.page_roi_features(image, [el.bbox for el in elements])
            if was_training:
                model.train()
            if feature_cache is not None:
                feature_cache[page.page_id] = roi
    return _PagePack(page=page, graph=graph, labels=labels, row_of=row_of, fg_rows=fg_rows, bg_rows=bg_rows, roi_flat=roi)


def _keep_rows(pack: _PagePack, cfg: TrainConfig, rng: np.random.Generator) -> list[int]:
    if not cfg.bg_sampling or cfg.bg_sample_frac >= 1.0:
        return list(range(len(pack.labels)))
    kept_ids = sample_background(pack.page, cfg.bg_sample_frac, rng)
    return sorted(pack.row_of[i] for i in kept_ids)


def train(
    train_pages: Sequence[Webpage],
    val_pages: Sequence[Webpage],
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    log_path: Optional[str | Path] = None,
    feature_cache: Optional[dict[str, Tensor]] = None,
) -> tuple[ContextAwareDetector, list[EpochReport]]:
    """Fit on train_pages, early-stop on val_pages, return best-epoch model.

    Deterministic given cfg.seed on one platform: page order, background
    draws, parameter init, and dropout all derive from it. feature_cache
    (page_id -> pooled features) is filled and reused when the backbone is
    frozen, so repeated runs on one dataset skip the convolution pass.
    """
    if not train_pages or not val_pages:
        raise EmptyDatasetError("training and validation sets must both be non-empty")
    overlap = {p.domain for p in train_pages} & {p.domain for p in val_pages}
    if overlap:
        raise ConfigError(f"train/val domains overlap: {sorted(overlap)}")

    torch.manual_seed(cfg.seed)
    mc = replace(model_cfg, use_positional=cfg.use_positional, use_context=cfg.use_context)
    model = ContextAwareDetector(mc)
    k_eff = cfg.k if cfg.use_context else 0

    train_sorted = sorted(train_pages, key=lambda p: p.page_id)
    val_sorted = sorted(val_pages, key=lambda p: p.page_id)
    packs = [_pack_page(p, k_eff, model, feature_cache) for p in train_sorted]
    val_graphs = {p.page_id: build_graph(p, k_eff) for p in val_sorted}
    if mc.freeze_backbone and feature_cache is not None:
        for p in val_sorted:
            _pack_page(p, k_eff, model, feature_cache)  # warm the cache for validation

    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)

    log_fh = open(log_path, "a") if log_path else None
    reports: list[EpochReport] = []
    best_metric = -1.0
    best_state: Optional[dict] = None
    stale = 0
    try:
        for epoch in range(cfg.max_epochs):
            t0 = time.monotonic()
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((cfg.seed, 1000003, epoch))))
            order = rng.permutation(len(packs))
            model.train()
            batch_losses: list[float] = []
            for lo in range(0, len(order), cfg.batch_pages):
                batch = order[lo : lo + cfg.batch_pages]
                optimizer.zero_grad()
                picked_logits: list[Tensor] = []
                picked_labels: list[Tensor] = []
                for idx in batch:
                    pack = packs[int(idx)]
                    image = None if pack.roi_flat is not None else page_image_tensor(pack.page, mc)
                    logits, _ = forward_page(model, pack.page, pack.graph, image=image, roi_flat=pack.roi_flat)
                    rows = _keep_rows(pack, cfg, rng)
                    picked_logits.append(logits[rows])
                    picked_labels.append(pack.labels[rows])
                batch_loss = F.cross_entropy(torch.cat(picked_logits), torch.cat(picked_labels))
                if not torch.isfinite(batch_loss):
                    raise DivergenceError(f"non-finite loss at epoch {epoch}")
                batch_loss.backward()
                optimizer.step()
                batch_losses.append(float(batch_loss.detach()))

            preds = predict_pages(model, val_sorted, k_eff, feature_cache=feature_cache, graphs=val_graphs)
            acc = accuracy_report(preds, val_sorted)
            report = EpochReport(
                epoch=epoch,
                train_loss=float(np.mean(batch_losses)),
                val_price_acc=acc["price"],
                val_title_acc=acc["title"],
                val_image_acc=acc["image"],
                wall_time=time.monotonic() - t0,
            )
            reports.append(report)
            if log_fh:
                log_fh.write(json.dumps(report.to_dict()) + "\n")
                log_fh.flush()

            if report.mean_val_acc > best_metric + 1e-12:
                best_metric = report.mean_val_acc
                best_state = copy.deepcopy(model.state_dict())
                stale = 0
            else:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    break
    finally:
        if log_fh:
            log_fh.close()

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return model, reports
