"""Detection network: shared conv backbone, RoI pooling, positional encoder,
neighbor attention, and the classification head.

Every element of a page gets a visual vector (pooled backbone features plus
encoded box geometry), a contextual vector (attention-weighted projection of
its graph neighbors), and four logits ordered (price, title, image,
background). The backbone runs once per page; everything downstream is per
element.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from torch import Tensor, nn

from .errors import CheckpointError, EmptyNeighborhood, ShapeError
from .features import TagVocabulary, feature_dim, feature_matrix
from .graph import ContextGraph
from .ingest import Webpage

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
ASPECT_CLAMP = 20.0
_EPS = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    roi_output: tuple[int, int] = (3, 3)
    pos_dim: int = 32
    proj_dim: int = 384
    backbone_channels: int = 64
    dropout: float = 0.2
    leaky_slope: float = 0.01
    num_classes: int = 4
    use_context: bool = True
    use_extra_features: bool = False
    use_positional: bool = True
    backbone: str = "resnet18"  # "resnet18" (truncated) or "small" (2-conv stack)
    pretrained_backbone: bool = True
    freeze_backbone: bool = False
    input_size: int = 1280
    head_hidden: int = 128
    extra_vocab: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        for name in ("pos_dim", "proj_dim", "backbone_channels", "input_size", "head_hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.backbone not in ("resnet18", "small"):
            raise ValueError(f"unknown backbone {self.backbone!r}")
        if self.use_extra_features and self.extra_vocab is None:
            raise ValueError("use_extra_features requires extra_vocab")
        if isinstance(self.roi_output, list):
            object.__setattr__(self, "roi_output", tuple(self.roi_output))
        if isinstance(self.extra_vocab, list):
            object.__setattr__(self, "extra_vocab", tuple(self.extra_vocab))

    @property
    def roi_dim(self) -> int:
        return self.backbone_channels * self.roi_output[0] * self.roi_output[1]

    @property
    def extra_dim(self) -> int:
        if not self.use_extra_features:
            return 0
        return feature_dim(TagVocabulary(tags=self.extra_vocab))

    @property
    def visual_dim(self) -> int:
        return self.roi_dim + (self.pos_dim if self.use_positional else 0) + self.extra_dim

    @property
    def pixel_mean(self) -> tuple[float, float, float]:
        return IMAGENET_MEAN if self.backbone == "resnet18" else (0.5, 0.5, 0.5)

    @property
    def pixel_std(self) -> tuple[float, float, float]:
        return IMAGENET_STD if self.backbone == "resnet18" else (0.25, 0.25, 0.25)


def positional_raw(bbox: Sequence[float]) -> tuple[float, float, float, float, float]:
    """Raw (x, y, w, h, w/h) tuple before normalization."""
    x, y, w, h = (float(v) for v in bbox)
    ratio = w / h if h > 0 else 0.0
    return (x, y, w, h, ratio)


def positional_inputs(bboxes: Tensor, viewport: float) -> Tensor:
    """Normalized encoder inputs: x, y, w, h over the viewport side, ratio clamped."""
    x, y, w, h = bboxes.unbind(dim=-1)
    ratio = (w / h.clamp(min=_EPS)).clamp(0.0, ASPECT_CLAMP)
    return torch.stack([x / viewport, y / viewport, w / viewport, h / viewport, ratio], dim=-1)


def project_box_to_cells(
    bbox: Sequence[float], stride: int, fmap_hw: tuple[int, int]
) -> tuple[int, int, int, int]:
    """Pixel box -> half-open feature-cell rect (r0, r1, c0, c1).

    Floor/ceil quantization, clipped to the map, expanded so degenerate
    boxes still cover at least one cell.
    """
    x, y, w, h = bbox
    hmax, wmax = fmap_hw
    c0 = int(math.floor(x / stride))
    r0 = int(math.floor(y / stride))
    c1 = int(math.ceil((x + w) / stride))
    r1 = int(math.ceil((y + h) / stride))
    c0 = min(max(c0, 0), wmax - 1)
    r0 = min(max(r0, 0), hmax - 1)
    c1 = max(min(c1, wmax), c0 + 1)
    r1 = max(min(r1, hmax), r0 + 1)
    return r0, r1, c0, c1


def roi_pool(
    fmap: Tensor, bbox: Sequence[float], out: tuple[int, int], stride: int
) -> Tensor:
    """Max-pool the box's projection on the feature map to a fixed grid.

    Output cell (i, j) is the max over its quantized sub-window; sub-window
    boundaries are floor(i*H/out_h) .. ceil((i+1)*H/out_h) of the box rect,
    so windows overlap when the rect is smaller than the grid.
    """
    if fmap.dim() != 3:
        raise ShapeError(f"fmap must be CxHxW, got shape {tuple(fmap.shape)}")
    out_h, out_w = out
    r0, r1, c0, c1 = project_box_to_cells(bbox, stride, (fmap.shape[1], fmap.shape[2]))
    region = fmap[:, r0:r1, c0:c1]
    bh, bw = r1 - r0, c1 - c0
    rows = [(math.floor(i * bh / out_h), math.ceil((i + 1) * bh / out_h)) for i in range(out_h)]
    cols = [(math.floor(j * bw / out_w), math.ceil((j + 1) * bw / out_w)) for j in range(out_w)]
    cells = []
    for ra, rb in rows:
        for ca, cb in cols:
            cells.append(region[:, ra:rb, ca:cb].amax(dim=(1, 2)))
    return torch.stack(cells, dim=1).reshape(fmap.shape[0], out_h, out_w)


def attention_scores(
    v_i: Tensor, neighbors: Tensor, a: Tensor, w1: Tensor, w2: Tensor, slope: float = 0.01
) -> Tensor:
    """Softmax attention over the neighbor set.

    Logit per neighbor j is LeakyReLU(a . [w1 v_i ; w2 v_j]); the softmax is
    stabilized by max subtraction.
    """
    if neighbors.dim() != 2 or neighbors.shape[0] == 0:
        raise EmptyNeighborhood("attention requires at least one neighbor")
    p = w1.shape[0]
    s_self = torch.dot(a[:p], w1 @ v_i)
    s_nbrs = (neighbors @ w2.T) @ a[p:]
    logits = nn.functional.leaky_relu(s_self + s_nbrs, negative_slope=slope)
    logits = logits - logits.max()
    weights = torch.exp(logits)
    return weights / weights.sum()


def context_repr(neighbors: Tensor, alpha: Tensor, w2: Tensor) -> Tensor:
    """Attention-weighted sum of projected neighbor vectors."""
    if alpha.shape[0] != neighbors.shape[0]:
        raise ShapeError(f"{alpha.shape[0]} weights for {neighbors.shape[0]} neighbors")
    return alpha @ (neighbors @ w2.T)


class SmallBackbone(nn.Module):
    """Two-conv stack with the same channel count as the truncated residual net."""

    stride = 8

    def __init__(self, out_channels: int) -> None:
        super().__init__()
        mid = max(out_channels // 2, 8)
        self.net = nn.Sequential(
            nn.Conv2d(3, mid, kernel_size=5, stride=4, padding=2),
            nn.BatchNorm2d(mid),
            nn.ReLU(inplace=True),
            nn.Conv2d(mid, out_channels, kernel_size=3, stride=2, padding=1),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True),
        )

    def forward(self, x: Tensor) -> Tensor:
        return self.net(x)


class ResNetBackbone(nn.Module):
    """First stages of an 18-layer residual net, ending at the 64-channel map."""

    stride = 4

    def __init__(self, pretrained: bool) -> None:
        super().__init__()
        from torchvision.models import resnet18

        weights = None
        if pretrained:
            from torchvision.models import ResNet18_Weights

            weights = ResNet18_Weights.DEFAULT
        net = resnet18(weights=weights)
        self.net = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool, net.layer1)

    def forward(self, x: Tensor) -> Tensor:
        return self.net(x)


class PositionalEncoder(nn.Module):
    """Single affine layer over normalized box geometry, batch-normed, rectified."""

    def __init__(self, pos_dim: int) -> None:
        super().__init__()
        self.linear = nn.Linear(5, pos_dim)
        self.bn = nn.BatchNorm1d(pos_dim)

    def forward(self, pos_in: Tensor) -> Tensor:
        return nn.functional.relu(self.bn(self.linear(pos_in)))


class ClassifierHead(nn.Module):
    def __init__(self, in_dim: int, hidden: int, num_classes: int, dropout: float) -> None:
        super().__init__()
        self.hidden = nn.Linear(in_dim, hidden)
        self.bn = nn.BatchNorm1d(hidden)
        self.dropout = nn.Dropout(dropout)
        self.out = nn.Linear(hidden, num_classes)

    def forward(self, x: Tensor) -> Tensor:
        h = self.dropout(nn.functional.relu(self.bn(self.hidden(x))))
        return self.out(h)


class ContextAwareDetector(nn.Module):
    """Full network over one or more pages' elements.

    Heavy linear algebra is batched across elements; per-page structure only
    matters for the neighbor gather.
    """

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        if config.backbone == "small":
            self.backbone: nn.Module = SmallBackbone(config.backbone_channels)
        else:
            if config.backbone_channels != 64:
                raise ValueError("the truncated residual backbone emits 64 channels")
            self.backbone = ResNetBackbone(pretrained=config.pretrained_backbone)
        if config.freeze_backbone:
            for p in self.backbone.parameters():
                p.requires_grad_(False)
        self.pos_encoder = PositionalEncoder(config.pos_dim) if config.use_positional else None
        self.w1 = nn.Linear(config.visual_dim, config.proj_dim, bias=False)
        self.w2 = nn.Linear(config.visual_dim, config.proj_dim, bias=False)
        self.attn = nn.Parameter(torch.empty(2 * config.proj_dim))
        nn.init.normal_(self.attn, std=1.0 / math.sqrt(2 * config.proj_dim))
        self.head = ClassifierHead(
            config.visual_dim + config.proj_dim, config.head_hidden, config.num_classes, config.dropout
        )

    # -- backbone ---------------------------------------------------------

    @property
    def backbone_stride(self) -> int:
        return self.backbone.stride

    def backbone_features(self, image: Tensor) -> Tensor:
        """Feature map for one normalized screenshot tensor (3, S, S)."""
        s = self.config.input_size
        if image.shape != (3, s, s):
            raise ShapeError(f"expected image of shape (3, {s}, {s}), got {tuple(image.shape)}")
        grad = torch.is_grad_enabled() and not self.config.freeze_backbone
        with torch.set_grad_enabled(grad):
            return self.backbone(image.unsqueeze(0)).squeeze(0)

    def roi_features(self, fmap: Tensor, bboxes: Sequence[Sequence[float]]) -> Tensor:
        """Flattened pooled features per box: (N, roi_dim)."""
        pooled = [roi_pool(fmap, b, self.config.roi_output, self.backbone_stride).reshape(-1) for b in bboxes]
        return torch.stack(pooled) if pooled else fmap.new_zeros((0, self.config.roi_dim))

    def page_roi_features(self, image: Tensor, bboxes: Sequence[Sequence[float]]) -> Tensor:
        return self.roi_features(self.backbone_features(image), bboxes)

    # -- element-level network --------------------------------------------

    def visual_repr(self, roi_flat: Tensor, bboxes: Tensor, extra: Optional[Tensor]) -> Tensor:
        if roi_flat.shape[1] != self.config.roi_dim:
            raise ShapeError(f"roi features have dim {roi_flat.shape[1]}, expected {self.config.roi_dim}")
        parts = [roi_flat]
        if self.pos_encoder is not None:
            parts.append(self.pos_encoder(positional_inputs(bboxes, float(self.config.input_size))))
        if self.config.use_extra_features:
            if extra is None:
                raise ShapeError("model expects extra features but none were given")
            parts.append(self._normalize_extra(extra))
        return torch.cat(parts, dim=1)

    def _normalize_extra(self, extra: Tensor) -> Tensor:
        if extra.shape[1] != self.config.extra_dim:
            raise ShapeError(f"extra features have dim {extra.shape[1]}, expected {self.config.extra_dim}")
        # Raw-pixel columns are rescaled here so the concat stays O(1).
        out = extra.clone()
        side = float(self.config.input_size)
        out[:, -5:-1] = out[:, -5:-1] / side
        out[:, -1] = out[:, -1] / ASPECT_CLAMP
        k = extra.shape[1] - 10
        out[:, k] = out[:, k] / 100.0  # font size, px
        out[:, k + 1] = torch.clamp(out[:, k + 1], max=100.0) / 100.0  # word count
        return out

    def contextual_repr(self, v: Tensor, neighbor_idx: Optional[Tensor]) -> tuple[Tensor, Optional[Tensor]]:
        """Context vectors and attention weights for element rows.

        neighbor_idx is (R, K) of row indices into v, or None when context is
        disabled or empty; then the context block is all zeros.
        """
        if not self.config.use_context or neighbor_idx is None or neighbor_idx.numel() == 0:
            return v.new_zeros((v.shape[0], self.config.proj_dim)), None
        p = self.config.proj_dim
        w1v = self.w1(v)
        w2v = self.w2(v)
        s_self = w1v @ self.attn[:p]
        s_nbr = w2v @ self.attn[p:]
        logits = nn.functional.leaky_relu(
            s_self.unsqueeze(1) + s_nbr[neighbor_idx], negative_slope=self.config.leaky_slope
        )
        alpha = torch.softmax(logits, dim=1)
        ctx = torch.bmm(alpha.unsqueeze(1), w2v[neighbor_idx]).squeeze(1)
        return ctx, alpha

    def logits_from_reprs(self, v: Tensor, c: Tensor) -> Tensor:
        if v.shape[1] != self.config.visual_dim or c.shape[1] != self.config.proj_dim:
            raise ShapeError(
                f"got visual dim {v.shape[1]} and context dim {c.shape[1]}, "
                f"expected {self.config.visual_dim} and {self.config.proj_dim}"
            )
        return self.head(torch.cat([v, c], dim=1))

    def forward_elements(
        self,
        roi_flat: Tensor,
        bboxes: Tensor,
        extra: Optional[Tensor],
        neighbor_idx: Optional[Tensor],
    ) -> tuple[Tensor, Optional[Tensor]]:
        v = self.visual_repr(roi_flat, bboxes, extra)
        c, alpha = self.contextual_repr(v, neighbor_idx)
        return self.logits_from_reprs(v, c), alpha


def graph_index_matrix(page: Webpage, graph: ContextGraph) -> Optional[torch.Tensor]:
    """Neighbor lists as a row-index matrix aligned with preorder element order."""
    elements = sorted(page.elements, key=lambda e: e.preorder_index)
    row_of = {e.element_id: i for i, e in enumerate(elements)}
    lists = [graph.neighbors[e.element_id] for e in elements]
    width = len(lists[0]) if lists else 0
    if any(len(l) != width for l in lists):
        raise ShapeError("neighbor lists must share one length per page")
    if width == 0:
        return None
    return torch.tensor([[row_of[j] for j in l] for l in lists], dtype=torch.long)


def page_image_tensor(page: Webpage, config: ModelConfig, dtype: torch.dtype = torch.float32) -> Tensor:
    from PIL import Image

    with Image.open(page.screenshot_ref) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    t = torch.from_numpy(arr).permute(2, 0, 1).to(dtype)
    mean = torch.tensor(config.pixel_mean, dtype=dtype).view(3, 1, 1)
    std = torch.tensor(config.pixel_std, dtype=dtype).view(3, 1, 1)
    return (t - mean) / std


def page_extra_features(page: Webpage, config: ModelConfig, dtype: torch.dtype = torch.float32) -> Optional[Tensor]:
    if not config.use_extra_features:
        return None
    vocab = TagVocabulary(tags=config.extra_vocab)
    elements = sorted(page.elements, key=lambda e: e.preorder_index)
    mat = feature_matrix(elements, vocab, (config.input_size, config.input_size))
    return torch.from_numpy(mat).to(dtype)


def forward_page(
    model: ContextAwareDetector,
    page: Webpage,
    graph: ContextGraph,
    image: Optional[Tensor] = None,
    roi_flat: Optional[Tensor] = None,
) -> tuple[Tensor, dict[int, dict[int, float]]]:
    """Logits for every element of one page, rows in preorder order.

    Either a normalized image tensor or precomputed pooled features may be
    supplied; attention weights come back keyed by element id.
    """
    elements = sorted(page.elements, key=lambda e: e.preorder_index)
    dtype = next(model.parameters()).dtype
    if roi_flat is None:
        if image is None:
            image = page_image_tensor(page, model.config, dtype)
        roi_flat = model.page_roi_features(image, [e.bbox for e in elements])
    bboxes = torch.tensor([e.bbox for e in elements], dtype=dtype)
    extra = page_extra_features(page, model.config, dtype)
    neighbor_idx = graph_index_matrix(page, graph)
    logits, alpha = model.forward_elements(roi_flat, bboxes, extra, neighbor_idx)

    # Alpha columns follow the graph's neighbor list order.
    attn: dict[int, dict[int, float]] = {}
    if alpha is not None:
        alpha_np = alpha.detach().cpu().numpy()
        for i, e in enumerate(elements):
            attn[e.element_id] = {
                nbr: float(alpha_np[i, j]) for j, nbr in enumerate(graph.neighbors[e.element_id])
            }
    else:
        attn = {e.element_id: {} for e in elements}
    return logits, attn


# -- checkpoints -----------------------------------------------------------

CHECKPOINT_FORMAT = 1


def save_checkpoint(path: str | Path, model: ContextAwareDetector) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(model.config),
        "state": model.state_dict(),
        "shapes": {k: list(t.shape) for k, t in model.state_dict().items()},
    }
    torch.save(payload, str(path))


def load_checkpoint(path: str | Path) -> ContextAwareDetector:
    payload = torch.load(str(path), map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"unrecognized checkpoint format in {path}")
    cfg_dict = dict(payload["config"])
    cfg_dict["roi_output"] = tuple(cfg_dict["roi_output"])
    if cfg_dict.get("extra_vocab") is not None:
        cfg_dict["extra_vocab"] = tuple(cfg_dict["extra_vocab"])
    # Never fetch weights on load; the stored state overwrites them anyway.
    cfg = ModelConfig(**{**cfg_dict, "pretrained_backbone": False})
    model = ContextAwareDetector(cfg)
    object.__setattr__(model.config, "pretrained_backbone", cfg_dict["pretrained_backbone"])
    expected = {k: list(t.shape) for k, t in model.state_dict().items()}
    stored = payload["shapes"]
    if expected != stored:
        missing = sorted(set(expected) - set(stored))
        extra = sorted(set(stored) - set(expected))
        mismatched = sorted(
            k for k in set(expected) & set(stored) if expected[k] != stored[k]
        )
        raise CheckpointError(
            f"shape manifest mismatch: missing={missing} extra={extra} mismatched={mismatched}"
        )
    model.load_state_dict(payload["state"])
    return model
