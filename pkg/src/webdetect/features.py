"""Heuristic per-element features: tag one-hot, text statistics, box geometry.

These feed the extra-feature model variant and are exportable as a plain
matrix for external classifiers.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ingest import WebElement, Webpage

CURRENCY_WORDS = ("USD", "EUR", "GBP", "Rs", "RMB", "¥", "€", "£", "$")
DEFAULT_VOCAB_SIZE = 32
ASPECT_CLAMP = 20.0


@dataclass(frozen=True)
class TagVocabulary:
    """Fixed tag list; unknown tags map to an all-zero one-hot block."""

    tags: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tags", tuple(t.upper() for t in self.tags))

    def index(self, tag: str) -> int | None:
        try:
            return self.tags.index(tag.upper())
        except ValueError:
            return None

    def __len__(self) -> int:
        return len(self.tags)


def build_tag_vocabulary(pages: Iterable[Webpage], size: int = DEFAULT_VOCAB_SIZE) -> TagVocabulary:
    """Most frequent leaf tags of the training pages, capped at `size`.

    Frequency ties break lexicographically so a rebuild is reproducible.
    """
    counts: Counter[str] = Counter()
    for page in pages:
        for e in page.elements:
            counts[e.tag.upper()] += 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return TagVocabulary(tags=tuple(tag for tag, _ in ranked[:size]))


@dataclass(frozen=True)
class HeuristicFeatures:
    tag_onehot: tuple[float, ...]
    font_size: float
    num_words: int
    has_currency: int
    has_text: int
    has_number: int
    bbox_feats: tuple[float, float, float, float, float]  # x, y, w, h, w/h

    def to_vector(self) -> np.ndarray:
        return np.array(
            [
                *self.tag_onehot,
                self.font_size,
                float(self.num_words),
                float(self.has_currency),
                float(self.has_text),
                float(self.has_number),
                *self.bbox_feats,
            ],
            dtype=np.float64,
        )


def feature_dim(vocab: TagVocabulary) -> int:
    # one-hot block + (font_size, num_words) + 3 binary flags + 5 box numbers
    return len(vocab) + 2 + 3 + 5


def _has_currency(text: str) -> bool:
    if any(unicodedata.category(ch) == "Sc" for ch in text):
        return True
    return any(word in text for word in CURRENCY_WORDS)


def _has_number(text: str) -> bool:
    return any(ch.isdigit() for ch in text)


def heuristic_features(
    e: WebElement, vocab: TagVocabulary, viewport: tuple[int, int] = (1280, 1280)
) -> HeuristicFeatures:
    """Deterministic feature vector for one element.

    Box numbers stay in raw pixels; consumers normalize. Aspect ratio is
    clamped to [0, ASPECT_CLAMP] and is 0 for zero-height boxes.
    """
    onehot = [0.0] * len(vocab)
    idx = vocab.index(e.tag)
    if idx is not None:
        onehot[idx] = 1.0
    text = e.text or ""
    words = text.split()
    x, y, w, h = e.bbox
    ratio = min(w / h, ASPECT_CLAMP) if h > 0 else 0.0
    return HeuristicFeatures(
        tag_onehot=tuple(onehot),
        font_size=float(e.font_size) if e.font_size is not None else 0.0,
        num_words=len(words),
        has_currency=int(bool(text) and _has_currency(text)),
        has_text=int(bool(text.strip())),
        has_number=int(bool(text) and _has_number(text)),
        bbox_feats=(x, y, w, h, ratio),
    )


def feature_matrix(
    elements: Sequence[WebElement], vocab: TagVocabulary, viewport: tuple[int, int] = (1280, 1280)
) -> np.ndarray:
    """One row per element, columns per the manifest from `column_manifest`."""
    rows = [heuristic_features(e, vocab, viewport).to_vector() for e in elements]
    return np.stack(rows) if rows else np.zeros((0, feature_dim(vocab)))


def column_manifest(vocab: TagVocabulary) -> list[str]:
    return (
        [f"tag:{t}" for t in vocab.tags]
        + ["font_size", "num_words", "has_currency", "has_text", "has_number"]
        + ["bbox_x", "bbox_y", "bbox_w", "bbox_h", "bbox_aspect"]
    )


def export_features(
    path: str | Path, elements: Sequence[WebElement], vocab: TagVocabulary
) -> None:
    """Write the matrix as .npy next to a JSON column manifest."""
    path = Path(path)
    np.save(path.with_suffix(".npy"), feature_matrix(elements, vocab))
    path.with_suffix(".columns.json").write_text(json.dumps(column_manifest(vocab), indent=2))
