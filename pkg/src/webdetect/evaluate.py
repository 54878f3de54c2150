"""Inference rule, cross-domain metrics, and domain-disjoint fold splits.

Prediction picks, for each foreground class independently, the element
whose score in that class's column ranks highest. Ranking a column is
invariant under any positive rescaling of that column, and one element may
win several classes. Accuracy is exact element-id match, aggregated over
pages whose domains were never seen in training.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import torch

from .errors import MissingTruthError, TooFewDomainsError
from .graph import ContextGraph, build_graph
from .ingest import FOREGROUND, Label, Webpage
from .model import ContextAwareDetector, forward_page, page_image_tensor


@dataclass(frozen=True)
class Prediction:
    """Per-page winners plus the score table used for top-k credit."""

    page_id: str
    price_id: int
    title_id: int
    image_id: int
    element_ids: tuple[int, ...]  # row order of probs (preorder)
    probs: np.ndarray  # (N, 4) column-softmaxed scores

    def winner(self, label: Label) -> int:
        return {Label.PRICE: self.price_id, Label.TITLE: self.title_id, Label.IMAGE: self.image_id}[label]

    def topk_ids(self, label: Label, k: int) -> tuple[int, ...]:
        col = self.probs[:, label.value]
        order = np.argsort(-col, kind="stable")  # stable: ties to smaller preorder
        take = min(max(k, 1), len(self.element_ids))
        return tuple(self.element_ids[int(i)] for i in order[:take])


def column_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=0, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=0, keepdims=True)


def predict_page(page_id: str, element_ids: Sequence[int], logits: np.ndarray) -> Prediction:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] != len(element_ids) or logits.shape[0] < 1:
        raise ValueError(f"logits must be (N, C) with N = {len(element_ids)}, got {logits.shape}")
    probs = column_softmax(logits)
    winners = {}
    for label in FOREGROUND:
        row = int(np.argmax(probs[:, label.value]))  # first max: smaller preorder wins ties
        winners[label] = int(element_ids[row])
    return Prediction(
        page_id=page_id,
        price_id=winners[Label.PRICE],
        title_id=winners[Label.TITLE],
        image_id=winners[Label.IMAGE],
        element_ids=tuple(int(i) for i in element_ids),
        probs=probs,
    )


Truth = Mapping[str, Mapping[Label, int]]


def page_truth(page: Webpage) -> dict[Label, int]:
    out: dict[Label, int] = {}
    for el in page.elements:
        if el.label in FOREGROUND:
            out[el.label] = el.element_id
    return out


def cross_domain_accuracy(preds: Sequence[Prediction], truth: Truth) -> dict[Label, float]:
    if not preds:
        return {label: 0.0 for label in FOREGROUND}
    hits = {label: 0 for label in FOREGROUND}
    for pred in preds:
        if pred.page_id not in truth:
            raise MissingTruthError(f"no ground truth for page {pred.page_id!r}")
        expected = truth[pred.page_id]
        for label in FOREGROUND:
            if label not in expected:
                raise MissingTruthError(f"page {pred.page_id!r} lacks a {label.name} label")
            if pred.winner(label) == expected[label]:
                hits[label] += 1
    return {label: hits[label] / len(preds) for label in FOREGROUND}


def topk_accuracy(preds: Sequence[Prediction], truth: Truth, k: int) -> dict[Label, float]:
    if not preds:
        return {label: 0.0 for label in FOREGROUND}
    hits = {label: 0 for label in FOREGROUND}
    for pred in preds:
        if pred.page_id not in truth:
            raise MissingTruthError(f"no ground truth for page {pred.page_id!r}")
        expected = truth[pred.page_id]
        for label in FOREGROUND:
            if expected[label] in pred.topk_ids(label, k):
                hits[label] += 1
    return {label: hits[label] / len(preds) for label in FOREGROUND}


def mean_accuracy(acc: Mapping[Label, float]) -> float:
    return sum(acc[label] for label in FOREGROUND) / len(FOREGROUND)


@dataclass(frozen=True)
class FoldSplit:
    fold_id: int
    train_domains: frozenset[str]
    val_domains: frozenset[str]
    test_domains: frozenset[str]

    def __post_init__(self) -> None:
        if self.train_domains & self.val_domains or self.train_domains & self.test_domains or self.val_domains & self.test_domains:
            raise ValueError(f"fold {self.fold_id} has overlapping domain sets")

    def role_of(self, domain: str) -> Optional[str]:
        if domain in self.train_domains:
            return "train"
        if domain in self.val_domains:
            return "val"
        if domain in self.test_domains:
            return "test"
        return None


def make_folds(pages: Iterable[tuple[str, str]], n_folds: int = 5, seed: int = 0) -> list[FoldSplit]:
    """Partition domains into n test groups, one major domain per group.

    `pages` yields (page_id, domain). The n domains with the most pages are
    spread across distinct test groups; the rest are dealt round-robin in
    seeded shuffle order. Fold f tests group f, validates on group f+1 mod n,
    and trains on everything else.
    """
    counts: dict[str, int] = {}
    for _, domain in pages:
        counts[domain] = counts.get(domain, 0) + 1
    domains = sorted(counts)
    if len(domains) < n_folds:
        raise TooFewDomainsError(f"need at least {n_folds} domains, got {len(domains)}")
    by_count = sorted(domains, key=lambda d: (-counts[d], d))
    major, minor = by_count[:n_folds], by_count[n_folds:]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, len(domains)))))
    minor = list(minor)
    rng.shuffle(minor)
    groups: list[list[str]] = [[major[g]] for g in range(n_folds)]
    for i, dom in enumerate(minor):
        groups[i % n_folds].append(dom)
    folds = []
    for f in range(n_folds):
        test = frozenset(groups[f])
        val = frozenset(groups[(f + 1) % n_folds])
        train = frozenset(d for g, grp in enumerate(groups) if g not in (f, (f + 1) % n_folds) for d in grp)
        folds.append(FoldSplit(fold_id=f, train_domains=train, val_domains=val, test_domains=test))
    return folds


def split_pages(pages: Sequence[Webpage], fold: FoldSplit) -> tuple[list[Webpage], list[Webpage], list[Webpage]]:
    train = [p for p in pages if p.domain in fold.train_domains]
    val = [p for p in pages if p.domain in fold.val_domains]
    test = [p for p in pages if p.domain in fold.test_domains]
    return train, val, test


def predict_pages(
    model: ContextAwareDetector,
    pages: Sequence[Webpage],
    k: int,
    feature_cache: Optional[dict[str, torch.Tensor]] = None,
    graphs: Optional[dict[str, ContextGraph]] = None,
) -> list[Prediction]:
    """Run inference over pages, reusing cached RoI features when given."""
    model.eval()
    preds = []
    with torch.no_grad():
        for page in pages:
            graph = graphs[page.page_id] if graphs else build_graph(page, k)
            roi = feature_cache.get(page.page_id) if feature_cache else None
            image = None if roi is not None else page_image_tensor(page, model.config)
            logits, _ = forward_page(model, page, graph, image=image, roi_flat=roi)
            ids = [el.element_id for el in sorted(page.elements, key=lambda e: e.preorder_index)]
            preds.append(predict_page(page.page_id, ids, logits.double().numpy()))
    return preds


def accuracy_report(preds: Sequence[Prediction], pages: Sequence[Webpage], k: int = 1) -> dict[str, float]:
    truth = {p.page_id: page_truth(p) for p in pages}
    acc = cross_domain_accuracy(preds, truth) if k == 1 else topk_accuracy(preds, truth, k)
    return {label.name.lower(): acc[label] for label in FOREGROUND}
