"""Context graph: per-element neighbor sets of the K nearest leaves.

Nearness defaults to absolute difference of leaf preorder indices, which is
total, cheap, and stable across storage order. Shortest-path distance in the
DOM tree is available behind the same interface for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .ingest import DomDump, WebElement


class DistanceMetric(Enum):
    PREORDER = "preorder"
    TREE = "tree"


@dataclass(frozen=True)
class ContextGraph:
    page_id: str
    k: int
    neighbors: dict[int, tuple[int, ...]]  # element_id -> neighbor element_ids

    def to_json_dict(self) -> dict:
        return {
            "page_id": self.page_id,
            "k": self.k,
            "neighbors": {str(eid): list(nbrs) for eid, nbrs in self.neighbors.items()},
        }


def _tree_leaf_distances(dom: DomDump, leaf_ids: Sequence[int]) -> dict[tuple[int, int], int]:
    """Pairwise path lengths between the given leaves via root-path comparison."""
    parent: dict[int, int] = {}
    for node in dom.nodes.values():
        for child in node.children:
            parent[child] = node.node_id
    paths: dict[int, list[int]] = {}
    for leaf in leaf_ids:
        path = [leaf]
        while path[-1] in parent:
            path.append(parent[path[-1]])
        paths[leaf] = path[::-1]  # root first
    dist: dict[tuple[int, int], int] = {}
    for i, a in enumerate(leaf_ids):
        for b in leaf_ids[i + 1 :]:
            pa, pb = paths[a], paths[b]
            common = 0
            for ua, ub in zip(pa, pb):
                if ua != ub:
                    break
                common += 1
            d = (len(pa) - common) + (len(pb) - common)
            dist[(a, b)] = dist[(b, a)] = d
    return dist


def build_graph(
    elements,
    k: int,
    metric: DistanceMetric = DistanceMetric.PREORDER,
    dom: DomDump | None = None,
    page_id: str = "",
) -> ContextGraph:
    """Neighbor lists of the min(k, N-1) nearest leaves per element.

    Accepts a Webpage or a sequence of elements. Ties break toward the
    smaller preorder index; each list is sorted ascending by preorder
    index. k=0 and N=1 both yield empty lists.
    """
    if hasattr(elements, "elements"):  # a Webpage
        page = elements
        elements = page.elements
        dom = dom if dom is not None else page.dom
        page_id = page_id or page.page_id
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    order = sorted(elements, key=lambda e: e.preorder_index)
    if [e.preorder_index for e in order] != list(range(len(order))):
        raise ValueError("elements must carry contiguous preorder indices 0..N-1")
    n = len(order)
    take = min(k, n - 1)

    if metric is DistanceMetric.TREE:
        if dom is None:
            raise ValueError("tree distance requires the DOM dump")
        ids = [e.element_id for e in order]
        dist = _tree_leaf_distances(dom, ids)
        pre_of = {e.element_id: e.preorder_index for e in order}
        neighbors: dict[int, tuple[int, ...]] = {}
        for e in order:
            ranked = sorted(
                (o for o in order if o.element_id != e.element_id),
                key=lambda o: (dist[(e.element_id, o.element_id)], o.preorder_index),
            )[:take]
            neighbors[e.element_id] = tuple(o.element_id for o in sorted(ranked, key=lambda o: pre_of[o.element_id]))
        return ContextGraph(page_id=page_id, k=k, neighbors=neighbors)

    # Preorder metric: the k nearest indices form a contiguous window around i.
    neighbors = {}
    for e in order:
        i = e.preorder_index
        picked: list[int] = []
        lo, hi = i - 1, i + 1
        while len(picked) < take:
            d_lo = i - lo if lo >= 0 else None
            d_hi = hi - i if hi < n else None
            if d_hi is None or (d_lo is not None and d_lo <= d_hi):
                picked.append(lo)
                lo -= 1
            else:
                picked.append(hi)
                hi += 1
        neighbors[e.element_id] = tuple(order[j].element_id for j in sorted(picked))
    return ContextGraph(page_id=page_id, k=k, neighbors=neighbors)


def neighborhood_complete(elements: Sequence[WebElement], page_id: str = "") -> ContextGraph:
    """Every other leaf is a neighbor (full-context comparator)."""
    order = sorted(elements, key=lambda e: e.preorder_index)
    neighbors = {
        e.element_id: tuple(o.element_id for o in order if o.element_id != e.element_id) for e in order
    }
    return ContextGraph(page_id=page_id, k=max(len(order) - 1, 0), neighbors=neighbors)
