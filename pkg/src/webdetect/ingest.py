"""Parse serialized DOM dumps into validated webpage records.

A dump is the JSON export of a rendered page: one node per DOM element with
its bounding box in screenshot pixels, plus child links. Parsing validates
the tree, pruning removes non-renderable nodes, and the surviving leaves
become the classification units.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import (
    BoundsError,
    CycleError,
    DuplicateLabelError,
    EmptyPageError,
    MissingElementError,
    SchemaError,
)

SCHEMA_VERSION = "1"
DEFAULT_VIEWPORT = (1280, 1280)
DEFAULT_TAG_BLOCKLIST = frozenset({"SCRIPT", "STYLE", "NOSCRIPT", "META", "LINK"})


class Label(Enum):
    PRICE = 0
    TITLE = 1
    IMAGE = 2
    BACKGROUND = 3


# Class order used everywhere a 4-wide axis appears (logits, reports).
CLASS_ORDER = (Label.PRICE, Label.TITLE, Label.IMAGE, Label.BACKGROUND)
FOREGROUND = (Label.PRICE, Label.TITLE, Label.IMAGE)


@dataclass(frozen=True)
class DomNode:
    node_id: int
    tag: str
    bbox: tuple[float, float, float, float]  # x, y, w, h in screenshot pixels
    text: Optional[str] = None
    font_size: Optional[float] = None
    children: tuple[int, ...] = ()


@dataclass(frozen=True)
class DomDump:
    version: str
    viewport: tuple[int, int]
    root: int
    nodes: dict[int, DomNode]

    def preorder(self) -> list[DomNode]:
        """All nodes in depth-first, left-to-right order."""
        out: list[DomNode] = []
        stack = [self.root]
        while stack:
            node = self.nodes[stack.pop()]
            out.append(node)
            stack.extend(reversed(node.children))
        return out


@dataclass(frozen=True)
class WebElement:
    element_id: int
    bbox: tuple[float, float, float, float]
    tag: str
    text: Optional[str]
    font_size: Optional[float]
    label: Label
    preorder_index: int


@dataclass(frozen=True)
class Webpage:
    page_id: str
    domain: str
    screenshot_ref: str
    elements: tuple[WebElement, ...]
    dom: Optional[DomDump] = None
    fully_labeled: bool = False


@dataclass(frozen=True)
class PruneConfig:
    viewport: tuple[int, int] = DEFAULT_VIEWPORT
    tag_blocklist: frozenset[str] = DEFAULT_TAG_BLOCKLIST


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise SchemaError(message)


def _parse_node(obj: object) -> DomNode:
    _require(isinstance(obj, dict), f"node must be an object, got {type(obj).__name__}")
    assert isinstance(obj, dict)
    unknown = set(obj) - {"id", "tag", "bbox", "text", "font_size", "children"}
    _require(not unknown, f"unknown node fields: {sorted(unknown)}")
    _require(isinstance(obj.get("id"), int), "node id must be an integer")
    _require(isinstance(obj.get("tag"), str) and obj["tag"], "node tag must be a nonempty string")
    bbox = obj.get("bbox")
    _require(
        isinstance(bbox, (list, tuple))
        and len(bbox) == 4
        and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in bbox),
        f"node {obj.get('id')}: bbox must be [x, y, w, h] numbers",
    )
    x, y, w, h = (float(v) for v in bbox)
    if w < 0 or h < 0:
        raise BoundsError(f"node {obj['id']}: negative extent w={w} h={h}")
    text = obj.get("text")
    _require(text is None or isinstance(text, str), f"node {obj['id']}: text must be string or null")
    font_size = obj.get("font_size")
    _require(
        font_size is None or (isinstance(font_size, (int, float)) and not isinstance(font_size, bool)),
        f"node {obj['id']}: font_size must be number or null",
    )
    children = obj.get("children", [])
    _require(
        isinstance(children, list) and all(isinstance(c, int) for c in children),
        f"node {obj['id']}: children must be a list of ids",
    )
    return DomNode(
        node_id=obj["id"],
        tag=obj["tag"],
        bbox=(x, y, w, h),
        text=text,
        font_size=None if font_size is None else float(font_size),
        children=tuple(children),
    )


def parse_dom_dump(raw: bytes | str, schema_version: str = SCHEMA_VERSION) -> DomDump:
    """Parse and validate a serialized DOM dump.

    Rejects malformed payloads (SchemaError), non-tree child links
    (CycleError), and negative box extents (BoundsError).
    """
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    _require(isinstance(obj, dict), "top level must be an object")
    unknown = set(obj) - {"version", "viewport", "nodes", "root"}
    _require(not unknown, f"unknown top-level fields: {sorted(unknown)}")
    _require(obj.get("version") == schema_version, f"expected version {schema_version!r}, got {obj.get('version')!r}")
    viewport = obj.get("viewport")
    _require(
        isinstance(viewport, (list, tuple)) and len(viewport) == 2 and all(isinstance(v, int) for v in viewport),
        "viewport must be [width, height] integers",
    )
    _require(isinstance(obj.get("nodes"), list) and obj["nodes"], "nodes must be a nonempty list")
    _require(isinstance(obj.get("root"), int), "root must be an integer id")

    nodes: dict[int, DomNode] = {}
    for raw_node in obj["nodes"]:
        node = _parse_node(raw_node)
        _require(node.node_id not in nodes, f"duplicate node id {node.node_id}")
        nodes[node.node_id] = node

    root = obj["root"]
    _require(root in nodes, f"root id {root} not among nodes")
    for node in nodes.values():
        for child in node.children:
            _require(child in nodes, f"node {node.node_id}: unknown child id {child}")

    # Tree check: every node reachable from the root exactly once, no revisits.
    seen: set[int] = set()
    stack = [root]
    while stack:
        nid = stack.pop()
        if nid in seen:
            raise CycleError(f"node {nid} reachable twice; child links must form a tree")
        seen.add(nid)
        stack.extend(nodes[nid].children)
    if len(seen) != len(nodes):
        orphans = sorted(set(nodes) - seen)
        raise SchemaError(f"nodes not reachable from root: {orphans}")

    return DomDump(version=obj["version"], viewport=(viewport[0], viewport[1]), root=root, nodes=nodes)


def serialize_dom_dump(dump: DomDump) -> bytes:
    """Inverse of parse_dom_dump; stable bytes for identical trees."""
    payload = {
        "version": dump.version,
        "viewport": list(dump.viewport),
        "root": dump.root,
        "nodes": [
            {
                "id": n.node_id,
                "tag": n.tag,
                "bbox": list(n.bbox),
                "text": n.text,
                "font_size": n.font_size,
                "children": list(n.children),
            }
            for n in dump.preorder()
        ],
    }
    return json.dumps(payload, sort_keys=True).encode()


def _passes(node: DomNode, rules: PruneConfig) -> bool:
    x, y, w, h = node.bbox
    vw, vh = rules.viewport
    if node.tag.upper() in rules.tag_blocklist:
        return False
    if w * h == 0:
        return False
    if x >= vw or y >= vh or x + w <= 0 or y + h <= 0:
        return False
    return True


def clip_bbox(bbox: tuple[float, float, float, float], viewport: tuple[int, int]) -> tuple[float, float, float, float]:
    """Clip to the viewport, preserving fractional coordinates."""
    x, y, w, h = bbox
    vw, vh = viewport
    x0, y0 = max(x, 0.0), max(y, 0.0)
    x1, y1 = min(x + w, float(vw)), min(y + h, float(vh))
    return (x0, y0, max(x1 - x0, 0.0), max(y1 - y0, 0.0))


def extract_leaves(dom: DomDump, prune_rules: PruneConfig | None = None) -> list[WebElement]:
    """Leaf elements of the pruned tree, in DOM preorder.

    Pruning a node removes its whole subtree. A node with children counts as
    a leaf once every child is pruned, provided it passes the rules itself.
    Surviving boxes are clipped to the viewport.
    """
    rules = prune_rules or PruneConfig()
    leaves: list[DomNode] = []

    def walk(nid: int) -> None:
        node = dom.nodes[nid]
        if not _passes(node, rules):
            return
        surviving = [c for c in node.children if _passes(dom.nodes[c], rules)]
        if not surviving:
            leaves.append(node)
            return
        for child in node.children:
            walk(child)

    walk(dom.root)
    if not leaves:
        raise EmptyPageError("no leaf elements survive pruning")
    return [
        WebElement(
            element_id=n.node_id,
            bbox=clip_bbox(n.bbox, rules.viewport),
            tag=n.tag,
            text=n.text,
            font_size=n.font_size,
            label=Label.BACKGROUND,
            preorder_index=i,
        )
        for i, n in enumerate(leaves)
    ]


@dataclass(frozen=True)
class LabelManifest:
    price_id: Optional[int] = None
    title_id: Optional[int] = None
    image_id: Optional[int] = None

    @property
    def complete(self) -> bool:
        return None not in (self.price_id, self.title_id, self.image_id)


def attach_labels(elements: Sequence[WebElement], labels: LabelManifest) -> list[WebElement]:
    """Assign one label per manifest entry; everything else stays BACKGROUND."""
    assignment = {
        Label.PRICE: labels.price_id,
        Label.TITLE: labels.title_id,
        Label.IMAGE: labels.image_id,
    }
    claimed: dict[int, Label] = {}
    for label, eid in assignment.items():
        if eid is None:
            continue
        if eid in claimed:
            raise DuplicateLabelError(f"element {eid} assigned both {claimed[eid].name} and {label.name}")
        claimed[eid] = label
    known = {e.element_id for e in elements}
    missing = sorted(set(claimed) - known)
    if missing:
        raise MissingElementError(f"label manifest references unknown element ids {missing}")
    return [replace(e, label=claimed.get(e.element_id, Label.BACKGROUND)) for e in elements]


def build_webpage(
    page_id: str,
    domain: str,
    screenshot_ref: str,
    dom: DomDump,
    labels: LabelManifest | None = None,
    prune_rules: PruneConfig | None = None,
) -> Webpage:
    elements = extract_leaves(dom, prune_rules)
    manifest = labels or LabelManifest()
    elements = attach_labels(elements, manifest)
    return Webpage(
        page_id=page_id,
        domain=domain,
        screenshot_ref=screenshot_ref,
        elements=tuple(elements),
        dom=dom,
        fully_labeled=manifest.complete,
    )


def read_label_manifests(path: str | Path) -> dict[str, LabelManifest]:
    """CSV with header page_id,price_id,title_id,image_id; blank cells mean unlabeled."""
    out: dict[str, LabelManifest] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["page_id", "price_id", "title_id", "image_id"]
        if reader.fieldnames != expected:
            raise SchemaError(f"label manifest header must be {expected}, got {reader.fieldnames}")
        for row in reader:
            def cell(key: str) -> Optional[int]:
                v = (row.get(key) or "").strip()
                return int(v) if v else None

            out[row["page_id"]] = LabelManifest(
                price_id=cell("price_id"), title_id=cell("title_id"), image_id=cell("image_id")
            )
    return out


@dataclass(frozen=True)
class ManifestRow:
    page_id: str
    domain: str
    screenshot_path: str
    dom_path: str


def read_dataset_manifest(path: str | Path) -> list[ManifestRow]:
    """CSV with header page_id,domain,screenshot_path,dom_path."""
    rows: list[ManifestRow] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["page_id", "domain", "screenshot_path", "dom_path"]
        if reader.fieldnames != expected:
            raise SchemaError(f"dataset manifest header must be {expected}, got {reader.fieldnames}")
        for row in reader:
            rows.append(ManifestRow(row["page_id"], row["domain"], row["screenshot_path"], row["dom_path"]))
    if not rows:
        raise SchemaError("dataset manifest has no rows")
    return rows


def load_dataset(
    manifest_path: str | Path,
    labels_path: str | Path | None = None,
    prune_rules: PruneConfig | None = None,
) -> list[Webpage]:
    """Assemble webpages from a dataset manifest, resolving paths relative to it."""
    root = Path(manifest_path).parent
    manifests = read_label_manifests(labels_path) if labels_path else {}
    pages: list[Webpage] = []
    for row in read_dataset_manifest(manifest_path):
        dom_path = root / row.dom_path
        dump = parse_dom_dump(dom_path.read_bytes())
        pages.append(
            build_webpage(
                page_id=row.page_id,
                domain=row.domain,
                screenshot_ref=str(root / row.screenshot_path),
                dom=dump,
                labels=manifests.get(row.page_id),
                prune_rules=prune_rules,
            )
        )
    return pages


def label_counts(page: Webpage) -> dict[Label, int]:
    counts = {label: 0 for label in CLASS_ORDER}
    for e in page.elements:
        counts[e.label] += 1
    return counts
