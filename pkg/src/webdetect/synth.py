"""Deterministic synthetic product-page generator.

Pages are drawn with a built-in rasterizer (filled rectangles plus a 5x7
bitmap font), so outputs are byte-reproducible with no browser or font
dependency. Each page carries:

  - one product cluster: title, image, and the true price within a DOM
    preorder distance of 3 of each other;
  - decoy prices rendered pixel-identically to the true price but placed
    more than 24 leaves away from title and image, with screen positions
    swapped uniformly at random, so appearance and geometry alone cannot
    tell them apart;
  - one image look-alike rendered pixel-identically to the product image,
    DOM-adjacent to the cluster but placed in the lower half of the page
    while product images always sit in the upper half, so box geometry is
    what disambiguates them.

Templates act as domains: each fixes a palette and grid geometry, so
held-out-template evaluation is a real distribution shift.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
from PIL import Image

from .errors import SpecError
from .ingest import DomDump, DomNode, serialize_dom_dump

VIEWPORT = 1280
DEFAULT_CONTEXT_GAP = 24  # decoys stay farther than this from title/image

# 5x7 bitmap font, one string per row, '1' marks an inked cell.
_GLYPHS: dict[str, tuple[str, ...]] = {
    " ": ("00000",) * 7,
    "0": ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    "1": ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    "2": ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    "3": ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    "4": ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    "5": ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    "6": ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    "7": ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    "8": ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    "9": ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
    "A": ("01110", "10001", "10001", "11111", "10001", "10001", "10001"),
    "B": ("11110", "10001", "10001", "11110", "10001", "10001", "11110"),
    "C": ("01110", "10001", "10000", "10000", "10000", "10001", "01110"),
    "D": ("11100", "10010", "10001", "10001", "10001", "10010", "11100"),
    "E": ("11111", "10000", "10000", "11110", "10000", "10000", "11111"),
    "F": ("11111", "10000", "10000", "11110", "10000", "10000", "10000"),
    "G": ("01110", "10001", "10000", "10111", "10001", "10001", "01111"),
    "H": ("10001", "10001", "10001", "11111", "10001", "10001", "10001"),
    "I": ("01110", "00100", "00100", "00100", "00100", "00100", "01110"),
    "J": ("00111", "00010", "00010", "00010", "00010", "10010", "01100"),
    "K": ("10001", "10010", "10100", "11000", "10100", "10010", "10001"),
    "L": ("10000", "10000", "10000", "10000", "10000", "10000", "11111"),
    "M": ("10001", "11011", "10101", "10101", "10001", "10001", "10001"),
    "N": ("10001", "10001", "11001", "10101", "10011", "10001", "10001"),
    "O": ("01110", "10001", "10001", "10001", "10001", "10001", "01110"),
    "P": ("11110", "10001", "10001", "11110", "10000", "10000", "10000"),
    "Q": ("01110", "10001", "10001", "10001", "10101", "10010", "01101"),
    "R": ("11110", "10001", "10001", "11110", "10100", "10010", "10001"),
    "S": ("01111", "10000", "10000", "01110", "00001", "00001", "11110"),
    "T": ("11111", "00100", "00100", "00100", "00100", "00100", "00100"),
    "U": ("10001", "10001", "10001", "10001", "10001", "10001", "01110"),
    "V": ("10001", "10001", "10001", "10001", "10001", "01010", "00100"),
    "W": ("10001", "10001", "10001", "10101", "10101", "10101", "01010"),
    "X": ("10001", "10001", "01010", "00100", "01010", "10001", "10001"),
    "Y": ("10001", "10001", "10001", "01010", "00100", "00100", "00100"),
    "Z": ("11111", "00001", "00010", "00100", "01000", "10000", "11111"),
    "$": ("00100", "01111", "10100", "01110", "00101", "11110", "00100"),
    ".": ("00000", "00000", "00000", "00000", "00000", "01100", "01100"),
    "-": ("00000", "00000", "00000", "11111", "00000", "00000", "00000"),
    "%": ("11000", "11001", "00010", "00100", "01000", "10011", "00011"),
    ",": ("00000", "00000", "00000", "00000", "01100", "00100", "01000"),
}

_WORDS = (
    "ALPINE", "BRASS", "CEDAR", "DELTA", "EMBER", "FJORD", "GLINT", "HARBOR",
    "INGOT", "JASPER", "KELP", "LUMEN", "MAPLE", "NICKEL", "ONYX", "PINE",
    "QUARTZ", "RIVET", "SABLE", "TOPAZ", "UMBER", "VELVET", "WILLOW", "ZINC",
    "FREE", "SHIPPING", "RETURNS", "REVIEWS", "DETAILS", "STOCK", "OFFER",
    "BUNDLE", "MEMBER", "POINTS", "GIFT", "WRAP", "SECURE", "RATED",
)


def text_size(text: str, scale: int) -> tuple[int, int]:
    """Pixel footprint of a rasterized string (6 cells per glyph, 1 blank)."""
    if not text:
        return (0, 7 * scale)
    return (6 * scale * len(text) - scale, 7 * scale)


def draw_text(canvas: np.ndarray, x: int, y: int, text: str, scale: int, color: tuple[int, int, int]) -> None:
    col = np.array(color, dtype=np.uint8)
    for ci, ch in enumerate(text):
        glyph = _GLYPHS.get(ch.upper(), _GLYPHS[" "])
        gx = x + ci * 6 * scale
        for r, row in enumerate(glyph):
            for c, bit in enumerate(row):
                if bit == "1":
                    y0, x0 = y + r * scale, gx + c * scale
                    canvas[y0 : y0 + scale, x0 : x0 + scale] = col


def fill_rect(canvas: np.ndarray, bbox: tuple[int, int, int, int], color: tuple[int, int, int]) -> None:
    x, y, w, h = bbox
    canvas[y : y + h, x : x + w] = np.array(color, dtype=np.uint8)


@dataclass(frozen=True)
class SynthSpec:
    n_pages: int = 40
    n_domains: int = 8
    elements_per_page: int = 90
    n_decoy_prices: int = 1
    seed: int = 0
    context_gap: int = DEFAULT_CONTEXT_GAP

    def __post_init__(self) -> None:
        if self.n_pages < 1 or self.n_domains < 1:
            raise SpecError("need at least one page and one template")
        if self.elements_per_page < 4:
            raise SpecError("pages need at least 4 elements")
        if self.n_decoy_prices < 0:
            raise SpecError("decoy count cannot be negative")
        if self.n_decoy_prices > 0 and self.elements_per_page < self.min_elements:
            raise SpecError(
                f"{self.elements_per_page} elements cannot hold {self.n_decoy_prices} decoys "
                f"at preorder distance > {self.context_gap}; need >= {self.min_elements}"
            )

    @property
    def min_elements(self) -> int:
        # worst case: cluster ends at index 14, look-alike at 20, decoys past
        # the context gap, and a -3 jitter on the per-page element count
        return 21 + self.context_gap + self.n_decoy_prices + 3


# Cluster arrangements: sequences of roles; price within preorder distance 3
# of both title and image. "near" keeps both within 2 (visible at k=4),
# "far" pins both at exactly 3 (invisible at k=4, visible at k=24).
_CLUSTER_NEAR = (
    ("title", "image", "price"),
    ("image", "title", "price"),
    ("price", "title", "image"),
    ("price", "image", "title"),
    ("title", "price", "image"),
    ("image", "price", "title"),
)
_CLUSTER_FAR = (
    ("title", "filler", "filler", "price", "filler", "filler", "image"),
    ("image", "filler", "filler", "price", "filler", "filler", "title"),
)


@dataclass(frozen=True)
class Template:
    domain: str
    bg: tuple[int, int, int]
    filler_color: tuple[int, int, int]
    rect_color: tuple[int, int, int]
    accents: tuple[tuple[int, int, int], ...]
    margin: int
    row_h: int
    n_cols: int
    col_w: int
    gutter: int
    rows: int
    title_cell: tuple[int, int]
    image_rect: tuple[int, int, int, int]
    twin_rect: tuple[int, int, int, int]
    price_slots: tuple[tuple[int, int], ...]  # top-left origins
    filler_scale: int
    title_scale: int
    price_scale: int


@dataclass(frozen=True)
class PlacedElement:
    node_id: int
    role: str  # filler | rect | title | image | price | decoy | image_twin
    tag: str
    bbox: tuple[int, int, int, int]
    text: Optional[str]
    font_size: Optional[float]
    preorder: int


@dataclass(frozen=True)
class PageLayout:
    page_id: str
    domain: str
    elements: tuple[PlacedElement, ...]  # preorder order
    section_sizes: tuple[int, ...]
    image_pattern_seed: int
    true_price_slot: int


def _rng(*entropy: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def _cell_origin(tpl: Template, col: int, row: int) -> tuple[int, int]:
    x = tpl.margin + col * (tpl.col_w + tpl.gutter)
    y = tpl.margin + row * tpl.row_h
    return x, y


def _cells_overlapping(tpl: Template, rect: tuple[int, int, int, int]) -> set[tuple[int, int]]:
    x, y, w, h = rect
    out = set()
    for col in range(tpl.n_cols):
        for row in range(tpl.rows):
            cx, cy = _cell_origin(tpl, col, row)
            if cx < x + w and x < cx + tpl.col_w and cy < y + h and y < cy + tpl.row_h:
                out.add((col, row))
    return out


def _blocked_cells(tpl: Template) -> set[tuple[int, int]]:
    """Cells any non-filler box touches, title overhang row included."""
    tc, tr = tpl.title_cell
    title_rows = -(-(7 * tpl.title_scale + 8) // tpl.row_h)
    blocked = {(tc, tr + d) for d in range(title_rows)}
    blocked |= _cells_overlapping(tpl, tpl.image_rect)
    blocked |= _cells_overlapping(tpl, tpl.twin_rect)
    for sx, sy in tpl.price_slots:
        blocked.add(((sx - tpl.margin) // (tpl.col_w + tpl.gutter), (sy - tpl.margin) // tpl.row_h))
    return blocked


def build_template(spec: SynthSpec, index: int) -> Template:
    rng = _rng(spec.seed, 7919, index)
    margin = int(rng.choice([36, 40, 44]))
    row_h = int(rng.choice([30, 32, 34]))
    gutter = int(rng.choice([20, 24, 28]))
    rows = (VIEWPORT - 2 * margin) // row_h
    need = spec.elements_per_page + 24  # headroom for blocked cells
    n_cols = min(max(2, -(-need // rows)), 4)
    col_w = (VIEWPORT - 2 * margin - (n_cols - 1) * gutter) // n_cols

    def origin(col: int, row: int) -> tuple[int, int]:
        return margin + col * (col_w + gutter), margin + row * row_h

    base = int(rng.integers(235, 252))
    bg = (base, base, int(rng.integers(228, 252)))
    gray = int(rng.integers(70, 130))
    filler_color = (gray, gray, gray)
    rect_color = tuple(int(v) for v in rng.integers(180, 225, size=3))
    accents = tuple(tuple(int(v) for v in rng.integers(40, 220, size=3)) for _ in range(5))

    title_cell = (int(rng.integers(0, n_cols)), int(rng.integers(0, 2)))

    img_w = int(min(col_w - 8, rng.integers(170, 230)))
    img_h = int(rng.integers(150, 200))
    upper_rows = [
        r for r in range(rows)
        if margin + r * row_h + img_h <= int(VIEWPORT * 0.45) and r > title_cell[1] + 1
    ]
    img_col = int(rng.integers(0, n_cols))
    img_row = int(rng.choice(upper_rows)) if upper_rows else 3
    image_rect = (*origin(img_col, img_row), img_w, img_h)

    lower_min = int(VIEWPORT * 0.55)
    lower_rows = [
        r for r in range(rows)
        if margin + r * row_h >= lower_min and margin + r * row_h + img_h <= VIEWPORT - margin
    ]
    if not lower_rows:
        raise SpecError("viewport too small for a lower-half image block")
    twin_col = int(rng.integers(0, n_cols))
    twin_row = int(rng.choice(lower_rows))
    twin_rect = (*origin(twin_col, twin_row), img_w, img_h)

    tpl = Template(
        domain=f"tpl{index:03d}",
        bg=bg, filler_color=filler_color, rect_color=rect_color, accents=accents,
        margin=margin, row_h=row_h, n_cols=n_cols, col_w=col_w, gutter=gutter, rows=rows,
        title_cell=title_cell, image_rect=image_rect, twin_rect=twin_rect,
        price_slots=(), filler_scale=2, title_scale=4, price_scale=2,
    )

    free = [(c, r) for r in range(rows) for c in range(n_cols) if (c, r) not in _blocked_cells(tpl)]
    slot_count = spec.n_decoy_prices + 1
    if len(free) < slot_count:
        raise SpecError("template grid too small for the price slots")
    picks = rng.choice(len(free), size=slot_count, replace=False)
    slots = tuple(origin(*free[int(i)]) for i in picks)
    return replace(tpl, price_slots=slots)


def _price_text(rng: np.random.Generator) -> str:
    return f"$ {rng.integers(10, 100)}.{rng.integers(0, 100):02d}"


def _filler_text(rng: np.random.Generator, max_chars: int) -> str:
    words = [str(rng.choice(_WORDS))]
    if rng.random() < 0.5:
        words.append(str(rng.choice(_WORDS)))
    text = " ".join(words)
    if rng.random() < 0.3:
        text += f" {rng.integers(1, 500)}"
    return text[:max_chars].strip()


def plan_page(
    spec: SynthSpec, tpl: Template, page_id: str, page_rng: np.random.Generator, true_slot: int
) -> PageLayout:
    n = int(spec.elements_per_page + page_rng.integers(-3, 4))
    n = max(n, 4)

    # Preorder role assignment. Mix tight clusters (price sees title and
    # image even at k=4) with spread ones (price needs k > 6 to see either).
    pool = _CLUSTER_NEAR if page_rng.random() < 0.6 else _CLUSTER_FAR
    fitting = [c for c in pool if len(c) <= n - 1] or [c for c in _CLUSTER_NEAR if len(c) <= n - 1]
    if not fitting:
        raise SpecError(f"page of {n} elements cannot hold the product cluster")
    cluster = list(fitting[int(page_rng.integers(0, len(fitting)))])
    span = len(cluster)
    start = int(page_rng.integers(1, min(8, n - span) + 1))
    roles = ["filler"] * n
    for i, role in enumerate(cluster):
        roles[start + i] = role
    cluster_end = start + span - 1

    pos = {role: start + i for i, role in enumerate(cluster) if role != "filler"}
    twin_at = None
    candidate = cluster_end + 1 + int(page_rng.integers(0, 6))
    decoy_room = candidate + spec.context_gap + 1 + spec.n_decoy_prices
    if candidate < n and (spec.n_decoy_prices == 0 or decoy_room <= n):
        twin_at = candidate
        roles[twin_at] = "image_twin"

    anchor = max(pos["title"], pos["image"], twin_at if twin_at is not None else 0)
    if spec.n_decoy_prices > 0:
        lo = anchor + spec.context_gap + 1
        if n - lo < spec.n_decoy_prices:
            raise SpecError(f"page of {n} elements cannot hold {spec.n_decoy_prices} decoys past index {lo}")
        decoy_idx = sorted(int(i) for i in page_rng.choice(np.arange(lo, n), size=spec.n_decoy_prices, replace=False))
        for i in decoy_idx:
            roles[i] = "decoy"

    # Screen assignment: price-shaped text into slots, permuted so the true
    # one's geometry carries no information.
    slot_order = [true_slot] + [s for s in range(len(tpl.price_slots)) if s != true_slot]
    price_text = _price_text(page_rng)
    pattern_seed = int(page_rng.integers(0, 2**31 - 1))

    blocked = _blocked_cells(tpl)
    free_cells = [(c, r) for r in range(tpl.rows) for c in range(tpl.n_cols) if (c, r) not in blocked]
    if len(free_cells) < roles.count("filler"):
        raise SpecError("template grid too small for the requested element count")

    elements: list[PlacedElement] = []
    filler_cursor = 0
    price_cursor = 0
    pad = 4
    max_filler_chars = max(4, (tpl.col_w - 2 * pad) // (6 * tpl.filler_scale))
    for pre, role in enumerate(roles):
        node_id = 100 + pre
        if role in ("price", "decoy"):
            sx, sy = tpl.price_slots[slot_order[price_cursor]]
            price_cursor += 1
            tw, th = text_size(price_text, tpl.price_scale)
            bbox = (sx, sy, tw + 2 * pad, th + 2 * pad)
            elements.append(PlacedElement(node_id, role, "SPAN", bbox, price_text, 7.0 * tpl.price_scale, pre))
        elif role == "title":
            words = page_rng.choice(_WORDS, size=2, replace=False)
            text = " ".join(str(w) for w in words)
            max_chars = (tpl.col_w - 2 * pad) // (6 * tpl.title_scale)
            text = text[:max_chars].strip()
            tx, ty = _cell_origin(tpl, *tpl.title_cell)
            tw, th = text_size(text, tpl.title_scale)
            bbox = (tx, ty, tw + 2 * pad, th + 2 * pad)
            elements.append(PlacedElement(node_id, role, "H1", bbox, text, 7.0 * tpl.title_scale, pre))
        elif role == "image":
            elements.append(PlacedElement(node_id, role, "IMG", tpl.image_rect, None, None, pre))
        elif role == "image_twin":
            elements.append(PlacedElement(node_id, role, "IMG", tpl.twin_rect, None, None, pre))
        else:
            col, row = free_cells[filler_cursor]
            filler_cursor += 1
            cx, cy = _cell_origin(tpl, col, row)
            if page_rng.random() < 0.12:
                w = int(page_rng.integers(tpl.col_w // 3, tpl.col_w - 4))
                h = tpl.row_h - 8
                elements.append(PlacedElement(node_id, "rect", "DIV", (cx, cy + 2, w, h), None, None, pre))
            else:
                text = _filler_text(page_rng, max_filler_chars)
                tw, th = text_size(text, tpl.filler_scale)
                fs = 7.0 * tpl.filler_scale
                tag = str(page_rng.choice(["P", "SPAN", "LI", "H3", "TD"]))
                elements.append(PlacedElement(node_id, "filler", tag, (cx, cy + 2, tw + 2 * pad, th + 2 * pad), text, fs, pre))

    sizes: list[int] = []
    remaining = n
    while remaining > 0:
        s = int(min(remaining, page_rng.integers(6, 13)))
        sizes.append(s)
        remaining -= s
    return PageLayout(
        page_id=page_id,
        domain=tpl.domain,
        elements=tuple(elements),
        section_sizes=tuple(sizes),
        image_pattern_seed=pattern_seed,
        true_price_slot=true_slot,
    )


def _image_pattern(seed: int, w: int, h: int, accents: tuple[tuple[int, int, int], ...]) -> np.ndarray:
    rng = _rng(seed)
    cell = 16
    gw, gh = -(-w // cell), -(-h // cell)
    palette = np.array(accents, dtype=np.uint8)
    idx = rng.integers(0, len(palette), size=(gh, gw))
    grid = palette[idx]
    return np.repeat(np.repeat(grid, cell, axis=0), cell, axis=1)[:h, :w]


def render_page(tpl: Template, layout: PageLayout) -> np.ndarray:
    canvas = np.empty((VIEWPORT, VIEWPORT, 3), dtype=np.uint8)
    canvas[:] = np.array(tpl.bg, dtype=np.uint8)
    pattern: Optional[np.ndarray] = None
    pad = 4
    for e in layout.elements:
        x, y, w, h = e.bbox
        if e.role in ("image", "image_twin"):
            if pattern is None:
                pattern = _image_pattern(layout.image_pattern_seed, w, h, tpl.accents)
            canvas[y : y + h, x : x + w] = pattern
        elif e.role in ("price", "decoy"):
            fill_rect(canvas, e.bbox, (255, 255, 255))
            draw_text(canvas, x + pad, y + pad, e.text or "", tpl.price_scale, (150, 20, 20))
        elif e.role == "title":
            draw_text(canvas, x + pad, y + pad, e.text or "", tpl.title_scale, (25, 25, 30))
        elif e.role == "rect":
            fill_rect(canvas, e.bbox, tpl.rect_color)
        else:
            draw_text(canvas, x + pad, y + pad, e.text or "", tpl.filler_scale, tpl.filler_color)
    return canvas


def layout_to_dom(layout: PageLayout) -> DomDump:
    """DOM tree: html > body > section DIVs holding the leaf runs.

    A zero-area SCRIPT node and an off-viewport DIV are included so ingest
    pruning always has something to remove.
    """
    nodes: dict[int, DomNode] = {}
    leaves = sorted(layout.elements, key=lambda e: e.preorder)
    section_ids: list[int] = []
    cursor = 0
    next_internal = 2
    for size in layout.section_sizes:
        run = leaves[cursor : cursor + size]
        cursor += size
        if not run:
            continue
        xs = [e.bbox[0] for e in run]
        ys = [e.bbox[1] for e in run]
        x2 = max(e.bbox[0] + e.bbox[2] for e in run)
        y2 = max(e.bbox[1] + e.bbox[3] for e in run)
        sid = next_internal
        next_internal += 1
        nodes[sid] = DomNode(
            node_id=sid, tag="DIV", bbox=(min(xs), min(ys), x2 - min(xs), y2 - min(ys)),
            children=tuple(e.node_id for e in run),
        )
        section_ids.append(sid)
        for e in run:
            nodes[e.node_id] = DomNode(
                node_id=e.node_id, tag=e.tag, bbox=tuple(float(v) for v in e.bbox),
                text=e.text, font_size=e.font_size, children=(),
            )
    script_id = next_internal
    offscreen_id = next_internal + 1
    nodes[script_id] = DomNode(node_id=script_id, tag="SCRIPT", bbox=(0.0, 0.0, 0.0, 0.0), text=None, children=())
    nodes[offscreen_id] = DomNode(
        node_id=offscreen_id, tag="DIV", bbox=(float(VIEWPORT + 40), 10.0, 60.0, 20.0), text="AD", children=()
    )
    nodes[1] = DomNode(
        node_id=1, tag="BODY", bbox=(0.0, 0.0, float(VIEWPORT), float(VIEWPORT)),
        children=tuple(section_ids) + (script_id, offscreen_id),
    )
    nodes[0] = DomNode(node_id=0, tag="HTML", bbox=(0.0, 0.0, float(VIEWPORT), float(VIEWPORT)), children=(1,))
    return DomDump(version="1", viewport=(VIEWPORT, VIEWPORT), root=0, nodes=nodes)


@dataclass(frozen=True)
class SynthDataset:
    out_dir: Path
    manifest_path: Path
    labels_path: Path
    leaves_path: Path
    layouts: tuple[PageLayout, ...]


def _pages_per_template(spec: SynthSpec) -> list[int]:
    base, rem = divmod(spec.n_pages, spec.n_domains)
    return [base + (1 if t < rem else 0) for t in range(spec.n_domains)]


def _balanced_slots(count: int, n_slots: int, rng: np.random.Generator) -> list[int]:
    """Per-template true-slot choices, marginally uniform and near-balanced."""
    picks = [i % n_slots for i in range(count)]
    rng.shuffle(picks)
    return picks


def iter_layouts(spec: SynthSpec) -> Iterator[tuple[Template, PageLayout]]:
    """Plan every page without rendering; useful for distribution checks."""
    for t_idx, count in enumerate(_pages_per_template(spec)):
        if count == 0:
            continue
        tpl = build_template(spec, t_idx)
        slot_rng = _rng(spec.seed, 104729, t_idx)
        slots = _balanced_slots(count, len(tpl.price_slots), slot_rng)
        for p_idx in range(count):
            page_id = f"{tpl.domain}_p{p_idx:03d}"
            page_rng = _rng(spec.seed, t_idx, p_idx)
            yield tpl, plan_page(spec, tpl, page_id, page_rng, slots[p_idx])


def roles_by_id(layout: PageLayout) -> dict[str, int | list[int] | None]:
    price = next(e.node_id for e in layout.elements if e.role == "price")
    title = next(e.node_id for e in layout.elements if e.role == "title")
    image = next(e.node_id for e in layout.elements if e.role == "image")
    twin = next((e.node_id for e in layout.elements if e.role == "image_twin"), None)
    decoys = [e.node_id for e in layout.elements if e.role == "decoy"]
    return {"price": price, "title": title, "image": image, "image_twin": twin, "decoys": decoys}


def write_leaf_manifest(path: Path, layouts: tuple[PageLayout, ...]) -> dict:
    payload = {
        "pages": [
            {
                "page_id": l.page_id,
                "domain": l.domain,
                "leaf_ids": [e.node_id for e in sorted(l.elements, key=lambda e: e.preorder)],
                "roles": {str(e.node_id): e.role for e in l.elements},
                "true_price_slot": l.true_price_slot,
            }
            for l in layouts
        ]
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return payload


def manifest(dataset: SynthDataset) -> dict:
    """Leaf oracle manifest: exact preorder leaf ordering plus roles."""
    return write_leaf_manifest(dataset.leaves_path, dataset.layouts)


def generate(spec: SynthSpec, out_dir: str | Path) -> SynthDataset:
    """Emit screenshots, DOM dumps, label manifest, and dataset manifest."""
    out = Path(out_dir)
    (out / "screenshots").mkdir(parents=True, exist_ok=True)
    (out / "dom").mkdir(parents=True, exist_ok=True)

    layouts: list[PageLayout] = []
    manifest_rows: list[tuple[str, str, str, str]] = []
    label_rows: list[tuple[str, int, int, int]] = []
    for tpl, layout in iter_layouts(spec):
        png_rel = f"screenshots/{layout.page_id}.png"
        dom_rel = f"dom/{layout.page_id}.json"
        img = Image.fromarray(render_page(tpl, layout))
        img.save(out / png_rel, format="PNG")
        (out / dom_rel).write_bytes(serialize_dom_dump(layout_to_dom(layout)))
        ids = roles_by_id(layout)
        manifest_rows.append((layout.page_id, layout.domain, png_rel, dom_rel))
        label_rows.append((layout.page_id, ids["price"], ids["title"], ids["image"]))
        layouts.append(layout)

    manifest_path = out / "manifest.csv"
    with open(manifest_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["page_id", "domain", "screenshot_path", "dom_path"])
        w.writerows(manifest_rows)
    labels_path = out / "labels.csv"
    with open(labels_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["page_id", "price_id", "title_id", "image_id"])
        w.writerows(label_rows)

    dataset = SynthDataset(
        out_dir=out,
        manifest_path=manifest_path,
        labels_path=labels_path,
        leaves_path=out / "leaves.json",
        layouts=tuple(layouts),
    )
    manifest(dataset)
    return dataset
