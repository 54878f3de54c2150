"""Attention overlays: shade an element's neighbors by attention weight.

The chosen element gets a red outline; each neighbor is filled green with
opacity 0.8 * weight. Neighbors scoring at or below the threshold stay
unshaded but are still listed in the JSON payload, which round-trips the
raw weights exactly.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Optional

from PIL import Image, ImageDraw

from .errors import UnknownElementError
from .ingest import Webpage

DEFAULT_THRESHOLD = 0.05
MAX_OPACITY = 0.8
OUTLINE = (220, 30, 30, 255)
FILL = (30, 170, 60)


def _int_box(bbox: tuple[float, float, float, float]) -> tuple[int, int, int, int]:
    import math

    x, y, w, h = bbox
    return (math.floor(x), math.floor(y), math.ceil(x + w), math.ceil(y + h))


def attention_payload(
    page: Webpage, element_id: int, attn: Mapping[int, float], threshold: float = DEFAULT_THRESHOLD
) -> dict:
    """JSON-ready record of raw weights plus the activated subset."""
    activated = sorted(int(j) for j, a in attn.items() if a > threshold)
    return {
        "page_id": page.page_id,
        "element_id": int(element_id),
        "threshold": threshold,
        "scores": {str(int(j)): float(a) for j, a in sorted(attn.items())},
        "activated": activated,
        "activated_fraction": (len(activated) / len(attn)) if attn else 0.0,
    }


def render_attention(
    page: Webpage,
    element_id: int,
    attn: Mapping[int, float],
    threshold: float = DEFAULT_THRESHOLD,
    screenshot: Optional[str | Path] = None,
) -> tuple[Image.Image, dict]:
    """Overlay attention on the page screenshot; returns (image, payload)."""
    boxes = {el.element_id: el.bbox for el in page.elements}
    if element_id not in boxes:
        raise UnknownElementError(f"element {element_id} not on page {page.page_id!r}")
    unknown = [j for j in attn if j not in boxes]
    if unknown:
        raise UnknownElementError(f"attention keys not on page {page.page_id!r}: {sorted(unknown)[:5]}")

    src = Path(screenshot) if screenshot is not None else Path(page.screenshot_ref)
    with Image.open(src) as im:
        base = im.convert("RGBA")
    overlay = Image.new("RGBA", base.size, (0, 0, 0, 0))
    draw = ImageDraw.Draw(overlay)
    for j, weight in sorted(attn.items()):
        if weight > threshold:
            alpha = int(round(max(0.0, min(1.0, weight)) * MAX_OPACITY * 255))
            draw.rectangle(_int_box(boxes[j]), fill=(*FILL, alpha))
    composed = Image.alpha_composite(base, overlay)
    draw = ImageDraw.Draw(composed)
    draw.rectangle(_int_box(boxes[element_id]), outline=OUTLINE, width=3)
    return composed.convert("RGB"), attention_payload(page, element_id, attn, threshold)


def save_attention(
    page: Webpage,
    element_id: int,
    attn: Mapping[int, float],
    out_png: str | Path,
    out_json: str | Path,
    threshold: float = DEFAULT_THRESHOLD,
    screenshot: Optional[str | Path] = None,
) -> dict:
    image, payload = render_attention(page, element_id, attn, threshold, screenshot)
    image.save(out_png, format="PNG")
    Path(out_json).write_text(json.dumps(payload, indent=2, sort_keys=True))
    return payload
