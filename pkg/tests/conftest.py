import numpy as np
import pytest
import torch

from webdetect.ingest import (
    DomDump,
    DomNode,
    LabelManifest,
    build_webpage,
)

torch.set_num_threads(1)


def flat_dump(bboxes, tags=None, texts=None, font_sizes=None, viewport=1280):
    """One root DIV whose children are the given leaf boxes, ids 1..N."""
    n = len(bboxes)
    tags = tags or ["SPAN"] * n
    texts = texts or [None] * n
    font_sizes = font_sizes or [None] * n
    nodes = {
        0: DomNode(
            node_id=0, tag="DIV", bbox=(0.0, 0.0, float(viewport), float(viewport)),
            children=tuple(range(1, n + 1)),
        )
    }
    for i, bbox in enumerate(bboxes):
        nodes[i + 1] = DomNode(
            node_id=i + 1, tag=tags[i], bbox=tuple(float(v) for v in bbox),
            text=texts[i], font_size=font_sizes[i], children=(),
        )
    return DomDump(version="1", viewport=(viewport, viewport), root=0, nodes=nodes)


def make_page(
    n=6,
    page_id="p0",
    domain="d0",
    labels=(1, 2, 3),
    bboxes=None,
    tags=None,
    texts=None,
    screenshot_ref="",
):
    """Labeled page of n separated boxes; labels = (price_id, title_id, image_id)."""
    if bboxes is None:
        bboxes = [(10.0 + 40.0 * i, 20.0 + 30.0 * i, 30.0, 20.0) for i in range(n)]
    dump = flat_dump(bboxes, tags=tags, texts=texts)
    manifest = LabelManifest(price_id=labels[0], title_id=labels[1], image_id=labels[2]) if labels else None
    return build_webpage(
        page_id=page_id, domain=domain, screenshot_ref=screenshot_ref, dom=dump, labels=manifest
    )


@pytest.fixture
def page_factory():
    return make_page


@pytest.fixture(scope="session")
def small_synth(tmp_path_factory):
    """Shared tiny rendered dataset: 10 pages over 5 template domains."""
    from webdetect.ingest import load_dataset
    from webdetect.synth import SynthSpec, generate

    spec = SynthSpec(n_pages=10, n_domains=5, elements_per_page=52, n_decoy_prices=1, seed=101)
    dataset = generate(spec, tmp_path_factory.mktemp("small_synth"))
    pages = load_dataset(dataset.manifest_path, dataset.labels_path)
    return spec, dataset, pages


@pytest.fixture(scope="session")
def rng():
    return np.random.Generator(np.random.PCG64(12345))
