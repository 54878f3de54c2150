import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_page
from webdetect.graph import DistanceMetric, build_graph, neighborhood_complete
from webdetect.ingest import DomDump, DomNode, build_webpage


def brute_force_neighbors(n: int, i: int, k: int) -> list[int]:
    """k nearest preorder indices to i: rank by (distance, index)."""
    others = sorted((j for j in range(n) if j != i), key=lambda j: (abs(j - i), j))
    return sorted(others[: min(k, n - 1)])


def test_matches_brute_force_random_pages(rng):
    for _ in range(25):
        n = int(rng.integers(1, 120))
        # keep every box inside the viewport so pruning never renumbers rows
        boxes = [(5.0 + 20.0 * (j % 50), 5.0 + 25.0 * (j // 50), 12.0, 9.0) for j in range(n)]
        page = make_page(n=n, labels=None, bboxes=boxes)
        for k in (0, 1, 5, 24):
            graph = build_graph(page, k)
            for e in page.elements:
                expect = [j + 1 for j in brute_force_neighbors(n, e.preorder_index, k)]
                assert list(graph.neighbors[e.element_id]) == expect


def test_k0_and_singleton_empty():
    page = make_page(n=5, labels=None)
    assert all(v == () for v in build_graph(page, 0).neighbors.values())
    single = make_page(n=1, labels=None)
    assert build_graph(single, 24).neighbors == {1: ()}


def test_k_saturates_to_complete():
    page = make_page(n=7, labels=None)
    saturated = build_graph(page, 100)
    complete = neighborhood_complete(page.elements, page_id=page.page_id)
    assert saturated.neighbors == complete.neighbors


def test_tie_prefers_smaller_index():
    page = make_page(n=3, labels=None)
    graph = build_graph(page, 1)
    # middle element: both sides at distance 1; the earlier leaf wins
    assert graph.neighbors[2] == (1,)


def test_lists_sorted_ascending():
    page = make_page(n=30, labels=None)
    graph = build_graph(page, 9)
    for nbrs in graph.neighbors.values():
        assert list(nbrs) == sorted(nbrs)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 60), k=st.integers(0, 30))
def test_monotone_in_k(n, k):
    page = make_page(n=n, labels=None)
    small = build_graph(page, k)
    big = build_graph(page, k + 1)
    for eid, nbrs in small.neighbors.items():
        assert set(nbrs) <= set(big.neighbors[eid])
        assert len(nbrs) == min(k, n - 1)


def test_uniform_width():
    page = make_page(n=40, labels=None)
    widths = {len(v) for v in build_graph(page, 24).neighbors.values()}
    assert widths == {24}


def test_noncontiguous_preorder_rejected():
    page = make_page(n=4, labels=None)
    broken = [e for e in page.elements if e.preorder_index != 2]
    with pytest.raises(ValueError):
        build_graph(broken, 2)


def test_negative_k_rejected():
    page = make_page(n=4, labels=None)
    with pytest.raises(ValueError):
        build_graph(page, -1)


def _two_section_page():
    # root > [A > (x, y), B > (z)]: preorder x=0, y=1, z=2
    nodes = {
        0: DomNode(node_id=0, tag="HTML", bbox=(0, 0, 1280, 1280), children=(1, 2)),
        1: DomNode(node_id=1, tag="DIV", bbox=(0, 0, 600, 100), children=(3, 4)),
        2: DomNode(node_id=2, tag="DIV", bbox=(0, 200, 600, 100), children=(5,)),
        3: DomNode(node_id=3, tag="P", bbox=(0, 0, 50, 20), text="x", children=()),
        4: DomNode(node_id=4, tag="P", bbox=(100, 0, 50, 20), text="y", children=()),
        5: DomNode(node_id=5, tag="P", bbox=(0, 200, 50, 20), text="z", children=()),
    }
    dump = DomDump(version="1", viewport=(1280, 1280), root=0, nodes=nodes)
    return build_webpage(page_id="t", domain="d", screenshot_ref="", dom=dump)


def test_tree_metric_differs_from_preorder():
    page = _two_section_page()
    pre = build_graph(page, 1, metric=DistanceMetric.PREORDER)
    tree = build_graph(page, 1, metric=DistanceMetric.TREE)
    # z's nearest by preorder is its run-neighbor y; by tree distance both
    # x and y cost 4 hops, so the tie goes to the smaller preorder leaf x
    assert pre.neighbors[5] == (4,)
    assert tree.neighbors[5] == (3,)


def test_tree_metric_requires_dom():
    page = make_page(n=4, labels=None)
    with pytest.raises(ValueError):
        build_graph(page.elements, 2, metric=DistanceMetric.TREE)


def test_json_dict_shape():
    page = make_page(n=4, labels=None, page_id="pg")
    d = build_graph(page, 2).to_json_dict()
    assert d["page_id"] == "pg"
    assert d["k"] == 2
    assert set(d["neighbors"]) == {"1", "2", "3", "4"}
    assert all(isinstance(v, list) for v in d["neighbors"].values())
