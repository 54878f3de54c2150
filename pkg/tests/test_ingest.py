import json

import pytest

from conftest import flat_dump, make_page
from webdetect.errors import (
    BoundsError,
    CycleError,
    DuplicateLabelError,
    EmptyPageError,
    MissingElementError,
    SchemaError,
)
from webdetect.ingest import (
    DomDump,
    DomNode,
    Label,
    LabelManifest,
    PruneConfig,
    attach_labels,
    build_webpage,
    extract_leaves,
    label_counts,
    load_dataset,
    parse_dom_dump,
    read_dataset_manifest,
    read_label_manifests,
    serialize_dom_dump,
)


def dump_json(nodes, root=0, version="1", viewport=(1280, 1280)):
    return json.dumps({"version": version, "viewport": list(viewport), "root": root, "nodes": nodes})


def node(nid, tag="DIV", bbox=(0, 0, 100, 100), children=(), text=None, font_size=None):
    out = {"id": nid, "tag": tag, "bbox": list(bbox), "children": list(children)}
    if text is not None:
        out["text"] = text
    if font_size is not None:
        out["font_size"] = font_size
    return out


class TestParse:
    def test_minimal_roundtrip_fields(self):
        raw = dump_json([node(0, children=[1]), node(1, tag="P", bbox=(5, 6, 7, 8), text="hi", font_size=12)])
        dump = parse_dom_dump(raw)
        assert dump.version == "1"
        assert dump.viewport == (1280, 1280)
        assert dump.root == 0
        assert dump.nodes[1].tag == "P"
        assert dump.nodes[1].bbox == (5.0, 6.0, 7.0, 8.0)
        assert dump.nodes[1].text == "hi"
        assert dump.nodes[1].font_size == 12.0

    def test_version_mismatch(self):
        raw = dump_json([node(0)], version="2")
        with pytest.raises(SchemaError):
            parse_dom_dump(raw)

    def test_duplicate_node_id(self):
        raw = dump_json([node(0, children=[1]), node(1), node(1)])
        with pytest.raises(SchemaError):
            parse_dom_dump(raw)

    def test_missing_child_reference(self):
        raw = dump_json([node(0, children=[1, 9]), node(1)])
        with pytest.raises(SchemaError):
            parse_dom_dump(raw)

    def test_cycle_detected(self):
        raw = dump_json([node(0, children=[1]), node(1, children=[0])])
        with pytest.raises(CycleError):
            parse_dom_dump(raw)

    def test_shared_child_is_a_cycle_violation(self):
        # node 2 reachable from both 0 and 1: visits twice
        raw = dump_json([node(0, children=[1, 2]), node(1, children=[2]), node(2)])
        with pytest.raises(CycleError):
            parse_dom_dump(raw)

    def test_negative_extent_rejected(self):
        raw = dump_json([node(0, bbox=(0, 0, -5, 10))])
        with pytest.raises(BoundsError):
            parse_dom_dump(raw)

    def test_malformed_json(self):
        with pytest.raises(SchemaError):
            parse_dom_dump(b"{not json")

    def test_missing_root_key(self):
        raw = json.dumps({"version": "1", "viewport": [10, 10], "nodes": [node(0)]})
        with pytest.raises(SchemaError):
            parse_dom_dump(raw)


class TestSerialize:
    def test_parse_serialize_identity(self):
        raw = dump_json([node(0, children=[1, 2]), node(1, text="a"), node(2, tag="IMG")])
        dump = parse_dom_dump(raw)
        again = parse_dom_dump(serialize_dom_dump(dump))
        assert again == dump

    def test_serialize_is_canonical(self):
        raw = dump_json([node(0, children=[1]), node(1)])
        a = serialize_dom_dump(parse_dom_dump(raw))
        b = serialize_dom_dump(parse_dom_dump(a))
        assert a == b


class TestExtractLeaves:
    def test_preorder_and_pruning(self):
        # root(0) > [sec(1) > [P(2), IMG(3)], SCRIPT(4), SPAN(5)]
        dump = parse_dom_dump(
            dump_json(
                [
                    node(0, children=[1, 4, 5]),
                    node(1, children=[2, 3]),
                    node(2, tag="P", bbox=(0, 0, 10, 10), text="x"),
                    node(3, tag="IMG", bbox=(20, 0, 10, 10)),
                    node(4, tag="SCRIPT", bbox=(0, 0, 5, 5)),
                    node(5, tag="SPAN", bbox=(40, 0, 10, 10), text="y"),
                ]
            )
        )
        leaves = extract_leaves(dump)
        assert [e.element_id for e in leaves] == [2, 3, 5]
        assert [e.preorder_index for e in leaves] == [0, 1, 2]

    def test_zero_area_pruned(self):
        dump = flat_dump([(0, 0, 10, 10), (5, 5, 0, 10)])
        leaves = extract_leaves(dump)
        assert [e.element_id for e in leaves] == [1]

    def test_fully_offscreen_pruned_partial_clipped(self):
        dump = flat_dump([(1300, 0, 10, 10), (1275.5, 10, 20, 10)])
        leaves = extract_leaves(dump)
        assert [e.element_id for e in leaves] == [2]
        assert leaves[0].bbox == (1275.5, 10.0, 4.5, 10.0)

    def test_blocklist_subtree_removed(self):
        dump = parse_dom_dump(
            dump_json(
                [
                    node(0, children=[1, 3]),
                    node(1, tag="SCRIPT", children=[2]),
                    node(2, tag="P", bbox=(0, 0, 10, 10)),
                    node(3, tag="P", bbox=(30, 0, 10, 10)),
                ]
            )
        )
        assert [e.element_id for e in extract_leaves(dump)] == [3]

    def test_parent_of_fully_pruned_children_becomes_leaf(self):
        dump = parse_dom_dump(
            dump_json(
                [
                    node(0, children=[1]),
                    node(1, tag="DIV", bbox=(0, 0, 50, 50), children=[2]),
                    node(2, tag="P", bbox=(10, 10, 0, 5)),
                ]
            )
        )
        leaves = extract_leaves(dump)
        assert [e.element_id for e in leaves] == [1]

    def test_empty_page_error(self):
        # zero-area root prunes the whole tree, so nothing survives
        dump = parse_dom_dump(
            dump_json([node(0, bbox=(0, 0, 1280, 0), children=[1]), node(1, tag="P")])
        )
        with pytest.raises(EmptyPageError):
            extract_leaves(dump)

    def test_custom_prune_config(self):
        dump = flat_dump([(0, 0, 10, 10), (30, 0, 10, 10)], tags=["P", "ASIDE"])
        rules = PruneConfig(tag_blocklist=frozenset({"ASIDE"}))
        assert [e.element_id for e in extract_leaves(dump, rules)] == [1]

    def test_all_background_by_default(self):
        dump = flat_dump([(0, 0, 10, 10)])
        assert extract_leaves(dump)[0].label is Label.BACKGROUND


class TestLabels:
    def test_attach(self):
        page = make_page(n=5, labels=(2, 4, 5))
        got = {e.element_id: e.label for e in page.elements}
        assert got[2] is Label.PRICE
        assert got[4] is Label.TITLE
        assert got[5] is Label.IMAGE
        assert got[1] is Label.BACKGROUND
        assert page.fully_labeled

    def test_duplicate_assignment(self):
        dump = flat_dump([(0, 0, 10, 10), (30, 0, 10, 10)])
        elements = extract_leaves(dump)
        with pytest.raises(DuplicateLabelError):
            attach_labels(elements, LabelManifest(price_id=1, title_id=1, image_id=2))

    def test_unknown_element(self):
        dump = flat_dump([(0, 0, 10, 10)])
        elements = extract_leaves(dump)
        with pytest.raises(MissingElementError):
            attach_labels(elements, LabelManifest(price_id=99, title_id=None, image_id=None))

    def test_partial_manifest_not_fully_labeled(self):
        dump = flat_dump([(0, 0, 10, 10), (30, 0, 10, 10)])
        page = build_webpage(
            page_id="p", domain="d", screenshot_ref="", dom=dump,
            labels=LabelManifest(price_id=1, title_id=None, image_id=None),
        )
        assert not page.fully_labeled
        assert label_counts(page)[Label.PRICE] == 1

    def test_label_counts(self):
        page = make_page(n=6, labels=(1, 2, 3))
        counts = label_counts(page)
        assert counts[Label.PRICE] == 1
        assert counts[Label.BACKGROUND] == 3


class TestManifests:
    def test_label_csv_roundtrip(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("page_id,price_id,title_id,image_id\npg1,5,6,7\n")
        got = read_label_manifests(path)
        assert got["pg1"] == LabelManifest(price_id=5, title_id=6, image_id=7)

    def test_label_csv_bad_header(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("page,price,title,image\npg1,5,6,7\n")
        with pytest.raises(SchemaError):
            read_label_manifests(path)

    def test_dataset_csv_bad_header(self, tmp_path):
        path = tmp_path / "manifest.csv"
        path.write_text("page_id,domain\npg1,d\n")
        with pytest.raises(SchemaError):
            read_dataset_manifest(path)

    def test_load_dataset_resolves_relative_paths(self, small_synth):
        _, dataset, pages = small_synth
        assert len(pages) == 10
        assert all(p.fully_labeled for p in pages)
        assert all(len(p.elements) >= 49 for p in pages)
