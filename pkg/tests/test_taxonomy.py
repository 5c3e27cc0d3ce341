from __future__ import annotations

import json

import pytest

import fig5world
from scholardb.errors import SchemaViolationError, TaxonomyError
from scholardb.graphstore import EdgeKind, Hop, NodeKind
from scholardb.llm import Cassette, LlmClient, ScriptedChat
from scholardb.taxonomy import (
    Taxonomy,
    TaxonomyConfig,
    TaxonomyKind,
    anchor_into_graph,
    build_taxonomy,
    extract_template,
    generate_reference_taxonomy,
    refine_branch,
    standardize,
    update_with_paper,
)

EXPECTED_FIG5_TREE = {
    "Vector Search": {
        "papers": [],
        "children": {
            "KNN Retrieval": {"papers": ["P3"], "children": {}},
            "Filtered Vector Search": {
                "papers": [],
                "children": {
                    "Single Attribute Filter": {"papers": ["P1"], "children": {}},
                    "Multi-attribute Filter": {"papers": ["P4"], "children": {}},
                },
            },
            "Range Search": {"papers": ["P2"], "children": {}},
            "Batch KNN": {"papers": ["P5"], "children": {}},
        },
    }
}


class TestExtractTemplate:
    def test_fig5_paper1_aspects(self, llm, fig5_graph):
        tpl = extract_template(fig5_graph, "P1", TaxonomyKind.PROBLEM, llm)
        assert tpl.aspects == ("a query vector and an attribute filter",
                               "top-k candidates")

    def test_fallback_to_introduction(self, llm):
        graph = fig5world.build_graph(llm, paper_ids=("P1",))
        # Remove the targeted unit; extraction proceeds from shared units.
        graph.remove_edge("P1", "P1/section/ProblemFormulation", EdgeKind.HAS)
        sid = "P1/section/ProblemFormulation"
        graph.set_attrs(sid, body="")
        tpl = extract_template(fig5_graph_without_section(graph), "P1",
                               TaxonomyKind.PROBLEM, llm)
        assert tpl.aspects[0]

    def test_malformed_payload_rejected(self, fig5_graph):
        bad = LlmClient(chat=ScriptedChat(default="not json"), embed_dim=16)
        with pytest.raises(SchemaViolationError):
            extract_template(fig5_graph, "P1", TaxonomyKind.PROBLEM, bad)

    def test_no_context_units_rejected(self, llm):
        from scholardb.graphstore import Graph, GraphNode

        g = Graph()
        g.add_node(GraphNode("PX", NodeKind.PAPER, {"title": "bare"}))
        with pytest.raises(TaxonomyError):
            extract_template(g, "PX", TaxonomyKind.PROBLEM, llm)


def fig5_graph_without_section(graph):
    """Graph view where P1 lost its ProblemFormulation unit."""

    class View:
        def __init__(self, inner):
            self._inner = inner

        def has_node(self, nid):
            if nid == "P1/section/ProblemFormulation":
                return False
            return self._inner.has_node(nid)

        def __getattr__(self, name):
            return getattr(self._inner, name)

    return View(graph)


class TestStandardize:
    def test_fig5_output_classes_merge(self, llm, fig5_graph_initial):
        templates = [extract_template(fig5_graph_initial, pid,
                                      TaxonomyKind.PROBLEM, llm)
                     for pid in ("P1", "P2", "P3")]
        classes, concepts = standardize(templates, TaxonomyKind.PROBLEM, llm)
        output_classes = {c.canonical_label: c.member_signatures
                          for c in classes[1]}
        assert set(output_classes["top-k result set"]) == {
            "top-k candidates", "top-k neighbors"}
        assert len(concepts) == 3
        assert sorted(p for c in concepts for p in c.member_papers) == [
            "P1", "P2", "P3"]

    def test_single_template_single_concept(self, llm, fig5_graph_initial):
        templates = [extract_template(fig5_graph_initial, "P1",
                                      TaxonomyKind.PROBLEM, llm)]
        _, concepts = standardize(templates, TaxonomyKind.PROBLEM, llm)
        assert len(concepts) == 1
        assert concepts[0].member_papers == ["P1"]

    def test_permutation_invariant_partition(self, llm, fig5_graph_initial):
        templates = [extract_template(fig5_graph_initial, pid,
                                      TaxonomyKind.PROBLEM, llm)
                     for pid in ("P1", "P2", "P3")]
        _, fwd = standardize(templates, TaxonomyKind.PROBLEM, llm)
        _, rev = standardize(list(reversed(templates)), TaxonomyKind.PROBLEM, llm)
        fwd_parts = sorted(tuple(sorted(c.member_papers)) for c in fwd)
        rev_parts = sorted(tuple(sorted(c.member_papers)) for c in rev)
        assert fwd_parts == rev_parts

    def test_empty_templates_rejected(self, llm):
        with pytest.raises(TaxonomyError):
            standardize([], TaxonomyKind.PROBLEM, llm)


class TestReferenceTaxonomy:
    def test_fig5_skeleton(self, llm):
        tree = generate_reference_taxonomy(["problem statement x"],
                                           TaxonomyKind.PROBLEM, llm)
        assert tree["name"] == "Vector Search"
        assert [c["name"] for c in tree["children"]] == [
            "KNN Retrieval", "Filtered Vector Search"]

    def test_flat_root_accepted(self):
        chat = ScriptedChat([
            ("topic_label", None, json.dumps({"topic": "T"})),
            ("reference_taxonomy", None, json.dumps(
                {"nodes": [{"id": "r", "name": "T", "description": "",
                            "parent_id": None}]})),
        ])
        tree = generate_reference_taxonomy(["d"], TaxonomyKind.PROBLEM,
                                           LlmClient(chat=chat, embed_dim=16))
        assert tree == {"name": "T", "description": "", "children": []}

    def test_cyclic_payload_rejected(self):
        chat = ScriptedChat([
            ("topic_label", None, json.dumps({"topic": "T"})),
            ("reference_taxonomy", None, json.dumps({"nodes": [
                {"id": "r", "name": "T", "description": "", "parent_id": None},
                {"id": "a", "name": "A", "description": "", "parent_id": "b"},
                {"id": "b", "name": "B", "description": "", "parent_id": "a"},
            ]})),
        ])
        with pytest.raises(SchemaViolationError):
            generate_reference_taxonomy(["d"], TaxonomyKind.PROBLEM,
                                        LlmClient(chat=chat, embed_dim=16))

    def test_two_roots_rejected(self):
        chat = ScriptedChat([
            ("topic_label", None, json.dumps({"topic": "T"})),
            ("reference_taxonomy", None, json.dumps({"nodes": [
                {"id": "r1", "name": "A", "description": "", "parent_id": None},
                {"id": "r2", "name": "B", "description": "", "parent_id": None},
            ]})),
        ])
        with pytest.raises(SchemaViolationError):
            generate_reference_taxonomy(["d"], TaxonomyKind.PROBLEM,
                                        LlmClient(chat=chat, embed_dim=16))


class TestAlignment:
    @pytest.fixture
    def built(self, llm, fig5_graph):
        return build_taxonomy(fig5_graph, TaxonomyKind.PROBLEM,
                              fig5world.taxonomy_config(), llm,
                              paper_ids=["P1", "P2", "P3"])

    def test_range_search_created_under_root(self, built):
        names = {built.nodes[c].name for c in built.nodes[built.root_id].children}
        assert "Range Search" in names

    def test_known_children_reused_not_duplicated(self, built):
        names = [built.nodes[c].name for c in built.nodes[built.root_id].children]
        assert names.count("Filtered Vector Search") == 1
        assert names.count("KNN Retrieval") == 1

    def test_paper_union_is_input_set(self, built):
        assert sorted(built.all_papers()) == ["P1", "P2", "P3"]

    def test_assignments(self, built):
        by_name = {built.nodes[nid].name: built.nodes[nid].papers
                   for nid in built.nodes}
        assert by_name["Filtered Vector Search"] == ["P1"]
        assert by_name["KNN Retrieval"] == ["P3"]
        assert by_name["Range Search"] == ["P2"]


class TestProgressiveUpdate:
    def test_fig5_full_scenario_exact_tree(self, llm, fig5_graph):
        tax = fig5world.build_fig5_problem_taxonomy(fig5_graph, llm)
        assert fig5world.tree_shape(tax) == EXPECTED_FIG5_TREE

    def test_paper4_routes_to_filtered_search_then_refines(self, llm, fig5_graph):
        tax = build_taxonomy(fig5_graph, TaxonomyKind.PROBLEM,
                             fig5world.taxonomy_config(), llm,
                             paper_ids=["P1", "P2", "P3"])
        record = update_with_paper(tax, fig5_graph, "P4", llm)
        assert not record.created_new
        assert tax.nodes[record.node_id].name == "Filtered Vector Search"
        assert record.refined is not None and record.refined.case == "leaf"
        assert {tax.nodes[n].name for n in record.refined.new_nodes} == {
            "Single Attribute Filter", "Multi-attribute Filter"}

    def test_duplicate_paper_same_node_not_new(self, llm, fig5_graph):
        tax = build_taxonomy(fig5_graph, TaxonomyKind.PROBLEM,
                             TaxonomyConfig(alpha=10.0), llm,
                             paper_ids=["P1", "P2", "P3"])
        # A paper with P3-identical aspects lands on the same node.
        fig5_graph.add_node(_clone_paper(fig5_graph, "P3", "P3b"))
        for label in ("Abstract", "Introduction", "ProblemFormulation"):
            src = f"P3/section/{label}"
            dst = f"P3b/section/{label}"
            from scholardb.graphstore import GraphNode

            fig5_graph.add_node(GraphNode(
                dst, NodeKind.SECTION, fig5_graph.get_node(src).attrs))
            fig5_graph.add_edge("P3b", dst, EdgeKind.HAS)
        record = update_with_paper(tax, fig5_graph, "P3b", llm)
        assert not record.created_new
        assert tax.nodes[record.node_id].name == "KNN Retrieval"

    def test_new_paper_count_arithmetic(self, llm, fig5_graph):
        tax = build_taxonomy(fig5_graph, TaxonomyKind.PROBLEM,
                             TaxonomyConfig(alpha=10.0), llm,
                             paper_ids=["P1", "P2", "P3"])
        update_with_paper(tax, fig5_graph, "P4", llm)
        node = next(n for n in tax.nodes.values()
                    if n.name == "Filtered Vector Search")
        assert node.new_paper_count == 1
        assert node.papers == ["P1", "P4"]


def _clone_paper(graph, source_id, new_id):
    from scholardb.graphstore import GraphNode

    attrs = dict(graph.get_node(source_id).attrs)
    return GraphNode(new_id, NodeKind.PAPER, attrs)


class TestRefineBranch:
    def test_single_paper_noop(self, llm, fig5_graph):
        tax = build_taxonomy(fig5_graph, TaxonomyKind.PROBLEM,
                             fig5world.taxonomy_config(), llm,
                             paper_ids=["P1", "P2", "P3"])
        leaf = next(nid for nid, n in tax.nodes.items()
                    if n.name == "Range Search")
        record = refine_branch(tax, leaf, llm)
        assert record.case == "noop"

    def test_nonleaf_adds_sibling_branch(self, llm, fig5_graph):
        tax = fig5world.build_fig5_problem_taxonomy(fig5_graph, llm)
        # Papers parked directly on the (non-leaf) root: one batch-flavored
        # pair that clusters apart; one cluster matches no child.
        root = tax.nodes[tax.root_id]
        root.papers = ["P1", "P4"]
        root.new_paper_count = 2
        before = sorted(tax.all_papers())
        record = refine_branch(tax, tax.root_id, llm)
        assert record.case == "nonleaf"
        assert sorted(tax.all_papers()) == before
        assert root.new_paper_count == 0

    def test_conservation_and_reset(self, llm, fig5_graph):
        tax = build_taxonomy(fig5_graph, TaxonomyKind.PROBLEM,
                             TaxonomyConfig(alpha=10.0), llm,
                             paper_ids=["P1", "P2", "P3"])
        update_with_paper(tax, fig5_graph, "P4", llm)
        fvs = next(nid for nid, n in tax.nodes.items()
                   if n.name == "Filtered Vector Search")
        before = sorted(tax.all_papers())
        record = refine_branch(tax, fvs, llm)
        assert record.case == "leaf"
        assert sorted(tax.all_papers()) == before
        assert tax.nodes[fvs].new_paper_count == 0

    def test_malformed_cluster_payload_leaves_tree_untouched(self, fig5_graph):
        llm = fig5world.make_llm()
        tax = build_taxonomy(fig5_graph, TaxonomyKind.PROBLEM,
                             TaxonomyConfig(alpha=10.0), llm,
                             paper_ids=["P1", "P2", "P3"])
        update_with_paper(tax, fig5_graph, "P4", llm)
        fvs = next(nid for nid, n in tax.nodes.items()
                   if n.name == "Filtered Vector Search")
        bad = LlmClient(chat=ScriptedChat([
            ("estimate_subtopics", None, json.dumps({"k": 2})),
            ("cluster_and_label", None, json.dumps(
                {"clusters": [{"label": "x", "paper_ids": ["UNKNOWN"]}]})),
        ]), embedder=fig5world.make_embedder(), embed_dim=fig5world.EMBED_DIM)
        shape_before = fig5world.tree_shape(tax)
        with pytest.raises(SchemaViolationError):
            refine_branch(tax, fvs, bad)
        assert fig5world.tree_shape(tax) == shape_before


class TestAnchorIntoGraph:
    def test_fig5_assignment_edges(self, llm, fig5_graph):
        tax = fig5world.build_fig5_problem_taxonomy(fig5_graph, llm)
        anchor_into_graph(tax, fig5_graph, llm)
        single = next(nid for nid, n in tax.nodes.items()
                      if n.name == "Single Attribute Filter")
        papers = fig5_graph.neighbors(single, EdgeKind.ADDRESSES, "in",
                                      NodeKind.PAPER)
        assert [p.id for p in papers] == ["P1"]

    def test_direct_assignment_edges_before_refinement(self, llm, fig5_graph):
        # With a high alpha no refinement fires, so after P4 routes to the
        # "Filtered Vector Search" leaf its papers sit on the node itself.
        tax = build_taxonomy(fig5_graph, TaxonomyKind.PROBLEM,
                             TaxonomyConfig(alpha=10.0), llm,
                             paper_ids=["P1", "P2", "P3"])
        update_with_paper(tax, fig5_graph, "P4", llm)
        anchor_into_graph(tax, fig5_graph, llm)
        fvs = next(nid for nid, n in tax.nodes.items()
                   if n.name == "Filtered Vector Search")
        papers = fig5_graph.execute_traversal(
            [fvs], [Hop(EdgeKind.ADDRESSES, "in", NodeKind.PAPER)])
        assert [n.id for n in papers] == ["P1", "P4"]

    def test_traversal_reaches_assigned_papers(self, llm, fig5_graph):
        tax = fig5world.build_fig5_problem_taxonomy(fig5_graph, llm)
        anchor_into_graph(tax, fig5_graph, llm)
        fvs = next(nid for nid, n in tax.nodes.items()
                   if n.name == "Filtered Vector Search")
        # Papers of the refined subtree hang off the children.
        path = [Hop(EdgeKind.CHILD_OF, "in", NodeKind.PROBLEM),
                Hop(EdgeKind.ADDRESSES, "in", NodeKind.PAPER)]
        out = fig5_graph.execute_traversal([fvs], path)
        assert [n.id for n in out] == ["P1", "P4"]

    def test_idempotent_edge_count(self, llm, fig5_graph):
        tax = fig5world.build_fig5_problem_taxonomy(fig5_graph, llm)
        anchor_into_graph(tax, fig5_graph, llm)
        count = fig5_graph.edge_count()
        anchor_into_graph(tax, fig5_graph, llm)
        assert fig5_graph.edge_count() == count

    def test_root_only_taxonomy(self, llm, fig5_graph):
        tax = Taxonomy(TaxonomyKind.PROBLEM, TaxonomyConfig())
        node = tax.new_node("Solo", "only the root")
        tax.root_id = node.node_id
        anchor_into_graph(tax, fig5_graph, llm)
        assert fig5_graph.get_node(node.node_id).kind is NodeKind.PROBLEM
        assert fig5_graph.neighbors(node.node_id, EdgeKind.ADDRESSES, "in",
                                    NodeKind.PAPER) == []


class TestTreeInvariants:
    def test_tree_validity_after_full_scenario(self, llm, fig5_graph):
        tax = fig5world.build_fig5_problem_taxonomy(fig5_graph, llm)
        tax.check_tree()

    def test_partition_after_scenario(self, llm, fig5_graph):
        tax = fig5world.build_fig5_problem_taxonomy(fig5_graph, llm)
        papers = tax.all_papers()
        assert sorted(papers) == ["P1", "P2", "P3", "P4", "P5"]
        assert len(papers) == len(set(papers))

    def test_export_round_trip(self, llm, fig5_graph):
        tax = fig5world.build_fig5_problem_taxonomy(fig5_graph, llm)
        clone = Taxonomy.from_dict(tax.to_dict())
        assert fig5world.tree_shape(clone) == fig5world.tree_shape(tax)


class TestCassetteReplay:
    def test_scenario_is_cassette_replayable(self, tmp_path):
        cassette_path = tmp_path / "fig5.jsonl"
        recorder = fig5world.make_llm(
            cassette=Cassette("record", cassette_path))
        graph = fig5world.build_graph(recorder)
        tax = fig5world.build_fig5_problem_taxonomy(graph, recorder)

        replayer = LlmClient(cassette=Cassette("replay-strict", cassette_path),
                             embed_dim=fig5world.EMBED_DIM)
        graph2 = fig5world.build_graph(replayer)
        tax2 = fig5world.build_fig5_problem_taxonomy(graph2, replayer)
        assert fig5world.tree_shape(tax2) == fig5world.tree_shape(tax)
        assert graph2.corpus_version() == graph.corpus_version()
