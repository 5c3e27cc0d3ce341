"""Scholarly-corpus query engine: taxonomy-anchored knowledge graph,
natural-language query planning over a composable operator library, and a
parallel caching execution engine with full trace provenance."""

from .graphstore import EdgeKind, Graph, GraphEdge, GraphNode, Hop, NodeKind
from .llm import Accounting, Cassette, HashEmbedder, LlmClient, PromptRequest

__all__ = [
    "Accounting", "Cassette", "EdgeKind", "Graph", "GraphEdge", "GraphNode",
    "HashEmbedder", "Hop", "LlmClient", "NodeKind", "PromptRequest",
]

__version__ = "0.1.0"
