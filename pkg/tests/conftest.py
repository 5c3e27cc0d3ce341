from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import fig5world  # noqa: E402


@pytest.fixture
def llm():
    return fig5world.make_llm()


@pytest.fixture
def fig5_graph(llm):
    return fig5world.build_graph(llm)


@pytest.fixture
def fig5_graph_initial(llm):
    """Only the initial three papers (before progressive updates)."""
    return fig5world.build_graph(llm, paper_ids=("P1", "P2", "P3"))
