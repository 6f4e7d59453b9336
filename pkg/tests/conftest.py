import random
import sys
from pathlib import Path

import pytest

from amrqe.datagen import gen_gold
from amrqe.graph import read_corpus_file

DATA = Path(__file__).parent / "data"
FIGURE2_SYSTEMS = ("gpla", "jamr", "camr")


@pytest.fixture(scope="session")
def gold_graph():
    return read_corpus_file(DATA / "figure1_gold.txt")[0].graph


@pytest.fixture(scope="session")
def figure2_graphs():
    return {name: read_corpus_file(DATA / f"figure2_{name}.txt")[0].graph for name in FIGURE2_SYSTEMS}


def random_graphs(n, seed=0, min_nodes=1, max_nodes=14):
    rng = random.Random(seed)
    return [gen_gold(rng.randint(min_nodes, max_nodes), seed * 100_003 + i)[0] for i in range(n)]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS):
        terminalreporter.write_line(line)
