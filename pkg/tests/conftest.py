import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(__file__)), "src"))

from alignment import Alignment, Correspondence  # noqa: E402
from alignment_xml import write_alignment_file  # noqa: E402
from rdf_store import RDFS_LABEL, parse_ntriples  # noqa: E402

SOURCE_NS = "http://source.example.org/"
TARGET_NS = "http://target.example.org/"


def twin_ntriples(namespace: str, n_nodes: int = 160, n_predicates: int = 5, seed: int = 7,
                  confusable_every: int = 0) -> str:
    """Random labeled graph; the structure depends only on seed, the IRIs on namespace.

    With confusable_every=k, every k-th node also carries the label of its successor.
    """
    rng = np.random.default_rng(seed)
    lines = []
    for i in range(n_nodes):
        node = f"<{namespace}node{i:03d}>"
        lines.append(f'{node} <{RDFS_LABEL}> "Entity {i}" .')
        if confusable_every and i % confusable_every == 0 and i + 1 < n_nodes:
            lines.append(f'{node} <{RDFS_LABEL}> "Entity {i + 1}" .')
        for _ in range(int(rng.integers(2, 4))):
            p = int(rng.integers(n_predicates))
            o = int(rng.integers(n_nodes))
            lines.append(f"{node} <{namespace}p{p}> <{namespace}node{o:03d}> .")
    return "\n".join(lines) + "\n"


def identity_reference(source_ns: str, target_ns: str, n_nodes: int = 160) -> Alignment:
    return Alignment(
        Correspondence(f"{source_ns}node{i:03d}", f"{target_ns}node{i:03d}") for i in range(n_nodes)
    )


@pytest.fixture
def twin_graphs():
    source = parse_ntriples(twin_ntriples(SOURCE_NS), "source")
    target = parse_ntriples(twin_ntriples(TARGET_NS), "target")
    return source, target, identity_reference(SOURCE_NS, TARGET_NS)


@pytest.fixture
def twin_case(tmp_path):
    """Twin graphs and their reference on disk; the target has some misleading labels."""
    data = tmp_path / "data"
    data.mkdir()
    source = data / "source.nt"
    target = data / "target.nt"
    source.write_text(twin_ntriples(SOURCE_NS), encoding="utf-8")
    target.write_text(twin_ntriples(TARGET_NS, confusable_every=4), encoding="utf-8")
    reference = write_alignment_file(identity_reference(SOURCE_NS, TARGET_NS), data / "reference.rdf")
    return {"name": "twin", "source": str(source), "target": str(target), "reference": str(reference)}
