import re
import logging
from collections import defaultdict
from typing import Dict, Iterable, List, Optional, Set

from alignment import Alignment, Correspondence
from rdf_store import RDFS_LABEL, SKOS_ALT_LABEL, Graph, is_skolem

logger = logging.getLogger("Matchers")

DEFAULT_LABEL_PROPERTIES = [RDFS_LABEL, SKOS_ALT_LABEL]

EXACT_KEY = "base/exact"
NORMALIZED_KEY = "base/normalized"

_WHITESPACE = re.compile(r"\s+")


def normalize_label(text: str) -> str:
    """Drop non-ASCII code points, lowercase, trim and collapse whitespace.

    Unicode whitespace (e.g. a no-break space) still separates words.
    """
    spaced = _WHITESPACE.sub(" ", text)
    ascii_only = "".join(ch for ch in spaced if ord(ch) <= 127)
    return _WHITESPACE.sub(" ", ascii_only.lower()).strip()


def _label_index(
    graph: Graph,
    label_properties: Iterable[str],
    include_blank_nodes: bool,
) -> Dict[str, Dict[str, Set[str]]]:
    """{"exact": label -> subjects, "normalized": normalized label -> subjects}."""
    exact: Dict[str, Set[str]] = defaultdict(set)
    normalized: Dict[str, Set[str]] = defaultdict(set)
    for subject in graph.subjects():
        if not include_blank_nodes and is_skolem(subject.iri):
            continue
        for prop in label_properties:
            for literal in graph.literal_values(subject, prop):
                if literal.lexical.strip():
                    exact[literal.lexical].add(subject.iri)
                norm = normalize_label(literal.lexical)
                if norm:
                    normalized[norm].add(subject.iri)
    return {"exact": exact, "normalized": normalized}


def base_match(
    source: Graph,
    target: Graph,
    label_properties: Optional[List[str]] = None,
    include_blank_nodes: bool = False,
) -> Alignment:
    """Recall-oriented label matcher.

    Pairs every source and target subject sharing a label value under any of
    the label properties, compared by string equality and after
    normalize_label. Exact matches carry base/exact=1, normalized-only
    matches carry base/normalized=1.

    Args:
        source: Source graph
        target: Target graph
        label_properties: Label predicates; defaults to rdfs:label and skos:altLabel
        include_blank_nodes: Also match skolemized blank-node subjects

    Returns:
        Candidate alignment with confidence 1.0 per correspondence
    """
    label_properties = label_properties or DEFAULT_LABEL_PROPERTIES
    src_index = _label_index(source, label_properties, include_blank_nodes)
    tgt_index = _label_index(target, label_properties, include_blank_nodes)

    exact_pairs = set()
    for label, src_subjects in src_index["exact"].items():
        for t in tgt_index["exact"].get(label, ()):
            for s in src_subjects:
                exact_pairs.add((s, t))

    normalized_pairs = set()
    for label, src_subjects in src_index["normalized"].items():
        for t in tgt_index["normalized"].get(label, ()):
            for s in src_subjects:
                normalized_pairs.add((s, t))

    alignment = Alignment()
    for s, t in sorted(exact_pairs):
        alignment.add(Correspondence(s, t, confidence=1.0, extensions={EXACT_KEY: 1.0}))
    for s, t in sorted(normalized_pairs - exact_pairs):
        alignment.add(Correspondence(s, t, confidence=1.0, extensions={NORMALIZED_KEY: 1.0}))

    logger.info(
        f"Base matcher: {len(alignment)} correspondences "
        f"({len(exact_pairs)} exact, {len(normalized_pairs - exact_pairs)} normalized only)"
    )
    return alignment


def forward_match(given: Alignment) -> Alignment:
    """Replay a given alignment (e.g. the training sample as a baseline)."""
    return given
