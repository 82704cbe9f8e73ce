"""Feature-generating filters, the threshold filter and the one-to-one extractor.

A feature filter never drops correspondences: it returns a copy of the
alignment in which every correspondence carries one more extension value.
Feature keys ("filter/<name>/<measure>") appear in the alignment XML and in
the cube CSV, so they are part of the public surface.

Entities are mapped from the source into the target side through the
alignment together with the identity on equal IRIs, so graphs sharing
property or category IRIs still overlap.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, FrozenSet, Iterable, Set

from alignment import Alignment, Correspondence
from matchers import normalize_label
from rdf_store import (
    RDF_TYPE,
    RDFS_COMMENT,
    RDFS_LABEL,
    RDFS_SUBCLASS_OF,
    SKOS_ALT_LABEL,
    SKOS_HIDDEN_LABEL,
    SKOS_PREF_LABEL,
    Direction,
    Graph,
)

logger = logging.getLogger("FeatureFilters")


class OverlapMode(Enum):
    ABSOLUTE = "absolute"
    MIN = "min"
    MAX = "max"
    JACCARD = "jaccard"
    DICE = "dice"


class LiteralComparison(Enum):
    NONE = "none"
    EXACT = "exact"
    NORMALIZED = "normalized"


class Tokenizer(Enum):
    WHITESPACE = "whitespace"
    WHITESPACE_LOWERCASE = "whitespace_lowercase"

    def tokenize(self, text: str) -> Set[str]:
        if self is Tokenizer.WHITESPACE_LOWERCASE:
            text = text.lower()
        return set(text.split())


DEFAULT_EXCLUDED_PROPERTIES: FrozenSet[str] = frozenset({
    RDFS_LABEL,
    RDFS_COMMENT,
    SKOS_PREF_LABEL,
    SKOS_ALT_LABEL,
    SKOS_HIDDEN_LABEL,
})


@dataclass
class FilterConfig:
    overlap_mode: OverlapMode = OverlapMode.JACCARD
    literal_comparison: LiteralComparison = LiteralComparison.NONE
    excluded_property_iris: FrozenSet[str] = field(default_factory=lambda: DEFAULT_EXCLUDED_PROPERTIES)
    tokenizer: Tokenizer = Tokenizer.WHITESPACE
    instance_to_hierarchy_property: str = RDF_TYPE
    hierarchy_property: str = RDFS_SUBCLASS_OF
    level_discount: float = 0.5
    neighbour_direction: Direction = Direction.BOTH
    bow_property: str = RDFS_LABEL
    max_hierarchy_depth: int = 10

    def __post_init__(self):
        if not (0.0 < self.level_discount <= 1.0):
            raise ValueError(f"level_discount must lie in (0, 1], got {self.level_discount}")
        if self.max_hierarchy_depth < 1:
            raise ValueError(f"max_hierarchy_depth must be >= 1, got {self.max_hierarchy_depth}")


def neighbours_key(mode: OverlapMode) -> str:
    return f"filter/neighbours/{mode.value}"


def properties_key(mode: OverlapMode) -> str:
    return f"filter/properties/{mode.value}"


def hierarchy_key(mode: OverlapMode) -> str:
    return f"filter/hierarchy/{mode.value}"


HIERARCHY_DISCOUNTED_KEY = "filter/hierarchy/discounted"


def type_key(mode: OverlapMode) -> str:
    return f"filter/type/{mode.value}"


def bow_key(mode: OverlapMode) -> str:
    return f"filter/bow/{mode.value}"


def overlap_from_counts(intersection: int, size_a: int, size_b: int, mode: OverlapMode) -> float:
    """Overlap of two sets given |a ∩ b|, |a| and |b|; a zero denominator gives 0."""
    if mode is OverlapMode.ABSOLUTE:
        return float(intersection)
    if mode is OverlapMode.MIN:
        denominator = min(size_a, size_b)
    elif mode is OverlapMode.MAX:
        denominator = max(size_a, size_b)
    elif mode is OverlapMode.JACCARD:
        denominator = size_a + size_b - intersection
    else:
        return 2.0 * intersection / (size_a + size_b) if size_a + size_b else 0.0
    return intersection / denominator if denominator else 0.0


def overlap_score(a: Set, b: Set, mode: OverlapMode) -> float:
    return overlap_from_counts(len(a & b), len(a), len(b), mode)


def map_through(entities: Iterable[str], alignment: Alignment, target_side: Set[str]) -> Set[str]:
    """Images of source entities under the alignment plus identity on equal IRIs.

    An entity also maps to itself when the same IRI is in target_side, even if
    the alignment sends it elsewhere too. An entity with no image at all still
    counts once, as itself.

    Args:
        entities: Source-side IRIs.
        alignment: Candidate correspondences used as the mapping.
        target_side: The target set the images are compared with.

    Returns:
        The set of target-side images.
    """
    mapped: Set[str] = set()
    for entity in entities:
        images = set(alignment.targets_of(entity))
        if entity in target_side or not images:
            images.add(entity)
        mapped |= images
    return mapped


def _annotate(alignment: Alignment, key: str, compute: Callable[[Correspondence], float]) -> Alignment:
    result = alignment.copy()
    for c in result.sorted():
        result.add_with_feature(c, key, compute(c))
    return result


def _matched_literal_count(src: Graph, s: str, tgt: Graph, t: str, comparison: LiteralComparison) -> int:
    if comparison is LiteralComparison.NONE:
        return 0
    if comparison is LiteralComparison.EXACT:
        a = {lit.lexical for lit in src.literal_values(s)}
        b = {lit.lexical for lit in tgt.literal_values(t)}
    else:
        a = {normalize_label(lit.lexical) for lit in src.literal_values(s)} - {""}
        b = {normalize_label(lit.lexical) for lit in tgt.literal_values(t)} - {""}
    return len(a & b)


def similar_neighbours_filter(
    alignment: Alignment, src: Graph, tgt: Graph, cfg: FilterConfig = None
) -> Alignment:
    """Share of already matched neighbours of source and target.

    With literal comparison enabled, the number of equal literal values is
    added to the intersection and to both set sizes.
    """
    cfg = cfg or FilterConfig()
    key = neighbours_key(cfg.overlap_mode)

    def compute(c: Correspondence) -> float:
        source_neighbours = {r.iri for r in src.neighbours(c.source, cfg.neighbour_direction)}
        target_neighbours = {r.iri for r in tgt.neighbours(c.target, cfg.neighbour_direction)}
        mapped = map_through(source_neighbours, alignment, target_neighbours)
        extra = _matched_literal_count(src, c.source, tgt, c.target, cfg.literal_comparison)
        return overlap_from_counts(
            len(mapped & target_neighbours) + extra,
            len(mapped) + extra,
            len(target_neighbours) + extra,
            cfg.overlap_mode,
        )

    result = _annotate(alignment, key, compute)
    logger.info(f"SimilarNeighboursFilter wrote {key} on {len(result)} correspondences")
    return result


def common_properties_filter(
    alignment: Alignment, src: Graph, tgt: Graph, cfg: FilterConfig = None
) -> Alignment:
    """Overlap of the (non-excluded) properties used by source and target."""
    cfg = cfg or FilterConfig()
    key = properties_key(cfg.overlap_mode)

    def compute(c: Correspondence) -> float:
        source_props = {p.iri for p in src.properties(c.source)} - cfg.excluded_property_iris
        target_props = {p.iri for p in tgt.properties(c.target)} - cfg.excluded_property_iris
        return overlap_score(map_through(source_props, alignment, target_props), target_props, cfg.overlap_mode)

    result = _annotate(alignment, key, compute)
    logger.info(f"CommonPropertiesFilter wrote {key} on {len(result)} correspondences")
    return result


def hierarchy_levels(graph: Graph, node: str, cfg: FilterConfig, max_depth: int) -> Dict[str, int]:
    """Ancestor IRI -> first level it is reached at (1 = direct parent)."""
    levels: Dict[str, int] = {}
    frontier = {r.iri for r in graph.objects(node, cfg.instance_to_hierarchy_property)}
    level = 1
    while frontier and level <= max_depth:
        for ancestor in frontier:
            levels[ancestor] = level
        parents: Set[str] = set()
        for ancestor in frontier:
            parents |= {r.iri for r in graph.objects(ancestor, cfg.hierarchy_property)}
        frontier = parents - levels.keys()
        level += 1
    return levels


def similar_hierarchy_filter(
    alignment: Alignment, src: Graph, tgt: Graph, cfg: FilterConfig = None
) -> Alignment:
    """Hierarchy overlap, plain and discounted by the level of each match.

    A source ancestor at level k matching a target ancestor at level j adds
    level_discount ** (max(k, j) - 1) to the discounted feature.
    """
    cfg = cfg or FilterConfig()
    key = hierarchy_key(cfg.overlap_mode)
    result = alignment.copy()

    for c in result.sorted():
        source_levels = hierarchy_levels(src, c.source, cfg, cfg.max_hierarchy_depth)
        target_levels = hierarchy_levels(tgt, c.target, cfg, cfg.max_hierarchy_depth)
        target_ancestors = set(target_levels)

        discounted = 0.0
        for ancestor, k in sorted(source_levels.items()):
            for image in sorted(map_through([ancestor], alignment, target_ancestors)):
                j = target_levels.get(image)
                if j is not None:
                    discounted += cfg.level_discount ** (max(k, j) - 1)

        plain = overlap_score(map_through(source_levels, alignment, target_ancestors), target_ancestors, cfg.overlap_mode)
        result.add_with_feature(c, key, plain)
        result.add_with_feature(c, HIERARCHY_DISCOUNTED_KEY, discounted)

    logger.info(f"SimilarHierarchyFilter wrote {key} and {HIERARCHY_DISCOUNTED_KEY} on {len(result)} correspondences")
    return result


def similar_type_filter(
    alignment: Alignment, src: Graph, tgt: Graph, cfg: FilterConfig = None
) -> Alignment:
    """Overlap of direct parents only."""
    cfg = cfg or FilterConfig()
    key = type_key(cfg.overlap_mode)

    def compute(c: Correspondence) -> float:
        source_types = {r.iri for r in src.objects(c.source, cfg.instance_to_hierarchy_property)}
        target_types = {r.iri for r in tgt.objects(c.target, cfg.instance_to_hierarchy_property)}
        return overlap_score(map_through(source_types, alignment, target_types), target_types, cfg.overlap_mode)

    result = _annotate(alignment, key, compute)
    logger.info(f"SimilarTypeFilter wrote {key} on {len(result)} correspondences")
    return result


def bag_of_words_set_similarity_filter(
    alignment: Alignment, src: Graph, tgt: Graph, cfg: FilterConfig = None
) -> Alignment:
    """Token overlap of the literals under cfg.bow_property."""
    cfg = cfg or FilterConfig()
    key = bow_key(cfg.overlap_mode)

    def tokens(graph: Graph, node: str) -> Set[str]:
        result: Set[str] = set()
        for literal in graph.literal_values(node, cfg.bow_property):
            result |= cfg.tokenizer.tokenize(literal.lexical)
        return result

    def compute(c: Correspondence) -> float:
        return overlap_score(tokens(src, c.source), tokens(tgt, c.target), cfg.overlap_mode)

    result = _annotate(alignment, key, compute)
    logger.info(f"BagOfWordsSetSimilarityFilter wrote {key} on {len(result)} correspondences")
    return result


def threshold_filter(alignment: Alignment, threshold: float) -> Alignment:
    """Keep correspondences with confidence >= threshold."""
    result = Alignment(c for c in alignment.sorted() if c.confidence >= threshold)
    logger.info(f"ThresholdFilter({threshold}): kept {len(result)} of {len(alignment)}")
    return result


def naive_descending_extract(alignment: Alignment) -> Alignment:
    """Greedy one-to-one extraction by descending confidence.

    Ties are broken by (source, target) so the result is deterministic.
    """
    ordered = sorted(alignment, key=lambda c: (-c.confidence, c.source, c.target, c.relation.value))
    used_sources: Set[str] = set()
    used_targets: Set[str] = set()
    result = Alignment()
    for c in ordered:
        if c.source in used_sources or c.target in used_targets:
            continue
        used_sources.add(c.source)
        used_targets.add(c.target)
        result.add(c)
    logger.info(f"NaiveDescendingExtractor: kept {len(result)} of {len(alignment)}")
    return result


def rerank_by_feature(alignment: Alignment, key: str) -> Alignment:
    """Replace each confidence by the feature value under key (0 when absent).

    Values above 1 (absolute overlaps) are divided by the maximum value.
    """
    values = {c.key: c.extensions.get(key, 0.0) for c in alignment}
    top = max(values.values(), default=0.0)
    scale = top if top > 1.0 else 1.0
    result = Alignment()
    for c in alignment.sorted():
        reranked = c.copy()
        reranked.confidence = min(1.0, max(0.0, values[c.key] / scale))
        result.add(reranked)
    return result


FEATURE_FILTERS = {
    "similar_neighbours": similar_neighbours_filter,
    "common_properties": common_properties_filter,
    "similar_hierarchy": similar_hierarchy_filter,
    "similar_type": similar_type_filter,
    "bag_of_words": bag_of_words_set_similarity_filter,
}
