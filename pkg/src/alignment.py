import math
import logging
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from typing import Dict, Iterable, Iterator, List, Optional, Set, Tuple, Union

import numpy as np

from rdf_store import Graph

logger = logging.getLogger("Alignment")


class Relation(Enum):
    EQUIVALENCE = "="

    @classmethod
    def parse(cls, symbol: str) -> "Relation":
        for relation in cls:
            if relation.value == symbol.strip():
                return relation
        raise ValueError(f"Unsupported relation: {symbol!r}")


CorrespondenceKey = Tuple[str, str, Relation]


@dataclass
class Correspondence:
    source: str
    target: str
    relation: Relation = Relation.EQUIVALENCE
    confidence: float = 1.0
    extensions: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(
                f"Confidence {self.confidence} of <{self.source}, {self.target}> is outside [0, 1]"
            )

    @property
    def key(self) -> CorrespondenceKey:
        """Identity of a correspondence; extensions never take part."""
        return (self.source, self.target, self.relation)

    def sort_key(self) -> Tuple[str, str, str]:
        return (self.source, self.target, self.relation.value)

    def copy(self) -> "Correspondence":
        return Correspondence(self.source, self.target, self.relation, self.confidence, dict(self.extensions))


class Alignment:
    """Set of correspondences keyed by (source, target, relation), indexed by source and target."""

    def __init__(self, correspondences: Iterable[Correspondence] = ()):
        self._items: Dict[CorrespondenceKey, Correspondence] = {}
        self._by_source: Dict[str, Set[CorrespondenceKey]] = {}
        self._by_target: Dict[str, Set[CorrespondenceKey]] = {}
        self._frozen = False
        for c in correspondences:
            self.add(c)

    def _check_mutable(self):
        if self._frozen:
            raise RuntimeError("Alignment is frozen (read-only)")

    def freeze(self) -> "Alignment":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def add(self, correspondence: Correspondence) -> Correspondence:
        """Insert a copy of correspondence.

        An existing entry with the same key keeps the larger confidence and
        gains (or overwrites) the new extension values.
        """
        self._check_mutable()
        existing = self._items.get(correspondence.key)
        if existing is not None:
            existing.confidence = max(existing.confidence, correspondence.confidence)
            existing.extensions.update(correspondence.extensions)
            return existing

        stored = correspondence.copy()
        self._items[stored.key] = stored
        self._by_source.setdefault(stored.source, set()).add(stored.key)
        self._by_target.setdefault(stored.target, set()).add(stored.key)
        return stored

    def add_with_feature(self, correspondence: Correspondence, key: str, value: float) -> "Alignment":
        """
        Add (or merge) a correspondence and set one feature value on it.

        Args:
            correspondence: Merged into an existing one with the same key
            key: Extension key, e.g. "filter/neighbours/jaccard"
            value: Finite feature value

        Returns:
            This alignment
        """
        if not math.isfinite(value):
            raise ValueError(f"Feature {key!r} value must be finite, got {value}")
        stored = self.add(correspondence)
        stored.extensions[key] = float(value)
        return self

    def remove(self, key: CorrespondenceKey) -> None:
        self._check_mutable()
        stored = self._items.pop(key, None)
        if stored is None:
            return
        for index, entity in ((self._by_source, stored.source), (self._by_target, stored.target)):
            keys = index.get(entity)
            if keys is not None:
                keys.discard(key)
                if not keys:
                    del index[entity]

    def get(self, source: str, target: str, relation: Relation = Relation.EQUIVALENCE) -> Optional[Correspondence]:
        return self._items.get((source, target, relation))

    def __contains__(self, item: Union[Correspondence, CorrespondenceKey]) -> bool:
        key = item.key if isinstance(item, Correspondence) else item
        return key in self._items

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Correspondence]:
        return iter(list(self._items.values()))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Alignment):
            return NotImplemented
        if self._items.keys() != other._items.keys():
            return False
        return all(
            c.confidence == other._items[k].confidence and c.extensions == other._items[k].extensions
            for k, c in self._items.items()
        )

    def __repr__(self) -> str:
        return f"Alignment({len(self)} correspondences)"

    def keys(self) -> Set[CorrespondenceKey]:
        return set(self._items)

    def sorted(self) -> List[Correspondence]:
        """Correspondences in deterministic (source, target, relation) order."""
        return sorted(self._items.values(), key=Correspondence.sort_key)

    def by_source(self, source: str) -> List[Correspondence]:
        return [self._items[k] for k in sorted(self._by_source.get(source, ()), key=key_order)]

    def by_target(self, target: str) -> List[Correspondence]:
        return [self._items[k] for k in sorted(self._by_target.get(target, ()), key=key_order)]

    def sources(self) -> Set[str]:
        return set(self._by_source)

    def targets(self) -> Set[str]:
        return set(self._by_target)

    def has_source(self, source: str) -> bool:
        return source in self._by_source

    def has_target(self, target: str) -> bool:
        return target in self._by_target

    def targets_of(self, source: str) -> Set[str]:
        return {k[1] for k in self._by_source.get(source, ())}

    def copy(self) -> "Alignment":
        """Mutable deep copy (the frozen flag is not carried over)."""
        return Alignment(c.copy() for c in self._items.values())

    def sample(self, n: int, seed: int = 0) -> Tuple["Alignment", "Alignment"]:
        """Split into (n uniformly chosen correspondences, the rest); same seed, same split."""
        if not (0 <= n <= len(self)):
            raise ValueError(f"Cannot sample {n} correspondences from an alignment of {len(self)}")
        ordered = self.sorted()
        rng = np.random.default_rng(seed)
        chosen = set(rng.permutation(len(ordered))[:n].tolist())
        sampled = Alignment(c for i, c in enumerate(ordered) if i in chosen)
        rest = Alignment(c for i, c in enumerate(ordered) if i not in chosen)
        logger.debug(f"Sampled {n} of {len(ordered)} correspondences (seed {seed})")
        return sampled, rest

    def sample_by_fraction(self, fraction: float, seed: int = 0) -> Tuple["Alignment", "Alignment"]:
        """
        Sample a fraction of the correspondences.

        Args:
            fraction: Share to sample, in (0, 1); round(fraction * size) rounds half up
            seed: Sampling seed; the same seed gives the same split

        Returns:
            (sampled, rest): The sample and the remaining correspondences
        """
        if not (0.0 < fraction < 1.0):
            raise ValueError(f"Fraction must lie in the open interval (0, 1), got {fraction}")
        n = int((Decimal(str(fraction)) * len(self)).quantize(Decimal(1), rounding=ROUND_HALF_UP))
        return self.sample(n, seed)


def key_order(key: CorrespondenceKey) -> Tuple[str, str, str]:
    return (key[0], key[1], key[2].value)


class GoldStandardCompleteness(Enum):
    COMPLETE = "COMPLETE"
    PARTIAL_SOURCE_COMPLETE_TARGET_COMPLETE = "PARTIAL_SOURCE_COMPLETE_TARGET_COMPLETE"
    PARTIAL_SOURCE_INCOMPLETE_TARGET_COMPLETE = "PARTIAL_SOURCE_INCOMPLETE_TARGET_COMPLETE"
    PARTIAL_SOURCE_COMPLETE_TARGET_INCOMPLETE = "PARTIAL_SOURCE_COMPLETE_TARGET_INCOMPLETE"
    PARTIAL_SOURCE_INCOMPLETE_TARGET_INCOMPLETE = "PARTIAL_SOURCE_INCOMPLETE_TARGET_INCOMPLETE"

    @property
    def is_source_complete(self) -> bool:
        return self in (
            GoldStandardCompleteness.COMPLETE,
            GoldStandardCompleteness.PARTIAL_SOURCE_COMPLETE_TARGET_COMPLETE,
            GoldStandardCompleteness.PARTIAL_SOURCE_COMPLETE_TARGET_INCOMPLETE,
        )

    @property
    def is_target_complete(self) -> bool:
        return self in (
            GoldStandardCompleteness.COMPLETE,
            GoldStandardCompleteness.PARTIAL_SOURCE_COMPLETE_TARGET_COMPLETE,
            GoldStandardCompleteness.PARTIAL_SOURCE_INCOMPLETE_TARGET_COMPLETE,
        )


class Verdict(Enum):
    TRUE_POSITIVE = "TP"
    FALSE_POSITIVE = "FP"
    UNJUDGEABLE = "UNJUDGED"


def judge(c: Correspondence, reference: Alignment, completeness: GoldStandardCompleteness) -> Verdict:
    """Judge one correspondence against a reference of the given completeness.

    Anything outside the reference is wrong when the reference is complete,
    or when it involves an entity of a complete side that the reference
    mentions; otherwise it cannot be judged.
    """
    if c.key in reference:
        return Verdict.TRUE_POSITIVE
    if completeness is GoldStandardCompleteness.COMPLETE:
        return Verdict.FALSE_POSITIVE
    if completeness.is_source_complete and reference.has_source(c.source):
        return Verdict.FALSE_POSITIVE
    if completeness.is_target_complete and reference.has_target(c.target):
        return Verdict.FALSE_POSITIVE
    return Verdict.UNJUDGEABLE


@dataclass
class TestCase:
    """Two graphs, their reference alignment and its completeness level.

    Reference entities need not exist in the graphs.
    """
    __test__ = False

    name: str
    source: Graph
    target: Graph
    reference: Alignment
    completeness: GoldStandardCompleteness = GoldStandardCompleteness.COMPLETE
