"""Graph embeddings: random-walk corpora, skip-gram vectors, and a linear
projection between two embedding spaces used as a matcher.

Walks alternate node and predicate tokens; a literal object ends a walk
as a sink token. Each start node draws from its own generator seeded with
(seed, node index), so the corpus does not depend on the thread count.
"""

import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Collection, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from gensim.models import KeyedVectors, Word2Vec
from gensim.models.word2vec import LineSentence

from alignment import Alignment, Correspondence
from rdf_store import Graph, Literal, Term

logger = logging.getLogger("Embeddings")

Walk = List[str]

DEFAULT_THRESHOLD = 0.85
DEFAULT_RIDGE = 1e-3


class EmbeddingError(RuntimeError):
    pass


class ProjectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class WalkConfig:
    walks_per_node: int = 100
    depth: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.walks_per_node < 1:
            raise ValueError(f"walks_per_node must be >= 1, got {self.walks_per_node}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")


@dataclass(frozen=True)
class EmbeddingConfig:
    dimensions: int = 50
    window: int = 5
    min_count: int = 1
    negative_samples: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    seed: int = 0
    # more than one worker trains faster but is not reproducible
    workers: int = 1

    def __post_init__(self):
        if self.dimensions < 1:
            raise ValueError(f"dimensions must be >= 1, got {self.dimensions}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.min_count < 1:
            raise ValueError(f"min_count must be >= 1, got {self.min_count}")


@dataclass
class EmbeddingSpace:
    vocabulary: Dict[str, int]
    matrix: np.ndarray

    def __contains__(self, token: str) -> bool:
        return token in self.vocabulary

    def __len__(self) -> int:
        return len(self.vocabulary)

    @property
    def dimensions(self) -> int:
        return self.matrix.shape[1]

    def vector(self, token: str) -> np.ndarray:
        return self.matrix[self.vocabulary[token]]

    def tokens(self) -> List[str]:
        return sorted(self.vocabulary, key=self.vocabulary.__getitem__)

    @classmethod
    def from_keyed_vectors(cls, kv: KeyedVectors) -> "EmbeddingSpace":
        matrix = np.array(kv.vectors, dtype=np.float64)
        if not np.all(np.isfinite(matrix)):
            raise EmbeddingError("Embedding contains non-finite values")
        return cls({token: i for i, token in enumerate(kv.index_to_key)}, matrix)

    def to_keyed_vectors(self) -> KeyedVectors:
        kv = KeyedVectors(vector_size=self.dimensions)
        kv.add_vectors(self.tokens(), self.matrix)
        return kv


@dataclass
class ProjectionMap:
    matrix: np.ndarray
    ridge: float = 0.0

    def project(self, vectors: np.ndarray) -> np.ndarray:
        return np.asarray(vectors, dtype=np.float64) @ self.matrix


def _stable_hash(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def literal_token(literal: Literal) -> str:
    """Single-token form of a literal: its lexical form, quoted, whitespace runs as '_'."""
    return '"' + "_".join(literal.lexical.split()) + '"'


def _node_token(term: Term) -> str:
    return literal_token(term) if isinstance(term, Literal) else term.iri


def _walks_from(start: str, edges: Dict[str, List[Tuple[str, str]]], cfg: WalkConfig, rng: np.random.Generator) -> List[Walk]:
    walks = []
    for _ in range(cfg.walks_per_node):
        walk = [start]
        current = start
        for _ in range(cfg.depth):
            options = edges.get(current)
            if not options:
                break
            predicate, obj = options[rng.integers(len(options))]
            walk.append(predicate)
            walk.append(obj)
            current = obj
        walks.append(walk)
    return walks


def generate_walks(graph: Graph, cfg: WalkConfig = WalkConfig(), threads: int = 1) -> List[Walk]:
    """Random walks over the outgoing triples of every subject.

    Every subject gets exactly cfg.walks_per_node walks. Each hop picks one
    outgoing triple uniformly; a literal object ends the walk as a sink
    token. A walk makes at most cfg.depth hops (2 * depth + 1 tokens) and
    stops early at nodes without outgoing triples.

    Args:
        graph: The graph to walk.
        cfg: Walk count, depth and seed.
        threads: Worker threads; the corpus is the same for any value.

    Returns:
        The walks, grouped by start node in IRI order.
    """
    edges: Dict[str, List[Tuple[str, str]]] = {}
    for node in sorted(graph.subjects(), key=lambda r: r.iri):
        out = sorted((t.predicate.iri, _node_token(t.object)) for t in graph.triples_by_subject(node))
        if out:
            edges[node.iri] = out

    starts = list(edges)

    def run(index: int) -> List[Walk]:
        rng = np.random.default_rng([cfg.seed, index])
        return _walks_from(starts[index], edges, cfg, rng)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        per_node = list(executor.map(run, range(len(starts))))

    corpus = [walk for walks in per_node for walk in walks]
    logger.info(f"Generated {len(corpus)} walks from {len(starts)} start nodes (depth {cfg.depth})")
    return corpus


def train_skip_gram(corpus: Sequence[Walk], cfg: EmbeddingConfig = EmbeddingConfig()) -> EmbeddingSpace:
    """Skip-gram with negative sampling over the corpus (gensim word2vec)."""
    if not corpus:
        raise EmbeddingError("Cannot train embeddings on an empty corpus")

    counts: Dict[str, int] = {}
    for walk in corpus:
        for token in walk:
            counts[token] = counts.get(token, 0) + 1
    if not any(c >= cfg.min_count for c in counts.values()):
        raise EmbeddingError(f"Empty vocabulary: no token occurs at least {cfg.min_count} times")

    model = Word2Vec(
        sentences=[list(walk) for walk in corpus],
        vector_size=cfg.dimensions,
        window=cfg.window,
        min_count=cfg.min_count,
        sg=1,
        hs=0,
        negative=cfg.negative_samples,
        epochs=cfg.epochs,
        alpha=cfg.learning_rate,
        seed=cfg.seed,
        workers=cfg.workers,
        hashfxn=_stable_hash,
    )
    space = EmbeddingSpace.from_keyed_vectors(model.wv)
    logger.info(f"Trained {space.dimensions}-dimensional embeddings for {len(space)} tokens")
    return space


def train_projection(
    anchors: Sequence[Tuple[str, str]],
    source_space: EmbeddingSpace,
    target_space: EmbeddingSpace,
    ridge: float = DEFAULT_RIDGE,
) -> ProjectionMap:
    """Ridge least squares W minimising |XW - Y|^2 + ridge |W|^2 over the anchor pairs.

    Solved through the normal equations (X^T X + ridge I) W = X^T Y.

    Args:
        anchors: (source token, target token) pairs; pairs missing from either space are skipped
        source_space: Source embeddings
        target_space: Target embeddings
        ridge: Regularisation weight, >= 0

    Returns:
        The projection matrix wrapped in a ProjectionMap

    Raises:
        ProjectionError: Without usable anchors, or with ridge 0 on rank-deficient anchors
    """
    if ridge < 0:
        raise ValueError(f"ridge must be >= 0, got {ridge}")

    usable = [(s, t) for s, t in anchors if s in source_space and t in target_space]
    if len(usable) < len(anchors):
        logger.warning(f"{len(anchors) - len(usable)} of {len(anchors)} anchors have no embedding and are skipped")
    if not usable:
        raise ProjectionError("No usable anchors: no anchor pair has both tokens in the embedding vocabularies")

    X = np.vstack([source_space.vector(s) for s, _ in usable])
    Y = np.vstack([target_space.vector(t) for _, t in usable])
    d = X.shape[1]

    if ridge == 0 and np.linalg.matrix_rank(X) < d:
        raise ProjectionError(
            f"Singular system: {len(usable)} anchors span fewer than {d} dimensions; use ridge > 0"
        )
    try:
        W = np.linalg.solve(X.T @ X + ridge * np.eye(d), X.T @ Y)
    except np.linalg.LinAlgError as e:
        raise ProjectionError(f"Singular system ({e}); use ridge > 0") from e
    if not np.all(np.isfinite(W)):
        raise ProjectionError("Projection has non-finite entries; use a larger ridge")

    logger.info(f"Trained projection from {len(usable)} anchors (ridge {ridge})")
    return ProjectionMap(W, ridge)


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return matrix / norms


def projection_match(
    source_space: EmbeddingSpace,
    target_space: EmbeddingSpace,
    mapping: ProjectionMap,
    threshold: float = DEFAULT_THRESHOLD,
    source_nodes: Optional[Collection[str]] = None,
    target_nodes: Optional[Collection[str]] = None,
    batch_size: int = 1024,
) -> Alignment:
    """Project each source token and keep its nearest target by cosine if it beats threshold.

    Ties go to the lexicographically smallest target. Confidence is the
    cosine clamped at 0.

    Args:
        source_space: Source embeddings
        target_space: Target embeddings
        mapping: Trained projection
        threshold: A match needs cosine strictly above this
        source_nodes: Only these source tokens are projected, when given
        target_nodes: Only these target tokens are candidates, when given
        batch_size: Source rows scored per matrix product

    Returns:
        At most one correspondence per source token
    """
    if mapping.matrix.shape != (source_space.dimensions, target_space.dimensions):
        raise ProjectionError(
            f"Projection shape {mapping.matrix.shape} does not fit spaces of "
            f"{source_space.dimensions} and {target_space.dimensions} dimensions"
        )

    sources = sorted(t for t in source_space.vocabulary if source_nodes is None or t in source_nodes)
    targets = sorted(t for t in target_space.vocabulary if target_nodes is None or t in target_nodes)
    alignment = Alignment()
    if not sources or not targets:
        return alignment

    target_unit = _unit_rows(np.vstack([target_space.vector(t) for t in targets]))
    for start in range(0, len(sources), batch_size):
        chunk = sources[start:start + batch_size]
        projected = _unit_rows(mapping.project(np.vstack([source_space.vector(s) for s in chunk])))
        cosines = np.clip(projected @ target_unit.T, -1.0, 1.0)
        best = np.argmax(cosines, axis=1)
        for row, source in enumerate(chunk):
            cosine = float(cosines[row, best[row]])
            if cosine > threshold:
                alignment.add(Correspondence(source, targets[best[row]], confidence=max(0.0, cosine)))

    logger.info(f"Projection matcher: {len(alignment)} of {len(sources)} source nodes matched above {threshold}")
    return alignment


def write_corpus(corpus: Sequence[Walk], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for walk in corpus:
            f.write(" ".join(walk) + "\n")
    return path


def read_corpus(path: Union[str, Path]) -> List[Walk]:
    return [list(walk) for walk in LineSentence(str(path))]


def write_embeddings(space: EmbeddingSpace, path: Union[str, Path]) -> Path:
    """word2vec text format: "|V| d" header, then "token v1 ... vd" per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    space.to_keyed_vectors().save_word2vec_format(str(path), binary=False)
    return path


def read_embeddings(path: Union[str, Path]) -> EmbeddingSpace:
    return EmbeddingSpace.from_keyed_vectors(KeyedVectors.load_word2vec_format(str(path), binary=False))
