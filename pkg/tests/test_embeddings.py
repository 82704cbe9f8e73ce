import numpy as np
import pytest

from embeddings import (
    DEFAULT_THRESHOLD,
    EmbeddingConfig,
    EmbeddingError,
    EmbeddingSpace,
    ProjectionError,
    ProjectionMap,
    WalkConfig,
    generate_walks,
    literal_token,
    projection_match,
    read_corpus,
    read_embeddings,
    train_projection,
    train_skip_gram,
    write_corpus,
    write_embeddings,
)
from rdf_store import Literal, parse_ntriples

EX = "http://example.org/"


def space(tokens, matrix):
    return EmbeddingSpace({t: i for i, t in enumerate(tokens)}, np.asarray(matrix, dtype=np.float64))


def random_space(prefix, n=30, d=5, seed=0):
    rng = np.random.default_rng(seed)
    return space([f"{prefix}{i:02d}" for i in range(n)], rng.normal(size=(n, d)))


class TestGenerateWalks:
    def test_single_triple(self):
        graph = parse_ntriples(f"<{EX}a> <{EX}p> <{EX}b> .\n")
        walks = generate_walks(graph, WalkConfig(walks_per_node=2, depth=4))
        assert walks == [[f"{EX}a", f"{EX}p", f"{EX}b"]] * 2

    def test_literal_object_ends_walk(self):
        graph = parse_ntriples(f'<{EX}a> <{EX}label> "star  wars" .\n')
        walks = generate_walks(graph, WalkConfig(walks_per_node=3))
        assert walks == [[f"{EX}a", f"{EX}label", '"star_wars"']] * 3

    def test_every_subject_starts_walks(self):
        graph = parse_ntriples(
            f'<{EX}a> <{EX}p> <{EX}b> .\n<{EX}b> <{EX}label> "x" .\n<{EX}c> <{EX}label> "y" .\n'
        )
        walks = generate_walks(graph, WalkConfig(walks_per_node=4, depth=3))
        assert len(walks) == 4 * 3
        assert [w[0] for w in walks[::4]] == [f"{EX}a", f"{EX}b", f"{EX}c"]
        assert walks[0] == [f"{EX}a", f"{EX}p", f"{EX}b", f"{EX}label", '"x"']

    def test_corpus_size_and_paths(self, twin_graphs):
        source, _, _ = twin_graphs
        cfg = WalkConfig(walks_per_node=5, depth=3, seed=1)
        walks = generate_walks(source, cfg)
        assert len(walks) == 5 * len(source.subjects())
        triples = {
            (t.subject.iri, t.predicate.iri, literal_token(t.object) if isinstance(t.object, Literal) else t.object.iri)
            for t in source
        }
        for walk in walks:
            assert len(walk) % 2 == 1
            assert len(walk) <= 2 * cfg.depth + 1
            for i in range(0, len(walk) - 1, 2):
                assert (walk[i], walk[i + 1], walk[i + 2]) in triples

    def test_deterministic(self, twin_graphs):
        source, _, _ = twin_graphs
        cfg = WalkConfig(walks_per_node=3, depth=4, seed=11)
        assert generate_walks(source, cfg) == generate_walks(source, cfg)

    def test_independent_of_thread_count(self, twin_graphs):
        source, _, _ = twin_graphs
        cfg = WalkConfig(walks_per_node=3, depth=4, seed=2)
        assert generate_walks(source, cfg, threads=1) == generate_walks(source, cfg, threads=4)

    @pytest.mark.parametrize("kwargs", [{"walks_per_node": 0}, {"depth": 0}])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValueError):
            WalkConfig(**kwargs)


class TestTrainSkipGram:
    def test_empty_corpus(self):
        with pytest.raises(EmbeddingError):
            train_skip_gram([])

    def test_min_count_restricts_vocabulary(self):
        corpus = [["a", "b"], ["a", "c"]]
        trained = train_skip_gram(corpus, EmbeddingConfig(dimensions=4, min_count=2))
        assert trained.tokens() == ["a"]
        with pytest.raises(EmbeddingError):
            train_skip_gram(corpus, EmbeddingConfig(dimensions=4, min_count=3))

    def test_deterministic_with_one_worker(self):
        corpus = [["a", "p", "b"], ["b", "p", "c"], ["c", "q", "a"]] * 20
        cfg = EmbeddingConfig(dimensions=8, epochs=3, seed=5)
        first, second = train_skip_gram(corpus, cfg), train_skip_gram(corpus, cfg)
        assert first.tokens() == second.tokens()
        np.testing.assert_array_equal(first.matrix, second.matrix)

    def test_co_occurring_tokens_end_up_closer(self):
        rng = np.random.default_rng(0)
        corpus = []
        for _ in range(300):
            corpus.append(list(rng.permutation(["a1", "a2", "a3", "a4"])))
            corpus.append(list(rng.permutation(["b1", "b2", "b3", "b4"])))
        trained = train_skip_gram(corpus, EmbeddingConfig(dimensions=10, window=3, epochs=20, seed=1))

        def cosine(x, y):
            u, v = trained.vector(x), trained.vector(y)
            return float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))

        assert cosine("a1", "a2") > cosine("a1", "b1")
        assert cosine("b3", "b4") > cosine("b3", "a3")


class TestTrainProjection:
    def test_identity(self):
        src = random_space("s", n=30, d=5)
        tgt = space([f"t{i:02d}" for i in range(30)], src.matrix)
        mapping = train_projection([(f"s{i:02d}", f"t{i:02d}") for i in range(30)], src, tgt, ridge=0.0)
        assert np.abs(mapping.matrix - np.eye(5)).max() < 1e-6

    def test_scaling(self):
        src = random_space("s", n=30, d=5, seed=1)
        tgt = space([f"t{i:02d}" for i in range(30)], 2 * src.matrix)
        mapping = train_projection([(f"s{i:02d}", f"t{i:02d}") for i in range(30)], src, tgt, ridge=0.0)
        np.testing.assert_allclose(mapping.matrix, 2 * np.eye(5), atol=1e-6)

    def test_single_anchor_with_ridge(self):
        src, tgt = random_space("s", d=4), random_space("t", d=4, seed=2)
        mapping = train_projection([("s00", "t00")], src, tgt, ridge=0.1)
        assert mapping.matrix.shape == (4, 4)
        assert np.all(np.isfinite(mapping.matrix))

    def test_rank_deficient_without_ridge(self):
        src, tgt = random_space("s", d=4), random_space("t", d=4, seed=2)
        with pytest.raises(ProjectionError, match="ridge > 0"):
            train_projection([("s00", "t00"), ("s01", "t01")], src, tgt, ridge=0.0)

    def test_no_usable_anchors(self):
        src, tgt = random_space("s"), random_space("t")
        with pytest.raises(ProjectionError):
            train_projection([("missing", "t00"), ("s00", "missing")], src, tgt)

    def test_negative_ridge(self):
        src, tgt = random_space("s"), random_space("t")
        with pytest.raises(ValueError):
            train_projection([("s00", "t00")], src, tgt, ridge=-1.0)


class TestProjectionMatch:
    def test_identity_mapping_recovers_pairs(self):
        src = random_space("s", n=20, d=6, seed=3)
        tgt = space([f"t{i:02d}" for i in range(20)], src.matrix)
        result = projection_match(src, tgt, ProjectionMap(np.eye(6)))
        assert {(c.source, c.target) for c in result} == {(f"s{i:02d}", f"t{i:02d}") for i in range(20)}
        assert all(c.confidence == pytest.approx(1.0) for c in result)

    def test_threshold_above_one_matches_nothing(self):
        src = random_space("s", n=10, d=6)
        tgt = space([f"t{i:02d}" for i in range(10)], src.matrix)
        assert len(projection_match(src, tgt, ProjectionMap(np.eye(6)), threshold=1.0 + 1e-9)) == 0

    def test_anti_parallel_confidence_clamped(self):
        src = space(["a"], [[1.0, 0.0]])
        tgt = space(["b"], [[1.0, 0.0]])
        result = projection_match(src, tgt, ProjectionMap(-np.eye(2)), threshold=-1.5)
        assert result.get("a", "b").confidence == 0.0

    def test_ties_pick_smallest_target(self):
        src = space(["a"], [[1.0, 0.0]])
        tgt = space(["y", "x"], [[1.0, 0.0], [2.0, 0.0]])
        result = projection_match(src, tgt, ProjectionMap(np.eye(2)))
        assert [(c.source, c.target) for c in result] == [("a", "x")]

    def test_node_filters(self):
        src = random_space("s", n=10, d=4, seed=4)
        tgt = space([f"t{i:02d}" for i in range(10)], src.matrix)
        result = projection_match(src, tgt, ProjectionMap(np.eye(4)), source_nodes={"s01", "s02"})
        assert {c.source for c in result} == {"s01", "s02"}

    def test_shape_mismatch(self):
        src, tgt = random_space("s", d=4), random_space("t", d=3)
        with pytest.raises(ProjectionError):
            projection_match(src, tgt, ProjectionMap(np.eye(4)))

    def test_small_batches_give_same_result(self):
        src = random_space("s", n=25, d=5, seed=6)
        tgt = random_space("t", n=25, d=5, seed=7)
        mapping = ProjectionMap(np.eye(5))
        assert projection_match(src, tgt, mapping, threshold=0.0, batch_size=4) == \
            projection_match(src, tgt, mapping, threshold=0.0)


class TestEmbeddingFiles:
    def test_corpus_round_trip(self, tmp_path):
        corpus = [[f"{EX}a", f"{EX}p", f"{EX}b"], [f"{EX}b"]]
        path = write_corpus(corpus, tmp_path / "walks.txt")
        assert read_corpus(path) == corpus

    def test_embeddings_round_trip(self, tmp_path):
        original = random_space(f"{EX}n", n=6, d=3)
        loaded = read_embeddings(write_embeddings(original, tmp_path / "vectors.txt"))
        assert loaded.tokens() == original.tokens()
        np.testing.assert_allclose(loaded.matrix, original.matrix, rtol=1e-5, atol=1e-6)

    def test_header_line(self, tmp_path):
        path = write_embeddings(random_space("n", n=6, d=3), tmp_path / "vectors.txt")
        assert path.read_text(encoding="utf-8").splitlines()[0] == "6 3"


@pytest.mark.slow
class TestTwinGraphProjection:
    def test_held_out_recall(self, twin_graphs):
        source, target, reference = twin_graphs
        recalls = []
        for seed in (0, 1, 2):
            walk_cfg = WalkConfig(walks_per_node=100, depth=4, seed=seed)
            embed_cfg = EmbeddingConfig(dimensions=50, window=5, epochs=10, seed=seed)
            src = train_skip_gram(generate_walks(source, walk_cfg), embed_cfg)
            tgt = train_skip_gram(generate_walks(target, walk_cfg), embed_cfg)

            anchors, held_out = reference.sample_by_fraction(0.5, seed=seed)
            mapping = train_projection([(c.source, c.target) for c in anchors], src, tgt)
            result = projection_match(
                src, tgt, mapping, threshold=DEFAULT_THRESHOLD,
                source_nodes={c.source for c in held_out},
                target_nodes={r.iri for r in target.nodes()},
            )
            found = sum(1 for c in held_out if c in result)
            recalls.append(found / len(held_out))

        assert sum(r >= 0.5 for r in recalls) >= 2, recalls
