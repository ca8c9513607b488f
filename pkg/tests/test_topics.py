import numpy as np
import pytest

from adhook.rng import digest64
from adhook.topics import (
    CorpusTooSmall,
    EmbedConfig,
    EmptyCorpus,
    EmptyTopic,
    KTooLarge,
    TopicConfig,
    TopicModel,
    cluster,
    embed,
    fit_topic_stage,
    hashed_bow,
    mean_silhouette,
    reduce_dim,
    select_k,
    topic_features,
    topic_words,
)


def blobs(n_per=30, k=5, dim=24, sep=10.0, sigma=0.1, seed=7):
    gen = np.random.default_rng(seed)
    centers = gen.normal(0, sep, size=(k, dim))
    X = np.vstack([c + sigma * gen.normal(size=(n_per, dim)) for c in centers])
    labels = np.repeat(np.arange(k), n_per)
    perm = gen.permutation(len(X))
    return X[perm], labels[perm]


def cluster_accuracy(labels, assignments, k):
    correct = 0
    for c in range(k):
        members = labels[assignments == c]
        if len(members):
            correct += int((members == np.bincount(members).argmax()).sum())
    return correct / len(labels)


class TestEmbed:
    def test_identical_docs_identical_vectors(self):
        vectors = embed(["same text", "other", "same text"])
        assert np.array_equal(vectors[0].values, vectors[2].values)
        assert not np.array_equal(vectors[0].values, vectors[1].values)

    def test_bucket_weights_before_normalization(self):
        counts = hashed_bow("a a b")
        assert sorted(counts.values()) == [1, 2]
        bucket_a = digest64(b"a") % (1 << 15)
        assert counts[bucket_a] == 2

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            embed([])

    def test_dimension_and_provider(self):
        cfg = EmbedConfig(seed=3, dim=64)
        vectors = embed(["hello world"], cfg)
        assert vectors[0].values.shape == (64,)
        assert vectors[0].provider_id == cfg.provider_id

    def test_tokenization_lowercase_alnum(self):
        assert hashed_bow("Hello, HELLO world!") == hashed_bow("hello hello world")

    def test_empty_doc_zero_vector(self):
        vectors = embed(["", "x"])
        assert np.all(vectors[0].values == 0.0)


class TestReduceDim:
    def test_full_rank_identity_subspace(self):
        gen = np.random.default_rng(0)
        X = gen.normal(size=(40, 8))
        reduced, projection = reduce_dim(X, 8)
        recon = reduced @ projection.components + projection.mean
        assert recon == pytest.approx(X, abs=1e-8)

    def test_rank_one_corpus(self):
        gen = np.random.default_rng(1)
        direction = gen.normal(size=16)
        X = np.outer(gen.uniform(size=30), direction)
        reduced, _ = reduce_dim(X, 4)
        var = reduced.var(axis=0)
        assert var[0] / var.sum() >= 0.999

    def test_deterministic_application(self):
        gen = np.random.default_rng(2)
        X = gen.normal(size=(25, 10))
        _, projection = reduce_dim(X, 4)
        assert np.array_equal(projection.apply(X), projection.apply(X))

    def test_corpus_too_small(self):
        with pytest.raises(CorpusTooSmall):
            reduce_dim(np.zeros((3, 10)), 4)

    def test_sign_fixed(self):
        gen = np.random.default_rng(3)
        X = gen.normal(size=(30, 6))
        _, projection = reduce_dim(X, 3)
        for row in projection.components:
            assert row[np.argmax(np.abs(row))] > 0


class TestCluster:
    def test_separated_blobs_recovered(self):
        X, labels = blobs()
        assignments, _ = cluster(X, 5, seed=1)
        assert cluster_accuracy(labels, assignments, 5) == 1.0

    def test_k_equals_n(self):
        X, _ = blobs(n_per=2, k=3)
        assignments, centroids = cluster(X, len(X), seed=0)
        assert len(set(assignments.tolist())) == len(X)
        inertia = ((X - centroids[assignments]) ** 2).sum()
        assert inertia == pytest.approx(0.0, abs=1e-18)

    def test_same_seed_identical(self):
        X, _ = blobs()
        a, _ = cluster(X, 5, seed=9)
        b, _ = cluster(X, 5, seed=9)
        assert np.array_equal(a, b)

    def test_k_too_large(self):
        with pytest.raises(KTooLarge):
            cluster(np.zeros((3, 2)), 4, seed=0)

    def test_permutation_invariance(self):
        X, _ = blobs(seed=11)
        base, _ = cluster(X, 5, seed=2)
        gen = np.random.default_rng(5)
        perm = gen.permutation(len(X))
        permuted, _ = cluster(X[perm], 5, seed=2)
        assert np.array_equal(permuted, base[perm])


class TestSelectK:
    def test_planted_five(self):
        X, _ = blobs()
        reduced, _ = reduce_dim(X, 8)
        assert select_k(reduced, [3, 5, 9], seed=1) == 5

    def test_singleton_candidate(self):
        X, _ = blobs(n_per=4, k=5)  # 20 docs
        assert select_k(X, [17], seed=0) == 17

    def test_tie_breaks_to_smaller(self):
        # Two identical scores arise when candidate ks induce the same
        # partition; duplicate candidates force an exact tie.
        X, _ = blobs()
        assert select_k(X, [5, 5], seed=1) == 5


class TestTopicWords:
    def test_disjoint_vocabularies(self):
        docs = ["apple banana cherry", "apple cherry", "rocket engine thrust", "engine nozzle"]
        assignments = np.array([0, 0, 1, 1])
        words = topic_words(docs, assignments, 2)
        fruit = {w for w, _ in words[0]}
        space = {w for w, _ in words[1]}
        assert fruit <= {"apple", "banana", "cherry"}
        assert space <= {"rocket", "engine", "thrust", "nozzle"}

    def test_shared_word_scores_below_exclusive(self):
        docs = ["alpha shared", "alpha shared", "beta shared", "beta shared"]
        assignments = np.array([0, 0, 1, 1])
        words = topic_words(docs, assignments, 2)
        scores0 = dict(words[0])
        assert scores0["alpha"] > scores0["shared"]

    def test_short_vocabulary_allowed(self):
        docs = ["one two three", "zzz"]
        words = topic_words(docs, np.array([0, 1]), 2)
        assert len(words[0]) == 3
        assert len(words[1]) == 1

    def test_stop_words_removed(self):
        docs = ["the the the cat", "a dog"]
        words = topic_words(docs, np.array([0, 1]), 2)
        assert {w for w, _ in words[0]} == {"cat"}

    def test_empty_topic_raises(self):
        with pytest.raises(EmptyTopic):
            topic_words(["a b"], np.array([0]), 2)

    def test_top_ten_cap(self):
        doc = " ".join(f"word{i}" for i in range(30))
        words = topic_words([doc, "other"], np.array([0, 1]), 2)
        assert len(words[0]) == 10


class TestTopicFeatures:
    def test_one_hot(self):
        features = topic_features(np.array([2]), 4)
        assert features.tolist() == [[0.0, 0.0, 1.0, 0.0]]

    def test_rows_sum_to_one(self):
        gen = np.random.default_rng(0)
        assignments = gen.integers(0, 6, size=50)
        features = topic_features(assignments, 6)
        assert np.all(features.sum(axis=1) == 1.0)

    def test_column_sums_are_topic_sizes(self):
        gen = np.random.default_rng(1)
        assignments = gen.integers(0, 4, size=80)
        features = topic_features(assignments, 4)
        assert features.sum(axis=0).tolist() == [int((assignments == t).sum()) for t in range(4)]

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            topic_features(np.array([5]), 4)


class TestFitTopicStage:
    def docs(self):
        themes = {
            "fruit": ["apple banana pear fresh juice", "banana apple smoothie fresh"],
            "space": ["rocket orbit thrust launch", "orbit launch rocket booster"],
            "music": ["guitar drums melody chord", "melody chord bass guitar"],
        }
        docs = []
        for variants in themes.values():
            for i in range(8):
                docs.append(variants[i % 2] + f" extra{i}")
        return docs

    def config(self):
        return TopicConfig(embed=EmbedConfig(seed=1), d_out=6, k_candidates=(2, 3, 4), seed=1)

    def test_two_runs_byte_identical(self):
        docs = self.docs()
        a = fit_topic_stage(docs, self.config())
        b = fit_topic_stage(docs, self.config())
        assert a.to_json() == b.to_json()

    def test_permuting_docs_permutes_assignments(self):
        docs = self.docs()
        base = fit_topic_stage(docs, self.config())
        gen = np.random.default_rng(3)
        perm = gen.permutation(len(docs))
        permuted = fit_topic_stage([docs[i] for i in perm], self.config())
        assert np.array_equal(permuted.assignments, base.assignments[perm])

    def test_serialization_round_trip(self):
        model = fit_topic_stage(self.docs(), self.config())
        again = TopicModel.from_json(model.to_json())
        assert again.to_json() == model.to_json()
        assert np.array_equal(again.assign(self.docs()), model.assignments)

    def test_every_doc_assigned(self):
        model = fit_topic_stage(self.docs(), self.config())
        assert len(model.assignments) == len(self.docs())
        assert model.assignments.min() >= 0
        assert model.assignments.max() < model.k


class TestSilhouette:
    def test_well_separated_better_than_random(self):
        X, labels = blobs(n_per=10, k=3, dim=5)
        good = mean_silhouette(X, labels)
        gen = np.random.default_rng(0)
        bad = mean_silhouette(X, gen.integers(0, 3, size=len(X)))
        assert good > bad

    def test_single_cluster_zero(self):
        X, _ = blobs(n_per=5, k=2, dim=3)
        assert mean_silhouette(X, np.zeros(len(X), dtype=int)) == 0.0
