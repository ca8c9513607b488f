"""Topic summarization of methodology rationales.

Shape: embed documents, reduce dimensionality, cluster, then label each
cluster with class-based TF-IDF words. Every step is deterministic: the
offline embedder is hashed bag-of-words followed by a seeded random
projection, reduction is sign-fixed principal components, clustering is
seeded k-means++ plus Lloyd iterations, and the cluster count is chosen
by mean silhouette over a candidate list.

Document order never matters: the stage canonicalizes documents by an
embedding content digest before fitting and maps assignments back.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import requests

from .rng import XorShift64Star, digest64, mix_seed
from .stopwords import STOP_WORDS

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class TopicsError(Exception):
    """Base class for topic-stage failures."""


class EmptyCorpus(TopicsError):
    pass


class ProviderUnavailable(TopicsError):
    pass


class CorpusTooSmall(TopicsError):
    pass


class KTooLarge(TopicsError):
    pass


class EmptyTopic(TopicsError):
    pass


@dataclass(frozen=True)
class EmbedConfig:
    """Embedding provider; the offline kind is the deterministic default."""

    kind: str = "Offline"  # Offline | Http
    seed: int = 0
    dim: int = 256
    buckets: int = 1 << 15
    endpoint: str = ""
    timeout_s: float = 30.0

    @property
    def provider_id(self) -> str:
        if self.kind == "Offline":
            return f"hashed-bow-rp:b{self.buckets}:d{self.dim}:s{self.seed}"
        return f"http:{self.endpoint}"


@dataclass(frozen=True)
class TopicConfig:
    embed: EmbedConfig = EmbedConfig()
    d_out: int = 16
    k_candidates: tuple[int, ...] = (17,)
    seed: int = 0
    top_words: int = 10


@dataclass(eq=False)
class EmbeddingVector:
    values: np.ndarray
    provider_id: str


@dataclass(eq=False)
class Projection:
    """Stored linear reduction: center on mean, project onto components."""

    mean: np.ndarray
    components: np.ndarray  # (d_out, d)

    def apply(self, matrix: np.ndarray) -> np.ndarray:
        return (matrix - self.mean) @ self.components.T


@dataclass(eq=False)
class TopicModel:
    """Fitted topic stage, immutable and JSON-serializable."""

    k: int
    centroids: np.ndarray
    projection: Projection
    topic_words: list[list[tuple[str, float]]]
    assignments: np.ndarray
    seed: int
    embed_config: EmbedConfig
    provider_id: str = ""

    def assign(self, docs: Sequence[str]) -> np.ndarray:
        """Topic ids for new documents under the stored projection/centroids."""
        vectors = embed(list(docs), self.embed_config)
        matrix = np.stack([v.values for v in vectors])
        reduced = self.projection.apply(matrix)
        return _nearest_centroid(reduced, self.centroids)

    def to_json(self) -> str:
        payload = {
            "format_version": 1,
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "projection": {
                "mean": self.projection.mean.tolist(),
                "components": self.projection.components.tolist(),
            },
            "topic_words": [
                [[word, score] for word, score in words] for words in self.topic_words
            ],
            "assignments": self.assignments.tolist(),
            "seed": self.seed,
            "embed_config": {
                "kind": self.embed_config.kind,
                "seed": self.embed_config.seed,
                "dim": self.embed_config.dim,
                "buckets": self.embed_config.buckets,
                "endpoint": self.embed_config.endpoint,
            },
            "provider_id": self.provider_id,
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, raw: str) -> "TopicModel":
        payload = json.loads(raw)
        embed_cfg = EmbedConfig(
            kind=payload["embed_config"]["kind"],
            seed=payload["embed_config"]["seed"],
            dim=payload["embed_config"]["dim"],
            buckets=payload["embed_config"]["buckets"],
            endpoint=payload["embed_config"]["endpoint"],
        )
        return cls(
            k=payload["k"],
            centroids=np.array(payload["centroids"], dtype=np.float64),
            projection=Projection(
                mean=np.array(payload["projection"]["mean"], dtype=np.float64),
                components=np.array(payload["projection"]["components"], dtype=np.float64),
            ),
            topic_words=[
                [(word, float(score)) for word, score in words]
                for words in payload["topic_words"]
            ],
            assignments=np.array(payload["assignments"], dtype=np.int64),
            seed=payload["seed"],
            embed_config=embed_cfg,
            provider_id=payload["provider_id"],
        )


def tokenize(doc: str) -> list[str]:
    return _TOKEN_RE.findall(doc.lower())


def hashed_bow(doc: str, buckets: int = 1 << 15) -> dict[int, int]:
    """Token counts keyed by stable hash bucket."""
    counts: dict[int, int] = {}
    for token in tokenize(doc):
        bucket = digest64(token.encode("utf-8")) % buckets
        counts[bucket] = counts.get(bucket, 0) + 1
    return counts


def _projection_row(seed: int, bucket: int, dim: int) -> np.ndarray:
    gen = np.random.Generator(np.random.PCG64(mix_seed(seed, bucket)))
    return gen.standard_normal(dim) / np.sqrt(dim)


def _embed_offline(docs: list[str], cfg: EmbedConfig) -> list[EmbeddingVector]:
    row_cache: dict[int, np.ndarray] = {}
    out = []
    for doc in docs:
        counts = hashed_bow(doc, cfg.buckets)
        vector = np.zeros(cfg.dim)
        if counts:
            norm = np.sqrt(sum(c * c for c in counts.values()))
            for bucket in sorted(counts):
                row = row_cache.get(bucket)
                if row is None:
                    row = _projection_row(cfg.seed, bucket, cfg.dim)
                    row_cache[bucket] = row
                vector += (counts[bucket] / norm) * row
        out.append(EmbeddingVector(values=vector, provider_id=cfg.provider_id))
    return out


def _embed_http(docs: list[str], cfg: EmbedConfig) -> list[EmbeddingVector]:
    try:
        response = requests.post(cfg.endpoint, json={"docs": docs}, timeout=cfg.timeout_s)
    except requests.RequestException as exc:
        raise ProviderUnavailable(str(exc)) from exc
    if response.status_code >= 300:
        raise ProviderUnavailable(f"embedding endpoint returned {response.status_code}")
    vectors = response.json()["vectors"]
    if len(vectors) != len(docs):
        raise ProviderUnavailable("embedding endpoint returned wrong vector count")
    return [
        EmbeddingVector(values=np.asarray(v, dtype=np.float64), provider_id=cfg.provider_id)
        for v in vectors
    ]


def embed(docs: list[str], cfg: EmbedConfig = EmbedConfig()) -> list[EmbeddingVector]:
    """Embed documents with the configured provider."""
    if not docs:
        raise EmptyCorpus("no documents to embed")
    if cfg.kind == "Offline":
        return _embed_offline(docs, cfg)
    if cfg.kind == "Http":
        return _embed_http(docs, cfg)
    raise ProviderUnavailable(f"unknown embedding provider kind {cfg.kind!r}")


def reduce_dim(matrix: np.ndarray, d_out: int = 16) -> tuple[np.ndarray, Projection]:
    """Principal-component reduction with sign-fixed components.

    Each component's largest-magnitude entry is made positive so the
    projection is unique up to the data itself.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape[0] < d_out:
        raise CorpusTooSmall(f"{matrix.shape[0]} docs < d_out {d_out}")
    mean = matrix.mean(axis=0)
    centered = matrix - mean
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:d_out].copy()
    for row in components:
        anchor = int(np.argmax(np.abs(row)))
        if row[anchor] < 0:
            row *= -1.0
    projection = Projection(mean=mean, components=components)
    return projection.apply(matrix), projection


def _row_digests(matrix: np.ndarray) -> np.ndarray:
    return np.array([digest64(np.ascontiguousarray(row).tobytes()) for row in matrix],
                    dtype=np.uint64)


def _canonical_order(matrix: np.ndarray) -> np.ndarray:
    """Content-based row order, invariant under input permutation."""
    return np.argsort(_row_digests(matrix), kind="stable")


def _nearest_centroid(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    distances = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return distances.argmin(axis=1).astype(np.int64)


def _kmeans_plus_plus(points: np.ndarray, k: int, rng: XorShift64Star) -> np.ndarray:
    n = points.shape[0]
    chosen = [rng.randint_below(n)]
    dist_sq = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = float(dist_sq.sum())
        if total <= 0.0:
            candidate = rng.randint_below(n)
        else:
            r = rng.next_float() * total
            candidate = int(np.searchsorted(np.cumsum(dist_sq), r, side="right"))
            candidate = min(candidate, n - 1)
        chosen.append(candidate)
        dist_sq = np.minimum(dist_sq, ((points - points[candidate]) ** 2).sum(axis=1))
    return points[chosen].copy()


def cluster(
    matrix: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 300,
    tol: float = 1e-8,
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded k-means: k-means++ start, Lloyd iterations to convergence.

    The PRNG is keyed by the seed and a content hash of the vector set,
    and all internal work happens in canonical (content-digest) row
    order, so results do not depend on input row order. Empty clusters
    are re-seeded from the farthest point.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    n = matrix.shape[0]
    if k > n:
        raise KTooLarge(f"k={k} with {n} documents")
    order = _canonical_order(matrix)
    canon = matrix[order]
    content_key = 0
    for row_hash in _row_digests(canon):
        content_key = mix_seed(content_key, int(row_hash))
    rng = XorShift64Star(mix_seed(seed, content_key))

    centroids = _kmeans_plus_plus(canon, k, rng)
    assignments = _nearest_centroid(canon, centroids)
    for _ in range(max_iter):
        new_centroids = centroids.copy()
        for cluster_id in range(k):
            members = canon[assignments == cluster_id]
            if len(members):
                new_centroids[cluster_id] = members.mean(axis=0)
        # Re-seed empty clusters from the farthest point.
        dist_sq = ((canon - new_centroids[assignments]) ** 2).sum(axis=1)
        for cluster_id in range(k):
            if not np.any(assignments == cluster_id):
                farthest = int(np.argmax(dist_sq))
                new_centroids[cluster_id] = canon[farthest]
                dist_sq[farthest] = 0.0
        new_assignments = _nearest_centroid(canon, new_centroids)
        shift = float(np.max(np.abs(new_centroids - centroids)))
        centroids = new_centroids
        assignments = new_assignments
        if shift < tol:
            break
    original_order = np.empty(n, dtype=np.int64)
    original_order[order] = assignments
    return original_order, centroids


def mean_silhouette(matrix: np.ndarray, assignments: np.ndarray) -> float:
    """Mean silhouette over all points; singleton-cluster points score 0."""
    matrix = np.asarray(matrix, dtype=np.float64)
    n = matrix.shape[0]
    labels = np.unique(assignments)
    if len(labels) < 2:
        return 0.0
    distances = np.sqrt(((matrix[:, None, :] - matrix[None, :, :]) ** 2).sum(axis=2))
    scores = np.zeros(n)
    for i in range(n):
        own = assignments == assignments[i]
        own_size = int(own.sum())
        if own_size <= 1:
            continue
        a = distances[i][own].sum() / (own_size - 1)
        b = min(
            distances[i][assignments == label].mean()
            for label in labels
            if label != assignments[i]
        )
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


def select_k(matrix: np.ndarray, candidates: Sequence[int], seed: int) -> int:
    """Choose the candidate cluster count with the best mean silhouette.

    Ties resolve to the smaller k. Stands in for a perplexity criterion;
    both reward coherent, well-separated clusters.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")
    best_k: Optional[int] = None
    best_score = -np.inf
    for k in sorted(candidates):
        assignments, _ = cluster(matrix, k, seed)
        score = mean_silhouette(matrix, assignments)
        if score > best_score:
            best_score = score
            best_k = k
    return int(best_k)


def topic_words(
    docs: Sequence[str],
    assignments: np.ndarray,
    k: int,
    top_n: int = 10,
) -> list[list[tuple[str, float]]]:
    """Class-based TF-IDF words per topic.

    tf is a word's share of its topic's tokens; idf is
    ln(1 + average topic token count / corpus-wide word count).
    Stop words are removed before any counting. Ties break
    lexicographically.
    """
    topic_counts: list[dict[str, int]] = [dict() for _ in range(k)]
    corpus_counts: dict[str, int] = {}
    for doc, topic in zip(docs, assignments):
        for token in tokenize(doc):
            if token in STOP_WORDS:
                continue
            topic_counts[topic][token] = topic_counts[topic].get(token, 0) + 1
            corpus_counts[token] = corpus_counts.get(token, 0) + 1
    for topic in range(k):
        if not np.any(np.asarray(assignments) == topic):
            raise EmptyTopic(f"topic {topic} has no documents")

    total_tokens = sum(corpus_counts.values())
    avg_topic_tokens = total_tokens / k
    out: list[list[tuple[str, float]]] = []
    for topic in range(k):
        counts = topic_counts[topic]
        topic_total = sum(counts.values())
        if topic_total == 0:
            out.append([])
            continue
        scored = []
        for word, count in counts.items():
            tf = count / topic_total
            idf = np.log(1.0 + avg_topic_tokens / corpus_counts[word])
            scored.append((word, float(tf * idf)))
        scored.sort(key=lambda item: (-item[1], item[0]))
        out.append(scored[:top_n])
    return out


def topic_features(assignments: np.ndarray, k: int) -> np.ndarray:
    """One-hot topic indicators, one row per document."""
    assignments = np.asarray(assignments, dtype=np.int64)
    if len(assignments) and (assignments.min() < 0 or assignments.max() >= k):
        raise ValueError("assignment out of range")
    features = np.zeros((len(assignments), k))
    features[np.arange(len(assignments)), assignments] = 1.0
    return features


def fit_topic_stage(docs: Sequence[str], cfg: TopicConfig = TopicConfig()) -> TopicModel:
    """Full topic stage: embed, reduce, pick k, cluster, and label topics.

    Fitting happens in canonical (content-digest) document order and the
    assignments are mapped back, so permuting the input documents
    permutes the output identically.
    """
    docs = list(docs)
    vectors = embed(docs, cfg.embed)
    matrix = np.stack([v.values for v in vectors])
    order = _canonical_order(matrix)
    reduced, projection = reduce_dim(matrix[order], cfg.d_out)
    k = select_k(reduced, cfg.k_candidates, cfg.seed)
    canon_assignments, centroids = cluster(reduced, k, cfg.seed)
    assignments = np.empty(len(docs), dtype=np.int64)
    assignments[order] = canon_assignments
    words = topic_words(docs, assignments, k, cfg.top_words)
    return TopicModel(
        k=k,
        centroids=centroids,
        projection=projection,
        topic_words=words,
        assignments=assignments,
        seed=cfg.seed,
        embed_config=cfg.embed,
        provider_id=cfg.embed.provider_id,
    )
