"""Embedding providers, principal-component reduction, and topic similarity.

The PCA here is self-contained: a cyclic Jacobi eigensolver on the
covariance matrix for small dimensions, power iteration with deflation
above 512. Components carry a sign convention (largest-magnitude
coordinate positive) so serialized models are reproducible.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .textfeat import FeatureVector, word_tokens

TOPIC_NAMES = (
    "market",
    "bank",
    "business",
    "tech",
    "education",
    "politics",
    "legal",
    "sports",
    "media",
    "science",
)

JACOBI_DIM_LIMIT = 512


class EmbeddingProvider(Protocol):
    provider_id: str

    def embed(self, text: str) -> np.ndarray: ...

    def dimension(self) -> int: ...


class HashEmbedder:
    """Deterministic bag-of-words embedding: tokens hashed into 64 buckets,
    counts L2-normalized. A stand-in provider for offline runs and tests."""

    provider_id = "hash64-v1"

    def __init__(self, dim: int = 64):
        self._dim = dim

    def dimension(self) -> int:
        return self._dim

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self._dim)
        for tok in word_tokens(text):
            digest = hashlib.sha256(tok.encode("utf-8")).digest()
            vec[int.from_bytes(digest[:4], "big") % self._dim] += 1.0
        norm = np.linalg.norm(vec)
        return vec / norm if norm else vec

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


def hash_embed(text: str, dim: int = 64) -> np.ndarray:
    return HashEmbedder(dim).embed(text)


class RemoteEmbeddingError(RuntimeError):
    pass


class RemoteEmbeddingProvider:
    """HTTP provider: POST {"texts": [...]} -> {"vectors": [[...], ...]}.

    Batches are retried up to 3 times with exponential backoff; concurrent
    batches are bounded and results are reassembled by index.
    """

    def __init__(
        self,
        url: str,
        provider_id: str,
        dim: int,
        batch_size: int = 32,
        max_in_flight: int = 4,
        retries: int = 3,
        backoff: float = 1.0,
        timeout: float = 30.0,
        session=None,
    ):
        import requests

        self.url = url
        self.provider_id = provider_id
        self._dim = dim
        self.batch_size = batch_size
        self.max_in_flight = max_in_flight
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self._session = session or requests.Session()

    def dimension(self) -> int:
        return self._dim

    def _post_batch(self, texts: list[str]) -> list[np.ndarray]:
        import requests

        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = self._session.post(self.url, json={"texts": texts}, timeout=self.timeout)
                resp.raise_for_status()
                vectors = resp.json()["vectors"]
                if len(vectors) != len(texts):
                    raise RemoteEmbeddingError(
                        f"endpoint returned {len(vectors)} vectors for {len(texts)} texts"
                    )
                out = [np.asarray(v, dtype=float) for v in vectors]
                for v in out:
                    if v.shape != (self._dim,):
                        raise RemoteEmbeddingError(f"bad vector shape {v.shape}")
                return out
            except (requests.RequestException, KeyError, ValueError, RemoteEmbeddingError) as exc:
                last_error = exc
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff * (2**attempt))
        raise RemoteEmbeddingError(f"embedding request failed after {self.retries} attempts: {last_error}")

    def embed(self, text: str) -> np.ndarray:
        return self._post_batch([text])[0]

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        texts = list(texts)
        batches = [texts[i : i + self.batch_size] for i in range(0, len(texts), self.batch_size)]
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            results = list(pool.map(self._post_batch, batches))
        return [vec for batch in results for vec in batch]


class FileEmbeddingCache:
    """Flat file cache keyed by (provider_id, content hash); no eviction."""

    def __init__(self, directory: str | Path, provider: EmbeddingProvider):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.provider = provider
        self.provider_id = provider.provider_id

    def dimension(self) -> int:
        return self.provider.dimension()

    def _path(self, text: str) -> Path:
        key = hashlib.sha256(f"{self.provider_id}\x1f{text}".encode("utf-8")).hexdigest()
        return self.directory / f"{key}.json"

    def embed(self, text: str) -> np.ndarray:
        path = self._path(text)
        if path.exists():
            return np.asarray(json.loads(path.read_text()), dtype=float)
        vec = self.provider.embed(text)
        path.write_text(json.dumps([float(x) for x in vec]))
        return vec

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed(t) for t in texts]


def _jacobi_eigh(matrix: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60):
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Returns (eigenvalues desc, eigenvectors as rows, aligned with values).
    """
    a = np.array(matrix, dtype=float, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(float(np.sum(np.abs(np.diag(a)))), 1.0)
    for _ in range(max_sweeps):
        off = math.sqrt(max(float(np.sum(a * a) - np.sum(np.diag(a) ** 2)), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:  # theta^2 would overflow; use the limit
                    t = 1.0 / (2.0 * theta)
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = rot_p, rot_q
    values = np.diag(a).copy()
    order = np.argsort(values)[::-1]
    return values[order], v[:, order].T


def _power_iteration_top_k(cov: np.ndarray, k: int, iters: int = 500, tol: float = 1e-12):
    """Top-k eigenpairs by power iteration with deflation (large dimensions)."""
    n = cov.shape[0]
    work = cov.copy()
    values = np.zeros(k)
    vectors = np.zeros((k, n))
    rng = np.random.default_rng(0)
    for i in range(k):
        vec = rng.standard_normal(n)
        vec /= np.linalg.norm(vec)
        value = 0.0
        for _ in range(iters):
            nxt = work @ vec
            norm = np.linalg.norm(nxt)
            if norm == 0.0:
                # null space: any unit vector orthogonal to found ones
                nxt = rng.standard_normal(n)
                for j in range(i):
                    nxt -= (nxt @ vectors[j]) * vectors[j]
                norm = np.linalg.norm(nxt)
            nxt /= norm
            if np.linalg.norm(nxt - vec) < tol or np.linalg.norm(nxt + vec) < tol:
                vec = nxt
                break
            vec = nxt
        value = float(vec @ cov @ vec)
        values[i] = value
        vectors[i] = vec
        work = work - value * np.outer(vec, vec)
    return values, vectors


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, D), orthonormal rows
    explained_variance: np.ndarray  # (k,), non-increasing
    provider_id: str = ""

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    @property
    def n_components(self) -> int:
        return int(self.components.shape[0])

    def to_json(self) -> dict:
        return {
            "mean": [float(x) for x in self.mean],
            "components": [[float(x) for x in row] for row in self.components],
            "explained_variance": [float(x) for x in self.explained_variance],
            "provider_id": self.provider_id,
            "dim": self.dim,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PcaModel":
        return cls(
            mean=np.asarray(obj["mean"], dtype=float),
            components=np.asarray(obj["components"], dtype=float),
            explained_variance=np.asarray(obj["explained_variance"], dtype=float),
            provider_id=obj.get("provider_id", ""),
        )


def pca_fit(vectors: Sequence[np.ndarray], k: int = 10, provider_id: str = "") -> PcaModel:
    data = np.asarray(vectors, dtype=float)
    n, dim = data.shape
    if n < k + 1:
        raise ValueError(f"need at least {k + 1} vectors to fit {k} components, got {n}")
    if dim < k:
        raise ValueError(f"dimension {dim} smaller than component count {k}")
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / (n - 1)
    if dim <= JACOBI_DIM_LIMIT:
        values, vectors_all = _jacobi_eigh(cov)
        values, components = values[:k], vectors_all[:k]
    else:
        values, components = _power_iteration_top_k(cov, k)
    values = np.clip(values, 0.0, None)
    # sign convention: largest-magnitude coordinate positive
    for row in components:
        pivot = int(np.argmax(np.abs(row)))
        if row[pivot] < 0:
            row *= -1.0
    return PcaModel(
        mean=mean,
        components=components,
        explained_variance=values,
        provider_id=provider_id,
    )


def pca_transform(model: PcaModel, vector: np.ndarray) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (model.dim,):
        raise ValueError(f"expected vector of dim {model.dim}, got shape {vector.shape}")
    return model.components @ (vector - model.mean)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(u @ v / (nu * nv))


@dataclass(frozen=True)
class TopicSet:
    names: tuple[str, ...]
    vectors: np.ndarray  # (10, D)

    @classmethod
    def build(cls, embedder: EmbeddingProvider) -> "TopicSet":
        vecs = np.array([embedder.embed(name) for name in TOPIC_NAMES], dtype=float)
        return cls(names=TOPIC_NAMES, vectors=vecs)


def topic_similarity(vector: np.ndarray, topics: TopicSet) -> np.ndarray:
    return np.array([cosine(vector, t) for t in topics.vectors])


class EmbeddingFeatureModel:
    """Per-role PCA projections plus topic similarities, fitted on training
    texts only. Transforming new texts never refits."""

    def __init__(self, embedder: EmbeddingProvider, pca_by_role: dict[str, PcaModel], topics: TopicSet):
        self.embedder = embedder
        self.pca_by_role = pca_by_role
        self.topics = topics

    @classmethod
    def fit(
        cls,
        embedder: EmbeddingProvider,
        train_texts: Sequence[dict[str, str]],
        n_components: int = 10,
    ) -> "EmbeddingFeatureModel":
        if not train_texts:
            raise ValueError("cannot fit embedding features on an empty training set")
        roles = list(train_texts[0].keys())
        vectors_by_role = {
            role: [embedder.embed(texts[role]) for texts in train_texts] for role in roles
        }
        return cls.fit_from_vectors(embedder, vectors_by_role, n_components)

    @classmethod
    def fit_from_vectors(
        cls,
        embedder: EmbeddingProvider,
        vectors_by_role: dict[str, Sequence[np.ndarray]],
        n_components: int = 10,
        topics: "TopicSet | None" = None,
    ) -> "EmbeddingFeatureModel":
        """Fit from precomputed training embeddings (fast path for reruns)."""
        pca_by_role = {
            role: pca_fit(vectors, k=n_components, provider_id=embedder.provider_id)
            for role, vectors in vectors_by_role.items()
        }
        return cls(embedder, pca_by_role, topics or TopicSet.build(embedder))

    def feature_names(self, roles: Sequence[str]) -> list[str]:
        names: list[str] = []
        for role in roles:
            k = self.pca_by_role[role].n_components
            names.extend(f"{role}_pca_{i}" for i in range(1, k + 1))
            names.extend(f"{role}_embedding_similarity_{t}" for t in self.topics.names)
        return names

    def transform(self, texts: dict[str, str]) -> FeatureVector:
        # keep the canonical role order used at fit time
        roles = [r for r in self.pca_by_role if r in texts]
        if set(roles) != set(texts):
            raise ValueError(
                f"roles {sorted(texts)} do not match fitted roles {sorted(self.pca_by_role)}"
            )
        values: list[float] = []
        for role in roles:
            vec = self.embedder.embed(texts[role])
            values.extend(float(x) for x in pca_transform(self.pca_by_role[role], vec))
            values.extend(float(x) for x in topic_similarity(vec, self.topics))
        return FeatureVector(tuple(self.feature_names(roles)), tuple(values))

    def to_json(self) -> dict:
        return {
            "provider_id": self.embedder.provider_id,
            "pca_by_role": {role: model.to_json() for role, model in self.pca_by_role.items()},
            "topic_names": list(self.topics.names),
            "topic_vectors": [[float(x) for x in row] for row in self.topics.vectors],
        }

    @classmethod
    def from_json(cls, obj: dict, embedder: EmbeddingProvider) -> "EmbeddingFeatureModel":
        topics = TopicSet(
            names=tuple(obj["topic_names"]),
            vectors=np.asarray(obj["topic_vectors"], dtype=float),
        )
        pca = {role: PcaModel.from_json(m) for role, m in obj["pca_by_role"].items()}
        return cls(embedder, pca, topics)
