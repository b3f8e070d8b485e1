import json

import numpy as np
import pytest

from dynjury.embedfeat import (
    EmbeddingFeatureModel,
    FileEmbeddingCache,
    HashEmbedder,
    PcaModel,
    RemoteEmbeddingError,
    RemoteEmbeddingProvider,
    TopicSet,
    hash_embed,
    pca_fit,
    pca_transform,
    topic_similarity,
)
from httpmock import MockEndpoint
from oracles import eigh_pca_oracle


class TestHashEmbed:
    def test_deterministic(self):
        assert np.array_equal(hash_embed("some text here"), hash_embed("some text here"))

    def test_unit_norm(self):
        assert np.linalg.norm(hash_embed("nonempty words")) == pytest.approx(1.0, abs=1e-12)

    def test_empty_is_zero_vector(self):
        assert np.array_equal(hash_embed(""), np.zeros(64))

    def test_dimension(self):
        emb = HashEmbedder(32)
        assert emb.dimension() == 32
        assert emb.embed("x").shape == (32,)


class TestPcaFit:
    def test_line_data(self):
        rng = np.random.default_rng(0)
        t = rng.standard_normal(30)
        data = np.column_stack([t, 2 * t])
        model = pca_fit(data, k=2)
        direction = np.array([1.0, 2.0]) / np.sqrt(5.0)
        assert abs(model.components[0] @ direction) == pytest.approx(1.0, abs=1e-9)
        assert model.explained_variance[1] == pytest.approx(0.0, abs=1e-9)

    def test_isotropic_variances_close(self):
        rng = np.random.default_rng(1)
        data = rng.standard_normal((4000, 3))
        model = pca_fit(data, k=3)
        assert model.explained_variance[0] / model.explained_variance[2] < 1.2

    def test_matches_eigh_oracle(self):
        rng = np.random.default_rng(2)
        for trial in range(10):
            data = rng.standard_normal((100, 16)) * rng.uniform(0.5, 3, size=16)
            model = pca_fit(data, k=10)
            values, vectors, _ = eigh_pca_oracle(data, 10)
            for i in range(10):
                cos = abs(model.components[i] @ vectors[i])
                assert cos > 1 - 1e-6
                assert model.explained_variance[i] == pytest.approx(values[i], rel=1e-8)

    def test_components_orthonormal(self):
        rng = np.random.default_rng(3)
        model = pca_fit(rng.standard_normal((50, 12)), k=5)
        gram = model.components @ model.components.T
        assert np.allclose(gram, np.eye(5), atol=1e-8)

    def test_variances_sorted_and_bounded_by_total(self):
        rng = np.random.default_rng(4)
        data = rng.standard_normal((60, 8))
        model = pca_fit(data, k=8)
        ev = model.explained_variance
        assert all(a >= b - 1e-12 for a, b in zip(ev, ev[1:]))
        total = np.var(data, axis=0, ddof=1).sum()
        assert ev.sum() <= total * (1 + 1e-6)

    def test_rank_deficient_orthonormal_with_zero_variance(self):
        rng = np.random.default_rng(5)
        base = rng.standard_normal((40, 2))
        data = base @ rng.standard_normal((2, 6))  # rank 2 in 6 dims
        model = pca_fit(data, k=5)
        gram = model.components @ model.components.T
        assert np.allclose(gram, np.eye(5), atol=1e-8)
        assert np.all(model.explained_variance[2:] < 1e-9)

    def test_too_few_vectors(self):
        with pytest.raises(ValueError):
            pca_fit(np.ones((3, 8)), k=3)

    def test_sign_convention(self):
        rng = np.random.default_rng(6)
        model = pca_fit(rng.standard_normal((30, 5)), k=3)
        for row in model.components:
            assert row[np.argmax(np.abs(row))] > 0


class TestPcaTransform:
    @pytest.fixture
    def model(self):
        rng = np.random.default_rng(7)
        return pca_fit(rng.standard_normal((40, 6)), k=4)

    def test_mean_maps_to_zero(self, model):
        assert np.allclose(pca_transform(model, model.mean), 0.0, atol=1e-12)

    def test_component_maps_to_unit(self, model):
        out = pca_transform(model, model.mean + model.components[0])
        expected = np.zeros(4)
        expected[0] = 1.0
        assert np.allclose(out, expected, atol=1e-9)

    def test_dot_product_oracle(self, model):
        rng = np.random.default_rng(8)
        v = rng.standard_normal(6)
        out = pca_transform(model, v)
        for i in range(4):
            assert out[i] == pytest.approx(model.components[i] @ (v - model.mean), abs=1e-10)

    def test_dimension_mismatch(self, model):
        with pytest.raises(ValueError):
            pca_transform(model, np.ones(5))

    def test_projection_contracts_distances(self, model):
        rng = np.random.default_rng(9)
        for _ in range(20):
            u, v = rng.standard_normal((2, 6))
            pu, pv = pca_transform(model, u), pca_transform(model, v)
            assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-8

    def test_serialization_roundtrip_bit_exact(self, model):
        rng = np.random.default_rng(10)
        clone = PcaModel.from_json(json.loads(json.dumps(model.to_json())))
        for _ in range(5):
            v = rng.standard_normal(6)
            assert np.array_equal(pca_transform(model, v), pca_transform(clone, v))


class TestTopicSimilarity:
    def test_self_similarity(self):
        emb = HashEmbedder()
        topics = TopicSet.build(emb)
        sims = topic_similarity(topics.vectors[6], topics)
        assert sims[6] == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_and_antipodal(self):
        vectors = np.zeros((10, 4))
        for i in range(10):
            vectors[i, i % 4] = 1.0
        topics = TopicSet(names=tuple(f"t{i}" for i in range(10)), vectors=vectors)
        v = np.array([1.0, 0.0, 0.0, 0.0])
        sims = topic_similarity(v, topics)
        assert sims[0] == 1.0
        assert sims[1] == 0.0
        assert topic_similarity(-v, topics)[0] == -1.0

    def test_zero_vector_convention(self):
        emb = HashEmbedder()
        topics = TopicSet.build(emb)
        assert np.array_equal(topic_similarity(np.zeros(64), topics), np.zeros(10))

    def test_topic_names_fixed(self):
        from dynjury.embedfeat import TOPIC_NAMES

        assert TOPIC_NAMES == (
            "market", "bank", "business", "tech", "education",
            "politics", "legal", "sports", "media", "science",
        )


class TestEmbeddingFeatureModel:
    def _texts(self, i):
        return {"input": f"words number {i} repeated {i}", "output": f"short {i}"}

    def test_feature_names_and_transform(self):
        emb = HashEmbedder()
        model = EmbeddingFeatureModel.fit(emb, [self._texts(i) for i in range(6)], n_components=3)
        vec = model.transform(self._texts(0))
        assert vec.names[:3] == ("input_pca_1", "input_pca_2", "input_pca_3")
        assert vec.names[3] == "input_embedding_similarity_market"
        assert len(vec.names) == 2 * (3 + 10)

    def test_transform_does_not_refit(self):
        emb = HashEmbedder()
        model = EmbeddingFeatureModel.fit(emb, [self._texts(i) for i in range(6)], n_components=2)
        before = json.dumps(model.to_json(), sort_keys=True)
        for i in range(20, 30):
            model.transform(self._texts(i))
        assert json.dumps(model.to_json(), sort_keys=True) == before

    def test_json_roundtrip(self):
        emb = HashEmbedder()
        model = EmbeddingFeatureModel.fit(emb, [self._texts(i) for i in range(6)], n_components=2)
        clone = EmbeddingFeatureModel.from_json(model.to_json(), emb)
        assert clone.transform(self._texts(3)).values == model.transform(self._texts(3)).values


class TestRemoteProvider:
    def test_batching_and_order(self):
        def behavior(payload, index):
            vectors = [[float(len(t)), 0.0] for t in payload["texts"]]
            return 200, {"vectors": vectors}

        endpoint = MockEndpoint(behavior)
        try:
            provider = RemoteEmbeddingProvider(
                endpoint.url, "mock", dim=2, batch_size=2, max_in_flight=3, backoff=0.01
            )
            texts = [f"t{'x' * i}" for i in range(7)]
            vectors = provider.embed_many(texts)
            assert [v[0] for v in vectors] == [float(len(t)) for t in texts]
            assert len(endpoint.calls) == 4  # ceil(7 / 2)
        finally:
            endpoint.close()

    def test_retry_then_success(self):
        def behavior(payload, index):
            if index < 2:
                return 429, {"error": "slow down"}
            return 200, {"vectors": [[1.0, 2.0]]}

        endpoint = MockEndpoint(behavior)
        try:
            provider = RemoteEmbeddingProvider(endpoint.url, "mock", dim=2, backoff=0.01)
            assert list(provider.embed("x")) == [1.0, 2.0]
            assert len(endpoint.calls) == 3
        finally:
            endpoint.close()

    def test_exhausted_retries(self):
        endpoint = MockEndpoint(lambda payload, index: (500, {"error": "no"}))
        try:
            provider = RemoteEmbeddingProvider(endpoint.url, "mock", dim=2, backoff=0.01)
            with pytest.raises(RemoteEmbeddingError, match="after 3 attempts"):
                provider.embed("x")
            assert len(endpoint.calls) == 3
        finally:
            endpoint.close()


class TestFileCache:
    def test_cache_hit_skips_provider(self, tmp_path):
        calls = []

        class Counting(HashEmbedder):
            def embed(self, text):
                calls.append(text)
                return super().embed(text)

        cache = FileEmbeddingCache(tmp_path, Counting())
        first = cache.embed("hello there")
        second = cache.embed("hello there")
        assert np.array_equal(first, second)
        assert calls == ["hello there"]
