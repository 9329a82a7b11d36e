import numpy as np
import pytest

from shoptoken.errors import ConfigurationError, DimensionMismatchError, InvalidRequestError, RestrictionSyntaxError
from shoptoken.IndexShardSet import build_index
from shoptoken.LshHasher import binarize, hamming_distance, make_hasher, tokens
from shoptoken.records import QueryObject, as_embedding
from shoptoken.RestrictionQuery import MatchAll, Or, Pair, evaluate_restriction, parse_restriction
from shoptoken.RetrievalEngine import (
    RetrievalEngine,
    SearchConfig,
    candidate_generation,
    default_max_candidates,
    exact_search,
    expand_gender_restriction,
    rerank,
    search,
)
from shoptoken.synthetic import make_clustered_corpus

from test_restriction_query import random_ast


def _query(record, noise=0.0, rng=None):
    embedding = record.embedding
    if noise:
        embedding = embedding + noise * rng.standard_normal(record.dim)
    return QueryObject(as_embedding(embedding), record.category)


class TestSearchConfig:

    def test_default_candidate_cap(self):
        assert SearchConfig(k=5).candidate_cap == 100
        assert SearchConfig(k=20).candidate_cap == 200
        assert default_max_candidates(1) == 100

    def test_default_cap_follows_request_k(self):
        config = SearchConfig(k=5).with_k(50)
        assert config.max_candidates is None
        assert config.candidate_cap == 500

    def test_explicit_cap_is_kept_and_widened_to_k(self):
        assert SearchConfig(k=5, max_candidates=120).with_k(50).candidate_cap == 120
        assert SearchConfig(k=5, max_candidates=120).with_k(200).candidate_cap == 200

    @pytest.mark.parametrize('kwargs', [{'k': 0}, {'k': 5, 'max_candidates': 4}, {'metric': 'euclidean'}])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            SearchConfig(**kwargs)


class TestSearch:

    def test_self_retrieval_cosine(self, corpus, shard_set):
        config = SearchConfig(k=1, metric='cosine')
        for record in corpus[:100]:
            results = search(shard_set, _query(record), MatchAll(), config)
            assert results[0].id == record.id

    def test_self_retrieval_hamming_distance_zero(self, corpus, shard_set, hasher):
        config = SearchConfig(k=10)
        for record in corpus[:50]:
            results = search(shard_set, _query(record), MatchAll(), config)
            assert results[0].distance == 0
            own = [r for r in results if r.id == record.id]
            assert own and own[0].distance == 0 and own[0].token_matches == hasher.num_bands

    def test_results_sorted_and_bounded(self, corpus, shard_set, rng):
        config = SearchConfig(k=7)
        for record in corpus[:30]:
            results = search(shard_set, _query(record, 0.1, rng), MatchAll(), config)
            assert len(results) <= 7
            assert [r.sort_key() for r in results] == sorted(r.sort_key() for r in results)
            assert len({r.id for r in results}) == len(results)

    def test_results_stay_in_routed_category(self, corpus, shard_set):
        categories = {r.id: r.category for r in corpus}
        for record in corpus[:30]:
            for result in search(shard_set, _query(record), MatchAll(), SearchConfig(k=10)):
                assert categories[result.id] == record.category

    def test_larger_k_extends_smaller_k(self, corpus, shard_set, rng):
        for record in corpus[:30]:
            query = _query(record, 0.2, rng)
            small = search(shard_set, query, MatchAll(), SearchConfig(k=3, max_candidates=100))
            large = search(shard_set, query, MatchAll(), SearchConfig(k=10, max_candidates=100))
            assert large[:len(small)] == small

    def test_unknown_category_returns_nothing(self, corpus, shard_set):
        query = QueryObject(corpus[0].embedding, 'Lamp')
        assert search(shard_set, query, MatchAll(), SearchConfig()) == []

    def test_dimension_mismatch(self, shard_set):
        query = QueryObject(as_embedding(np.ones(3)), 'Sofa')
        with pytest.raises(DimensionMismatchError):
            search(shard_set, query, MatchAll(), SearchConfig())

    def test_restriction_soundness(self, corpus, shard_set, rng):
        by_id = {r.id: r for r in corpus}
        fuzz = np.random.default_rng(17)
        for record in corpus[:200]:
            restriction = random_ast(fuzz, 4)
            results = search(shard_set, _query(record, 0.1, rng), restriction, SearchConfig(k=10))
            for result in results:
                assert evaluate_restriction(restriction, by_id[result.id].attributes)

    def test_restriction_excluding_everything(self, corpus, shard_set):
        restriction = parse_restriction('price < 0')
        assert search(shard_set, _query(corpus[0]), restriction, SearchConfig()) == []

    def test_documented_restriction_example(self, corpus, shard_set):
        restriction = parse_restriction('gender:Men AND (category:Shirt OR category:Tie) AND (NOT price < 50)')
        by_id = {r.id: r for r in corpus}
        for record in [r for r in corpus if r.category in ('Shirt', 'Tie')][:20]:
            for result in search(shard_set, _query(record), restriction, SearchConfig(k=10)):
                attrs = by_id[result.id].attributes
                assert attrs['gender'] == 'Men' and attrs['price'] >= 50


class TestPerCategoryExactness:

    def test_routed_search_equals_brute_force(self):
        records = make_clustered_corpus(1000, 32, num_clusters=25, seed=3)
        hasher = make_hasher(32, num_bands=32, bits_per_band=2, seed=9)
        shard_set = build_index(records, hasher)
        rng = np.random.default_rng(50)
        for index in rng.choice(len(records), size=50, replace=False):
            record = records[int(index)]
            query = _query(record, 0.1, rng)
            shard = shard_set.shard(record.category)
            config = SearchConfig(k=5, max_candidates=shard.num_docs)

            query_tokens = tokens(query.embedding, hasher)
            code = binarize(query.embedding)
            brute = sorted(
                (hamming_distance(code, binarize(r.embedding)),
                 -len(query_tokens & tokens(r.embedding, hasher)), r.id)
                for r in records if r.category == record.category
            )
            expected = [item[2] for item in brute[:5]]

            assert [r.id for r in search(shard_set, query, MatchAll(), config)] == expected
            assert [r.id for r in exact_search(shard_set, query, MatchAll(), config)] == expected


class TestCandidateGeneration:

    def test_ordering_and_cap(self, corpus, shard_set, hasher):
        shard = shard_set.shard('Sofa')
        query_tokens = tokens(corpus[0].embedding, hasher)
        candidates = candidate_generation(query_tokens, shard.all_ordinals(), shard, 25)
        assert len(candidates) <= 25
        keys = [(-matches, ordinal) for ordinal, matches in candidates]
        assert keys == sorted(keys)
        assert all(matches >= 1 for _, matches in candidates)

    def test_disallowed_documents_never_candidates(self, corpus, shard_set, hasher):
        shard = shard_set.shard('Sofa')
        allowed = np.arange(0, shard.num_docs, 2)
        candidates = candidate_generation(tokens(corpus[0].embedding, hasher), allowed, shard, 1000)
        assert all(ordinal % 2 == 0 for ordinal, _ in candidates)

    def test_rerank_accepts_bare_ordinals(self, corpus, shard_set, hasher):
        shard = shard_set.shard('Sofa')
        query = shard.forward.embeddings[0]
        paired = candidate_generation(tokens(query, hasher), shard.all_ordinals(), shard, 50)
        assert rerank(paired, query, shard) == rerank([o for o, _ in paired], query, shard)


class TestGenderExpansion:

    def test_match_all_base(self):
        assert expand_gender_restriction(MatchAll(), 'Men') == Or((Pair('gender', 'Men'), Pair('gender', 'unisex')))

    def test_unisex_is_a_single_pair(self):
        assert expand_gender_restriction(MatchAll(), 'unisex') == Pair('gender', 'unisex')

    def test_base_is_kept(self, corpus, shard_set):
        base = parse_restriction('price > 100')
        restriction = expand_gender_restriction(base, 'Women')
        by_id = {r.id: r for r in corpus}
        for record in corpus[:20]:
            for result in search(shard_set, _query(record), restriction, SearchConfig(k=10)):
                attrs = by_id[result.id].attributes
                assert attrs['gender'] in ('Women', 'unisex') and attrs['price'] > 100


class TestRetrievalEngine:

    @pytest.fixture
    def engine(self, shard_set):
        return RetrievalEngine(shard_set, SearchConfig(k=5))

    def test_search_request(self, engine, corpus):
        record = corpus[0]
        body = {'embedding': [float(v) for v in record.embedding], 'category': record.category, 'k': 3}
        response = engine.search_request(body)
        assert len(response['results']) <= 3
        assert response['results'][0]['distance'] == 0
        assert response['restriction'] == ''

    def test_gender_in_effective_restriction(self, engine, corpus):
        body = {'embedding': [float(v) for v in corpus[0].embedding], 'category': corpus[0].category,
                'gender': 'Men', 'restrict': 'price > 10'}
        response = engine.search_request(body)
        assert response['restriction'] == '((price > 10) AND (gender:Men OR gender:unisex))'

    def test_unknown_category(self, engine):
        assert engine.search_request({'embedding': [1.0, 2.0], 'category': 'Lamp'})['results'] == []

    @pytest.mark.parametrize('body', [
        [],
        {'category': 'Sofa'},
        {'embedding': [], 'category': 'Sofa'},
        {'embedding': ['a'], 'category': 'Sofa'},
        {'embedding': [1.0] * 16},
        {'embedding': [1.0] * 16, 'category': 'Sofa', 'k': 0},
        {'embedding': [1.0] * 16, 'category': 'Sofa', 'k': True},
        {'embedding': [1.0] * 16, 'category': 'Sofa', 'restrict': 5},
        {'embedding': [1.0] * 3, 'category': 'Sofa'},
        {'embedding': [0.0] * 16, 'category': 'Sofa'},
    ])
    def test_invalid_requests(self, engine, body):
        with pytest.raises(InvalidRequestError):
            engine.parse_request(body)

    def test_malformed_restriction(self, engine):
        with pytest.raises(RestrictionSyntaxError):
            engine.parse_request({'embedding': [1.0] * 16, 'category': 'Sofa', 'restrict': 'gender:'})

    def test_request_k_recomputes_default_cap(self, engine, corpus):
        body = {'embedding': [float(v) for v in corpus[0].embedding], 'category': corpus[0].category, 'k': 50}
        _, _, config = engine.parse_request(body)
        assert config.k == 50
        assert config.candidate_cap == 500

    def test_health(self, engine):
        assert engine.health()['num_shards'] == 5
