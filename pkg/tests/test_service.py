import json

import pytest
from fastapi.testclient import TestClient

from shoptoken.cli import main
from shoptoken.IndexShardSet import build_index
from shoptoken.LshHasher import make_hasher
from shoptoken.RetrievalEngine import RetrievalEngine, SearchConfig
from shoptoken.service import create_app
from shoptoken.SnapshotHandler import save_index
from shoptoken.synthetic import make_clustered_corpus

from conftest import make_record


@pytest.fixture
def two_shards():
    records = [
        make_record('s1', [1.0, 0.0, 0.0, 0.0], category='Sofa', gender='Men', price=120.0),
        make_record('s2', [0.9, 0.1, 0.0, 0.0], category='Sofa', gender='unisex', price=40.0),
        make_record('s3', [0.0, 1.0, 0.0, 0.0], category='Sofa', gender='Women', price=300.0),
        make_record('r1', [0.0, 0.0, 1.0, 0.0], category='Rug', gender='unisex', price=80.0),
    ]
    return build_index(records, make_hasher(4, num_bands=8, bits_per_band=2, seed=3))


@pytest.fixture
def client(two_shards):
    return TestClient(create_client_app(two_shards))


def create_client_app(shard_set):
    return create_app(RetrievalEngine(shard_set, SearchConfig(k=10)))


def search(client, **body):
    return client.post('/v1/search', json=body)


class TestSearchRoute:

    def test_health(self, client):
        response = client.get('/v1/health')
        assert response.status_code == 200
        health = response.json()
        assert health['num_shards'] == 2
        assert health['num_docs'] == 4
        assert health['shards'] == {'Rug': 1, 'Sofa': 3}

    def test_results_and_timing(self, client):
        response = search(client, embedding=[1, 0, 0, 0], category='Sofa')
        assert response.status_code == 200
        payload = response.json()
        assert {r['id'] for r in payload['results']} <= {'s1', 's2', 's3'}
        assert payload['results'][0]['id'] == 's1'
        assert payload['restriction'] == ''
        assert payload['took_ms'] >= 0

    def test_gender_expansion(self, client):
        payload = search(client, embedding=[1, 0, 0, 0], category='Sofa', gender='Men').json()
        assert payload['restriction'] == '(gender:Men OR gender:unisex)'
        assert {r['id'] for r in payload['results']} <= {'s1', 's2'}

    def test_gender_expansion_combines_with_restriction(self, client):
        payload = search(client, embedding=[1, 0, 0, 0], category='Sofa', gender='Men',
                         restrict='price > 100').json()
        assert payload['restriction'] == '((price > 100) AND (gender:Men OR gender:unisex))'
        assert [r['id'] for r in payload['results']] == ['s1']

    def test_exclude_everything_is_empty(self, client):
        response = search(client, embedding=[1, 0, 0, 0], category='Sofa', restrict='price < 0')
        assert response.status_code == 200
        assert response.json()['results'] == []

    def test_unknown_category_is_empty(self, client):
        response = search(client, embedding=[1, 0, 0, 0], category='Lamp')
        assert response.status_code == 200
        assert response.json()['results'] == []

    def test_malformed_restriction(self, client):
        response = search(client, embedding=[1, 0, 0, 0], category='Sofa', restrict='gender:Men AND (')
        assert response.status_code == 400
        payload = response.json()
        assert 'byte offset' in payload['error']
        assert isinstance(payload['offset'], int)

    def test_invalid_json_body(self, client):
        response = client.post('/v1/search', content=b'{"embedding": [1,',
                               headers={'content-type': 'application/json'})
        assert response.status_code == 400
        assert 'not valid JSON' in response.json()['error']

    @pytest.mark.parametrize('body', [
        {'category': 'Sofa'},
        {'embedding': [], 'category': 'Sofa'},
        {'embedding': [1, 0, 0, 0]},
        {'embedding': [1, 0, 0, 0], 'category': 'Sofa', 'k': 0},
        {'embedding': [1, 0, 0, 0], 'category': 'Sofa', 'restrict': 5},
        {'embedding': [1, 0], 'category': 'Sofa'},
    ])
    def test_invalid_request(self, client, body):
        response = client.post('/v1/search', json=body)
        assert response.status_code == 400
        assert 'offset' not in response.json()

    @pytest.mark.parametrize('metric', ['hamming', 'cosine'])
    def test_zero_embedding_is_bad_request(self, two_shards, metric):
        client = TestClient(create_app(RetrievalEngine(two_shards, SearchConfig(metric=metric))))
        response = search(client, embedding=[0, 0, 0, 0], category='Sofa')
        assert response.status_code == 400
        assert 'all zeros' in response.json()['error']

    def test_non_object_body(self, client):
        assert client.post('/v1/search', json=[1, 2, 3]).status_code == 400

    def test_unknown_route(self, client):
        assert client.get('/v1/nothing').status_code == 404


class TestCommandLineParity:

    def test_same_results_as_cli(self, tmp_path, capsys):
        records = make_clustered_corpus(300, 8, num_clusters=6, seed=5)
        shard_set = build_index(records, make_hasher(8, num_bands=8, bits_per_band=4, seed=42))
        snapshot = tmp_path / 'snapshot'
        save_index(shard_set, snapshot)
        client = TestClient(create_client_app(shard_set))

        for index in range(0, 300, 37):
            record = records[index]
            body = {'embedding': [float(v) for v in record.embedding], 'category': record.category,
                    'gender': record.attributes['gender'], 'restrict': 'NOT price > 250', 'k': 5}
            served = client.post('/v1/search', json=body).json()
            served.pop('took_ms')

            query = tmp_path / 'query.json'
            query.write_text(json.dumps(body))
            assert main(['--quiet', 'query', '--snapshot', str(snapshot), '--query', str(query)]) == 0
            cli = json.loads(capsys.readouterr().out)
            assert cli['restriction'] == served['restriction']
            assert cli['results'] == served['results']
