import json

import pytest

from shoptoken.EngineConfig import EngineConfig
from shoptoken.errors import ConfigurationError


class TestEngineConfig:

    def test_defaults(self):
        config = EngineConfig.from_dict({})
        assert config.hasher.num_bands == 32
        assert config.hasher.bits_per_band == 8
        assert config.search_config().candidate_cap == 100
        assert config.service.port == 8080

    def test_load(self, tmp_path):
        path = tmp_path / 'engine.json'
        path.write_text(json.dumps({'hasher': {'num_bands': 8, 'bits_per_band': 4, 'seed': 5},
                                    'search': {'k': 3, 'metric': 'cosine'}}))
        config = EngineConfig.load(str(path))
        assert config.make_hasher(16).config() == {'dim': 16, 'num_bands': 8, 'bits_per_band': 4, 'seed': 5}
        assert config.search_config().metric == 'cosine'

    @pytest.mark.parametrize('payload', [
        {'hasher': {'bands': 8}},
        {'searching': {}},
        {'search': {'metric': 'l2'}},
        {'search': {'k': 10, 'max_candidates': 5}},
        {'service': []},
    ])
    def test_rejected(self, payload):
        with pytest.raises(ConfigurationError):
            EngineConfig.from_dict(payload)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / 'engine.json'
        path.write_text('{')
        with pytest.raises(ConfigurationError):
            EngineConfig.load(str(path))

    def test_dim_must_match_corpus(self):
        config = EngineConfig.from_dict({'hasher': {'dim': 8}})
        with pytest.raises(ConfigurationError):
            config.make_hasher(16)
        assert config.make_hasher(None).dim == 8

    def test_hasher_bounds(self):
        config = EngineConfig.from_dict({'hasher': {'num_bands': 100, 'bits_per_band': 64}})
        with pytest.raises(ConfigurationError):
            config.make_hasher(4)

    def test_round_trip(self):
        payload = EngineConfig().to_dict()
        assert EngineConfig.from_dict(payload).to_dict() == payload
