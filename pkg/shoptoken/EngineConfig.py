import json
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from shoptoken.errors import ConfigurationError
from shoptoken.LshHasher import DEFAULT_BITS_PER_BAND, DEFAULT_NUM_BANDS, LshHasher, make_hasher
from shoptoken.RetrievalEngine import DEFAULT_K, SearchConfig

logger = logging.getLogger(__name__)


@dataclass
class HasherParams:
    dim: Optional[int] = None
    num_bands: int = DEFAULT_NUM_BANDS
    bits_per_band: int = DEFAULT_BITS_PER_BAND
    seed: int = 42


@dataclass
class SearchParams:
    k: int = DEFAULT_K
    max_candidates: Optional[int] = None
    metric: str = 'hamming'


@dataclass
class ServiceParams:
    host: str = '127.0.0.1'
    port: int = 8080


def _section(cls, payload, name: str):
    if payload is None:
        return cls()
    if not isinstance(payload, dict):
        raise ConfigurationError(f"config section '{name}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise ConfigurationError(f"unknown config key(s) in '{name}': {', '.join(unknown)}")
    return cls(**payload)


@dataclass
class EngineConfig:
    """
    Hasher, search and service parameters, loaded from JSON.

    Unknown keys at any level are rejected. ``hasher.dim`` may be null, in
    which case the corpus dimension is used at build time.
    """

    hasher: HasherParams = field(default_factory=HasherParams)
    search: SearchParams = field(default_factory=SearchParams)
    service: ServiceParams = field(default_factory=ServiceParams)

    @classmethod
    def from_dict(cls, payload: dict) -> 'EngineConfig':
        if not isinstance(payload, dict):
            raise ConfigurationError("config must be a JSON object")
        unknown = sorted(set(payload) - {'hasher', 'search', 'service'})
        if unknown:
            raise ConfigurationError(f"unknown config key(s): {', '.join(unknown)}")
        config = cls(
            _section(HasherParams, payload.get('hasher'), 'hasher'),
            _section(SearchParams, payload.get('search'), 'search'),
            _section(ServiceParams, payload.get('service'), 'service'),
        )
        config.search_config()
        return config

    @classmethod
    def load(cls, path: Optional[str]) -> 'EngineConfig':
        if path is None:
            return cls()
        try:
            with open(path, 'r', encoding='utf-8') as stream:
                payload = json.load(stream)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"config {path} is not valid JSON ({e.msg})") from e
        logger.info(f"Loaded engine config from {path}")
        return cls.from_dict(payload)

    def to_dict(self) -> dict:
        return asdict(self)

    def make_hasher(self, corpus_dim: Optional[int] = None) -> LshHasher:
        """
        Hasher for a corpus; config dim must agree with the corpus when both are known.
        """
        dim = self.hasher.dim
        if dim is None:
            dim = corpus_dim
        elif corpus_dim is not None and corpus_dim != dim:
            raise ConfigurationError(f"config dim {dim} does not match corpus dimension {corpus_dim}")
        if dim is None:
            logger.warning("Corpus is empty and no dim is configured; using dim=1")
            dim = 1
        return make_hasher(dim, self.hasher.num_bands, self.hasher.bits_per_band, self.hasher.seed)

    def search_config(self) -> SearchConfig:
        return SearchConfig(self.search.k, self.search.max_candidates, self.search.metric)
