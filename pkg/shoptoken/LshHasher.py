"""
Random-hyperplane LSH tokens, sign binarization and distance functions.

Conventions frozen for snapshot portability:
    * token bits use sign(0) = 1, binarize uses sign(0) = 0
    * pattern bit i belongs to the i-th hyperplane of the band (least significant first)
    * token text is ``b<band>:<pattern hex>`` with the hex zero-padded to ceil(r / 4) digits
"""

import logging
from typing import Dict, NamedTuple

import numpy as np
from scipy.spatial.distance import cdist

from shoptoken.errors import ConfigurationError, DimensionMismatchError

logger = logging.getLogger(__name__)

MAX_HYPERPLANES = 4096
DEFAULT_NUM_BANDS = 32
DEFAULT_BITS_PER_BAND = 8


class Token(NamedTuple):
    band_index: int
    pattern: int

    def key(self, bits_per_band: int) -> str:
        return format_token(self.band_index, self.pattern, bits_per_band)


def format_token(band_index: int, pattern: int, bits_per_band: int) -> str:
    width = (bits_per_band + 3) // 4
    return f"b{band_index}:{pattern:0{width}x}"


class LshHasher:
    """
    Seeded bank of B x r unit hyperplanes of dimension D.

    Hyperplanes come from a Philox counter-based generator, so identical
    (dim, num_bands, bits_per_band, seed) give bit-identical banks on any platform.
    """

    def __init__(self, dim: int, num_bands: int = DEFAULT_NUM_BANDS,
                 bits_per_band: int = DEFAULT_BITS_PER_BAND, seed: int = 42):
        for name, value in (('dim', dim), ('num_bands', num_bands), ('bits_per_band', bits_per_band)):
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigurationError(f"{name} must be an integer >= 1, got {value!r}")
        if num_bands * bits_per_band > MAX_HYPERPLANES:
            raise ConfigurationError(
                f"num_bands * bits_per_band = {num_bands * bits_per_band} exceeds {MAX_HYPERPLANES}")
        if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed < 2 ** 64:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {seed!r}")

        self.dim = int(dim)
        self.num_bands = int(num_bands)
        self.bits_per_band = int(bits_per_band)
        self.seed = int(seed)

        rng = np.random.Generator(np.random.Philox(key=self.seed))
        planes = rng.standard_normal((self.num_bands * self.bits_per_band, self.dim))
        norms = np.linalg.norm(planes, axis=1, keepdims=True)
        # a zero row is astronomically unlikely; keep it zero rather than divide by it
        norms[norms == 0] = 1.0
        planes = planes / norms
        planes.flags.writeable = False
        self.hyperplanes = planes
        self._weights = None
        if self.bits_per_band <= 63:
            self._weights = (np.uint64(1) << np.arange(self.bits_per_band, dtype=np.uint64))

    @property
    def num_hyperplanes(self) -> int:
        return self.num_bands * self.bits_per_band

    def config(self) -> Dict[str, int]:
        return {
            'dim': self.dim,
            'num_bands': self.num_bands,
            'bits_per_band': self.bits_per_band,
            'seed': self.seed,
        }

    @classmethod
    def from_config(cls, config: Dict[str, int]) -> 'LshHasher':
        try:
            return cls(config['dim'], config['num_bands'], config['bits_per_band'], config['seed'])
        except KeyError as e:
            raise ConfigurationError(f"hasher config missing {e}") from e

    def __eq__(self, other):
        return isinstance(other, LshHasher) and self.config() == other.config()

    def __hash__(self):
        return hash(tuple(self.config().values()))

    def __repr__(self):
        return f"LshHasher({self.config()})"

    def _check_dim(self, embeddings: np.ndarray):
        if embeddings.shape[-1] != self.dim:
            raise DimensionMismatchError(
                f"embedding dimension {embeddings.shape[-1]} != hasher dimension {self.dim}")

    def band_bits(self, embeddings: np.ndarray) -> np.ndarray:
        """
        Sign bits of every projection, shaped (N, B, r). sign(0) counts as 1.
        """
        embeddings = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
        self._check_dim(embeddings)
        projections = embeddings @ self.hyperplanes.T
        return (projections >= 0).reshape(-1, self.num_bands, self.bits_per_band)

    def band_patterns(self, embeddings: np.ndarray) -> np.ndarray:
        """
        Integer band patterns, shaped (N, B).

        uint64 when r <= 63, Python ints in an object array otherwise.
        """
        bits = self.band_bits(embeddings)
        if self._weights is not None:
            return (bits.astype(np.uint64) * self._weights).sum(axis=2, dtype=np.uint64)
        patterns = np.empty(bits.shape[:2], dtype=object)
        for index in np.ndindex(*bits.shape[:2]):
            value = 0
            for i in np.flatnonzero(bits[index]):
                value |= 1 << int(i)
            patterns[index] = value
        return patterns


def make_hasher(dim: int, num_bands: int = DEFAULT_NUM_BANDS,
                bits_per_band: int = DEFAULT_BITS_PER_BAND, seed: int = 42) -> LshHasher:
    """
    Build a deterministic hasher.

    Raises:
        ConfigurationError: If dim, B or r is below 1 or B * r exceeds 4096
    """
    return LshHasher(dim, num_bands, bits_per_band, seed)


def tokens(embedding: np.ndarray, hasher: LshHasher) -> frozenset:
    """Exactly B tokens, one per band."""
    patterns = hasher.band_patterns(embedding)[0]
    return frozenset(Token(band, int(pattern)) for band, pattern in enumerate(patterns))


def binarize(embedding: np.ndarray) -> np.ndarray:
    """Bit i is 1 iff values[i] > 0."""
    code = np.asarray(embedding) > 0
    code.flags.writeable = False
    return code


def hamming_distance(a: np.ndarray, b: np.ndarray) -> int:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"binary code lengths differ: {a.shape[0]} vs {b.shape[0]}")
    return int(np.count_nonzero(a != b))


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"embedding dimensions differ: {a.shape[0]} vs {b.shape[0]}")
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise ValueError("cosine distance is undefined for a zero vector")
    similarity = float(np.dot(a, b) / (norm_a * norm_b))
    return float(np.clip(1.0 - similarity, 0.0, 2.0))


def hamming_distances(codes: np.ndarray, query_code: np.ndarray) -> np.ndarray:
    """Hamming distance from one code to each row of a code matrix."""
    return np.count_nonzero(codes != query_code, axis=1)


def cosine_distances(embeddings: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Cosine distance from one vector to each row; zero rows get distance 1."""
    query = np.asarray(query, dtype=np.float64).reshape(1, -1)
    if not np.any(query):
        raise ValueError("cosine distance is undefined for a zero query vector")
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.shape[0] == 0:
        return np.zeros(0, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        distances = cdist(query, embeddings, "cosine")[0]
    distances = np.where(np.isnan(distances), 1.0, distances)
    return np.clip(distances, 0.0, 2.0)
