import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from shoptoken.errors import ConfigurationError, DimensionMismatchError, InvalidRequestError
from shoptoken.IndexShardSet import IndexShard, IndexShardSet, posting_lookup
from shoptoken.LshHasher import Token, binarize, cosine_distances, hamming_distances, tokens
from shoptoken.records import UNISEX, QueryObject, as_embedding
from shoptoken.RestrictionQuery import (
    And,
    MatchAll,
    Or,
    Pair,
    RestrictionAst,
    format_ast,
    parse_restriction,
    resolve_mask,
)

logger = logging.getLogger(__name__)

METRICS = ('hamming', 'cosine')
DEFAULT_K = 5


def default_max_candidates(k: int) -> int:
    return max(10 * k, 100)


@dataclass(frozen=True)
class SearchConfig:
    """
    Final result count, rerank candidate cap and rerank metric.

    An unset max_candidates follows k: the cap is max(10 * k, 100) for
    whatever k the config ends up with.
    """

    k: int = DEFAULT_K
    max_candidates: Optional[int] = None
    metric: str = 'hamming'

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ConfigurationError(f"unknown metric '{self.metric}' (expected one of {METRICS})")
        if isinstance(self.k, bool) or not isinstance(self.k, int) or self.k < 1:
            raise ConfigurationError(f"k must be an integer >= 1, got {self.k!r}")
        if self.max_candidates is not None and self.max_candidates < self.k:
            raise ConfigurationError(f"max_candidates ({self.max_candidates}) must be >= k ({self.k})")

    @property
    def candidate_cap(self) -> int:
        if self.max_candidates is None:
            return default_max_candidates(self.k)
        return self.max_candidates

    def with_k(self, k: int, max_candidates: Optional[int] = None) -> 'SearchConfig':
        if max_candidates is None and self.max_candidates is not None:
            max_candidates = max(self.max_candidates, k)
        return SearchConfig(k, max_candidates, self.metric)


@dataclass(frozen=True)
class SearchResult:
    id: str
    distance: Union[int, float]
    token_matches: int

    def sort_key(self):
        return (self.distance, -self.token_matches, self.id)

    def to_json(self) -> dict:
        return {'id': self.id, 'distance': self.distance, 'token_matches': self.token_matches}


def _allowed_mask(allowed, size: int) -> np.ndarray:
    allowed = np.asarray(allowed)
    if allowed.dtype == bool and allowed.shape == (size,):
        return allowed
    mask = np.zeros(size, dtype=bool)
    if allowed.size:
        mask[allowed.astype(np.int64)] = True
    return mask


def match_counts(query_tokens: Iterable[Token], shard: IndexShard) -> np.ndarray:
    """Number of query tokens shared with each document of the shard."""
    counts = np.zeros(shard.num_docs, dtype=np.int64)
    bits_per_band = shard.hasher.bits_per_band
    for token in query_tokens:
        # ordinals are unique within one posting list, so fancy-index increment is exact
        counts[posting_lookup(shard, token.key(bits_per_band))] += 1
    return counts


def candidate_generation(query_tokens: Iterable[Token], allowed, shard: IndexShard,
                         max_candidates: int) -> List[Tuple[int, int]]:
    """
    Top documents by token match count among the allowed set.

    Args:
        query_tokens: Tokens from the shard's hasher
        allowed: Allowed ordinals, or a boolean mask over the shard
        shard (IndexShard): Shard to search
        max_candidates (int): Cap on returned candidates

    Returns:
        List[Tuple[int, int]]: (ordinal, token_matches) for documents with at least
        one match, by descending match count then ascending ordinal
    """
    counts = match_counts(query_tokens, shard)
    counts[~_allowed_mask(allowed, shard.num_docs)] = 0
    ordinals = np.flatnonzero(counts)
    order = np.lexsort((ordinals, -counts[ordinals]))[:max_candidates]
    return [(int(ordinals[i]), int(counts[ordinals[i]])) for i in order]


def _distances(ordinals: np.ndarray, query: np.ndarray, shard: IndexShard, metric: str) -> np.ndarray:
    if metric == 'hamming':
        return hamming_distances(shard.forward.codes[ordinals], binarize(query))
    if metric == 'cosine':
        return cosine_distances(shard.forward.embeddings[ordinals], query)
    raise ConfigurationError(f"unknown metric '{metric}'")


def _results(ordinals: np.ndarray, matches: np.ndarray, distances: np.ndarray,
             shard: IndexShard, metric: str) -> List[SearchResult]:
    cast = int if metric == 'hamming' else float
    results = [
        SearchResult(shard.forward.ids[o], cast(d), int(m))
        for o, m, d in zip(ordinals, matches, distances)
    ]
    results.sort(key=SearchResult.sort_key)
    return results


def rerank(candidates: Sequence[Union[int, Tuple[int, int]]], query: np.ndarray,
           shard: IndexShard, metric: str = 'hamming') -> List[SearchResult]:
    """
    Exact distances from the forward index, sorted by (distance, -token_matches, id).

    Candidates are ordinals or (ordinal, token_matches) pairs as produced by
    candidate_generation; bare ordinals get their match count recomputed.
    """
    if len(candidates) == 0:
        return []
    if isinstance(candidates[0], tuple):
        ordinals = np.array([c[0] for c in candidates], dtype=np.int64)
        matches = np.array([c[1] for c in candidates], dtype=np.int64)
    else:
        ordinals = np.asarray(candidates, dtype=np.int64)
        matches = match_counts(tokens(query, shard.hasher), shard)[ordinals]
    distances = _distances(ordinals, query, shard, metric)
    return _results(ordinals, matches, distances, shard, metric)


def _route(shard_set: IndexShardSet, query: QueryObject) -> Optional[IndexShard]:
    shard = shard_set.shard(query.predicted_category)
    if shard is None:
        logger.warning(f"No shard for category '{query.predicted_category}'")
        return None
    if query.embedding.shape[0] != shard_set.hasher.dim:
        raise DimensionMismatchError(
            f"query dimension {query.embedding.shape[0]} != index dimension {shard_set.hasher.dim}")
    return shard


def search(shard_set: IndexShardSet, query: QueryObject, restriction: RestrictionAst,
           config: SearchConfig) -> List[SearchResult]:
    """
    Route to the query's category shard, filter by restriction, then
    candidate generation, rerank and truncation to k.

    Returns:
        List[SearchResult]: Empty when the category has no shard
    """
    if config.metric not in METRICS:
        raise ConfigurationError(f"unknown metric '{config.metric}'")
    shard = _route(shard_set, query)
    if shard is None:
        return []
    allowed = resolve_mask(restriction, shard)
    candidates = candidate_generation(tokens(query.embedding, shard.hasher), allowed, shard,
                                      config.candidate_cap)
    return rerank(candidates, query.embedding, shard, config.metric)[:config.k]


def exact_search(shard_set: IndexShardSet, query: QueryObject, restriction: RestrictionAst,
                 config: SearchConfig) -> List[SearchResult]:
    """
    Exhaustive nearest neighbours over every allowed document of the routed shard.

    Same ordering as search, with no candidate cap and no token-match requirement.
    """
    shard = _route(shard_set, query)
    if shard is None:
        return []
    ordinals = np.flatnonzero(resolve_mask(restriction, shard))
    if ordinals.size == 0:
        return []
    matches = match_counts(tokens(query.embedding, shard.hasher), shard)[ordinals]
    if config.metric == 'hamming':
        codes = shard.forward.codes[ordinals]
        fractions = cdist(binarize(query.embedding)[None, :], codes, 'hamming')[0]
        distances = np.rint(fractions * codes.shape[1]).astype(np.int64)
    else:
        distances = _distances(ordinals, query.embedding, shard, config.metric)
    return _results(ordinals, matches, distances, shard, config.metric)[:config.k]


def expand_gender_restriction(base: RestrictionAst, predicted_gender: str) -> RestrictionAst:
    """
    Widen a restriction to the predicted gender or "unisex".

    Returns:
        RestrictionAst: And[base, Or[gender:<g>, gender:unisex]]; just the Or
        clause for a MatchAll base; a single Pair when the gender is unisex
    """
    if not predicted_gender:
        raise ValueError("predicted_gender must be non-empty")
    if predicted_gender == UNISEX:
        clause = Pair('gender', UNISEX)
    else:
        clause = Or((Pair('gender', predicted_gender), Pair('gender', UNISEX)))
    if isinstance(base, MatchAll):
        return clause
    return And((base, clause))


class RetrievalEngine:
    """
    Query path over a loaded, immutable IndexShardSet.

    search_request implements the request contract shared by the
    ``query`` command and ``POST /v1/search``.
    """

    def __init__(self, shard_set: IndexShardSet, config: Optional[SearchConfig] = None):
        """
        Args:
            shard_set (IndexShardSet): Loaded index
            config (SearchConfig): Defaults for k, max_candidates and metric
        """
        self.shard_set = shard_set
        self.config = config or SearchConfig()
        self.logger = logging.getLogger(__name__)

    def search(self, query: QueryObject, restriction: RestrictionAst = MatchAll(),
               config: Optional[SearchConfig] = None) -> List[SearchResult]:
        return search(self.shard_set, query, restriction, config or self.config)

    def health(self) -> Dict:
        return self.shard_set.stats()

    def parse_request(self, body: dict) -> Tuple[QueryObject, RestrictionAst, SearchConfig]:
        """
        Validate a request body into a query, effective restriction and config.

        Raises:
            InvalidRequestError: On missing or mistyped fields
            RestrictionSyntaxError: On a malformed ``restrict`` string
        """
        if not isinstance(body, dict):
            raise InvalidRequestError("request body must be a JSON object")

        embedding = body.get('embedding')
        if (not isinstance(embedding, list) or not embedding
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in embedding)):
            raise InvalidRequestError("'embedding' must be a non-empty array of numbers")
        if not all(math.isfinite(v) for v in embedding):
            raise InvalidRequestError("'embedding' contains a non-finite value")
        if not any(embedding):
            raise InvalidRequestError("'embedding' must not be all zeros")

        category = body.get('category')
        if not isinstance(category, str) or not category:
            raise InvalidRequestError("'category' must be a non-empty string")

        gender = body.get('gender')
        if gender is not None and (not isinstance(gender, str) or not gender):
            raise InvalidRequestError("'gender' must be a non-empty string")

        restrict = body.get('restrict', '')
        if restrict is None:
            restrict = ''
        if not isinstance(restrict, str):
            raise InvalidRequestError("'restrict' must be a string")

        config = self.config
        k = body.get('k')
        if k is not None:
            if isinstance(k, bool) or not isinstance(k, int) or k < 1:
                raise InvalidRequestError("'k' must be an integer >= 1")
            config = config.with_k(k)

        query = QueryObject(as_embedding(embedding), category, gender)
        if query.embedding.shape[0] != self.shard_set.hasher.dim and self.shard_set.shard(category):
            raise InvalidRequestError(
                f"'embedding' has dimension {query.embedding.shape[0]}, index dimension is "
                f"{self.shard_set.hasher.dim}")

        restriction = parse_restriction(restrict)
        if gender is not None:
            restriction = expand_gender_restriction(restriction, gender)
        return query, restriction, config

    def search_request(self, body: dict) -> Dict:
        """
        Run one request body; returns ``{"results": [...], "restriction": "..."}``.
        """
        query, restriction, config = self.parse_request(body)
        results = self.search(query, restriction, config)
        return {
            'results': [r.to_json() for r in results],
            'restriction': format_ast(restriction),
        }
