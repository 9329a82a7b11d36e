import logging
from typing import Dict, List, Optional

from shoptoken.errors import EvaluationError
from shoptoken.IndexShardSet import IndexShardSet, build_index
from shoptoken.LshHasher import LshHasher
from shoptoken.records import MatchPair, ProductRecord
from shoptoken.RestrictionQuery import MatchAll
from shoptoken.RetrievalEngine import SearchConfig, exact_search, search


class RetrievalEvaluator:
    """
    Retrieval P@K over an offline corpus of ground-truth products plus distractors.

    Every query is searched twice: through the LSH engine and exhaustively over
    its routed shard, so the report carries the ANN gap alongside P@K.
    """

    def __init__(self, records: List[ProductRecord], hasher: LshHasher,
                 config: Optional[SearchConfig] = None):
        """
        Args:
            records (List[ProductRecord]): Ground truths plus distractors
            hasher (LshHasher): Hasher to build the evaluation index with
            config (SearchConfig): Metric and candidate cap (k is set per evaluation)
        """
        self.logger = logging.getLogger(__name__)
        self.ids = {record.id for record in records}
        self.config = config or SearchConfig()
        self.shard_set: IndexShardSet = build_index(records, hasher)
        self.logger.info(f"Built evaluation index over {len(self.ids)} records")

    def _check_pairs(self, pairs: List[MatchPair]):
        missing = sorted({pair.ground_truth_id for pair in pairs} - self.ids)
        if missing:
            raise EvaluationError(f"ground truth ids missing from the corpus: {', '.join(missing)}")

    def hits(self, pairs: List[MatchPair], k: int, exhaustive: bool = False) -> List[bool]:
        """Whether each pair's ground truth appears in the top-k results."""
        if isinstance(k, bool) or not isinstance(k, int) or k < 1:
            raise EvaluationError(f"k must be an integer >= 1, got {k!r}")
        self._check_pairs(pairs)
        config = self.config.with_k(k)
        run = exact_search if exhaustive else search
        return [
            pair.ground_truth_id in {r.id for r in run(self.shard_set, pair.query, MatchAll(), config)}
            for pair in pairs
        ]

    def precision_at_k(self, pairs: List[MatchPair], k: int = 1) -> float:
        if not pairs:
            return 0.0
        hits = self.hits(pairs, k)
        return sum(hits) / len(hits)

    def report(self, pairs: List[MatchPair], k: int = 1) -> Dict:
        """P@K through the engine, the exhaustive-search hit rate and their gap."""
        ann = self.precision_at_k(pairs, k)
        exact_hits = self.hits(pairs, k, exhaustive=True) if pairs else []
        exact = sum(exact_hits) / len(exact_hits) if exact_hits else 0.0
        self.logger.info(f"P@{k}: {ann:.4f} (exhaustive {exact:.4f}) over {len(pairs)} queries")
        return {
            'k': k,
            'num_queries': len(pairs),
            'num_corpus': len(self.ids),
            'precision_at_k': ann,
            'exact_precision_at_k': exact,
            'ann_gap': exact - ann,
        }


def retrieval_precision_at_k(pairs: List[MatchPair], corpus: List[ProductRecord], hasher: LshHasher,
                             k: int = 1, config: Optional[SearchConfig] = None) -> float:
    """
    Fraction of queries whose ground truth appears in the top-k results.

    Args:
        pairs (List[MatchPair]): Query objects with annotated matching products
        corpus (List[ProductRecord]): Ground truths plus distractors
        hasher (LshHasher): Index build parameters
        k (int): Cut-off, at least 1
        config (SearchConfig): Metric and candidate cap

    Raises:
        EvaluationError: If k < 1 or ground truth ids are missing from the corpus
    """
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise EvaluationError(f"k must be an integer >= 1, got {k!r}")
    return RetrievalEvaluator(corpus, hasher, config).precision_at_k(pairs, k)
