"""Seeded synthetic corpora for benchmarks, examples and tests."""

from typing import List, Optional, Sequence

import numpy as np

from shoptoken.records import GENDER_LABELS, MatchPair, ProductRecord, QueryObject, as_embedding

DEFAULT_CATEGORIES = ('Sofa', 'Chair', 'Rug', 'Shirt', 'Tie')
DOMAINS = ('shop.example.com', 'store.example.org', 'market.example.net')


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return matrix / norms


def make_clustered_corpus(num_records: int, dim: int, num_clusters: int = 10,
                          categories: Sequence[str] = DEFAULT_CATEGORIES, seed: int = 0,
                          noise: float = 0.1) -> List[ProductRecord]:
    """
    Gaussian clusters around random unit centres.

    Each cluster belongs to one category (round-robin), so a category shard
    holds whole clusters. Attributes carry category, gender, price, domain
    and merchant.

    Args:
        num_records (int): Number of records
        dim (int): Embedding dimension
        num_clusters (int): Number of cluster centres
        categories (Sequence[str]): Category names assigned to clusters
        seed (int): Generator seed
        noise (float): Per-coordinate standard deviation around the centre

    Returns:
        List[ProductRecord]: Records with ids ``p000000``, ``p000001``, ...
    """
    if num_records < 0 or dim < 1 or num_clusters < 1 or not categories:
        raise ValueError("num_records >= 0, dim >= 1, num_clusters >= 1 and categories required")
    rng = np.random.default_rng(seed)
    centres = _unit_rows(rng.standard_normal((num_clusters, dim)))
    clusters = rng.integers(0, num_clusters, size=num_records)
    embeddings = _unit_rows(centres[clusters] + noise * rng.standard_normal((num_records, dim)))
    genders = rng.integers(0, len(GENDER_LABELS), size=num_records)
    prices = np.round(rng.uniform(5.0, 500.0, size=num_records), 2)
    domains = rng.integers(0, len(DOMAINS), size=num_records)
    merchants = rng.integers(0, 20, size=num_records)

    width = max(6, len(str(num_records)))
    return [
        ProductRecord(
            f"p{i:0{width}d}",
            as_embedding(embeddings[i]),
            {
                'category': categories[clusters[i] % len(categories)],
                'gender': GENDER_LABELS[genders[i]],
                'price': float(prices[i]),
                'domain': DOMAINS[domains[i]],
                'merchant': f"m{merchants[i]:02d}",
            },
        )
        for i in range(num_records)
    ]


def make_match_pairs(records: List[ProductRecord], num_pairs: int, seed: int = 0,
                     noise: float = 0.05, gender: bool = False) -> List[MatchPair]:
    """
    Perturbed copies of randomly chosen records as query objects.

    Queries are routed by the chosen record's category; with ``gender`` the
    record's gender becomes the predicted gender.
    """
    if not records or num_pairs <= 0:
        return []
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(records), size=min(num_pairs, len(records)), replace=False)
    pairs = []
    for index in chosen:
        record = records[int(index)]
        embedding = record.embedding + noise * rng.standard_normal(record.dim)
        predicted_gender = record.attributes.get('gender') if gender else None
        query = QueryObject(as_embedding(embedding), record.category, predicted_gender)
        pairs.append(MatchPair(query, record.id))
    return pairs


def match_pairs_to_json(pairs: List[MatchPair]) -> List[dict]:
    rows = []
    for pair in pairs:
        row = {
            'query_embedding': [float(v) for v in pair.query.embedding],
            'predicted_category': pair.query.predicted_category,
            'ground_truth_id': pair.ground_truth_id,
        }
        if pair.query.predicted_gender is not None:
            row['predicted_gender'] = pair.query.predicted_gender
        rows.append(row)
    return rows
