"""
Domain types shared by the corpus pipeline, the index and the evaluation kit.

Embeddings are held as read-only float32 numpy vectors; binary codes as
read-only boolean vectors of the same length.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

import numpy as np

EmbeddingVector = np.ndarray
BinaryCode = np.ndarray
AttributeValue = Union[str, float]
AttributeMap = Dict[str, AttributeValue]

RESERVED_ATTRIBUTES = ('category', 'gender', 'price', 'domain', 'merchant')
GENDER_LABELS = ('Men', 'Women', 'Boys', 'Girls', 'unisex')
UNISEX = 'unisex'


def as_embedding(values) -> EmbeddingVector:
    """Convert a sequence of numbers to a read-only float32 embedding."""
    vector = np.array(values, dtype=np.float32).reshape(-1)
    vector.flags.writeable = False
    return vector


def is_attribute_value(value) -> bool:
    # bool is an int subclass but is not a valid attribute value
    if isinstance(value, bool):
        return False
    return isinstance(value, (str, int, float))


@dataclass(frozen=True, eq=False)
class ProductRecord:
    """One indexable product: id, embedding and attribute map."""

    id: str
    embedding: EmbeddingVector
    attributes: AttributeMap = field(default_factory=dict)

    @property
    def category(self) -> Optional[str]:
        return self.attributes.get('category')

    @property
    def dim(self) -> int:
        return int(self.embedding.shape[0])

    def to_json(self) -> dict:
        return {
            'id': self.id,
            'embedding': [float(v) for v in self.embedding],
            'attributes': dict(self.attributes),
        }

    def __eq__(self, other):
        if not isinstance(other, ProductRecord):
            return NotImplemented
        return (self.id == other.id
                and np.array_equal(self.embedding, other.embedding)
                and self.attributes == other.attributes)

    def __hash__(self):
        return hash(self.id)


@dataclass(frozen=True, eq=False)
class QueryObject:
    """A detected query object: its embedding plus predicted labels."""

    embedding: EmbeddingVector
    predicted_category: str
    predicted_gender: Optional[str] = None

    def __post_init__(self):
        if not self.predicted_category:
            raise ValueError("predicted_category must be non-empty")


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    category: str
    score: Optional[float] = None

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self}")
        if min(self.x_min, self.y_min) < 0:
            raise ValueError(f"negative box coordinate {self}")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValueError(f"box score {self.score} outside [0, 1]")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def with_category(self, category: str) -> 'BoundingBox':
        return BoundingBox(self.x_min, self.y_min, self.x_max, self.y_max, category, self.score)

    def to_json(self) -> dict:
        payload = {
            'x_min': self.x_min, 'y_min': self.y_min,
            'x_max': self.x_max, 'y_max': self.y_max,
            'category': self.category,
        }
        if self.score is not None:
            payload['score'] = self.score
        return payload

    @classmethod
    def from_json(cls, payload: dict) -> 'BoundingBox':
        score = payload.get('score')
        return cls(
            float(payload['x_min']), float(payload['y_min']),
            float(payload['x_max']), float(payload['y_max']),
            str(payload['category']),
            None if score is None else float(score),
        )


# image id -> boxes
DetectionSet = Dict[str, List[BoundingBox]]


@dataclass(frozen=True, eq=False)
class MatchPair:
    query: QueryObject
    ground_truth_id: str


RATING_EXTREMELY_SIMILAR = 'ExtremelySimilar'
RATING_SIMILAR = 'Similar'
RATING_MARGINALLY_SIMILAR = 'MarginallySimilar'
RATING_NOT_SIMILAR = 'NotSimilar'
RATING_DID_NOT_LOAD = 'DidNotLoad'
RATINGS = (RATING_EXTREMELY_SIMILAR, RATING_SIMILAR, RATING_MARGINALLY_SIMILAR,
           RATING_NOT_SIMILAR, RATING_DID_NOT_LOAD)
BAD_RATINGS = (RATING_MARGINALLY_SIMILAR, RATING_NOT_SIMILAR, RATING_DID_NOT_LOAD)


@dataclass(frozen=True)
class RelevanceRating:
    query_id: str
    result_rank: int
    rating: str

    def __post_init__(self):
        if self.rating not in RATINGS:
            raise ValueError(f"unknown rating '{self.rating}'")
        if self.result_rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.result_rank}")


@dataclass(frozen=True)
class LabelEvent:
    question_id: str
    labeler_id: str
    answer: str


def validate_record(record: ProductRecord, expected_dim: int) -> List[str]:
    """
    Check a record against every corpus invariant.

    Args:
        record (ProductRecord): Record to check
        expected_dim (int): Corpus-wide embedding dimension

    Returns:
        List[str]: One message per violation; empty iff the record is valid
    """
    problems = []

    if not isinstance(record.id, str) or not record.id:
        problems.append("missing id")

    embedding = np.asarray(record.embedding)
    if embedding.ndim != 1 or embedding.shape[0] != expected_dim:
        problems.append(f"embedding dimension {embedding.size} != expected {expected_dim}")
    if embedding.size and not np.all(np.isfinite(embedding)):
        problems.append("non-finite embedding value")

    attributes = record.attributes
    category = attributes.get('category')
    if category is None:
        problems.append("missing category")
    elif not isinstance(category, str) or not category:
        problems.append("category must be a non-empty string")

    gender = attributes.get('gender')
    if gender is not None and gender not in GENDER_LABELS:
        problems.append(f"invalid gender '{gender}'")

    for name, value in attributes.items():
        if not name:
            problems.append("empty attribute name")
        if not is_attribute_value(value):
            problems.append(f"attribute '{name}' has unsupported value type {type(value).__name__}")
        elif isinstance(value, float) and not math.isfinite(value):
            problems.append(f"attribute '{name}' is not finite")

    return problems
