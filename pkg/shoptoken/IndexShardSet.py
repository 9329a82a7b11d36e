import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional

import numpy as np

from shoptoken.errors import DimensionMismatchError
from shoptoken.LshHasher import LshHasher, binarize, format_token
from shoptoken.records import AttributeMap, ProductRecord

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
ATTRIBUTE_KEY_PREFIX = 'attr:'

# sorted, strictly increasing shard-local ordinals
PostingList = np.ndarray

_EMPTY_POSTINGS = np.zeros(0, dtype=np.int64)
_EMPTY_POSTINGS.flags.writeable = False


def attribute_key(name: str, value: str) -> str:
    return f"{ATTRIBUTE_KEY_PREFIX}{name}={value}"


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


class ForwardIndex:
    """
    Per-ordinal record id, embedding, binary code and attributes.

    Numeric attributes are also laid out as float64 columns (NaN where a
    document lacks the attribute or holds a string) for range predicates.
    """

    def __init__(self, ids: List[str], embeddings: np.ndarray, attributes: List[AttributeMap]):
        if len(ids) != embeddings.shape[0] or len(ids) != len(attributes):
            raise ValueError("forward index columns have different lengths")
        self.ids = list(ids)
        self.embeddings = _frozen(np.ascontiguousarray(embeddings, dtype=np.float32))
        self.codes = _frozen(binarize(self.embeddings).copy())
        self.attributes = [dict(a) for a in attributes]
        self.numeric_columns = self._numeric_columns()

    def _numeric_columns(self) -> Dict[str, np.ndarray]:
        columns: Dict[str, np.ndarray] = {}
        for ordinal, attrs in enumerate(self.attributes):
            for name, value in attrs.items():
                if isinstance(value, bool) or isinstance(value, str):
                    continue
                if name not in columns:
                    columns[name] = np.full(len(self.ids), np.nan, dtype=np.float64)
                columns[name][ordinal] = float(value)
        return {name: _frozen(column) for name, column in columns.items()}

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])

    def numeric_column(self, name: str) -> np.ndarray:
        column = self.numeric_columns.get(name)
        if column is None:
            return np.full(len(self.ids), np.nan, dtype=np.float64)
        return column


@dataclass(eq=False)
class IndexShard:
    """One category's inverted index (token and attribute keys) plus forward index."""

    category: str
    inverted: Dict[str, PostingList]
    forward: ForwardIndex
    hasher: LshHasher

    @property
    def num_docs(self) -> int:
        return len(self.forward)

    def all_ordinals(self) -> np.ndarray:
        return np.arange(self.num_docs, dtype=np.int64)

    @classmethod
    def build(cls, category: str, records: List[ProductRecord], hasher: LshHasher) -> 'IndexShard':
        """
        Index records of one category; ordinals follow input order.

        Args:
            category (str): Shard category
            records (List[ProductRecord]): Records, all of this category
            hasher (LshHasher): Token generator shared by the shard set

        Returns:
            IndexShard: Shard with B token postings per document and one
            ``attr:`` posting per string attribute other than category
        """
        if records:
            embeddings = np.stack([r.embedding for r in records]).astype(np.float32)
        else:
            embeddings = np.zeros((0, hasher.dim), dtype=np.float32)
        forward = ForwardIndex([r.id for r in records], embeddings, [r.attributes for r in records])

        inverted: Dict[str, PostingList] = {}
        if records:
            patterns = hasher.band_patterns(forward.embeddings)
            for band in range(hasher.num_bands):
                values, inverse = np.unique(patterns[:, band], return_inverse=True)
                order = np.argsort(inverse, kind='stable')
                bounds = np.cumsum(np.bincount(inverse, minlength=len(values)))[:-1]
                for value, ordinals in zip(values, np.split(order, bounds)):
                    key = format_token(band, int(value), hasher.bits_per_band)
                    inverted[key] = _frozen(ordinals.astype(np.int64))

        attribute_postings: Dict[str, List[int]] = {}
        for ordinal, record in enumerate(records):
            for name, value in record.attributes.items():
                if name == 'category' or not isinstance(value, str):
                    continue
                attribute_postings.setdefault(attribute_key(name, value), []).append(ordinal)
        for key, ordinals in attribute_postings.items():
            inverted[key] = _frozen(np.array(ordinals, dtype=np.int64))

        return cls(category, inverted, forward, hasher)


@dataclass(eq=False)
class IndexShardSet:
    """Per-category shards sharing one hasher configuration."""

    hasher: LshHasher
    shards: Dict[str, IndexShard] = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def __len__(self) -> int:
        return len(self.shards)

    @property
    def num_docs(self) -> int:
        return sum(shard.num_docs for shard in self.shards.values())

    def shard(self, category: str) -> Optional[IndexShard]:
        return self.shards.get(category)

    def categories(self) -> List[str]:
        return sorted(self.shards)

    def stats(self) -> Dict:
        return {
            'format_version': self.format_version,
            'hasher': self.hasher.config(),
            'num_shards': len(self.shards),
            'num_docs': self.num_docs,
            'shards': {category: self.shards[category].num_docs for category in self.categories()},
        }


def build_index(records: Iterable[ProductRecord], hasher: LshHasher) -> IndexShardSet:
    """
    Partition records by category and index each partition as its own shard.

    Raises:
        DimensionMismatchError: If a record's dimension differs from hasher.dim
    """
    partitions: Dict[str, List[ProductRecord]] = {}
    count = 0
    for record in records:
        if record.dim != hasher.dim:
            raise DimensionMismatchError(
                f"record '{record.id}' has dimension {record.dim}, index dimension is {hasher.dim}",
                record_id=record.id)
        partitions.setdefault(record.category, []).append(record)
        count += 1

    shards = {}
    for category in sorted(partitions):
        shards[category] = IndexShard.build(category, partitions[category], hasher)
        logger.debug(f"Shard '{category}': {shards[category].num_docs} docs, "
                     f"{len(shards[category].inverted)} keys")

    logger.info(f"Built {len(shards)} shards over {count} records")
    return IndexShardSet(hasher, shards)


def posting_lookup(shard: IndexShard, key: str) -> PostingList:
    """Posting list for a token or attribute key; empty when absent."""
    return shard.inverted.get(key, _EMPTY_POSTINGS)
