import json
import logging
import os
from typing import Dict, Iterable, Iterator, List, Optional, TextIO, Union

import pandas as pd

from shoptoken.errors import CorpusFormatError, DimensionMismatchError, EvaluationError
from shoptoken.records import (
    BoundingBox,
    DetectionSet,
    LabelEvent,
    MatchPair,
    ProductRecord,
    QueryObject,
    RelevanceRating,
    as_embedding,
    validate_record,
)

logger = logging.getLogger(__name__)

PathOrStream = Union[str, os.PathLike, TextIO]


def _open_text(source: PathOrStream):
    if isinstance(source, (str, os.PathLike)):
        return open(source, 'r', encoding='utf-8'), True
    return source, False


def iter_jsonl(source: PathOrStream) -> Iterator[tuple]:
    """
    Yield (line_number, object) for every non-blank line of a JSONL source.

    Raises:
        CorpusFormatError: If a line is not a JSON object
    """
    stream, owned = _open_text(source)
    try:
        for line_number, line in enumerate(stream, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(f"malformed JSON ({e.msg})", line_number=line_number) from e
            if not isinstance(payload, dict):
                raise CorpusFormatError("expected a JSON object", line_number=line_number)
            yield line_number, payload
    finally:
        if owned:
            stream.close()


def parse_product_corpus(source: PathOrStream) -> Iterator[ProductRecord]:
    """
    Parse a JSONL product corpus into validated records, in file order.

    The first record fixes the corpus dimension D.

    Args:
        source: Path or open text stream, one JSON object per line

    Yields:
        ProductRecord: Validated records

    Raises:
        CorpusFormatError: Malformed line (names the line number) or duplicate id
        DimensionMismatchError: Embedding length differs from D (names the id)
    """
    expected_dim = None
    seen_ids = set()

    for line_number, payload in iter_jsonl(source):
        record_id = payload.get('id')
        embedding = payload.get('embedding')
        attributes = payload.get('attributes', {})

        if not isinstance(record_id, str) or not record_id:
            raise CorpusFormatError("missing or non-string 'id'", line_number=line_number)
        if not isinstance(embedding, list) or not embedding:
            raise CorpusFormatError(f"record '{record_id}' has no embedding array", line_number=line_number)
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in embedding):
            raise CorpusFormatError(f"record '{record_id}' has a non-numeric embedding value",
                                    line_number=line_number)
        if not isinstance(attributes, dict):
            raise CorpusFormatError(f"record '{record_id}' attributes must be an object",
                                    line_number=line_number)

        if expected_dim is None:
            expected_dim = len(embedding)
        elif len(embedding) != expected_dim:
            raise DimensionMismatchError(
                f"record '{record_id}' has dimension {len(embedding)}, corpus dimension is {expected_dim}",
                line_number=line_number, record_id=record_id)

        if record_id in seen_ids:
            raise CorpusFormatError(f"duplicate id '{record_id}'", line_number=line_number,
                                    record_id=record_id)
        seen_ids.add(record_id)

        record = ProductRecord(record_id, as_embedding(embedding), dict(attributes))
        problems = validate_record(record, expected_dim)
        if problems:
            raise CorpusFormatError(f"record '{record_id}' invalid: {'; '.join(problems)}",
                                    line_number=line_number, record_id=record_id)
        yield record


def write_jsonl(rows: Iterable[dict], target: PathOrStream) -> int:
    """Write dictionaries as compact, key-sorted JSON lines. Returns the row count."""
    if isinstance(target, (str, os.PathLike)):
        with open(target, 'w', encoding='utf-8') as stream:
            return write_jsonl(rows, stream)
    count = 0
    for row in rows:
        target.write(json.dumps(row, sort_keys=True, separators=(',', ':')))
        target.write('\n')
        count += 1
    return count


def write_product_corpus(records: Iterable[ProductRecord], target: PathOrStream) -> int:
    return write_jsonl((record.to_json() for record in records), target)


def _read_jsonl_frame(path: PathOrStream, columns: List[str]) -> pd.DataFrame:
    rows = [payload for _, payload in iter_jsonl(path)]
    if not rows:
        return pd.DataFrame(columns=columns)
    frame = pd.DataFrame(rows)
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise CorpusFormatError(f"missing field(s) {missing}")
    return frame


class CorpusPipeline:
    """
    Loads corpora and evaluation inputs from JSONL files and summarises them.
    """

    def __init__(self, data_dir: Optional[str] = None):
        """
        Initialize the pipeline.

        Args:
            data_dir (str): Directory relative paths are resolved against (default: cwd)
        """
        self.data_dir = data_dir or os.getcwd()
        self.logger = logging.getLogger(__name__)

    def resolve(self, path: Union[str, os.PathLike]) -> str:
        path = os.fspath(path)
        if os.path.isabs(path):
            return path
        return os.path.join(self.data_dir, path)

    def _existing(self, path) -> str:
        resolved = self.resolve(path)
        if not os.path.exists(resolved):
            raise FileNotFoundError(f"Input file not found: {resolved}")
        return resolved

    def load_products(self, path) -> List[ProductRecord]:
        records = list(parse_product_corpus(self._existing(path)))
        dim = records[0].dim if records else 0
        self.logger.info(f"Parsed {len(records)} records with D={dim} from {path}")
        return records

    def load_match_pairs(self, path) -> List[MatchPair]:
        pairs = []
        for line_number, payload in iter_jsonl(self._existing(path)):
            try:
                query = QueryObject(
                    as_embedding(payload['query_embedding']),
                    str(payload['predicted_category']),
                    payload.get('predicted_gender'),
                )
                pairs.append(MatchPair(query, str(payload['ground_truth_id'])))
            except (KeyError, ValueError, TypeError) as e:
                raise CorpusFormatError(f"invalid match pair ({e})", line_number=line_number) from e
        self.logger.info(f"Loaded {len(pairs)} match pairs from {path}")
        return pairs

    def load_detections(self, path) -> DetectionSet:
        detections: DetectionSet = {}
        for line_number, payload in iter_jsonl(self._existing(path)):
            try:
                image_id = str(payload['image_id'])
                boxes = [BoundingBox.from_json(box) for box in payload.get('boxes', [])]
            except (KeyError, ValueError, TypeError) as e:
                raise CorpusFormatError(f"invalid detection record ({e})", line_number=line_number) from e
            detections.setdefault(image_id, []).extend(boxes)
        num_boxes = sum(len(b) for b in detections.values())
        self.logger.info(f"Loaded {num_boxes} boxes over {len(detections)} images from {path}")
        return detections

    def load_ratings(self, path) -> List[RelevanceRating]:
        frame = _read_jsonl_frame(self._existing(path), ['query_id', 'rank', 'rating'])
        try:
            ratings = [
                RelevanceRating(str(row.query_id), int(row.rank), str(row.rating))
                for row in frame.itertuples(index=False)
            ]
        except ValueError as e:
            raise CorpusFormatError(f"invalid rating in {path}: {e}") from e
        self.logger.info(f"Loaded {len(ratings)} relevance ratings from {path}")
        return ratings

    def load_label_events(self, path) -> List[LabelEvent]:
        frame = _read_jsonl_frame(self._existing(path), ['question_id', 'labeler_id', 'answer'])
        events = [
            LabelEvent(str(row.question_id), str(row.labeler_id), str(row.answer))
            for row in frame.itertuples(index=False)
        ]
        self.logger.info(f"Loaded {len(events)} label events from {path}")
        return events

    def load_golden(self, path) -> Dict[str, str]:
        frame = _read_jsonl_frame(self._existing(path), ['question_id', 'answer'])
        golden = {}
        for row in frame.itertuples(index=False):
            question_id = str(row.question_id)
            if question_id in golden:
                raise EvaluationError(f"duplicate golden answer for question '{question_id}'")
            golden[question_id] = str(row.answer)
        return golden

    def load_json(self, path):
        with open(self._existing(path), 'r', encoding='utf-8') as stream:
            return json.load(stream)

    def get_corpus_info(self, records: List[ProductRecord]) -> Dict:
        """Get summary statistics of a parsed corpus."""
        if not records:
            return {'num_records': 0, 'dim': None, 'categories': {}}
        frame = pd.DataFrame({'category': [r.category for r in records]})
        counts = frame['category'].value_counts().sort_index()
        return {
            'num_records': len(records),
            'dim': records[0].dim,
            'categories': {str(k): int(v) for k, v in counts.items()},
        }
