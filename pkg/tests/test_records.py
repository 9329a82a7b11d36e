import io
import json

import numpy as np
import pytest

from conftest import make_record
from shoptoken.CorpusPipeline import (
    CorpusPipeline,
    parse_product_corpus,
    write_jsonl,
    write_product_corpus,
)
from shoptoken.errors import CorpusFormatError, DimensionMismatchError, EvaluationError
from shoptoken.records import BoundingBox, ProductRecord, RelevanceRating, as_embedding, validate_record


def _jsonl(*rows):
    return io.StringIO(''.join(json.dumps(row) + '\n' for row in rows))


class TestValidateRecord:

    def test_valid_record_has_no_problems(self):
        record = make_record('a', [0.1, 0.2, 0.3], gender='Men', price=49.0, domain='x.com')
        assert validate_record(record, 3) == []

    def test_dimension_mismatch(self):
        problems = validate_record(make_record('a', [0.1, 0.2]), 3)
        assert problems == ['embedding dimension 2 != expected 3']

    def test_missing_category(self):
        record = ProductRecord('a', as_embedding([1.0]), {})
        assert 'missing category' in validate_record(record, 1)

    def test_unknown_gender(self):
        record = make_record('a', [1.0], gender='Mens')
        assert validate_record(record, 1) == ["invalid gender 'Mens'"]

    def test_boolean_attribute_rejected(self):
        record = make_record('a', [1.0], on_sale=True)
        assert any('on_sale' in p for p in validate_record(record, 1))

    def test_non_finite_embedding(self):
        record = make_record('a', [1.0, float('nan')])
        assert 'non-finite embedding value' in validate_record(record, 2)

    def test_embedding_is_read_only_float32(self):
        vector = as_embedding([1, 2, 3])
        assert vector.dtype == np.float32
        with pytest.raises(ValueError):
            vector[0] = 5.0


class TestBoundingBox:

    def test_degenerate_box_rejected(self):
        with pytest.raises(ValueError):
            BoundingBox(1, 1, 1, 3, 'Sofa')

    def test_score_outside_unit_interval_rejected(self):
        with pytest.raises(ValueError):
            BoundingBox(0, 0, 1, 1, 'Sofa', score=1.5)

    def test_rating_rank_starts_at_one(self):
        with pytest.raises(ValueError):
            RelevanceRating('q', 0, 'Similar')


class TestParseProductCorpus:

    def test_records_in_file_order(self):
        source = _jsonl(
            {'id': 'b', 'embedding': [1, 0], 'attributes': {'category': 'Sofa'}},
            {'id': 'a', 'embedding': [0, 1], 'attributes': {'category': 'Rug', 'price': 10}},
        )
        records = list(parse_product_corpus(source))
        assert [r.id for r in records] == ['b', 'a']
        assert records[1].attributes['price'] == 10
        assert records[0].embedding.dtype == np.float32

    def test_malformed_line_names_line_number(self):
        source = io.StringIO('{"id": "a", "embedding": [1], "attributes": {"category": "S"}}\n{not json}\n')
        with pytest.raises(CorpusFormatError) as info:
            list(parse_product_corpus(source))
        assert info.value.line_number == 2
        assert 'line 2' in str(info.value)

    def test_dimension_mismatch_names_record(self):
        source = _jsonl(
            {'id': 'a', 'embedding': [1, 0], 'attributes': {'category': 'S'}},
            {'id': 'bad', 'embedding': [1, 0, 0], 'attributes': {'category': 'S'}},
        )
        with pytest.raises(DimensionMismatchError) as info:
            list(parse_product_corpus(source))
        assert info.value.record_id == 'bad'

    def test_duplicate_id(self):
        row = {'id': 'a', 'embedding': [1, 0], 'attributes': {'category': 'S'}}
        with pytest.raises(CorpusFormatError, match="duplicate id 'a'"):
            list(parse_product_corpus(_jsonl(row, row)))

    def test_missing_category_is_rejected(self):
        with pytest.raises(CorpusFormatError, match='missing category'):
            list(parse_product_corpus(_jsonl({'id': 'a', 'embedding': [1.0], 'attributes': {}})))

    def test_empty_corpus(self):
        assert list(parse_product_corpus(io.StringIO(''))) == []

    def test_serialization_parses_back(self, corpus):
        buffer = io.StringIO()
        write_product_corpus(corpus[:20], buffer)
        parsed = list(parse_product_corpus(io.StringIO(buffer.getvalue())))
        assert parsed == corpus[:20]


class TestCorpusPipeline:

    def test_load_detections_groups_by_image(self, tmp_path):
        path = tmp_path / 'gt.jsonl'
        write_jsonl([
            {'image_id': 'i1', 'boxes': [{'x_min': 0, 'y_min': 0, 'x_max': 2, 'y_max': 2, 'category': 'Sofa'}]},
            {'image_id': 'i2', 'boxes': []},
        ], path)
        detections = CorpusPipeline(str(tmp_path)).load_detections('gt.jsonl')
        assert list(detections) == ['i1', 'i2']
        assert detections['i1'][0].area == 4

    def test_load_golden_rejects_duplicates(self, tmp_path):
        path = tmp_path / 'golden.jsonl'
        write_jsonl([{'question_id': 'q', 'answer': 'A'}, {'question_id': 'q', 'answer': 'B'}], path)
        with pytest.raises(EvaluationError):
            CorpusPipeline().load_golden(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            CorpusPipeline(str(tmp_path)).load_products('absent.jsonl')

    def test_corpus_info_counts_categories(self, corpus):
        info = CorpusPipeline().get_corpus_info(corpus)
        assert info['num_records'] == 600
        assert info['dim'] == 16
        assert sum(info['categories'].values()) == 600
