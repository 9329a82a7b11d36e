import io

import pytest

from shoptoken.errors import CorpusFormatError, EvaluationError
from shoptoken.records import BoundingBox
from shoptoken.SingleProductDatasetGenerator import (
    SUMMARY_KEYS,
    CorpusItem,
    SceneDistribution,
    generate_single_product_dataset,
    is_dominant_box,
    largest_box,
    load_corpus_items,
    write_dataset,
)


def full(width=100, height=100):
    return [(0, 0, width, height)]


def item(item_id, category, merchant=True, white=True, boxes=None, width=100, height=100):
    return CorpusItem(
        item_id, width, height, category, merchant, white,
        tuple(BoundingBox(*coords, category or 'unknown', 0.9) for coords in (boxes if boxes is not None else full())),
    )


CAPS = SceneDistribution({'Sofa': 2, 'Rug': 3, 'Chair': 0})

FIXTURE = [
    item('i01', 'Sofa'),
    item('i02', 'Sofa', merchant=False),
    item('i03', 'Sofa', white=False),
    item('i04', 'Sofa', boxes=[(0, 0, 50, 100)]),
    item('i05', 'Rug', boxes=[(10, 0, 100, 100)]),
    item('i06', 'Sofa'),
    item('i07', 'Sofa'),
    item('i08', 'Lamp'),
    item('i09', 'Rug', boxes=[(0, 0, 10, 10), (2, 2, 97, 97)]),
    item('i10', 'Rug', boxes=[]),
    item('i11', 'Chair'),
    item('i12', 'Rug', boxes=[(20, 0, 100, 100)]),
    item('i13', 'Rug'),
    item('i14', None),
    item('i15', 'Rug', merchant=False, white=False),
    item('i16', 'Sofa', boxes=[(0, 0, 50, 100), (0, 0, 100, 50)]),
    item('i17', 'Rug', boxes=[(0, 0, 79, 100)]),
    item('i18', 'Lamp', white=False),
    item('i19', 'Sofa', boxes=[(0, 0, 170, 100)], width=200),
    item('i20', 'Chair', merchant=False),
]


class TestDominantBox:

    def test_full_image(self):
        assert is_dominant_box(BoundingBox(0, 0, 100, 100, 'Sofa'), 100, 100)

    def test_half_image(self):
        assert not is_dominant_box(BoundingBox(0, 0, 50, 100, 'Sofa'), 100, 100)

    def test_ninety_percent(self):
        assert is_dominant_box(BoundingBox(0, 0, 90, 100, 'Sofa'), 100, 100)

    def test_threshold_is_inclusive(self):
        assert is_dominant_box(BoundingBox(0, 0, 80, 100, 'Sofa'), 100, 100)

    def test_largest_box_ties_go_to_first(self):
        first, second = BoundingBox(0, 0, 50, 100, 'a'), BoundingBox(0, 0, 100, 50, 'b')
        assert largest_box([first, second]) is first
        assert largest_box([]) is None


class TestGenerateSingleProductDataset:

    def test_fixture_admissions(self):
        summary = {}
        dataset = generate_single_product_dataset(FIXTURE, CAPS, summary)
        assert [(item_id, category) for item_id, category, _ in dataset] == [
            ('i01', 'Sofa'), ('i05', 'Rug'), ('i06', 'Sofa'), ('i09', 'Rug'), ('i12', 'Rug'),
        ]
        assert dataset[3][2] == BoundingBox(2, 2, 97, 97, 'Rug', 0.9)
        assert summary == {
            'admitted': 5,
            'rejected_no_merchant_cat': 4,
            'rejected_not_white': 2,
            'rejected_small_box': 4,
            'rejected_not_in_distribution': 1,
            'rejected_cap': 4,
        }
        assert sum(summary[key] for key in SUMMARY_KEYS if key != 'admitted') == len(FIXTURE) - len(dataset)

    def test_caps_never_exceeded(self):
        dataset = generate_single_product_dataset(FIXTURE, CAPS)
        for category, cap in CAPS.caps.items():
            assert sum(1 for _, c, _ in dataset if c == category) <= cap

    def test_first_items_in_corpus_order_fill_the_cap(self):
        corpus = [item(f'r{i}', 'Rug') for i in range(7)]
        dataset = generate_single_product_dataset(corpus, SceneDistribution({'Rug': 5}))
        assert [item_id for item_id, _, _ in dataset] == ['r0', 'r1', 'r2', 'r3', 'r4']

    def test_output_is_byte_stable(self):
        first, second = io.StringIO(), io.StringIO()
        write_dataset(generate_single_product_dataset(FIXTURE, CAPS), first)
        write_dataset(generate_single_product_dataset(FIXTURE, CAPS), second)
        assert first.getvalue() == second.getvalue()
        assert first.getvalue().splitlines()[0] == (
            '{"box":{"category":"Sofa","score":0.9,"x_max":100,"x_min":0,"y_max":100,"y_min":0},'
            '"category":"Sofa","id":"i01"}'
        )

    def test_idempotent_on_own_output(self):
        dims = {i.id: (i.image_width, i.image_height) for i in FIXTURE}
        dataset = generate_single_product_dataset(FIXTURE, CAPS)
        regenerated_corpus = [
            CorpusItem(item_id, *dims[item_id], category, True, True, (selected,))
            for item_id, category, selected in dataset
        ]
        assert generate_single_product_dataset(regenerated_corpus, CAPS) == dataset

    def test_negative_cap_rejected(self):
        with pytest.raises(EvaluationError):
            SceneDistribution({'Sofa': -1})


class TestLoadCorpusItems:

    def test_load(self):
        source = io.StringIO(
            '{"id": "x", "image_width": 10, "image_height": 10, "category": "Rug", "merchant_provided": true,'
            ' "white_background": true, "detected_boxes": [{"x_min": 0, "y_min": 0, "x_max": 10, "y_max": 9,'
            ' "category": "Rug"}]}\n'
        )
        items = load_corpus_items(source)
        assert items[0].detected_boxes[0].area == 90
        assert generate_single_product_dataset(items, SceneDistribution({'Rug': 1}))[0][0] == 'x'

    def test_box_outside_image(self):
        source = io.StringIO(
            '{"id": "x", "image_width": 10, "image_height": 10, "detected_boxes":'
            ' [{"x_min": 0, "y_min": 0, "x_max": 11, "y_max": 9, "category": "Rug"}]}\n'
        )
        with pytest.raises(CorpusFormatError):
            load_corpus_items(source)
