"""
Weakly supervised single-product dataset generation.

A corpus image is admitted when it carries a merchant-provided category, has
a white background and its largest detected box covers at least 80% of the
image. Admitted images are then capped per category against a scene
distribution, in corpus order.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from shoptoken.CorpusPipeline import PathOrStream, iter_jsonl, write_jsonl
from shoptoken.errors import CorpusFormatError, EvaluationError
from shoptoken.records import BoundingBox

logger = logging.getLogger(__name__)

DOMINANT_AREA_FRACTION = 0.8

SUMMARY_KEYS = (
    'admitted',
    'rejected_no_merchant_cat',
    'rejected_not_white',
    'rejected_small_box',
    'rejected_not_in_distribution',
    'rejected_cap',
)


@dataclass(frozen=True)
class CorpusItem:
    id: str
    image_width: int
    image_height: int
    category: Optional[str] = None
    merchant_provided: bool = False
    white_background: bool = False
    detected_boxes: Tuple[BoundingBox, ...] = ()

    def __post_init__(self):
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError(f"item '{self.id}' has non-positive dimensions")
        for box in self.detected_boxes:
            if box.x_max > self.image_width or box.y_max > self.image_height:
                raise ValueError(f"item '{self.id}' has a box outside the image bounds")

    @classmethod
    def from_json(cls, payload: dict) -> 'CorpusItem':
        return cls(
            id=str(payload['id']),
            image_width=int(payload['image_width']),
            image_height=int(payload['image_height']),
            category=payload.get('category'),
            merchant_provided=bool(payload.get('merchant_provided', False)),
            white_background=bool(payload.get('white_background', False)),
            detected_boxes=tuple(BoundingBox.from_json(b) for b in payload.get('detected_boxes', [])),
        )


@dataclass(frozen=True)
class SceneDistribution:
    """Per-category cap on the number of generated examples."""

    caps: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for category, cap in self.caps.items():
            if isinstance(cap, bool) or not isinstance(cap, int) or cap < 0:
                raise EvaluationError(f"cap for '{category}' must be a non-negative integer, got {cap!r}")

    def contains(self, category: str) -> bool:
        return category in self.caps


def is_dominant_box(box: BoundingBox, image_width: float, image_height: float) -> bool:
    return box.area >= DOMINANT_AREA_FRACTION * (image_width * image_height)


def largest_box(boxes: Iterable[BoundingBox]) -> Optional[BoundingBox]:
    """Box with the largest area; the first one wins ties."""
    best = None
    for box in boxes:
        if best is None or box.area > best.area:
            best = box
    return best


def generate_single_product_dataset(corpus: Iterable[CorpusItem], dist: SceneDistribution,
                                    summary: Optional[Dict[str, int]] = None
                                    ) -> List[Tuple[str, str, BoundingBox]]:
    """
    Run both admission passes over the corpus.

    Args:
        corpus (Iterable[CorpusItem]): Items in corpus order
        dist (SceneDistribution): Per-category caps
        summary (Dict[str, int]): Optional dict filled with admission and rejection counts

    Returns:
        List[Tuple[str, str, BoundingBox]]: (id, category, box), a subsequence of the corpus
    """
    counts = {key: 0 for key in SUMMARY_KEYS}

    candidates = []
    for item in corpus:
        if not item.merchant_provided or not item.category:
            counts['rejected_no_merchant_cat'] += 1
            continue
        if not item.white_background:
            counts['rejected_not_white'] += 1
            continue
        box = largest_box(item.detected_boxes)
        if box is None or not is_dominant_box(box, item.image_width, item.image_height):
            counts['rejected_small_box'] += 1
            continue
        candidates.append((item.id, item.category, box))

    per_category: Dict[str, int] = {}
    dataset = []
    for item_id, category, box in candidates:
        if not dist.contains(category):
            counts['rejected_not_in_distribution'] += 1
            continue
        if per_category.get(category, 0) >= dist.caps[category]:
            counts['rejected_cap'] += 1
            continue
        per_category[category] = per_category.get(category, 0) + 1
        dataset.append((item_id, category, box))

    counts['admitted'] = len(dataset)
    logger.info(f"Admitted {len(dataset)} of {len(candidates)} candidate images")
    if summary is not None:
        summary.update(counts)
    return dataset


def load_corpus_items(source: PathOrStream) -> List[CorpusItem]:
    items = []
    for line_number, payload in iter_jsonl(source):
        try:
            items.append(CorpusItem.from_json(payload))
        except (KeyError, TypeError, ValueError) as e:
            raise CorpusFormatError(f"invalid corpus item ({e})", line_number=line_number) from e
    return items


def load_scene_distribution(payload) -> SceneDistribution:
    if not isinstance(payload, dict):
        raise EvaluationError("scene distribution must be a JSON object of category -> cap")
    return SceneDistribution(dict(payload))


def write_dataset(dataset: List[Tuple[str, str, BoundingBox]], target: PathOrStream) -> int:
    rows = ({'id': item_id, 'category': category, 'box': box.to_json()}
            for item_id, category, box in dataset)
    return write_jsonl(rows, target)
