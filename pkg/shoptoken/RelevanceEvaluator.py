"""
Human-judgement metrics: end-to-end Relevance@K over rating sheets and
labeling-quality measures (consistency, accuracy against golden answers,
calibration rate).
"""

import logging
from typing import Dict, Iterable, List, Mapping

import pandas as pd

from shoptoken.errors import EvaluationError
from shoptoken.records import (
    BAD_RATINGS,
    RATING_EXTREMELY_SIMILAR,
    RATING_SIMILAR,
    LabelEvent,
    RelevanceRating,
)

logger = logging.getLogger(__name__)

DEFAULT_AGREEMENT_THRESHOLD = 0.8
# tolerance so that e.g. 4/5 counts at a threshold written as 0.8
_AGREEMENT_EPSILON = 1e-12


def _ratings_frame(ratings: Iterable[RelevanceRating], k: int) -> pd.DataFrame:
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise EvaluationError(f"k must be an integer >= 1, got {k!r}")
    frame = pd.DataFrame(
        [(r.query_id, r.result_rank, r.rating) for r in ratings],
        columns=['query_id', 'rank', 'rating'],
    )
    duplicated = frame.duplicated(['query_id', 'rank'], keep=False)
    if duplicated.any():
        first = frame[duplicated].iloc[0]
        raise EvaluationError(f"duplicate rating for query '{first.query_id}' rank {first['rank']}")
    return frame[frame['rank'] <= k]


def relevance_at_k(ratings: List[RelevanceRating], k: int = 5) -> Dict[str, float]:
    """
    Aggregate Relevance@K over every rated (query, rank <= k) slot.

    Slots without a rating are excluded from the denominators and reported
    through ``coverage``. ``similar_p_at_k`` counts Similar and ExtremelySimilar;
    ``similar_exclusive_p_at_k`` counts Similar only.

    Args:
        ratings (List[RelevanceRating]): One rating per (query, rank)
        k (int): Cut-off rank

    Returns:
        Dict[str, float]: similar_p_at_k, extremely_similar_p_at_k, bad_rate,
        similar_exclusive_p_at_k, coverage, rated_slots, expected_slots
    """
    frame = _ratings_frame(ratings, k)
    expected_slots = frame['query_id'].nunique() * k
    rated = len(frame)
    if rated == 0:
        logger.warning("No rated slots within the cut-off")
    counts = frame['rating'].value_counts().to_dict()

    def rate(*labels) -> float:
        return sum(counts.get(label, 0) for label in labels) / rated if rated else 0.0

    return {
        'similar_p_at_k': rate(RATING_EXTREMELY_SIMILAR, RATING_SIMILAR),
        'extremely_similar_p_at_k': rate(RATING_EXTREMELY_SIMILAR),
        'bad_rate': rate(*BAD_RATINGS),
        'similar_exclusive_p_at_k': rate(RATING_SIMILAR),
        'coverage': rated / expected_slots if expected_slots else 0.0,
        'rated_slots': rated,
        'expected_slots': expected_slots,
    }


def relative_change(baseline: float, treatment: float) -> float:
    """(treatment - baseline) / baseline."""
    if baseline == 0:
        raise EvaluationError("relative change is undefined for a zero baseline")
    return (treatment - baseline) / baseline


def compare_relevance(baseline: List[RelevanceRating], treatment: List[RelevanceRating],
                      k: int = 5) -> Dict[str, Dict[str, float]]:
    """Relevance@K of two rating sheets and the relative change of each measure."""
    before = relevance_at_k(baseline, k)
    after = relevance_at_k(treatment, k)
    changes = {}
    for name in ('similar_p_at_k', 'extremely_similar_p_at_k', 'bad_rate', 'similar_exclusive_p_at_k'):
        changes[name] = relative_change(before[name], after[name]) if before[name] else None
    return {'baseline': before, 'treatment': after, 'relative_change': changes}


def _events_frame(events: Iterable[LabelEvent]) -> pd.DataFrame:
    frame = pd.DataFrame(
        [(e.question_id, e.labeler_id, e.answer) for e in events],
        columns=['question_id', 'labeler_id', 'answer'],
    )
    duplicated = frame.duplicated(['question_id', 'labeler_id'], keep=False)
    if duplicated.any():
        first = frame[duplicated].iloc[0]
        raise EvaluationError(
            f"labeler '{first.labeler_id}' answered question '{first.question_id}' more than once")
    return frame


def agreement_by_question(events: List[LabelEvent]) -> pd.DataFrame:
    """
    Per-question modal answer and agreement rate.

    Returns:
        pd.DataFrame: Indexed by question_id with columns modal_answer,
        modal_count, num_answers, agreement; modal ties resolve to the
        lexicographically smallest answer
    """
    frame = _events_frame(events)
    if frame.empty:
        return pd.DataFrame(columns=['modal_answer', 'modal_count', 'num_answers', 'agreement'])
    counts = (frame.groupby(['question_id', 'answer']).size()
              .rename('count').reset_index()
              .sort_values(['question_id', 'count', 'answer'], ascending=[True, False, True],
                           kind='mergesort'))
    modal = counts.drop_duplicates('question_id').set_index('question_id')
    table = pd.DataFrame({
        'modal_answer': modal['answer'],
        'modal_count': modal['count'],
        'num_answers': frame.groupby('question_id').size(),
    })
    table['agreement'] = table['modal_count'] / table['num_answers']
    return table


def label_consistency(events: List[LabelEvent]) -> float:
    """Unweighted mean over questions of modal-answer agreement."""
    table = agreement_by_question(events)
    if table.empty:
        return 0.0
    return float(table['agreement'].mean())


def calibration_rate(events: List[LabelEvent],
                     agreement_threshold: float = DEFAULT_AGREEMENT_THRESHOLD) -> float:
    """Fraction of questions whose modal-answer agreement is at least the threshold."""
    table = agreement_by_question(events)
    if table.empty:
        return 0.0
    return float((table['agreement'] >= agreement_threshold - _AGREEMENT_EPSILON).mean())


def _golden_matches(events: List[LabelEvent], golden: Mapping[str, str]) -> pd.DataFrame:
    frame = _events_frame(events)
    missing = sorted(set(frame['question_id']) - set(golden))
    if missing:
        raise EvaluationError(f"no golden answer for questions: {', '.join(missing)}")
    frame['correct'] = frame['answer'] == frame['question_id'].map(golden)
    return frame


def label_accuracy(events: List[LabelEvent], golden: Mapping[str, str]) -> float:
    """
    Fraction of individual label events equal to the golden answer of their question.

    Raises:
        EvaluationError: If a question has no golden answer
    """
    frame = _golden_matches(events, golden)
    if frame.empty:
        return 0.0
    return float(frame['correct'].mean())


def labeler_accuracy(events: List[LabelEvent], golden: Mapping[str, str]) -> Dict[str, float]:
    """Accuracy against golden answers per labeler."""
    frame = _golden_matches(events, golden)
    if frame.empty:
        return {}
    per_labeler = frame.groupby('labeler_id')['correct'].mean().sort_index()
    return {str(labeler): float(rate) for labeler, rate in per_labeler.items()}


def label_report(events: List[LabelEvent], golden: Mapping[str, str] = None,
                 agreement_threshold: float = DEFAULT_AGREEMENT_THRESHOLD) -> Dict:
    report = {
        'num_events': len(events),
        'num_questions': int(agreement_by_question(events).shape[0]),
        'consistency': label_consistency(events),
        'calibration_rate': calibration_rate(events, agreement_threshold),
        'agreement_threshold': agreement_threshold,
    }
    if golden is not None:
        report['accuracy'] = label_accuracy(events, golden)
        report['labeler_accuracy'] = labeler_accuracy(events, golden)
    return report
