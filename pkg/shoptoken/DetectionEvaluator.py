"""
Offline detection metrics: IoU, precision/recall/F1 at an operating point,
F1-maximising threshold selection, all-points-interpolated mAP and
fine-to-coarse category roll-up.

Predictions are matched greedily in descending score order (stable with
respect to input order): each takes the unmatched ground-truth box of the
same image and category with the highest IoU at or above the threshold,
otherwise it is a false positive. Because matching is greedy by score, the
matches among predictions scoring >= t are exactly the prefix of the global
matching, so every threshold is evaluated from one cumulative pass.
"""

import logging
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

from shoptoken.errors import EvaluationError
from shoptoken.records import BoundingBox, DetectionSet

logger = logging.getLogger(__name__)

DEFAULT_IOU_THRESHOLD = 0.5


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area."""
    width = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    height = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if width <= 0 or height <= 0:
        return 0.0
    intersection = width * height
    return intersection / (a.area + b.area - intersection)


def count_ground_truth(gt: DetectionSet) -> Dict[str, int]:
    counts: Dict[str, int] = {}
    for boxes in gt.values():
        for box in boxes:
            counts[box.category] = counts.get(box.category, 0) + 1
    return counts


def match_predictions(gt: DetectionSet, pred: DetectionSet,
                      iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> pd.DataFrame:
    """
    Greedy score-descending matching of predictions to ground truth.

    Returns:
        pd.DataFrame: One row per prediction in match order, columns
        image_id, category, score, iou, tp
    """
    rows = []
    for image_id in pred:
        for position, box in enumerate(pred[image_id]):
            if box.score is None:
                raise EvaluationError(f"prediction in image '{image_id}' has no score")
            rows.append((image_id, box.category, box.score, position))
    frame = pd.DataFrame(rows, columns=['image_id', 'category', 'score', 'position'])
    frame = frame.sort_values('score', ascending=False, kind='mergesort').reset_index(drop=True)

    matched = {image_id: np.zeros(len(boxes), dtype=bool) for image_id, boxes in gt.items()}
    tp = np.zeros(len(frame), dtype=bool)
    best_ious = np.zeros(len(frame), dtype=np.float64)
    for row_index, row in enumerate(frame.itertuples(index=False)):
        box = pred[row.image_id][row.position]
        truths = gt.get(row.image_id, [])
        best_index, best_iou = -1, iou_threshold
        for gt_index, truth in enumerate(truths):
            if truth.category != box.category or matched[row.image_id][gt_index]:
                continue
            overlap = iou(box, truth)
            if overlap >= best_iou and (best_index < 0 or overlap > best_ious[row_index]):
                best_index, best_ious[row_index] = gt_index, overlap
        if best_index >= 0:
            matched[row.image_id][best_index] = True
            tp[row_index] = True
    frame['iou'] = best_ious
    frame['tp'] = tp
    return frame.drop(columns=['position'])


def _f1(tp: int, fp: int, fn: int) -> float:
    denominator = 2 * tp + fp + fn
    return 2 * tp / denominator if tp and denominator else 0.0


def _prf(tp: int, fp: int, fn: int) -> Tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall, _f1(tp, fp, fn)


def detection_pr(gt: DetectionSet, pred: DetectionSet, score_threshold: float,
                 iou_threshold: float = DEFAULT_IOU_THRESHOLD,
                 class_thresholds: Optional[Mapping[str, float]] = None) -> Tuple[float, float, float]:
    """
    Precision, recall and F1 of predictions scoring at or above the threshold.

    Args:
        gt (DetectionSet): Ground-truth boxes
        pred (DetectionSet): Scored predictions
        score_threshold (float): Operating point
        iou_threshold (float): Minimum IoU for a match
        class_thresholds (Mapping[str, float]): Optional per-class operating points
            overriding score_threshold

    Returns:
        Tuple[float, float, float]: (precision, recall, f1); precision is 0 when
        no prediction passes the threshold
    """
    for name, value in (('score_threshold', score_threshold), ('iou_threshold', iou_threshold)):
        if not 0.0 <= value <= 1.0:
            raise EvaluationError(f"{name} must lie in [0, 1], got {value}")
    frame = match_predictions(gt, pred, iou_threshold)
    class_thresholds = class_thresholds or {}
    thresholds = frame['category'].map(lambda c: class_thresholds.get(c, score_threshold))
    kept = frame[frame['score'] >= thresholds]
    tp = int(kept['tp'].sum())
    fp = len(kept) - tp
    fn = sum(count_ground_truth(gt).values()) - tp
    return _prf(tp, fp, fn)


def _threshold_scan(frame: pd.DataFrame, num_gt: int) -> pd.DataFrame:
    """F1 at every distinct score, ascending by threshold."""
    if frame.empty:
        raise EvaluationError("cannot select a threshold without predictions")
    # frame is sorted by descending score, so cumulative counts at the last
    # row of each score give the counts for "score >= threshold"
    cum_tp = frame['tp'].cumsum().to_numpy()
    cum_all = np.arange(1, len(frame) + 1)
    last_of_score = ~frame['score'].duplicated(keep='last').to_numpy()
    scan = pd.DataFrame({
        'threshold': frame['score'].to_numpy()[last_of_score],
        'tp': cum_tp[last_of_score],
        'fp': (cum_all - cum_tp)[last_of_score],
    })
    scan['fn'] = num_gt - scan['tp']
    scan['f1'] = [_f1(int(t), int(p), int(n)) for t, p, n in zip(scan['tp'], scan['fp'], scan['fn'])]
    return scan.sort_values('threshold', kind='mergesort').reset_index(drop=True)


def select_operating_threshold(gt_val: DetectionSet, pred_val: DetectionSet,
                               iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> float:
    """
    Score threshold maximising F1 on a validation set.

    Candidates are the distinct prediction scores; ties go to the lowest threshold.

    Raises:
        EvaluationError: If there are no predictions
    """
    frame = match_predictions(gt_val, pred_val, iou_threshold)
    scan = _threshold_scan(frame, sum(count_ground_truth(gt_val).values()))
    best = scan['f1'].to_numpy().argmax()
    threshold = float(scan['threshold'].iloc[best])
    logger.info(f"Selected operating threshold {threshold:.4f} (F1={scan['f1'].iloc[best]:.4f})")
    return threshold


def _filter_category(detections: DetectionSet, category: str) -> DetectionSet:
    return {image_id: [b for b in boxes if b.category == category] for image_id, boxes in detections.items()}


def select_class_thresholds(gt_val: DetectionSet, pred_val: DetectionSet,
                            iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> Dict[str, float]:
    """Per-class F1-maximising thresholds for every class with validation predictions."""
    categories = sorted({b.category for boxes in pred_val.values() for b in boxes})
    return {
        category: select_operating_threshold(_filter_category(gt_val, category),
                                             _filter_category(pred_val, category), iou_threshold)
        for category in categories
    }


def _all_points_ap(tp: np.ndarray, num_gt: int) -> float:
    if num_gt == 0 or tp.size == 0:
        return 0.0
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(~tp)
    recall = cum_tp / num_gt
    precision = cum_tp / (cum_tp + cum_fp)
    recall = np.concatenate(([0.0], recall, [1.0]))
    precision = np.concatenate(([0.0], precision, [0.0]))
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.flatnonzero(recall[1:] != recall[:-1])
    return float(np.sum((recall[steps + 1] - recall[steps]) * precision[steps + 1]))


def average_precision_per_class(gt: DetectionSet, pred: DetectionSet,
                                iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> Dict[str, float]:
    """All-points-interpolated AP for every class with at least one ground-truth box."""
    frame = match_predictions(gt, pred, iou_threshold)
    result = {}
    for category, num_gt in sorted(count_ground_truth(gt).items()):
        tp = frame.loc[frame['category'] == category, 'tp'].to_numpy(dtype=bool)
        result[category] = _all_points_ap(tp, num_gt)
    return result


def detection_map(gt: DetectionSet, pred: DetectionSet,
                  iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> float:
    """Unweighted mean of per-class AP over classes with ground truth; 0 when there are none."""
    per_class = average_precision_per_class(gt, pred, iou_threshold)
    if not per_class:
        return 0.0
    return float(np.mean(list(per_class.values())))


def rollup_categories(detections: DetectionSet, mapping: Mapping[str, str]) -> DetectionSet:
    """
    Replace every box's fine category with its coarse category.

    Raises:
        EvaluationError: Listing every category missing from the mapping
    """
    present = {b.category for boxes in detections.values() for b in boxes}
    missing = sorted(present - set(mapping))
    if missing:
        raise EvaluationError(f"no roll-up mapping for categories: {', '.join(missing)}")
    return {
        image_id: [box.with_category(mapping[box.category]) for box in boxes]
        for image_id, boxes in detections.items()
    }


def check_taxonomy(detections: DetectionSet, taxonomy: Iterable[str]):
    allowed = set(taxonomy)
    unknown = sorted({b.category for boxes in detections.values() for b in boxes} - allowed)
    if unknown:
        raise EvaluationError(f"categories outside the declared taxonomy: {', '.join(unknown)}")


def detection_report(gt: DetectionSet, pred: DetectionSet,
                     iou_threshold: float = DEFAULT_IOU_THRESHOLD,
                     gt_val: Optional[DetectionSet] = None, pred_val: Optional[DetectionSet] = None,
                     per_class_threshold: bool = False) -> Dict:
    """
    mAP, per-class AP and P/R/F1 at the operating point chosen on the validation set.

    Without a validation set the threshold is chosen on the evaluated set itself.
    """
    if gt_val is None or pred_val is None:
        logger.warning("No validation set supplied; selecting the operating threshold on the test set")
        gt_val, pred_val = gt, pred

    per_class_ap = average_precision_per_class(gt, pred, iou_threshold)
    report = {
        'iou_threshold': iou_threshold,
        'mAP': float(np.mean(list(per_class_ap.values()))) if per_class_ap else 0.0,
        'per_class_ap': per_class_ap,
        'num_ground_truth': sum(count_ground_truth(gt).values()),
        'num_predictions': sum(len(b) for b in pred.values()),
    }

    has_val_predictions = any(pred_val.values())
    threshold = select_operating_threshold(gt_val, pred_val, iou_threshold) if has_val_predictions else 1.0
    class_thresholds = None
    if per_class_threshold and has_val_predictions:
        class_thresholds = select_class_thresholds(gt_val, pred_val, iou_threshold)
        report['class_thresholds'] = class_thresholds

    precision, recall, f1 = detection_pr(gt, pred, threshold, iou_threshold, class_thresholds)
    report.update({'threshold': threshold, 'precision': precision, 'recall': recall, 'f1': f1})
    return report


def plot_precision_recall(gt: DetectionSet, pred: DetectionSet, path: str,
                          iou_threshold: float = DEFAULT_IOU_THRESHOLD):
    """Save a per-class precision/recall curve figure."""
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    frame = match_predictions(gt, pred, iou_threshold)
    counts = count_ground_truth(gt)

    plt.figure(figsize=(10, 6))
    for category, num_gt in sorted(counts.items()):
        tp = frame.loc[frame['category'] == category, 'tp'].to_numpy(dtype=bool)
        if tp.size == 0:
            continue
        cum_tp = np.cumsum(tp)
        recall = cum_tp / num_gt
        precision = cum_tp / np.arange(1, tp.size + 1)
        ap = _all_points_ap(tp, num_gt)
        plt.plot(recall, precision, label=f'{category} (AP={ap:.3f})')
    plt.xlabel('Recall')
    plt.ylabel('Precision')
    plt.xlim(0, 1.02)
    plt.ylim(0, 1.02)
    plt.title(f'Precision-Recall (IoU >= {iou_threshold})')
    plt.legend()
    plt.grid(True)
    plt.tight_layout()
    plt.savefig(path)
    plt.close()
    logger.info(f"Saved precision-recall figure to {path}")
