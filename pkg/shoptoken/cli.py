#!/usr/bin/env python3
"""
shoptoken command line.

Usage:
    shoptoken build --corpus products.jsonl --output snapshot/
    shoptoken query --snapshot snapshot/ --query query.json --restrict "gender:Men AND (NOT price < 50)"
    shoptoken eval retrieval --pairs pairs.jsonl --corpus products.jsonl --k 1
    shoptoken eval detection --gt gt.jsonl --pred pred.jsonl --val-gt val_gt.jsonl --val-pred val_pred.jsonl
    shoptoken eval relevance --ratings ratings.jsonl --k 5
    shoptoken label-metrics --events events.jsonl --golden golden.jsonl
    shoptoken gen-single-product --corpus items.jsonl --caps caps.json --output dataset.jsonl
    shoptoken gen-synthetic --output products.jsonl --num-records 10000 --dim 64
    shoptoken serve --snapshot snapshot/

Exit codes: 0 on success, 1 on data errors, 2 on usage errors (bad flags,
configuration or restriction syntax).
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from shoptoken.CorpusPipeline import CorpusPipeline, write_jsonl, write_product_corpus
from shoptoken.DetectionEvaluator import (
    DEFAULT_IOU_THRESHOLD,
    check_taxonomy,
    detection_report,
    plot_precision_recall,
    rollup_categories,
)
from shoptoken.EngineConfig import EngineConfig
from shoptoken.errors import ConfigurationError, EvaluationError, RestrictionSyntaxError, ShopTokenError
from shoptoken.IndexShardSet import build_index
from shoptoken.RelevanceEvaluator import DEFAULT_AGREEMENT_THRESHOLD, compare_relevance, label_report, relevance_at_k
from shoptoken.RetrievalEngine import RetrievalEngine
from shoptoken.RetrievalEvaluator import RetrievalEvaluator
from shoptoken.SingleProductDatasetGenerator import (
    generate_single_product_dataset,
    load_corpus_items,
    load_scene_distribution,
    write_dataset,
)
from shoptoken.SnapshotHandler import load_index, save_index
from shoptoken.synthetic import DEFAULT_CATEGORIES, make_clustered_corpus, make_match_pairs, match_pairs_to_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA_ERROR = 1
EXIT_USAGE_ERROR = 2


def _emit(payload, stream=None):
    stream = stream or sys.stdout
    stream.write(json.dumps(payload, indent=2, sort_keys=True))
    stream.write('\n')


def _load_config(args) -> EngineConfig:
    config = EngineConfig.load(getattr(args, 'config', None))
    for flag, section, name in (
        ('num_bands', config.hasher, 'num_bands'),
        ('bits_per_band', config.hasher, 'bits_per_band'),
        ('seed', config.hasher, 'seed'),
        ('max_candidates', config.search, 'max_candidates'),
        ('metric', config.search, 'metric'),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(section, name, value)
    return config


def cmd_build(args, pipeline: CorpusPipeline) -> int:
    config = _load_config(args)
    records = pipeline.load_products(args.corpus)
    hasher = config.make_hasher(records[0].dim if records else None)
    shard_set = build_index(records, hasher)
    save_index(shard_set, args.output)
    _emit(shard_set.stats())
    return EXIT_OK


def _read_request_bodies(path: str) -> List[dict]:
    if path == '-':
        text = sys.stdin.read()
    else:
        with open(path, 'r', encoding='utf-8') as stream:
            text = stream.read()
    try:
        payload = json.loads(text)
    except json.JSONDecodeError:
        payload = None
    if isinstance(payload, dict):
        return [payload]
    bodies = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            bodies.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise ValueError(f"{path} line {line_number}: malformed JSON ({e.msg})") from e
    return bodies


def cmd_query(args, pipeline: CorpusPipeline) -> int:
    config = _load_config(args)
    engine = RetrievalEngine(load_index(args.snapshot), config.search_config())
    bodies = _read_request_bodies(args.query)
    for body in bodies:
        if isinstance(body, dict):
            if args.restrict is not None:
                body['restrict'] = args.restrict
            if args.k is not None:
                body['k'] = args.k
            if args.gender is not None:
                body['gender'] = args.gender
        response = engine.search_request(body)
        if len(bodies) == 1:
            _emit(response)
        else:
            sys.stdout.write(json.dumps(response, sort_keys=True, separators=(',', ':')) + '\n')
    return EXIT_OK


def cmd_eval_retrieval(args, pipeline: CorpusPipeline) -> int:
    config = _load_config(args)
    records = pipeline.load_products(args.corpus)
    if args.distractors:
        distractors = pipeline.load_products(args.distractors)
        overlap = sorted({r.id for r in records} & {r.id for r in distractors})
        if overlap:
            raise EvaluationError(f"distractors overlap the ground-truth corpus: {', '.join(overlap[:10])}")
        records = records + distractors
    pairs = pipeline.load_match_pairs(args.pairs)
    hasher = config.make_hasher(records[0].dim if records else None)
    evaluator = RetrievalEvaluator(records, hasher, config.search_config())
    _emit(evaluator.report(pairs, args.k))
    return EXIT_OK


def cmd_eval_detection(args, pipeline: CorpusPipeline) -> int:
    gt = pipeline.load_detections(args.gt)
    pred = pipeline.load_detections(args.pred)
    val_gt = pipeline.load_detections(args.val_gt) if args.val_gt else None
    val_pred = pipeline.load_detections(args.val_pred) if args.val_pred else None
    sets = [s for s in (gt, pred, val_gt, val_pred) if s is not None]

    if args.taxonomy:
        taxonomy = pipeline.load_json(args.taxonomy)
        for detections in sets:
            check_taxonomy(detections, taxonomy)
    if args.rollup:
        mapping = pipeline.load_json(args.rollup)
        gt, pred = rollup_categories(gt, mapping), rollup_categories(pred, mapping)
        if val_gt is not None and val_pred is not None:
            val_gt, val_pred = rollup_categories(val_gt, mapping), rollup_categories(val_pred, mapping)

    report = detection_report(gt, pred, args.iou, val_gt, val_pred, args.per_class_threshold)
    if args.plot:
        plot_precision_recall(gt, pred, args.plot, args.iou)
    _emit(report)
    return EXIT_OK


def cmd_eval_relevance(args, pipeline: CorpusPipeline) -> int:
    ratings = pipeline.load_ratings(args.ratings)
    if args.baseline:
        _emit(compare_relevance(pipeline.load_ratings(args.baseline), ratings, args.k))
    else:
        _emit(relevance_at_k(ratings, args.k))
    return EXIT_OK


def cmd_label_metrics(args, pipeline: CorpusPipeline) -> int:
    events = pipeline.load_label_events(args.events)
    golden = pipeline.load_golden(args.golden) if args.golden else None
    _emit(label_report(events, golden, args.threshold))
    return EXIT_OK


def cmd_gen_single_product(args, pipeline: CorpusPipeline) -> int:
    items = load_corpus_items(pipeline.resolve(args.corpus))
    dist = load_scene_distribution(pipeline.load_json(args.caps))
    summary = {}
    dataset = generate_single_product_dataset(items, dist, summary)
    write_dataset(dataset, args.output)
    if args.summary:
        with open(args.summary, 'w', encoding='utf-8') as stream:
            _emit(summary, stream)
    else:
        _emit(summary)
    return EXIT_OK


def cmd_gen_synthetic(args, pipeline: CorpusPipeline) -> int:
    categories = [c for c in args.categories.split(',') if c]
    records = make_clustered_corpus(args.num_records, args.dim, args.clusters, categories,
                                    args.seed, args.noise)
    write_product_corpus(records, args.output)
    logger.info(f"Wrote {len(records)} synthetic records to {args.output}")
    if args.pairs_output:
        pairs = make_match_pairs(records, args.num_pairs, args.seed + 1, args.pair_noise)
        write_jsonl(match_pairs_to_json(pairs), args.pairs_output)
        logger.info(f"Wrote {len(pairs)} match pairs to {args.pairs_output}")
    return EXIT_OK


def cmd_serve(args, pipeline: CorpusPipeline) -> int:
    from shoptoken.service import serve_search

    serve_search(args.snapshot, _load_config(args), args.host, args.port)
    return EXIT_OK


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer: '{text}'") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _add_hasher_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--config', help='EngineConfig JSON file')
    parser.add_argument('--num-bands', type=positive_int, help='Override hasher.num_bands')
    parser.add_argument('--bits-per-band', type=positive_int, help='Override hasher.bits_per_band')
    parser.add_argument('--seed', type=int, help='Override hasher.seed')


def _add_search_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--max-candidates', type=positive_int, help='Override search.max_candidates')
    parser.add_argument('--metric', choices=['hamming', 'cosine'], help='Override search.metric')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='shoptoken', description='LSH-token product retrieval and evaluation kit')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', action='store_true', help='Log at DEBUG level')
    verbosity.add_argument('--quiet', action='store_true', help='Log warnings and errors only')
    commands = parser.add_subparsers(dest='command', required=True)

    build = commands.add_parser('build', help='Index a product corpus into a snapshot directory')
    build.add_argument('--corpus', required=True, help='Product corpus JSONL')
    build.add_argument('--output', required=True, help='Snapshot directory')
    _add_hasher_flags(build)
    build.set_defaults(handler=cmd_build)

    query = commands.add_parser('query', help='Search a snapshot')
    query.add_argument('--snapshot', required=True, help='Snapshot directory')
    query.add_argument('--query', required=True, help='Request JSON object or JSONL of requests ("-" for stdin)')
    query.add_argument('--restrict', help='Restriction query, e.g. "gender:Men AND (NOT price < 50)"')
    query.add_argument('--k', type=positive_int, help='Number of results')
    query.add_argument('--gender', help='Predicted gender (expanded with unisex)')
    query.add_argument('--config', help='EngineConfig JSON file')
    _add_search_flags(query)
    query.set_defaults(handler=cmd_query)

    evaluate = commands.add_parser('eval', help='Offline evaluation')
    evaluations = evaluate.add_subparsers(dest='evaluation', required=True)

    retrieval = evaluations.add_parser('retrieval', help='Retrieval P@K with distractors')
    retrieval.add_argument('--pairs', required=True, help='Match pairs JSONL')
    retrieval.add_argument('--corpus', required=True, help='Ground-truth product corpus JSONL')
    retrieval.add_argument('--distractors', help='Distractor product corpus JSONL')
    retrieval.add_argument('--k', type=positive_int, default=1, help='Cut-off rank (default: 1)')
    _add_hasher_flags(retrieval)
    _add_search_flags(retrieval)
    retrieval.set_defaults(handler=cmd_eval_retrieval)

    detection = evaluations.add_parser('detection', help='Detection mAP and P/R/F1')
    detection.add_argument('--gt', required=True, help='Ground-truth boxes JSONL')
    detection.add_argument('--pred', required=True, help='Predicted boxes JSONL')
    detection.add_argument('--val-gt', help='Validation ground truth for threshold selection')
    detection.add_argument('--val-pred', help='Validation predictions for threshold selection')
    detection.add_argument('--iou', type=float, default=DEFAULT_IOU_THRESHOLD,
                           help=f'IoU threshold (default: {DEFAULT_IOU_THRESHOLD})')
    detection.add_argument('--rollup', help='JSON map of fine -> coarse categories')
    detection.add_argument('--taxonomy', help='JSON list of allowed categories')
    detection.add_argument('--per-class-threshold', action='store_true',
                           help='Select one operating threshold per class')
    detection.add_argument('--plot', help='Write a precision-recall figure to this path')
    detection.set_defaults(handler=cmd_eval_detection)

    relevance = evaluations.add_parser('relevance', help='End-to-end Relevance@K')
    relevance.add_argument('--ratings', required=True, help='Ratings JSONL')
    relevance.add_argument('--k', type=positive_int, default=5, help='Cut-off rank (default: 5)')
    relevance.add_argument('--baseline', help='Baseline ratings JSONL to compare against')
    relevance.set_defaults(handler=cmd_eval_relevance)

    labels = commands.add_parser('label-metrics', help='Labeling consistency, accuracy and calibration')
    labels.add_argument('--events', required=True, help='Label events JSONL')
    labels.add_argument('--golden', help='Golden answers JSONL')
    labels.add_argument('--threshold', type=float, default=DEFAULT_AGREEMENT_THRESHOLD,
                        help=f'Calibration agreement threshold (default: {DEFAULT_AGREEMENT_THRESHOLD})')
    labels.set_defaults(handler=cmd_label_metrics)

    single = commands.add_parser('gen-single-product', help='Generate a single-product dataset')
    single.add_argument('--corpus', required=True, help='Corpus items JSONL')
    single.add_argument('--caps', required=True, help='JSON map of category -> cap')
    single.add_argument('--output', required=True, help='Output dataset JSONL')
    single.add_argument('--summary', help='Write the summary JSON here instead of standard output')
    single.set_defaults(handler=cmd_gen_single_product)

    synthetic = commands.add_parser('gen-synthetic', help='Write a seeded clustered product corpus')
    synthetic.add_argument('--output', required=True, help='Output corpus JSONL')
    synthetic.add_argument('--num-records', type=int, default=10000, help='Number of records (default: 10000)')
    synthetic.add_argument('--dim', type=positive_int, default=64, help='Embedding dimension (default: 64)')
    synthetic.add_argument('--clusters', type=positive_int, default=100, help='Number of clusters (default: 100)')
    synthetic.add_argument('--categories', default=','.join(DEFAULT_CATEGORIES),
                           help='Comma-separated category names')
    synthetic.add_argument('--seed', type=int, default=0, help='Generator seed (default: 0)')
    synthetic.add_argument('--noise', type=float, default=0.1, help='Cluster spread (default: 0.1)')
    synthetic.add_argument('--pairs-output', help='Also write match pairs JSONL here')
    synthetic.add_argument('--num-pairs', type=int, default=200, help='Number of match pairs (default: 200)')
    synthetic.add_argument('--pair-noise', type=float, default=0.05, help='Query perturbation (default: 0.05)')
    synthetic.set_defaults(handler=cmd_gen_synthetic)

    serve = commands.add_parser('serve', help='Serve POST /v1/search over a snapshot')
    serve.add_argument('--snapshot', required=True, help='Snapshot directory')
    serve.add_argument('--config', help='EngineConfig JSON file')
    serve.add_argument('--host', help='Bind address (default: from config)')
    serve.add_argument('--port', type=int, help='Port (default: from config)')
    _add_search_flags(serve)
    serve.set_defaults(handler=cmd_serve)

    return parser


def configure_logging(verbose: bool = False, quiet: bool = False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s - %(levelname)s - %(message)s',
                        stream=sys.stderr, force=True)


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one subcommand and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE_ERROR
    configure_logging(args.verbose, args.quiet)

    try:
        return args.handler(args, CorpusPipeline())
    except (RestrictionSyntaxError, ConfigurationError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE_ERROR
    except (ShopTokenError, OSError, ValueError) as e:
        logger.debug("Command failed", exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_DATA_ERROR


if __name__ == '__main__':
    sys.exit(main())
