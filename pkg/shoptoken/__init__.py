"""
shoptoken: LSH-token approximate nearest neighbour retrieval over
per-category shards, with attribute restrictions, and an offline evaluation kit.
"""

from shoptoken.CorpusPipeline import CorpusPipeline, parse_product_corpus
from shoptoken.EngineConfig import EngineConfig
from shoptoken.IndexShardSet import IndexShardSet, build_index
from shoptoken.LshHasher import LshHasher, make_hasher, tokens
from shoptoken.records import BoundingBox, MatchPair, ProductRecord, QueryObject
from shoptoken.RestrictionQuery import format_ast, parse_restriction
from shoptoken.RetrievalEngine import RetrievalEngine, SearchConfig, exact_search, search
from shoptoken.SnapshotHandler import load_index, save_index

__version__ = '0.1.0'
