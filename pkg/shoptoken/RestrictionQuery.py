"""
Tree-structured attribute restriction language.

Grammar::

    expr    := term {OR term}
    term    := factor {AND factor}
    factor  := NOT factor | "(" expr ")" | pair | compare
    pair    := name ":" value
    compare := name op number          op in <, <=, >, >=, =, !=

AND binds tighter than OR and NOT binds tightest. Keywords are
case-insensitive; names and values are case-sensitive. Values may be
double-quoted to include spaces or parentheses; inside quotes a backslash
takes the next character literally.
Numbers are decimal with an optional sign and fraction. Empty input
means MatchAll.
"""

import logging
import operator
import re
from dataclasses import dataclass
from typing import Callable, Dict, Tuple, Union

import numpy as np
import pyparsing as pp

from shoptoken.errors import RestrictionSyntaxError
from shoptoken.IndexShardSet import IndexShard, attribute_key, posting_lookup
from shoptoken.records import AttributeMap

pp.ParserElement.enable_packrat()

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MatchAll:
    pass


@dataclass(frozen=True)
class Pair:
    name: str
    value: str


@dataclass(frozen=True)
class Compare:
    name: str
    op: str
    number: float


@dataclass(frozen=True)
class Not:
    child: 'RestrictionAst'


@dataclass(frozen=True)
class And:
    children: Tuple['RestrictionAst', ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("And needs at least two children")


@dataclass(frozen=True)
class Or:
    children: Tuple['RestrictionAst', ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("Or needs at least two children")


RestrictionAst = Union[MatchAll, Pair, Compare, Not, And, Or]

COMPARATORS: Dict[str, Callable] = {
    '<': operator.lt,
    '<=': operator.le,
    '>': operator.gt,
    '>=': operator.ge,
    '=': operator.eq,
    '!=': operator.ne,
}

KEYWORDS = ('AND', 'OR', 'NOT')
_NAME_PATTERN = r'[A-Za-z_][A-Za-z0-9_.\-]*'
_NAME_CHARS = pp.alphanums + '_.-'
_UNQUOTED_VALUE_EXCLUDED = '()"' + ' \t\r\n'


def _build_grammar() -> pp.ParserElement:
    # keywords end where attribute names end, so OR-size is a name
    AND = pp.CaselessKeyword('AND', ident_chars=_NAME_CHARS)
    OR = pp.CaselessKeyword('OR', ident_chars=_NAME_CHARS)
    NOT = pp.CaselessKeyword('NOT', ident_chars=_NAME_CHARS)
    keyword = AND | OR | NOT

    name = (~keyword + pp.Regex(_NAME_PATTERN)).set_name('attribute name')
    value = (pp.QuotedString('"', esc_char='\\', convert_whitespace_escapes=False)
             | pp.CharsNotIn(_UNQUOTED_VALUE_EXCLUDED)).set_name('value')
    number = pp.Regex(r'[+-]?\d+(\.\d+)?').set_name('number')
    op = pp.one_of('<= >= != < > =').set_name('comparison operator')

    pair = (name + pp.Suppress(':') + value).set_name('name:value pair')
    pair.set_parse_action(lambda t: Pair(t[0], t[1]))
    compare = (name + op + number).set_name('comparison')
    compare.set_parse_action(lambda t: Compare(t[0], t[1], float(t[2])))

    expr = pp.Forward().set_name('expression')
    factor = pp.Forward().set_name('factor')
    negation = pp.Suppress(NOT) + factor
    negation.set_parse_action(lambda t: Not(t[0]))
    group = pp.Suppress('(') + expr + pp.Suppress(')')
    factor <<= negation | group | pair | compare

    term = factor + pp.ZeroOrMore(pp.Suppress(AND) + factor)
    term.set_parse_action(lambda t: t[0] if len(t) == 1 else And(tuple(t)))
    expr <<= term + pp.ZeroOrMore(pp.Suppress(OR) + term)
    expr.set_parse_action(lambda t: t[0] if len(t) == 1 else Or(tuple(t)))
    return expr


_GRAMMAR = _build_grammar()


def parse_restriction(text: str) -> RestrictionAst:
    """
    Parse restriction text into an AST.

    Args:
        text (str): Query such as ``gender:Men AND (NOT price < 50)``

    Returns:
        RestrictionAst: Parse tree; MatchAll for empty or whitespace-only text

    Raises:
        RestrictionSyntaxError: With the byte offset and an expected-token hint
    """
    if not text or not text.strip():
        return MatchAll()
    try:
        result = _GRAMMAR.parse_string(text, parse_all=True)
    except pp.ParseBaseException as e:
        offset = len(text[:e.loc].encode('utf-8'))
        expected = str(e.msg)
        if expected.startswith('Expected '):
            expected = expected[len('Expected '):]
        found = text[e.loc:e.loc + 10] or 'end of input'
        raise RestrictionSyntaxError(f"unexpected {found!r}", offset, expected) from None
    return result[0]


def _format_number(number: float) -> str:
    return np.format_float_positional(number, trim='-')


def _format_value(value: str) -> str:
    if value and not any(c in _UNQUOTED_VALUE_EXCLUDED for c in value):
        return value
    escaped = value.replace('\\', '\\\\').replace('"', '\\"')
    return f'"{escaped}"'


def format_ast(ast: RestrictionAst) -> str:
    """Canonical fully-parenthesized text; MatchAll formats as the empty string."""
    if isinstance(ast, MatchAll):
        return ''
    if isinstance(ast, Pair):
        return f"{ast.name}:{_format_value(ast.value)}"
    if isinstance(ast, Compare):
        return f"({ast.name} {ast.op} {_format_number(ast.number)})"
    if isinstance(ast, Not):
        return f"(NOT {format_ast(ast.child)})"
    if isinstance(ast, And):
        return '(' + ' AND '.join(format_ast(c) for c in ast.children) + ')'
    if isinstance(ast, Or):
        return '(' + ' OR '.join(format_ast(c) for c in ast.children) + ')'
    raise TypeError(f"not a restriction node: {ast!r}")


def evaluate_restriction(ast: RestrictionAst, attributes: AttributeMap) -> bool:
    """Evaluate against one attribute map; a missing attribute makes Pair and Compare false."""
    if isinstance(ast, MatchAll):
        return True
    if isinstance(ast, Pair):
        value = attributes.get(ast.name)
        return isinstance(value, str) and value == ast.value
    if isinstance(ast, Compare):
        value = attributes.get(ast.name)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return False
        return COMPARATORS[ast.op](float(value), ast.number)
    if isinstance(ast, Not):
        return not evaluate_restriction(ast.child, attributes)
    if isinstance(ast, And):
        return all(evaluate_restriction(c, attributes) for c in ast.children)
    if isinstance(ast, Or):
        return any(evaluate_restriction(c, attributes) for c in ast.children)
    raise TypeError(f"not a restriction node: {ast!r}")


def resolve_mask(ast: RestrictionAst, shard: IndexShard) -> np.ndarray:
    """
    Boolean mask over shard ordinals of documents satisfying the restriction.

    Pair nodes come from ``attr:`` postings, Compare nodes from a scan of the
    forward index numeric column; Not is complement within the shard.
    """
    size = shard.num_docs
    if isinstance(ast, MatchAll):
        return np.ones(size, dtype=bool)
    if isinstance(ast, Pair):
        mask = np.zeros(size, dtype=bool)
        if ast.name != 'category':
            mask[posting_lookup(shard, attribute_key(ast.name, ast.value))] = True
        elif ast.value == shard.category:
            mask[:] = True
        return mask
    if isinstance(ast, Compare):
        column = shard.forward.numeric_column(ast.name)
        with np.errstate(invalid='ignore'):
            return ~np.isnan(column) & COMPARATORS[ast.op](column, ast.number)
    if isinstance(ast, Not):
        return ~resolve_mask(ast.child, shard)
    if isinstance(ast, And):
        mask = resolve_mask(ast.children[0], shard)
        for child in ast.children[1:]:
            mask &= resolve_mask(child, shard)
        return mask
    if isinstance(ast, Or):
        mask = resolve_mask(ast.children[0], shard)
        for child in ast.children[1:]:
            mask |= resolve_mask(child, shard)
        return mask
    raise TypeError(f"not a restriction node: {ast!r}")


def resolve_candidates(ast: RestrictionAst, shard: IndexShard) -> np.ndarray:
    """Sorted ordinals {d : evaluate_restriction(ast, attributes(d))}."""
    return np.flatnonzero(resolve_mask(ast, shard))

