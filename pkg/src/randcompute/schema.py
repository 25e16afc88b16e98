"""Binary-tree computation schemas and an order-preserving payload algebra.

Schema nodes are addressed by ``(level, index)``: the root is ``(0, 0)`` and
the children of ``(i, j)`` are ``(i + 1, 2j)`` (left) and ``(i + 1, 2j + 1)``
(right).  Non-complete trees simply omit the missing ids.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence, Union

MASK64 = (1 << 64) - 1


class SchemaError(ValueError):
    pass


class SchemaNodeId(NamedTuple):
    level: int
    index: int


ROOT = SchemaNodeId(0, 0)


def parent_id(sid: tuple[int, int]) -> SchemaNodeId:
    if sid[0] == 0:
        raise SchemaError("root has no parent")
    return SchemaNodeId(sid[0] - 1, sid[1] >> 1)


def sibling_id(sid: tuple[int, int]) -> SchemaNodeId:
    if sid[0] == 0:
        raise SchemaError("root has no sibling")
    return SchemaNodeId(sid[0], sid[1] ^ 1)


def children_ids(sid: tuple[int, int]) -> tuple[SchemaNodeId, SchemaNodeId]:
    return SchemaNodeId(sid[0] + 1, 2 * sid[1]), SchemaNodeId(sid[0] + 1, 2 * sid[1] + 1)


# -- operators ----------------------------------------------------------------


def _append_hash(a: int, b: int) -> int:
    # splitmix64 finaliser on an order-dependent mix
    z = (a * 0x9E3779B97F4A7C15 + (b ^ 0xBF58476D1CE4E5B9) + 0x94D049BB133111EB) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class Operator:
    tag: str
    symbol: str

    def apply(self, a: int, b: int) -> int:
        if self.tag == "add":
            return (a + b) & MASK64
        if self.tag == "mul":
            return (a * b) & MASK64
        return _append_hash(a, b)


OPERATORS = {
    "add": Operator("add", "+"),
    "mul": Operator("mul", "×"),
    "append": Operator("append", "⊕"),
}
_ALIASES = {"+": "add", "*": "mul", "×": "mul", "⊕": "append", "@": "append"}


def operator(tag: str) -> Operator:
    key = _ALIASES.get(tag, tag)
    try:
        return OPERATORS[key]
    except KeyError:
        raise SchemaError(f"unknown operator {tag!r}") from None


# -- payloads -----------------------------------------------------------------


@dataclass(frozen=True)
class Operand:
    """A labelled operand: ``label`` appears in traces, ``value`` in arithmetic."""

    label: str
    value: int | None = None


OperandLike = Union[Operand, int, str]


@dataclass(frozen=True)
class Payload:
    trace: str
    value: int | None
    leaves: tuple[int, ...]
    round: int | None = None


def leaf_payload(operand_index: int, operand: OperandLike, round: int | None = None) -> Payload:
    if isinstance(operand, Operand):
        label, value = operand.label, operand.value
    elif isinstance(operand, bool):
        raise SchemaError("boolean operands are not supported")
    elif isinstance(operand, int):
        label, value = str(operand), operand & MASK64
    else:
        label, value = str(operand), None
    return Payload(label, value, (operand_index,), round)


# -- tree ---------------------------------------------------------------------


@dataclass(frozen=True)
class SchemaTree:
    """Binary computation schema.

    ``ops`` maps each internal id to its operator; ``sources`` maps each source
    id to its operand index (1-based).  ``labels[k - 1]`` is the name of
    operand ``k`` as written in the defining expression.
    """

    ops: Mapping[SchemaNodeId, Operator]
    sources: Mapping[SchemaNodeId, int]
    labels: tuple[str, ...]
    source_ids: tuple[SchemaNodeId, ...] = field(init=False, repr=False)

    def __post_init__(self):
        by_index = sorted(self.sources.items(), key=lambda kv: kv[1])
        if [k for _, k in by_index] != list(range(1, len(by_index) + 1)):
            raise SchemaError("operand indices must be exactly 1..K")
        object.__setattr__(self, "source_ids", tuple(sid for sid, _ in by_index))
        self._check()

    def _check(self) -> None:
        if ROOT not in self.ops and ROOT not in self.sources:
            raise SchemaError("schema has no root")
        if set(self.ops) & set(self.sources):
            raise SchemaError("node is both internal and source")
        for sid in self.ops:
            for c in children_ids(sid):
                if c not in self.ops and c not in self.sources:
                    raise SchemaError(f"internal node {tuple(sid)} is missing child {tuple(c)}")
        for sid in list(self.ops) + list(self.sources):
            if sid != ROOT and parent_id(sid) not in self.ops:
                raise SchemaError(f"node {tuple(sid)} is detached from the root")
        for sid in self.sources:
            if any(c in self.ops or c in self.sources for c in children_ids(sid)):
                raise SchemaError(f"source {tuple(sid)} has children")

    @property
    def K(self) -> int:
        return len(self.sources)

    @property
    def h(self) -> int:
        return max(sid.level for sid in self.sources)

    @property
    def L(self) -> int:
        """Sources on the deepest level."""
        h = self.h
        return sum(1 for sid in self.sources if sid.level == h)

    @property
    def internal_ids(self) -> tuple[SchemaNodeId, ...]:
        return tuple(sorted(self.ops))

    def __contains__(self, sid) -> bool:
        return sid in self.ops or sid in self.sources

    def is_complete(self) -> bool:
        h = self.h
        return all(sid.level == h for sid in self.sources) and self.K == 2**h

    def parent_of(self, sid) -> SchemaNodeId:
        self._require(sid)
        return parent_id(sid)

    def sibling_of(self, sid) -> SchemaNodeId:
        self._require(sid)
        return sibling_id(sid)

    def _require(self, sid) -> None:
        if sid not in self:
            raise SchemaError(f"id {tuple(sid)} not in schema")

    def subtree_leaves(self, sid) -> tuple[int, ...]:
        """Operand indices under ``sid`` in left-to-right order."""
        self._require(sid)
        if sid in self.sources:
            return (self.sources[sid],)
        left, right = children_ids(sid)
        return self.subtree_leaves(left) + self.subtree_leaves(right)

    def id_map(self) -> dict[str, str]:
        """Operand label -> ``"level,index"``; emitted as run metadata."""
        return {
            self.labels[k - 1]: f"{sid.level},{sid.index}"
            for sid, k in sorted(self.sources.items(), key=lambda kv: kv[1])
        }

    def describe(self) -> str:
        def rec(sid):
            if sid in self.sources:
                return self.labels[self.sources[sid] - 1]
            a, b = children_ids(sid)
            return f"({rec(a)}{self.ops[sid].symbol}{rec(b)})"

        return rec(ROOT)


def build_complete(K: int, operators: str | Sequence[str] | Mapping = "append") -> SchemaTree:
    """Complete tree over ``K = 2**r`` operands ``x1..xK``.

    ``operators`` is one tag for every internal node, a sequence listing the
    internal nodes deepest level first (left to right, root last), or a mapping
    from ``(level, index)`` to tag.
    """
    if K < 2 or K & (K - 1):
        raise SchemaError(f"complete schema needs K a power of two >= 2, got {K}")
    h = K.bit_length() - 1
    internal = [SchemaNodeId(i, j) for i in range(h - 1, -1, -1) for j in range(2**i)]
    if isinstance(operators, str):
        ops = {sid: operator(operators) for sid in internal}
    elif isinstance(operators, Mapping):
        ops = {SchemaNodeId(*k): operator(v) for k, v in operators.items()}
        if set(ops) != set(internal):
            raise SchemaError("operator mapping must cover every internal node")
    else:
        if len(operators) != len(internal):
            raise SchemaError(f"expected {len(internal)} operators, got {len(operators)}")
        ops = {sid: operator(tag) for sid, tag in zip(internal, operators)}
    sources = {SchemaNodeId(h, j): j + 1 for j in range(K)}
    return SchemaTree(ops, sources, tuple(f"x{k}" for k in range(1, K + 1)))


_TOKEN = re.compile(r"\s*(?:([A-Za-z_][A-Za-z0-9_]*)|([()])|([+*×⊕@]))")


def _tokenize(expr: str) -> list[tuple[str, str]]:
    out = []
    pos = 0
    expr = expr.rstrip()
    while pos < len(expr):
        m = _TOKEN.match(expr, pos)
        if not m or m.end() == pos:
            raise SchemaError(f"parse error at column {pos + 1}: {expr[pos:pos + 10]!r}")
        kind = "atom" if m.group(1) else "paren" if m.group(2) else "op"
        out.append((kind, m.group(m.lastindex)))
        pos = m.end()
    return out


def build_from_expression(expr: str) -> SchemaTree:
    """Parse a fully parenthesised binary expression such as ``((y1*y2)+y3)*y4``.

    Operand indices follow first appearance, left to right.  Outer parentheses
    may be omitted; chains like ``a+b+c`` are rejected as ambiguous.
    """
    tokens = _tokenize(expr)
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else (None, None)

    def primary():
        nonlocal pos
        kind, text = peek()
        if kind == "atom":
            pos += 1
            return text
        if text == "(":
            pos += 1
            node = binary()
            if peek()[1] != ")":
                raise SchemaError(f"parse error: expected ')' in {expr!r}")
            pos += 1
            return node
        raise SchemaError(f"parse error: unexpected {text!r} in {expr!r}")

    def binary():
        nonlocal pos
        left = primary()
        kind, text = peek()
        if kind != "op":
            return left
        pos += 1
        right = primary()
        if peek()[0] == "op":
            raise SchemaError(f"ambiguous chain in {expr!r}; parenthesise every operation")
        return (text, left, right)

    if not tokens:
        raise SchemaError("empty expression")
    tree = binary()
    if pos != len(tokens):
        raise SchemaError(f"parse error: trailing input in {expr!r}")

    ops: dict[SchemaNodeId, Operator] = {}
    sources: dict[SchemaNodeId, int] = {}
    labels: list[str] = []

    def place(node, sid: SchemaNodeId):
        if isinstance(node, str):
            if node in labels:
                raise SchemaError(f"operand {node!r} is repeated")
            labels.append(node)
            sources[sid] = len(labels)
            return
        tag, left, right = node
        ops[sid] = operator(tag)
        a, b = children_ids(sid)
        place(left, a)
        place(right, b)

    place(tree, ROOT)
    return SchemaTree(ops, sources, tuple(labels))


def build_schema(desc: Mapping) -> SchemaTree:
    """From a config table: ``{complete = K, op = tag}`` or ``{expression = "..."}``."""
    desc = dict(desc)
    if "expression" in desc:
        if "complete" in desc:
            raise SchemaError("give either 'complete' or 'expression', not both")
        return build_from_expression(desc["expression"])
    if "complete" in desc:
        ops = desc.get("ops", desc.get("op", "append"))
        return build_complete(int(desc["complete"]), ops)
    raise SchemaError("schema needs 'complete' or 'expression'")


# -- evaluation ---------------------------------------------------------------


def reference_evaluate(
    t: SchemaTree, operands: Sequence[OperandLike], round: int | None = None
) -> Payload:
    """Bottom-up value of the root for one round of operands (``operands[k-1]`` is operand k)."""
    if len(operands) != t.K:
        raise SchemaError(f"expected {t.K} operands, got {len(operands)}")

    def rec(sid) -> tuple[str, int | None]:
        if sid in t.sources:
            p = leaf_payload(t.sources[sid], operands[t.sources[sid] - 1])
            return p.trace, p.value
        a, b = children_ids(sid)
        ta, va = rec(a)
        tb, vb = rec(b)
        op = t.ops[sid]
        value = None if va is None or vb is None else op.apply(va, vb)
        return f"({ta}{op.symbol}{tb})", value

    trace, value = rec(ROOT)
    return Payload(trace, value, tuple(range(1, t.K + 1)), round)


def combine(
    t: SchemaTree,
    a_id: tuple[int, int],
    a: Payload,
    b_id: tuple[int, int],
    b: Payload,
) -> tuple[SchemaNodeId, Payload]:
    """Merge two sibling payloads into their parent's payload.

    The even-index sibling is always the left operand, whichever argument it
    was passed as.
    """
    if a_id[0] == 0 or b_id[0] == 0 or sibling_id(a_id) != tuple(b_id):
        raise SchemaError(f"{tuple(a_id)} and {tuple(b_id)} are not siblings")
    if a.round != b.round:
        raise SchemaError(f"round mismatch: {a.round} vs {b.round}")
    pid = parent_id(a_id)
    if pid not in t.ops:
        raise SchemaError(f"{tuple(pid)} is not an internal schema node")
    if a_id[1] & 1:
        a, b = b, a
    op = t.ops[pid]
    value = None if a.value is None or b.value is None else op.apply(a.value, b.value)
    return pid, Payload(f"({a.trace}{op.symbol}{b.trace})", value, a.leaves + b.leaves, a.round)
