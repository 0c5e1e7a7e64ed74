"""Decompiler-style AST data model: parsing, traversal orders, token rendering.

The AST is a strict tree: every node is owned by exactly one parent and
cross-references use integer node ids only. Nodes are immutable after
construction, so trees can be shared freely across workers.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping

# Token kinds appearing in rendered streams.
KIND_CODE = "code"
KIND_PLACEHOLDER = "placeholder"
KIND_RESERVED = "reserved"
TOKEN_KINDS = (KIND_CODE, KIND_PLACEHOLDER, KIND_RESERVED)

PLACEHOLDER_RE = re.compile(r"^VAR([1-9][0-9]*)$")

# Variable names the decompiler reserves for its own synthesized values.
# These are kept verbatim in rendered output and never subtokenized.
DEFAULT_RESERVED_NAMES = frozenset({"result"})

# Closed vocabulary of syntactic tags. The renderer rejects anything else;
# extend via the `extra_tags` argument of parse_ast for experimental corpora.
STATEMENT_TAGS = ("block", "expr", "for", "while", "if", "return")

BINARY_OP_TOKEN = {
    "asg": "=",
    "asgadd": "+=",
    "asgsub": "-=",
    "add": "+",
    "sub": "-",
    "mul": "*",
    "div": "/",
    "sle": "<=",
    "slt": "<",
    "sge": ">=",
    "sgt": ">",
    "eq": "==",
    "ne": "!=",
    "land": "&&",
    "lor": "||",
}

UNARY_PREFIX_TOKEN = {
    "neg": "-",
    "not": "!",
    "deref": "*",
    "addrof": "&",
    "preinc": "++",
    "predec": "--",
}

UNARY_POSTFIX_TOKEN = {
    "postinc": "++",
    "postdec": "--",
}

LEAF_TAGS = ("num", "var")
OTHER_EXPR_TAGS = ("call", "cast", "index")

SYNTAX_TAGS = (
    STATEMENT_TAGS
    + tuple(BINARY_OP_TOKEN)
    + tuple(UNARY_PREFIX_TOKEN)
    + tuple(UNARY_POSTFIX_TOKEN)
    + OTHER_EXPR_TAGS
    + LEAF_TAGS
)

_EXPRESSION_TAGS = frozenset(SYNTAX_TAGS) - frozenset(STATEMENT_TAGS)
_PARENS_TAGS = frozenset(BINARY_OP_TOKEN)


class AstError(Exception):
    """Base class for AST schema violations."""


class AstParseError(AstError):
    """Malformed document; the message names the offending path."""


class AstIntegrityError(AstError):
    """Structurally valid JSON that violates an AST invariant."""


class RenderError(AstError):
    """Node tag the token renderer has no rule for."""


@dataclass(frozen=True)
class AstNode:
    """One decompiler AST node.

    `address` is the offset of the instruction the node was lifted from
    (displayed in hex); `name` holds the function name on a root block,
    the literal text on constants, and the variable name or placeholder
    on var nodes.
    """

    node_id: int
    syntactic_type: str
    address: int
    data_type: str | None = None
    name: str | None = None
    children: tuple["AstNode", ...] = ()

    @property
    def is_var(self) -> bool:
        return self.syntactic_type == "var"

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def placeholder_id(self) -> int | None:
        """Placeholder number k when the node is named VAR<k>, else None."""
        if self.name is None:
            return None
        m = PLACEHOLDER_RE.match(self.name)
        return int(m.group(1)) if m else None


@dataclass(frozen=True)
class Ast:
    """A function's AST. By decompiler convention the root is a block
    carrying the function name, but operations only require a tree."""

    function_name: str
    root: AstNode
    node_count: int

    @classmethod
    def from_root(cls, function_name: str, root: AstNode) -> "Ast":
        return cls(function_name, root, sum(1 for _ in iter_nodes(root)))

    def validate(self) -> "Ast":
        """Check integrity invariants; raises AstIntegrityError."""
        nodes = list(iter_nodes(self.root))
        ids = [n.node_id for n in nodes]
        seen: set[int] = set()
        for i in ids:
            if i in seen:
                raise AstIntegrityError(f"duplicate node_id {i}")
            seen.add(i)
        if self.node_count != len(nodes):
            raise AstIntegrityError(
                f"node_count {self.node_count} != traversal count {len(nodes)}"
            )
        if seen != set(range(len(nodes))):
            raise AstIntegrityError(
                f"node ids not dense in [0, {len(nodes)}): got {sorted(seen)[:8]}..."
            )
        for n in nodes:
            if n.is_var and not n.name:
                raise AstIntegrityError(f"var node {n.node_id} has no name")
            if n.address < 0:
                raise AstIntegrityError(f"node {n.node_id} has negative address")
        return self


def iter_nodes(root: AstNode) -> Iterator[AstNode]:
    """Pre-order iteration: parent first, children in stored order."""
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def preorder(ast: Ast) -> list[AstNode]:
    """Pre-order traversal of the whole AST."""
    return list(iter_nodes(ast.root))


def collect_variables(ast: Ast) -> dict[str, set[int]]:
    """Map each distinct var-node name to the node ids mentioning it."""
    out: dict[str, set[int]] = {}
    for node in iter_nodes(ast.root):
        if node.is_var:
            out.setdefault(node.name or "", set()).add(node.node_id)
    return out


# ---------------------------------------------------------------------------
# JSON serialization
#
# Schema: {"function": str,
#          "nodes": [{"id": int, "type": str, "dtype": str|null,
#                     "name": str|null, "addr": int, "children": [int]}],
#          "root": int}


def parse_ast(document: str | Mapping, *, extra_tags: Iterable[str] = ()) -> Ast:
    """Parse the JSON AST schema into an Ast, validating integrity."""
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as e:
            raise AstParseError(f"document: invalid JSON ({e})") from e
    else:
        doc = document
    if not isinstance(doc, Mapping):
        raise AstParseError("document: expected a JSON object")
    known_tags = set(SYNTAX_TAGS) | set(extra_tags)

    for key in ("function", "nodes", "root"):
        if key not in doc:
            raise AstParseError(f"document: missing key '{key}'")
    if not isinstance(doc["function"], str):
        raise AstParseError("function: expected string")
    if not isinstance(doc["nodes"], list) or not doc["nodes"]:
        raise AstParseError("nodes: expected non-empty array")
    if not isinstance(doc["root"], int):
        raise AstParseError("root: expected integer node id")

    raw: dict[int, Mapping] = {}
    for i, item in enumerate(doc["nodes"]):
        path = f"nodes[{i}]"
        if not isinstance(item, Mapping):
            raise AstParseError(f"{path}: expected object")
        for key, types in (
            ("id", (int,)),
            ("type", (str,)),
            ("addr", (int,)),
            ("children", (list,)),
        ):
            if key not in item:
                raise AstParseError(f"{path}: missing key '{key}'")
            if not isinstance(item[key], types) or isinstance(item[key], bool):
                raise AstParseError(f"{path}.{key}: wrong type")
        if item.get("dtype") is not None and not isinstance(item["dtype"], str):
            raise AstParseError(f"{path}.dtype: expected string or null")
        if item.get("name") is not None and not isinstance(item["name"], str):
            raise AstParseError(f"{path}.name: expected string or null")
        if item["type"] not in known_tags:
            raise AstParseError(f"{path}.type: unknown syntactic tag '{item['type']}'")
        if item["addr"] < 0:
            raise AstParseError(f"{path}.addr: negative address")
        if item["id"] in raw:
            raise AstIntegrityError(f"duplicate node_id {item['id']}")
        raw[item["id"]] = item

    if doc["root"] not in raw:
        raise AstParseError(f"root: no node with id {doc['root']}")
    parent_count = {i: 0 for i in raw}
    for i, item in raw.items():
        for j, c in enumerate(item["children"]):
            if not isinstance(c, int) or isinstance(c, bool):
                raise AstParseError(f"nodes[id={i}].children[{j}]: expected integer")
            if c not in raw:
                raise AstParseError(f"nodes[id={i}].children[{j}]: no node with id {c}")
            parent_count[c] += 1
    for i, count in parent_count.items():
        if count > 1:
            raise AstIntegrityError(f"node {i} has {count} parents; tree required")
    if parent_count[doc["root"]] != 0:
        raise AstIntegrityError(f"root {doc['root']} appears as a child")

    # Build bottom-up so children tuples exist before their parents.
    built: dict[int, AstNode] = {}

    def build(i: int, trail: tuple[int, ...]) -> AstNode:
        if i in trail:
            raise AstIntegrityError(f"cycle through node {i}")
        if i not in built:
            item = raw[i]
            children = tuple(build(c, trail + (i,)) for c in item["children"])
            built[i] = AstNode(
                node_id=i,
                syntactic_type=item["type"],
                address=item["addr"],
                data_type=item.get("dtype"),
                name=item.get("name"),
                children=children,
            )
        return built[i]

    root = build(doc["root"], ())
    if len(built) != len(raw):
        orphans = sorted(set(raw) - set(built))
        raise AstIntegrityError(f"unreachable nodes {orphans}; tree required")
    return Ast(doc["function"], root, len(built)).validate()


def serialize_ast(ast: Ast) -> str:
    """Canonical JSON: nodes in ascending id order, compact separators."""
    nodes = sorted(iter_nodes(ast.root), key=lambda n: n.node_id)
    doc = {
        "function": ast.function_name,
        "nodes": [
            {
                "id": n.node_id,
                "type": n.syntactic_type,
                "dtype": n.data_type,
                "name": n.name,
                "addr": n.address,
                "children": [c.node_id for c in n.children],
            }
            for n in nodes
        ],
        "root": ast.root.node_id,
    }
    return json.dumps(doc, separators=(",", ":"))


def relabel_node_ids(ast: Ast, mapping: Mapping[int, int]) -> Ast:
    """Rewrite node ids through `mapping` (a permutation of [0, n))."""

    def rebuild(node: AstNode) -> AstNode:
        return replace(
            node,
            node_id=mapping[node.node_id],
            children=tuple(rebuild(c) for c in node.children),
        )

    return Ast(ast.function_name, rebuild(ast.root), ast.node_count)


# ---------------------------------------------------------------------------
# Token rendering (stands in for the decompiler's code generator)


@dataclass(frozen=True)
class TokenStream:
    """Rendered code tokens as (text, kind) pairs."""

    tokens: tuple[tuple[str, str], ...]

    def texts(self) -> tuple[str, ...]:
        return tuple(t for t, _ in self.tokens)

    def placeholder_ids(self) -> set[int]:
        out = set()
        for text, kind in self.tokens:
            if kind == KIND_PLACEHOLDER:
                m = PLACEHOLDER_RE.match(text)
                if m:
                    out.add(int(m.group(1)))
        return out

    def to_json(self) -> list[list[str]]:
        return [[t, k] for t, k in self.tokens]

    @classmethod
    def from_json(cls, data: Iterable[Iterable[str]]) -> "TokenStream":
        toks = []
        for pair in data:
            text, kind = pair
            if kind not in TOKEN_KINDS:
                raise AstParseError(f"token kind '{kind}' unknown")
            toks.append((str(text), str(kind)))
        return cls(tuple(toks))


def render_tokens(
    ast: Ast, reserved: frozenset[str] = DEFAULT_RESERVED_NAMES
) -> TokenStream:
    """Deterministically render an AST to a C-like token stream.

    Every var node emits exactly one token; operands that are themselves
    binary expressions are parenthesized so distinct trees keep distinct
    streams.
    """
    out: list[tuple[str, str]] = []

    def emit(text: str, kind: str = KIND_CODE) -> None:
        out.append((text, kind))

    def expr(node: AstNode, parenthesize: bool = False) -> None:
        tag = node.syntactic_type
        if parenthesize and tag in _PARENS_TAGS:
            emit("(")
            expr(node)
            emit(")")
            return
        if tag == "var":
            name = node.name or ""
            if PLACEHOLDER_RE.match(name):
                emit(name, KIND_PLACEHOLDER)
            elif name in reserved:
                emit(name, KIND_RESERVED)
            else:
                emit(name)
        elif tag == "num":
            emit(node.name or "0")
        elif tag in BINARY_OP_TOKEN:
            left, right = _arity(node, 2)
            expr(left, parenthesize=True)
            emit(BINARY_OP_TOKEN[tag])
            expr(right, parenthesize=True)
        elif tag in UNARY_PREFIX_TOKEN:
            (operand,) = _arity(node, 1)
            emit(UNARY_PREFIX_TOKEN[tag])
            expr(operand, parenthesize=True)
        elif tag in UNARY_POSTFIX_TOKEN:
            (operand,) = _arity(node, 1)
            expr(operand, parenthesize=True)
            emit(UNARY_POSTFIX_TOKEN[tag])
        elif tag == "call":
            emit(node.name or "")
            emit("(")
            for i, arg in enumerate(node.children):
                if i:
                    emit(",")
                expr(arg)
            emit(")")
        elif tag == "cast":
            (operand,) = _arity(node, 1)
            emit("(")
            for word in (node.data_type or "void").split():
                emit(word)
            emit(")")
            expr(operand, parenthesize=True)
        elif tag == "index":
            base, idx = _arity(node, 2)
            expr(base, parenthesize=True)
            emit("[")
            expr(idx)
            emit("]")
        else:
            raise RenderError(f"no expression rendering rule for tag '{tag}'")

    def stmt(node: AstNode) -> None:
        tag = node.syntactic_type
        if tag == "block":
            emit("{")
            for child in node.children:
                stmt(child)
            emit("}")
        elif tag == "expr":
            (child,) = _arity(node, 1)
            expr(child)
            emit(";")
        elif tag == "return":
            emit("return")
            if node.children:
                (child,) = _arity(node, 1)
                expr(child)
            emit(";")
        elif tag == "if":
            if len(node.children) not in (2, 3):
                raise RenderError(f"tag 'if' expects 2 or 3 children, got {len(node.children)}")
            emit("if")
            emit("(")
            expr(node.children[0])
            emit(")")
            stmt(node.children[1])
            if len(node.children) == 3:
                emit("else")
                stmt(node.children[2])
        elif tag == "for":
            init, cond, step, body = _arity(node, 4)
            emit("for")
            emit("(")
            expr(init)
            emit(";")
            expr(cond)
            emit(";")
            expr(step)
            emit(")")
            stmt(body)
        elif tag == "while":
            cond, body = _arity(node, 2)
            emit("while")
            emit("(")
            expr(cond)
            emit(")")
            stmt(body)
        elif tag in _EXPRESSION_TAGS:
            expr(node)
            emit(";")
        else:
            raise RenderError(f"no statement rendering rule for tag '{tag}'")

    def _arity(node: AstNode, n: int) -> tuple[AstNode, ...]:
        if len(node.children) != n:
            raise RenderError(
                f"tag '{node.syntactic_type}' expects {n} children, got {len(node.children)}"
            )
        return node.children

    stmt(ast.root)
    return TokenStream(tuple(out))
