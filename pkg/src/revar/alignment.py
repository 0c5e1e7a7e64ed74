"""Cross-decompilation variable alignment and corpus-entry assembly.

A variable is identified by its signature: the set of instruction offsets
at which it is accessed. The same function decompiled with and without
debug names may take different shapes, but the offsets touching each
variable do not move, so equal signatures align variables across the two
decompilations without heuristics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable, Mapping

from .astcore import (
    Ast,
    AstNode,
    TokenStream,
    collect_variables,
    iter_nodes,
    parse_ast,
    render_tokens,
    serialize_ast,
)

# Functions above this AST size are dropped from corpora.
MAX_AST_NODES = 300

REJECT_NO_RENAMED_VARS = "no-renamed-vars"
REJECT_TOO_LARGE = "too-large"


def extract_signatures(ast: Ast) -> dict[str, frozenset[int]]:
    """Signature of each variable: addresses over all var nodes naming it."""
    sigs: dict[str, set[int]] = {}
    for node in iter_nodes(ast.root):
        if node.is_var:
            sigs.setdefault(node.name or "", set()).add(node.address)
    return {name: frozenset(addrs) for name, addrs in sigs.items()}


@dataclass(frozen=True)
class AlignmentResult:
    """Signature-matched name mapping.

    `mapping` pairs each stripped-side variable with its developer name.
    `skipped` holds stripped-side variables whose signature collides with
    another variable on either side; no name is assigned to those.
    Stripped variables in neither set matched no debug signature at all:
    they are decompiler-introduced temporaries.
    """

    mapping: dict[str, str]
    skipped: frozenset[str]

    def temporaries(self, stripped: Ast) -> frozenset[str]:
        names = set(extract_signatures(stripped))
        return frozenset(names - set(self.mapping) - set(self.skipped))


def align(stripped: Ast, debug: Ast) -> AlignmentResult:
    """Match variables of two decompilations of one function by signature."""
    sigs_s = extract_signatures(stripped)
    sigs_d = extract_signatures(debug)

    by_sig_s: dict[frozenset[int], list[str]] = {}
    for name, sig in sigs_s.items():
        by_sig_s.setdefault(sig, []).append(name)
    by_sig_d: dict[frozenset[int], list[str]] = {}
    for name, sig in sigs_d.items():
        by_sig_d.setdefault(sig, []).append(name)

    mapping: dict[str, str] = {}
    skipped: set[str] = set()
    for sig, names_s in by_sig_s.items():
        names_d = by_sig_d.get(sig, [])
        if len(names_s) > 1 or len(names_d) > 1:
            skipped.update(names_s)
        elif names_d:
            mapping[names_s[0]] = names_d[0]
        # No debug match: decompiler temporary, left unmapped.
    return AlignmentResult(mapping, frozenset(skipped))


@dataclass(frozen=True)
class LookupEntry:
    decompiler_name: str
    developer_name: str | None = None


@dataclass(frozen=True)
class LookupTable:
    """Placeholder id -> names. Ids are 1..n, contiguous; developer_name
    is absent exactly for variables that got no name (temporaries and
    signature collisions)."""

    entries: dict[int, LookupEntry]

    def named_ids(self) -> set[int]:
        return {k for k, e in self.entries.items() if e.developer_name is not None}


def insert_placeholders(ast: Ast) -> tuple[Ast, LookupTable]:
    """Rename every var node to VAR<k>, numbering by pre-order first mention."""
    numbering: dict[str, int] = {}
    for node in iter_nodes(ast.root):
        if node.is_var and node.name not in numbering:
            numbering[node.name or ""] = len(numbering) + 1

    def rebuild(node: AstNode) -> AstNode:
        children = tuple(rebuild(c) for c in node.children)
        if node.is_var:
            return replace(node, name=f"VAR{numbering[node.name or '']}", children=children)
        if children != node.children:
            return replace(node, children=children)
        return node

    table = LookupTable({k: LookupEntry(name) for name, k in numbering.items()})
    return Ast(ast.function_name, rebuild(ast.root), ast.node_count), table


@dataclass(frozen=True)
class CorpusEntry:
    """One training-corpus entry: tokenized code and AST with variable
    placeholders, plus the placeholder lookup table."""

    tokens: TokenStream
    ast: Ast
    table: LookupTable
    binary_id: str
    function_id: str


@dataclass(frozen=True)
class Rejection:
    """A function excluded from the corpus, with the filter that fired."""

    reason: str
    binary_id: str = ""
    function_id: str = ""


def build_corpus_entry(
    stripped: Ast,
    debug: Ast,
    binary_id: str,
    function_id: str,
    max_nodes: int = MAX_AST_NODES,
) -> CorpusEntry | Rejection:
    """Combine placeholder insertion, alignment, and rendering.

    Rejects oversized functions and functions where no variable received
    a developer name.
    """
    if stripped.node_count > max_nodes:
        return Rejection(REJECT_TOO_LARGE, binary_id, function_id)
    result = align(stripped, debug)
    if not result.mapping:
        return Rejection(REJECT_NO_RENAMED_VARS, binary_id, function_id)

    placeholder_ast, table = insert_placeholders(stripped)
    entries = {
        k: LookupEntry(e.decompiler_name, result.mapping.get(e.decompiler_name))
        for k, e in table.entries.items()
    }
    tokens = render_tokens(placeholder_ast)
    return CorpusEntry(
        tokens=tokens,
        ast=placeholder_ast,
        table=LookupTable(entries),
        binary_id=binary_id,
        function_id=function_id,
    )


# ---------------------------------------------------------------------------
# Corpus file format: one JSON object per line, ordered by (binary, function).


def entry_to_json(entry: CorpusEntry) -> dict:
    return {
        "binary": entry.binary_id,
        "function": entry.function_id,
        "tokens": entry.tokens.to_json(),
        "ast": json.loads(serialize_ast(entry.ast)),
        "table": {
            str(k): {"decomp": e.decompiler_name, "dev": e.developer_name}
            for k, e in sorted(entry.table.entries.items())
        },
    }


def entry_from_json(doc: Mapping) -> CorpusEntry:
    table = LookupTable(
        {
            int(k): LookupEntry(v["decomp"], v.get("dev"))
            for k, v in doc["table"].items()
        }
    )
    return CorpusEntry(
        tokens=TokenStream.from_json(doc["tokens"]),
        ast=parse_ast(doc["ast"]),
        table=table,
        binary_id=doc["binary"],
        function_id=doc["function"],
    )


def write_corpus(entries: Iterable[CorpusEntry], path: str) -> int:
    ordered = sorted(entries, key=lambda e: (e.binary_id, e.function_id))
    with open(path, "w", encoding="utf-8") as fh:
        for entry in ordered:
            fh.write(json.dumps(entry_to_json(entry), separators=(",", ":")))
            fh.write("\n")
    return len(ordered)


def read_corpus(path: str) -> list[CorpusEntry]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(entry_from_json(json.loads(line)))
    return entries
