"""Typed directed multigraph over AST nodes plus identifier supernodes.

Vertices 0..n-1 are the AST nodes in pre-order rank (so the graph is
identical however node ids are labeled); vertices n.. are one supernode
per unique placeholder, ordered by placeholder number. Every forward
edge carries a reverse twin.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterator

from .astcore import Ast, AstNode, iter_nodes

SUPERNODE_TAG = "ident"


class EdgeType(Enum):
    PARENT_CHILD = "parent-child"
    PARENT_CHILD_REV = "parent-child-rev"
    FUNC_NAME_TO_IDENT = "fn-name-to-id"
    FUNC_NAME_TO_IDENT_REV = "fn-name-to-id-rev"
    SUCCESSOR_TERMINAL = "succ-terminal"
    SUCCESSOR_TERMINAL_REV = "succ-terminal-rev"
    SUPERNODE_LINK = "supernode-link"
    SUPERNODE_LINK_REV = "supernode-link-rev"

    @property
    def is_reverse(self) -> bool:
        return self.value.endswith("-rev")

    @property
    def reversed(self) -> "EdgeType":
        if self.is_reverse:
            return EdgeType(self.value[: -len("-rev")])
        return EdgeType(self.value + "-rev")


FORWARD_EDGE_TYPES = tuple(t for t in EdgeType if not t.is_reverse)
ALL_EDGE_TYPES = tuple(EdgeType)


@dataclass(frozen=True)
class Vertex:
    """Graph vertex payload. AST vertices keep the node's tag, data type,
    name, and original node id; supernodes carry their placeholder."""

    index: int
    tag: str
    data_type: str | None
    name: str | None
    node_id: int | None = None
    placeholder: int | None = None


@dataclass(frozen=True)
class CodeGraph:
    vertices: tuple[Vertex, ...]
    edges: dict[EdgeType, tuple[tuple[int, int], ...]]
    vertex_of_node: dict[int, int]
    identifier_supernode: dict[int, int]
    n_ast_nodes: int

    def all_edges(self) -> Iterator[tuple[int, int, EdgeType]]:
        for etype in ALL_EDGE_TYPES:
            for src, dst in self.edges.get(etype, ()):
                yield src, dst, etype

    def edge_count(self) -> int:
        return sum(len(v) for v in self.edges.values())

    def adjacency(self, vertex: int, edge_type: EdgeType) -> frozenset[int]:
        """Out-neighbors of `vertex` along edges of `edge_type`."""
        if not 0 <= vertex < len(self.vertices):
            raise KeyError(f"unknown vertex {vertex}")
        return frozenset(
            dst for src, dst in self.edges.get(edge_type, ()) if src == vertex
        )


def build_graph(ast: Ast) -> CodeGraph:
    """Construct the augmented graph consumed by the structural encoder."""
    order: list[AstNode] = list(iter_nodes(ast.root))
    parents: list[tuple[int, int]] = []
    rank: dict[int, int] = {node.node_id: i for i, node in enumerate(order)}

    def walk(node: AstNode) -> None:
        for child in node.children:
            parents.append((rank[node.node_id], rank[child.node_id]))
            walk(child)

    walk(ast.root)

    terminals = [rank[n.node_id] for n in order if n.is_leaf]
    successor = list(zip(terminals, terminals[1:]))

    # Supernodes in placeholder order; mentions in pre-order.
    mentions: dict[int, list[int]] = {}
    for node in order:
        k = node.placeholder_id if node.is_var else None
        if k is not None:
            mentions.setdefault(k, []).append(rank[node.node_id])

    n = len(order)
    supernode: dict[int, int] = {
        k: n + i for i, k in enumerate(sorted(mentions))
    }

    vertices = [
        Vertex(
            index=rank[node.node_id],
            tag=node.syntactic_type,
            data_type=node.data_type,
            name=node.name,
            node_id=node.node_id,
        )
        for node in order
    ]
    vertices.sort(key=lambda v: v.index)
    for k in sorted(mentions):
        vertices.append(
            Vertex(
                index=supernode[k],
                tag=SUPERNODE_TAG,
                data_type=None,
                name=f"VAR{k}",
                placeholder=k,
            )
        )

    fn_edges = [(0, supernode[k]) for k in sorted(mentions)]
    link_edges = [
        (mention, supernode[k]) for k in sorted(mentions) for mention in mentions[k]
    ]

    edges: dict[EdgeType, tuple[tuple[int, int], ...]] = {
        EdgeType.PARENT_CHILD: tuple(parents),
        EdgeType.FUNC_NAME_TO_IDENT: tuple(fn_edges),
        EdgeType.SUCCESSOR_TERMINAL: tuple(successor),
        EdgeType.SUPERNODE_LINK: tuple(link_edges),
    }
    for etype in FORWARD_EDGE_TYPES:
        edges[etype.reversed] = tuple((dst, src) for src, dst in edges[etype])

    return CodeGraph(
        vertices=tuple(vertices),
        edges=edges,
        vertex_of_node={node.node_id: rank[node.node_id] for node in order},
        identifier_supernode=supernode,
        n_ast_nodes=n,
    )


def dump_edges(graph: CodeGraph, path: str) -> int:
    """Debugging dump: one JSON edge per line."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for src, dst, etype in graph.all_edges():
            fh.write(json.dumps({"src": src, "dst": dst, "type": etype.value}))
            fh.write("\n")
            count += 1
    return count
