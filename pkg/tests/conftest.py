"""Shared fixtures: the paired-loop ASTs and small builders.

The pair models one function decompiled twice. Without debug names the
decompiler emitted a while-loop with variables v1/v2; with debug names it
emitted a for-loop using i/z. Offsets are identical across the pair:
the init instruction at 0x492, the accumulation at 0x49E, the increment
at 0x4A1, and the comparison at 0x4A5.
"""

from __future__ import annotations

import random

import pytest

from revar.astcore import Ast, AstNode


class N:
    """Tiny pre-id node builder; ids get assigned in pre-order."""

    def __init__(self, tag, addr, *children, name=None, dtype=None):
        self.tag = tag
        self.addr = addr
        self.children = list(children)
        self.name = name
        self.dtype = dtype


def build_ast(function_name: str, root: N) -> Ast:
    counter = [0]

    def walk(n: N) -> AstNode:
        nid = counter[0]
        counter[0] += 1
        children = tuple(walk(c) for c in n.children)
        return AstNode(
            node_id=nid,
            syntactic_type=n.tag,
            address=n.addr,
            data_type=n.dtype,
            name=n.name,
            children=children,
        )

    built = walk(root)
    return Ast(function_name, built, counter[0])


def var(name, addr, dtype="int"):
    return N("var", addr, name=name, dtype=dtype)


def num(text, addr):
    return N("num", addr, name=str(text), dtype="int")


@pytest.fixture
def while_loop_ast() -> Ast:
    """Stripped-side tree: { v1 = 0; while (v1 <= 9) { v2 += v1; ++v1; } }"""
    return build_ast(
        "loop_sum",
        N(
            "block",
            0x492,
            N("asg", 0x492, var("v1", 0x492), num(0, 0x492)),
            N(
                "while",
                0x49B,
                N("sle", 0x4A9, var("v1", 0x4A5), num(9, 0x4A5)),
                N(
                    "block",
                    0x49E,
                    N("expr", 0x49E, N("asgadd", 0x49E, var("v2", 0x49E), var("v1", 0x49E))),
                    N("preinc", 0x4A1, var("v1", 0x4A1)),
                ),
            ),
        ),
    )


@pytest.fixture
def for_loop_ast() -> Ast:
    """Debug-side tree: for (i = 0; i <= 9; ++i) { z += i; }"""
    return build_ast(
        "loop_sum",
        N(
            "for",
            0x492,
            N("asg", 0x492, var("i", 0x492), num(0, 0x492)),
            N("sle", 0x4A9, var("i", 0x4A5), num(9, 0x4A5)),
            N("preinc", 0x4A1, var("i", 0x4A1)),
            N(
                "block",
                0x49E,
                N("expr", 0x49E, N("asgadd", 0x49E, var("z", 0x49E), var("i", 0x49E))),
            ),
        ),
    )


def random_tree(rng: random.Random, max_nodes: int = 40) -> Ast:
    """Arbitrary schema-valid tree for traversal/serialization properties."""
    target = rng.randrange(1, max_nodes + 1)
    budget = [target]

    def grow(depth: int) -> N:
        budget[0] -= 1
        tag = rng.choice(["block", "expr", "asg", "add", "call", "var", "num"])
        node = N(tag, rng.randrange(0, 0x1000))
        if tag == "var":
            node.name = rng.choice(["v1", "v2", "alpha", "beta"])
            node.dtype = rng.choice(["int", "char *", None])
        elif tag == "num":
            node.name = str(rng.randrange(100))
        elif tag == "call":
            node.name = rng.choice(["f", "g"])
        while budget[0] > 0 and depth < 6 and rng.random() < 0.6:
            node.children.append(grow(depth + 1))
        return node

    root = grow(0)
    return build_ast("fuzz", root)
