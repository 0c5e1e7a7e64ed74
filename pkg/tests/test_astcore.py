import json
import random

import pytest

from revar.astcore import (
    Ast,
    AstIntegrityError,
    AstParseError,
    RenderError,
    collect_variables,
    parse_ast,
    preorder,
    relabel_node_ids,
    render_tokens,
    serialize_ast,
)
from revar.synth import TEMPLATE_COUNT, generate_pair

from conftest import N, build_ast, num, random_tree, var


def test_round_trip_identity(while_loop_ast, for_loop_ast):
    for ast in (while_loop_ast, for_loop_ast):
        text = serialize_ast(ast)
        again = serialize_ast(parse_ast(text))
        assert text == again


def test_round_trip_random_trees():
    rng = random.Random(7)
    for _ in range(200):
        ast = random_tree(rng)
        text = serialize_ast(ast)
        assert serialize_ast(parse_ast(text)) == text


def test_for_loop_fixture_parses(for_loop_ast):
    parsed = parse_ast(serialize_ast(for_loop_ast))
    assert parsed.node_count == 14
    addrs = {n.address for n in preorder(parsed)}
    assert min(addrs) == 0x492 and max(addrs) == 0x4A9


def test_duplicate_node_id_rejected():
    doc = {
        "function": "f",
        "nodes": [
            {"id": 0, "type": "block", "dtype": None, "name": None, "addr": 0, "children": [3, 3]},
            {"id": 3, "type": "num", "dtype": None, "name": "1", "addr": 0, "children": []},
            {"id": 3, "type": "num", "dtype": None, "name": "2", "addr": 0, "children": []},
        ],
        "root": 0,
    }
    with pytest.raises(AstIntegrityError, match="duplicate node_id 3"):
        parse_ast(doc)


def test_parse_error_names_path():
    doc = {"function": "f", "nodes": [{"id": 0, "type": "block", "addr": 0}], "root": 0}
    with pytest.raises(AstParseError, match=r"nodes\[0\]"):
        parse_ast(doc)
    with pytest.raises(AstParseError, match="missing key 'root'"):
        parse_ast({"function": "f", "nodes": []})


def test_parse_rejects_shared_children():
    leaf = {"id": 1, "type": "num", "dtype": None, "name": "1", "addr": 0, "children": []}
    doc = {
        "function": "f",
        "nodes": [
            {"id": 0, "type": "block", "dtype": None, "name": None, "addr": 0, "children": [1, 2]},
            leaf,
            {"id": 2, "type": "expr", "dtype": None, "name": None, "addr": 0, "children": [1]},
        ],
        "root": 0,
    }
    with pytest.raises(AstIntegrityError, match="parents"):
        parse_ast(doc)


def test_parse_requires_dense_ids():
    doc = {
        "function": "f",
        "nodes": [{"id": 5, "type": "block", "dtype": None, "name": None, "addr": 0, "children": []}],
        "root": 5,
    }
    with pytest.raises(AstIntegrityError, match="dense"):
        parse_ast(doc)


def test_preorder_single_node():
    ast = build_ast("f", num(1, 0))
    assert [n.node_id for n in preorder(ast)] == [0]


def test_preorder_for_fixture_order(for_loop_ast):
    nodes = preorder(for_loop_ast)
    assert nodes[0].syntactic_type == "for"
    # The four child subtrees appear left to right: init, cond, step, body.
    tags = [n.syntactic_type for n in nodes]
    assert tags[1:4] == ["asg", "var", "num"]
    assert tags[4:7] == ["sle", "var", "num"]
    assert tags[7:9] == ["preinc", "var"]
    assert tags[9:] == ["block", "expr", "asgadd", "var", "var"]
    assert len(nodes) == for_loop_ast.node_count


def test_preorder_count_matches_recursive_reference():
    def recursive(node):
        out = [node]
        for c in node.children:
            out.extend(recursive(c))
        return out

    rng = random.Random(11)
    for _ in range(1000):
        ast = random_tree(rng, max_nodes=25)
        fast = preorder(ast)
        slow = recursive(ast.root)
        assert [n.node_id for n in fast] == [n.node_id for n in slow]
        assert len(fast) == ast.node_count


def test_collect_variables_loop_fixture(while_loop_ast):
    mentions = collect_variables(while_loop_ast)
    assert set(mentions) == {"v1", "v2"}
    assert len(mentions["v1"]) == 4
    assert len(mentions["v2"]) == 1


def test_collect_variables_empty():
    ast = build_ast("f", N("block", 0, num(1, 0)))
    assert collect_variables(ast) == {}


def test_collect_variables_partitions_var_nodes():
    rng = random.Random(3)
    for _ in range(100):
        ast = random_tree(rng)
        mentions = collect_variables(ast)
        all_ids = [i for ids in mentions.values() for i in ids]
        assert len(all_ids) == len(set(all_ids))
        var_nodes = {n.node_id for n in preorder(ast) if n.syntactic_type == "var"}
        assert set(all_ids) == var_nodes


def test_render_smallest_statement():
    ast = build_ast("f", N("asg", 0, var("VAR1", 0), num(0, 0)))
    assert list(render_tokens(ast).texts()) == ["VAR1", "=", "0", ";"]


FOR_LOOP_GOLDEN = [
    "for", "(", "i", "=", "0", ";", "i", "<=", "9", ";", "++", "i", ")",
    "{", "z", "+=", "i", ";", "}",
]


def test_render_for_fixture_golden(for_loop_ast):
    assert list(render_tokens(for_loop_ast).texts()) == FOR_LOOP_GOLDEN


def test_render_while_fixture(while_loop_ast):
    assert list(render_tokens(while_loop_ast).texts()) == [
        "{", "v1", "=", "0", ";",
        "while", "(", "v1", "<=", "9", ")",
        "{", "v2", "+=", "v1", ";", "++", "v1", ";", "}",
        "}",
    ]


def test_render_idempotent(for_loop_ast):
    first = render_tokens(for_loop_ast)
    second = render_tokens(for_loop_ast)
    assert first == second


def test_render_marks_kinds():
    ast = build_ast(
        "f",
        N("block", 0,
          N("expr", 0, N("asg", 0, var("VAR2", 0), var("result", 0))),
          N("expr", 1, N("asg", 1, var("plain", 1), num(7, 1)))),
    )
    kinds = dict(render_tokens(ast).tokens)
    assert kinds["VAR2"] == "placeholder"
    assert kinds["result"] == "reserved"
    assert kinds["plain"] == "code"


def test_render_injective_over_templates():
    # Rendering drops addresses, the function name, and non-cast data types;
    # distinct trees must stay distinct modulo exactly that.
    def visible_shape(node):
        dtype = node.data_type if node.syntactic_type == "cast" else None
        return (
            node.syntactic_type,
            node.name,
            dtype,
            tuple(visible_shape(c) for c in node.children),
        )

    streams: dict[tuple, tuple] = {}
    for template_id in range(TEMPLATE_COUNT):
        for seed in range(40):
            pair = generate_pair(seed, template_id)
            for ast in (pair.stripped, pair.debug):
                key = tuple(render_tokens(ast).texts())
                shape = visible_shape(ast.root)
                if key in streams:
                    assert streams[key] == shape
                else:
                    streams[key] = shape


def test_render_unknown_tag_errors():
    ast = build_ast("f", N("mystery", 0))
    with pytest.raises(RenderError, match="mystery"):
        render_tokens(ast)


def test_every_var_token_has_matching_ast_mention(while_loop_ast):
    stream = render_tokens(while_loop_ast)
    names = collect_variables(while_loop_ast)
    var_tokens = [t for t, _ in stream.tokens if t in names]
    total_mentions = sum(len(ids) for ids in names.values())
    assert len(var_tokens) == total_mentions


def test_relabel_node_ids_keeps_structure(for_loop_ast):
    n = for_loop_ast.node_count
    rng = random.Random(5)
    perm = list(range(n))
    rng.shuffle(perm)
    relabeled = relabel_node_ids(for_loop_ast, dict(enumerate(perm)))
    assert relabeled.node_count == n
    assert sorted(node.node_id for node in preorder(relabeled)) == list(range(n))
    assert render_tokens(relabeled) == render_tokens(for_loop_ast)
    assert json.loads(serialize_ast(relabeled))["root"] == perm[0]
