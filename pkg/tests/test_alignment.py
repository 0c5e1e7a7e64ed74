import random

import pytest

from revar.alignment import (
    REJECT_NO_RENAMED_VARS,
    REJECT_TOO_LARGE,
    CorpusEntry,
    Rejection,
    align,
    build_corpus_entry,
    entry_from_json,
    entry_to_json,
    extract_signatures,
    insert_placeholders,
)
from revar.astcore import collect_variables, preorder, serialize_ast
from revar.synth import TEMPLATE_COUNT, generate_pair, generate_pairs

from conftest import N, build_ast, num, var


def brute_force_align(stripped, debug):
    """Independent all-pairs signature comparison."""
    sigs_s = extract_signatures(stripped)
    sigs_d = extract_signatures(debug)
    mapping = {}
    skipped = set()
    for s_name, s_sig in sigs_s.items():
        s_dups = [n for n, sig in sigs_s.items() if sig == s_sig]
        matches = [n for n, sig in sigs_d.items() if sig == s_sig]
        d_dups = max(
            (len([n for n, sig in sigs_d.items() if sig == d_sig]) for d_sig in [sigs_d[m] for m in matches]),
            default=0,
        )
        if len(s_dups) > 1 or d_dups > 1:
            skipped.add(s_name)
        elif len(matches) == 1:
            mapping[s_name] = matches[0]
    return mapping, frozenset(skipped)


def test_signatures_loop_fixture(while_loop_ast, for_loop_ast):
    sigs = extract_signatures(while_loop_ast)
    assert sigs["v1"] == frozenset({0x492, 0x49E, 0x4A1, 0x4A5})
    assert sigs["v2"] == frozenset({0x49E})
    sigs = extract_signatures(for_loop_ast)
    assert sigs["i"] == frozenset({0x492, 0x49E, 0x4A1, 0x4A5})
    assert sigs["z"] == frozenset({0x49E})


def test_signature_single_mention():
    ast = build_ast("f", N("expr", 0, N("asg", 0, var("x", 0), num(1, 0))))
    assert extract_signatures(ast)["x"] == frozenset({0})


def test_align_loop_pair(while_loop_ast, for_loop_ast):
    result = align(while_loop_ast, for_loop_ast)
    assert result.mapping == {"v1": "i", "v2": "z"}
    assert result.skipped == frozenset()
    assert result.temporaries(while_loop_ast) == frozenset()


def test_align_identity(for_loop_ast):
    result = align(for_loop_ast, for_loop_ast)
    assert result.mapping == {"i": "i", "z": "z"}
    assert result.skipped == frozenset()


def test_align_symmetry(while_loop_ast, for_loop_ast):
    forward = align(while_loop_ast, for_loop_ast)
    backward = align(for_loop_ast, while_loop_ast)
    assert backward.mapping == {v: k for k, v in forward.mapping.items()}


def collision_pair():
    """Two stripped variables sharing one signature; same on the debug side."""
    stripped = build_ast(
        "f",
        N("block", 0,
          N("expr", 0, N("asg", 0, var("v1", 0), var("v2", 0))),
          N("expr", 3, N("asg", 3, var("v3", 3), num(5, 3)))),
    )
    debug = build_ast(
        "f",
        N("block", 0,
          N("expr", 0, N("asg", 0, var("old", 0), var("prev", 0))),
          N("expr", 3, N("asg", 3, var("count", 3), num(5, 3)))),
    )
    return stripped, debug


def test_align_collision_skips_both():
    stripped, debug = collision_pair()
    result = align(stripped, debug)
    assert result.skipped == frozenset({"v1", "v2"})
    assert result.mapping == {"v3": "count"}
    mapping, skipped = brute_force_align(stripped, debug)
    assert result.mapping == mapping
    assert result.skipped == skipped


def test_align_matches_brute_force_on_generated_pairs():
    for pair in generate_pairs(seed=41, count=60):
        result = align(pair.stripped, pair.debug)
        mapping, skipped = brute_force_align(pair.stripped, pair.debug)
        assert result.mapping == mapping
        assert result.skipped == skipped


def test_insert_placeholders_numbering(while_loop_ast):
    renamed, table = insert_placeholders(while_loop_ast)
    # v1's first mention is the assignment at 0x492, so it becomes VAR1.
    assert table.entries[1].decompiler_name == "v1"
    assert table.entries[2].decompiler_name == "v2"
    names = collect_variables(renamed)
    assert set(names) == {"VAR1", "VAR2"}
    assert len(names["VAR1"]) == 4
    first_var = next(n for n in preorder(renamed) if n.is_var)
    assert first_var.name == "VAR1" and first_var.address == 0x492


def test_insert_placeholders_no_vars():
    ast = build_ast("f", N("block", 0, N("expr", 0, num(1, 0))))
    renamed, table = insert_placeholders(ast)
    assert table.entries == {}
    assert serialize_ast(renamed) == serialize_ast(ast)


def test_insert_placeholders_deterministic(while_loop_ast):
    a = insert_placeholders(while_loop_ast)
    b = insert_placeholders(while_loop_ast)
    assert serialize_ast(a[0]) == serialize_ast(b[0])
    assert a[1] == b[1]


def test_corpus_entry_loop_pair(while_loop_ast, for_loop_ast):
    entry = build_corpus_entry(while_loop_ast, for_loop_ast, "bin0", "fn0")
    assert isinstance(entry, CorpusEntry)
    assert entry.table.entries[1].decompiler_name == "v1"
    assert entry.table.entries[1].developer_name == "i"
    assert entry.table.entries[2].decompiler_name == "v2"
    assert entry.table.entries[2].developer_name == "z"
    assert entry.tokens.placeholder_ids() == {1, 2}


def test_corpus_entry_placeholder_ids_match_table():
    for pair in generate_pairs(seed=5, count=40):
        entry = build_corpus_entry(pair.stripped, pair.debug, "b", "f")
        if isinstance(entry, Rejection):
            continue
        assert entry.tokens.placeholder_ids() == set(entry.table.entries)
        assert entry.tokens.placeholder_ids() == {
            node.placeholder_id
            for node in preorder(entry.ast)
            if node.is_var
        }


def test_corpus_entry_rejects_oversized():
    stmts = [N("expr", i, N("asg", i, var("v1", i), num(i, i))) for i in range(101)]
    big = build_ast("f", N("block", 0, *stmts))
    assert big.node_count == 405
    small_debug = build_ast("f", N("block", 0, N("expr", 0, N("asg", 0, var("x", 0), num(0, 0)))))
    rejection = build_corpus_entry(big, small_debug, "b", "f")
    assert isinstance(rejection, Rejection)
    assert rejection.reason == REJECT_TOO_LARGE


def test_corpus_entry_rejects_unmapped():
    stripped = build_ast("f", N("expr", 0, N("asg", 0, var("v1", 0), num(1, 0))))
    debug = build_ast("f", N("expr", 9, N("asg", 9, var("x", 9), num(1, 9))))
    rejection = build_corpus_entry(stripped, debug, "b", "f")
    assert isinstance(rejection, Rejection)
    assert rejection.reason == REJECT_NO_RENAMED_VARS


def test_entry_json_round_trip(while_loop_ast, for_loop_ast):
    entry = build_corpus_entry(while_loop_ast, for_loop_ast, "bin0", "fn0")
    doc = entry_to_json(entry)
    again = entry_from_json(doc)
    assert again == entry


def test_generate_pair_deterministic():
    for template_id in range(TEMPLATE_COUNT):
        a = generate_pair(123, template_id)
        b = generate_pair(123, template_id)
        assert serialize_ast(a.stripped) == serialize_ast(b.stripped)
        assert serialize_ast(a.debug) == serialize_ast(b.debug)
        assert a.truth == b.truth


def test_generate_pair_unknown_template():
    with pytest.raises(ValueError, match="template_id"):
        generate_pair(0, TEMPLATE_COUNT)


def test_generated_pairs_recover_truth():
    divergent = temps = 0
    pairs = generate_pairs(seed=77, count=120)
    for pair in pairs:
        result = align(pair.stripped, pair.debug)
        assert result.mapping == pair.truth.mapping
        assert result.skipped == pair.truth.collided
        assert result.temporaries(pair.stripped) == pair.truth.temporaries
        divergent += pair.truth.divergent
        temps += pair.truth.has_temporaries
    assert divergent / len(pairs) >= 0.3
    assert temps / len(pairs) >= 0.3


def test_generated_pair_shares_signatures():
    pair = generate_pair(9, 0)
    sigs_s = extract_signatures(pair.stripped)
    sigs_d = extract_signatures(pair.debug)
    for stripped_name, dev_name in pair.truth.mapping.items():
        assert sigs_s[stripped_name] == sigs_d[dev_name]
