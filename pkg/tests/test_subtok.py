import random
import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from revar.subtok import (
    END_OF_NAME,
    KEEP_NAME,
    SubtokError,
    Subtokenizer,
    build_specials,
    train_segmenter,
)

SPECIALS = build_specials()


def make_tok(corpus, extra_merges, specials=SPECIALS):
    alphabet = {ch for word in corpus for ch in word}
    vocab, merges = train_segmenter(
        corpus, len(specials) + len(alphabet) + extra_merges, specials
    )
    return Subtokenizer(vocab, merges)


def test_first_merge_most_frequent_pair():
    # "aaab" twice: pair (a,a) occurs 4 times, (a,b) twice.
    tok = make_tok(["aaab", "aaab"], extra_merges=1)
    assert tok.merges.merges == (("a", "a"),)


def test_zero_budget_gives_character_segmentation():
    tok = make_tok(["abcabc"], extra_merges=0)
    assert tok.merges.merges == ()
    assert tok.segment("abc") == ["a", "b", "c"]


def test_training_deterministic():
    corpus = ["destAddr", "dest", "Addr", "destAddr", "dst"]
    a = train_segmenter(corpus, len(SPECIALS) + 40, SPECIALS)
    b = train_segmenter(corpus, len(SPECIALS) + 40, SPECIALS)
    assert a == b


def test_tie_break_lexicographic():
    # Both pairs occur twice; ("a","b") sorts before ("c","d").
    tok = make_tok(["ab", "ab", "cd", "cd"], extra_merges=1)
    assert tok.merges.merges == (("a", "b"),)


def test_compound_function_name_segments():
    corpus = ["my"] * 50 + ["str"] * 50 + ["copy"] * 50 + ["mystrcopy"] * 2
    tok = make_tok(corpus, extra_merges=6)
    assert tok.segment("mystrcopy") == ["my", "str", "copy"]


def test_compound_identifier_segments():
    corpus = ["dest"] * 50 + ["Addr"] * 50 + ["destAddr"] * 2
    tok = make_tok(corpus, extra_merges=6)
    assert tok.segment("destAddr") == ["dest", "Addr"]
    ids = tok.encode("destAddr")
    assert tok.decode(ids) == "destAddr"


def test_placeholder_is_single_special_id():
    tok = make_tok(["abc"], extra_merges=0)
    ids = tok.encode("VAR1", kind="placeholder")
    assert ids == [tok.vocab.placeholder_id(1)]
    assert tok.decode(ids) == "VAR1"


def test_reserved_name_is_single_special_id():
    tok = make_tok(["result", "resultant"], extra_merges=4)
    ids = tok.encode("result", kind="reserved")
    assert len(ids) == 1
    assert tok.vocab.is_special("result")
    assert tok.decode(ids) == "result"


def test_unregistered_placeholder_errors():
    tok = make_tok(["abc"], extra_merges=0)
    with pytest.raises(SubtokError, match="VAR999"):
        tok.encode("VAR999", kind="placeholder")


def test_decode_concatenates():
    tok = make_tok(["dest"] * 5 + ["Addr"] * 5, extra_merges=6)
    ids = tok.encode("dest") + tok.encode("Addr")
    assert tok.decode(ids) == "destAddr"


def test_decode_specials_verbatim():
    tok = make_tok(["abc"], extra_merges=0)
    assert tok.decode([tok.vocab.keep_id]) == KEEP_NAME
    assert tok.decode([tok.vocab.end_name_id]) == END_OF_NAME


def test_decode_unknown_id_errors():
    tok = make_tok(["abc"], extra_merges=0)
    with pytest.raises(SubtokError, match="unknown subtoken id"):
        tok.decode([10_000])


def test_empty_corpus_errors():
    with pytest.raises(SubtokError, match="empty"):
        train_segmenter([], 4096, SPECIALS)


def test_vocab_budget_too_small_errors():
    with pytest.raises(SubtokError, match="vocab_size"):
        train_segmenter(["abc"], 3, SPECIALS)


def test_round_trip_bulk():
    pool = ["len", "size", "buf", "destAddr", "srcAddr", "count", "fd", "value"]
    tok = make_tok(pool * 10, extra_merges=30)
    alphabet = sorted({ch for word in pool for ch in word})
    rng = random.Random(13)
    for _ in range(10_000):
        word = "".join(rng.choice(alphabet) for _ in range(rng.randrange(1, 12)))
        assert tok.decode(tok.encode(word)) == word


@given(st.text(alphabet="alphbetgm_", min_size=1, max_size=24))
@settings(max_examples=200, deadline=None)
def test_round_trip_property(word):
    # Identity holds for any text over the training alphabet.
    tok = make_tok(["alpha_beta", "beta_gamma", "gamma_alpha"] * 3, extra_merges=12)
    assert tok.decode(tok.encode(word)) == word


def test_unknown_characters_become_unk():
    tok = make_tok(["abc"], extra_merges=0)
    ids = tok.encode("aXb")
    assert ids[1] == tok.vocab.unk_id
    assert tok.decode(ids) == "a<unk>b"


def test_segment_count_monotone_in_vocab_size():
    corpus = ["destination"] * 20 + ["destAddr"] * 10 + ["address"] * 15
    tokens = ["destination", "address", "destAddr", "dress", "nation"]
    sizes = [0, 2, 4, 8, 16, 24]
    previous = {t: None for t in tokens}
    for extra in sizes:
        tok = make_tok(corpus, extra_merges=extra)
        for t in tokens:
            count = len(tok.encode(t))
            if previous[t] is not None:
                assert count <= previous[t]
            previous[t] = count


def test_merges_never_produce_specials():
    # After merging "/i" and "/i>", the pair ("<", "/i>") would assemble the
    # control token's exact text; the trainer must pick something else.
    corpus = ["z</i>"] * 50
    tok = make_tok(corpus, extra_merges=10)
    produced = {l + r for l, r in tok.merges.merges}
    assert END_OF_NAME not in produced
    assert tok.segment("</i>") != [END_OF_NAME]
    # The code-kind encoding of the raw text never yields the special id.
    assert tok.vocab.end_name_id not in tok.encode("</i>")


def test_save_load_round_trip(tmp_path):
    tok = make_tok(["dest"] * 5 + ["Addr"] * 5, extra_merges=6)
    path = tmp_path / "tok.json"
    tok.save(str(path))
    again = Subtokenizer.load(str(path))
    assert again.vocab == tok.vocab
    assert again.merges == tok.merges
    assert again.encode("destAddr") == tok.encode("destAddr")
