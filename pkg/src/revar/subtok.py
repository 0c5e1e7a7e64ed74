"""Frequency-merged subword segmentation with special-token passthrough.

Identifier and code tokens are split into characters and rebuilt by a
learned table of pair merges, most frequent pair first. Placeholders,
reserved decompiler names, and control tokens are single vocabulary
entries that the merge machinery never touches.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .astcore import KIND_CODE, KIND_PLACEHOLDER, KIND_RESERVED

PAD = "<pad>"
UNK = "<unk>"
SEQ_START = "<s>"
END_OF_NAME = "</i>"
KEEP_NAME = "</identity>"

DEFAULT_MAX_PLACEHOLDERS = 64


def build_specials(
    max_placeholders: int = DEFAULT_MAX_PLACEHOLDERS,
    reserved: Sequence[str] = ("result",),
) -> tuple[str, ...]:
    """Special-token inventory, in vocabulary id order."""
    placeholders = tuple(f"VAR{k}" for k in range(1, max_placeholders + 1))
    return (PAD, UNK, SEQ_START, END_OF_NAME, KEEP_NAME) + placeholders + tuple(reserved)


class SubtokError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    """Bijective text <-> id map; specials occupy the low ids."""

    text_of: tuple[str, ...]
    specials: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "_id_of", {t: i for i, t in enumerate(self.text_of)})
        object.__setattr__(self, "_special_set", frozenset(self.specials))

    def __len__(self) -> int:
        return len(self.text_of)

    @property
    def id_of(self) -> dict[str, int]:
        return self._id_of  # type: ignore[attr-defined]

    def is_special(self, text: str) -> bool:
        return text in self._special_set  # type: ignore[attr-defined]

    @property
    def pad_id(self) -> int:
        return self.id_of[PAD]

    @property
    def unk_id(self) -> int:
        return self.id_of[UNK]

    @property
    def start_id(self) -> int:
        return self.id_of[SEQ_START]

    @property
    def end_name_id(self) -> int:
        return self.id_of[END_OF_NAME]

    @property
    def keep_id(self) -> int:
        return self.id_of[KEEP_NAME]

    def placeholder_id(self, k: int) -> int:
        try:
            return self.id_of[f"VAR{k}"]
        except KeyError:
            raise SubtokError(
                f"placeholder VAR{k} exceeds the registered placeholder budget"
            ) from None


@dataclass(frozen=True)
class MergeTable:
    """Ordered pair merges; applying them in order is deterministic."""

    merges: tuple[tuple[str, str], ...]


def train_segmenter(
    corpus: Iterable[str] | Mapping[str, int],
    vocab_size: int,
    specials: Sequence[str] | None = None,
) -> tuple[Vocabulary, MergeTable]:
    """Learn a merge table from token frequency statistics.

    Merges the most frequent adjacent symbol pair first, ties broken
    lexicographically by (left, right); stops at the vocabulary budget or
    when no pair repeats. Specials are excluded from merging and counted
    against `vocab_size`.
    """
    if specials is None:
        specials = build_specials()
    special_set = set(specials)

    counts: Counter[str] = (
        Counter(dict(corpus)) if isinstance(corpus, Mapping) else Counter(corpus)
    )
    counts = Counter({w: c for w, c in counts.items() if w and w not in special_set})
    if not counts:
        raise SubtokError("empty training corpus")

    alphabet = sorted({ch for word in counts for ch in word})
    floor = len(specials) + len(alphabet)
    if vocab_size < floor:
        raise SubtokError(
            f"vocab_size {vocab_size} below character inventory + specials ({floor})"
        )

    words: list[tuple[list[str], int]] = [(list(w), c) for w, c in sorted(counts.items())]
    merges: list[tuple[str, str]] = []
    merged_tokens: list[str] = []
    budget = vocab_size - floor

    while len(merges) < budget:
        pair_counts: Counter[tuple[str, str]] = Counter()
        for symbols, count in words:
            for i in range(len(symbols) - 1):
                pair_counts[(symbols[i], symbols[i + 1])] += count
        candidates = [
            (count, pair)
            for pair, count in pair_counts.items()
            if count >= 2 and (pair[0] + pair[1]) not in special_set
        ]
        if not candidates:
            break
        pair = min(candidates, key=lambda item: (-item[0], item[1]))[1]
        merges.append(pair)
        merged_tokens.append(pair[0] + pair[1])
        for symbols, _ in words:
            _apply_merge(symbols, pair)

    vocab = Vocabulary(tuple(specials) + tuple(alphabet) + tuple(merged_tokens), tuple(specials))
    return vocab, MergeTable(tuple(merges))


def _apply_merge(symbols: list[str], pair: tuple[str, str]) -> None:
    """Collapse occurrences of `pair` left to right, in place."""
    left, right = pair
    i = 0
    while i < len(symbols) - 1:
        if symbols[i] == left and symbols[i + 1] == right:
            symbols[i : i + 2] = [left + right]
        else:
            i += 1


@dataclass(frozen=True)
class Subtokenizer:
    """Trained vocabulary + merges with encode/decode and persistence."""

    vocab: Vocabulary
    merges: MergeTable

    def __post_init__(self):
        object.__setattr__(self, "_cache", {})

    def segment(self, text: str) -> list[str]:
        """Split plain text into learned subtoken strings."""
        symbols = list(text)
        for pair in self.merges.merges:
            if len(symbols) < 2:
                break
            _apply_merge(symbols, pair)
        return symbols

    def encode(self, token: str, kind: str = KIND_CODE) -> list[int]:
        """Encode one surface token; placeholders and reserved names map to
        their single special id and are never segmented."""
        if kind in (KIND_PLACEHOLDER, KIND_RESERVED):
            try:
                return [self.vocab.id_of[token]]
            except KeyError:
                raise SubtokError(f"'{token}' is not a registered special token") from None
        if kind != KIND_CODE:
            raise SubtokError(f"unknown token kind '{kind}'")
        cache = self._cache  # type: ignore[attr-defined]
        ids = cache.get(token)
        if ids is None:
            id_of = self.vocab.id_of
            unk = self.vocab.unk_id
            ids = [id_of.get(piece, unk) for piece in self.segment(token)]
            cache[token] = ids
        return list(ids)

    def decode(self, ids: Iterable[int]) -> str:
        """Concatenate subtoken texts; specials render verbatim."""
        texts = self.vocab.text_of
        out = []
        for i in ids:
            if not 0 <= i < len(texts):
                raise SubtokError(f"unknown subtoken id {i}")
            out.append(texts[i])
        return "".join(out)

    def to_json(self) -> dict:
        specials = self.vocab.specials
        return {
            "specials": list(specials),
            "merges": [[l, r] for l, r in self.merges.merges],
            "tokens": list(self.vocab.text_of[len(specials):]),
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "Subtokenizer":
        specials = tuple(doc["specials"])
        tokens = tuple(doc["tokens"])
        merges = MergeTable(tuple((l, r) for l, r in doc["merges"]))
        return cls(Vocabulary(specials + tokens, specials), merges)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, separators=(",", ":"))

    @classmethod
    def load(cls, path: str) -> "Subtokenizer":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))
