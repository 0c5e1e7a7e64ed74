"""Dataset splitting, training loop, and the evaluation harness.

Splits assign whole binaries so binary-specific identifiers never span
train and test. Evaluation reports exact-match accuracy and character
error rate overall and per body-in-train partition; identifiers without
a developer name never enter the metric denominators.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import neuro
from .alignment import CorpusEntry
from .astcore import KIND_CODE
from .model import ModelConfig, NamePrediction, NamePredictor, PreparedEntry
from .neuro import Adam
from .subtok import Subtokenizer, build_specials, train_segmenter

BODY_IN_TRAIN = "body-in-train"
BODY_NOT_IN_TRAIN = "body-not-in-train"


# ---------------------------------------------------------------------------
# Metrics


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance at character granularity."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current[j] = min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost)
        previous = current
    return previous[-1]


def cer(gold: str, predicted: str) -> float:
    """Edit distance normalized by the length of the gold name."""
    if not gold:
        raise ValueError("cer: empty gold name")
    return levenshtein(gold, predicted) / len(gold)


# ---------------------------------------------------------------------------
# Splitting


@dataclass(frozen=True)
class SplitSpec:
    """Train/dev/test fractions; the unit of assignment is the binary."""

    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if any(f < 0 for f in self.fractions) or not math.isclose(sum(self.fractions), 1.0):
            raise ValueError(f"fractions must be non-negative and sum to 1: {self.fractions}")

    @classmethod
    def from_ratios(cls, text: str) -> "SplitSpec":
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"expected three comma-separated ratios, got '{text}'")
        total = sum(parts)
        return cls(tuple(p / total for p in parts))


def _binary_hash(binary_id: str, seed: int) -> int:
    digest = hashlib.sha256(f"{seed}:{binary_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def split(
    corpus: Sequence[CorpusEntry], spec: SplitSpec, seed: int
) -> tuple[list[CorpusEntry], list[CorpusEntry], list[CorpusEntry]]:
    """Deterministically split whole binaries by seeded hash order, with
    exact largest-remainder allocation of binary counts."""
    binaries = sorted({e.binary_id for e in corpus})
    positive = sum(1 for f in spec.fractions if f > 0)
    if len(binaries) < positive:
        raise ValueError(
            f"corpus has {len(binaries)} binaries but the split needs at least {positive}"
        )
    ordered = sorted(binaries, key=lambda b: (_binary_hash(b, seed), b))

    # Largest-remainder allocation of binary counts, then guarantee each
    # positive-fraction bucket at least one binary.
    n = len(ordered)
    quotas = [f * n for f in spec.fractions]
    counts = [math.floor(q) for q in quotas]
    leftovers = sorted(range(3), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in leftovers[: n - sum(counts)]:
        counts[i] += 1
    for i in range(3):
        while spec.fractions[i] > 0 and counts[i] == 0:
            donor = max(range(3), key=lambda j: counts[j])
            counts[donor] -= 1
            counts[i] += 1

    assignment: dict[str, int] = {}
    cursor = 0
    for bucket, count in enumerate(counts):
        for b in ordered[cursor : cursor + count]:
            assignment[b] = bucket
        cursor += count
    out: tuple[list[CorpusEntry], ...] = ([], [], [])
    for entry in corpus:
        out[assignment[entry.binary_id]].append(entry)
    return out


# ---------------------------------------------------------------------------
# Body-in-train partitioning


def body_key(entry: CorpusEntry) -> str:
    """Placeholder-normalized body: the rendered token stream itself."""
    return json.dumps(entry.tokens.to_json(), separators=(",", ":"))


def partition_body_in_train(
    test_corpus: Sequence[CorpusEntry], train_corpus: Sequence[CorpusEntry]
) -> list[str]:
    """Label each test entry by whether its body appears verbatim in training."""
    train_bodies = {body_key(e) for e in train_corpus}
    return [
        BODY_IN_TRAIN if body_key(e) in train_bodies else BODY_NOT_IN_TRAIN
        for e in test_corpus
    ]


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    batch_size: int = 16
    learning_rate: float = 1e-3
    grad_clip: float = 5.0
    seed: int = 0
    vocab_size: int = 4096
    max_placeholders: int = 64
    reserved_names: tuple[str, ...] = ("result",)
    sample_rate: float = 1.0

    @classmethod
    def from_json(cls, doc: Mapping) -> "TrainConfig":
        doc = dict(doc)
        model = ModelConfig(**doc.pop("model", {}))
        known = {k: v for k, v in doc.items() if k in cls.__dataclass_fields__}
        known.pop("model", None)
        if "reserved_names" in known:
            known["reserved_names"] = tuple(known["reserved_names"])
        return cls(model=model, **known)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    dev_loss: float
    updates: int


@dataclass
class TrainResult:
    model: NamePredictor
    history: list[EpochStats]
    best_epoch: int
    best_state: dict[str, np.ndarray]
    final_state: dict[str, np.ndarray]


def build_tokenizer(corpus: Iterable[CorpusEntry], config: TrainConfig) -> Subtokenizer:
    """Train the shared code/name subtokenizer on a corpus."""
    texts: list[str] = []
    for entry in corpus:
        for text, kind in entry.tokens.tokens:
            if kind == KIND_CODE:
                texts.append(text)
        texts.append(entry.ast.function_name)
        for node_entry in entry.table.entries.values():
            if node_entry.developer_name:
                texts.append(node_entry.developer_name)
        for node in _iter_dtypes(entry):
            texts.extend(node.split())
    specials = build_specials(config.max_placeholders, config.reserved_names)
    vocab, merges = train_segmenter(texts, config.vocab_size, specials)
    return Subtokenizer(vocab, merges)


def _iter_dtypes(entry: CorpusEntry):
    from .astcore import iter_nodes

    for node in iter_nodes(entry.ast.root):
        if node.data_type:
            yield node.data_type


def _corpus_loss(model: NamePredictor, prepared: Sequence[PreparedEntry]) -> float:
    """Mean per-entry loss without recording gradients."""
    if not prepared:
        return float("nan")
    total = 0.0
    with neuro.no_grad():
        for prep in prepared:
            enc = model.encode_entry(prep)
            total += model.decode_loss(enc, prep.gold).item()
    return total / len(prepared)


def subsample(corpus: Sequence[CorpusEntry], rate: float, seed: int) -> list[CorpusEntry]:
    """Deterministic fractional subsample (whole entries)."""
    if not 0 < rate <= 1:
        raise ValueError(f"sample rate must be in (0, 1], got {rate}")
    if rate == 1.0:
        return list(corpus)
    count = max(1, int(round(len(corpus) * rate)))
    rng = random.Random(seed * 7_919 + 13)
    picked = sorted(rng.sample(range(len(corpus)), count))
    return [corpus[i] for i in picked]


def train(
    train_corpus: Sequence[CorpusEntry],
    dev_corpus: Sequence[CorpusEntry],
    config: TrainConfig,
    tokenizer: Subtokenizer | None = None,
    progress: Callable[[EpochStats], None] | None = None,
) -> TrainResult:
    """Run minibatch Adam over the teacher-forced decoder loss.

    Keeps the best checkpoint by dev loss alongside the final one. Aborts
    with the offending batch id if the loss turns non-finite.
    """
    if not train_corpus or not dev_corpus:
        raise ValueError("train and dev corpora must be non-empty")
    if config.sample_rate != 1.0:
        train_corpus = subsample(train_corpus, config.sample_rate, config.seed)
    if tokenizer is None:
        tokenizer = build_tokenizer(train_corpus, config)
    model = NamePredictor(config.model, tokenizer, seed=config.seed)
    prepared = [model.prepare(e) for e in train_corpus]
    prepared_dev = [model.prepare(e) for e in dev_corpus]

    optimizer = Adam(
        model.tape,
        learning_rate=config.learning_rate,
        clip_norm=config.grad_clip,
    )
    rng = random.Random(config.seed)
    history: list[EpochStats] = []
    best_epoch = -1
    best_dev = float("inf")
    best_state: dict[str, np.ndarray] = model.tape.state_dict()

    for epoch in range(1, config.model.epochs + 1):
        order = list(range(len(prepared)))
        rng.shuffle(order)
        epoch_loss = 0.0
        updates = 0
        for start in range(0, len(order), config.batch_size):
            batch = [prepared[i] for i in order[start : start + config.batch_size]]
            model.tape.zero_grad()
            losses = []
            for prep in batch:
                enc = model.encode_entry(prep)
                losses.append(model.decode_loss(enc, prep.gold))
            total = losses[0]
            for other in losses[1:]:
                total = neuro.add(total, other)
            mean_loss = neuro.scale(total, 1.0 / len(batch))
            value = mean_loss.item()
            if not math.isfinite(value):
                raise RuntimeError(
                    f"loss diverged at batch epoch{epoch}/batch{start // config.batch_size}"
                )
            model.tape.backward(mean_loss)
            optimizer.step()
            epoch_loss += value * len(batch)
            updates += 1
        dev_loss = _corpus_loss(model, prepared_dev)
        stats = EpochStats(epoch, epoch_loss / len(prepared), dev_loss, updates)
        history.append(stats)
        if progress is not None:
            progress(stats)
        if dev_loss < best_dev:
            best_dev = dev_loss
            best_epoch = epoch
            best_state = model.tape.state_dict()

    return TrainResult(
        model=model,
        history=history,
        best_epoch=best_epoch,
        best_state=best_state,
        final_state=model.tape.state_dict(),
    )


# ---------------------------------------------------------------------------
# Evaluation


@dataclass(frozen=True)
class IdentifierRecord:
    binary_id: str
    function_id: str
    placeholder: int
    gold_name: str
    predicted_name: str
    keep: bool
    exact_match: bool
    cer: float
    partition: str


@dataclass
class PredictionReport:
    """Per-identifier outcomes plus aggregate rows mirroring the usual
    overall / body-in-train / body-not-in-train presentation. Predictions
    that keep the decompiler name are scored against that retained name."""

    records: list[IdentifierRecord]

    def aggregate(self, partition: str | None = None) -> dict:
        rows = [r for r in self.records if partition is None or r.partition == partition]
        if not rows:
            return {"count": 0, "accuracy": None, "cer": None}
        return {
            "count": len(rows),
            "accuracy": sum(r.exact_match for r in rows) / len(rows),
            "cer": sum(r.cer for r in rows) / len(rows),
        }

    def to_json(self) -> dict:
        return {
            "rows": {
                "overall": self.aggregate(),
                "body_in_train": self.aggregate(BODY_IN_TRAIN),
                "body_not_in_train": self.aggregate(BODY_NOT_IN_TRAIN),
            },
            "keep_scored_against_decompiler_name": True,
            "records": [
                {
                    "binary": r.binary_id,
                    "function": r.function_id,
                    "placeholder": r.placeholder,
                    "gold": r.gold_name,
                    "predicted": r.predicted_name,
                    "keep": r.keep,
                    "exact_match": r.exact_match,
                    "cer": r.cer,
                    "partition": r.partition,
                }
                for r in self.records
            ],
        }


def resolve_prediction(entry: CorpusEntry, prediction: NamePrediction) -> str:
    """The surface name a prediction assigns: keeping falls back to the
    decompiler's original name."""
    if prediction.keep:
        return entry.table.entries[prediction.placeholder].decompiler_name
    return prediction.name


def evaluate(
    model: NamePredictor,
    test_corpus: Sequence[CorpusEntry],
    train_corpus: Sequence[CorpusEntry],
    beam_width: int | None = None,
) -> PredictionReport:
    """Beam-decode every test entry and score identifiers that carry a
    developer name."""
    labels = partition_body_in_train(test_corpus, train_corpus)
    records: list[IdentifierRecord] = []
    for entry, label in zip(test_corpus, labels):
        prep = model.prepare(entry)
        predictions = model.predict_entry(prep, beam_width)
        for prediction in predictions:
            table_entry = entry.table.entries[prediction.placeholder]
            gold = table_entry.developer_name
            if gold is None:
                continue
            predicted = resolve_prediction(entry, prediction)
            records.append(
                IdentifierRecord(
                    binary_id=entry.binary_id,
                    function_id=entry.function_id,
                    placeholder=prediction.placeholder,
                    gold_name=gold,
                    predicted_name=predicted,
                    keep=prediction.keep,
                    exact_match=predicted == gold,
                    cer=cer(gold, predicted),
                    partition=label,
                )
            )
    return PredictionReport(records)
