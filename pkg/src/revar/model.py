"""Neural renamer: lexical bi-LSTM encoder, gated-graph structural encoder,
representation combiner, and an attention decoder with beam search.

Both encoders emit a representation per code element (subtoken position or
AST node) and one per identifier. The decoder walks identifiers in
placeholder order (pre-order first mention) and emits each name as a
sequence of subtokens closed by `</i>`, or the single token `</identity>`
to keep the decompiler's own name.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import neuro
from .alignment import CorpusEntry
from .astcore import KIND_CODE, KIND_PLACEHOLDER, KIND_RESERVED, SYNTAX_TAGS
from .codegraph import ALL_EDGE_TYPES, SUPERNODE_TAG, CodeGraph, build_graph
from .neuro import (
    GruParams,
    LstmParams,
    Tape,
    Tensor,
    add,
    concat,
    embed,
    gather_rows,
    gru_cell,
    log_softmax,
    lstm_cell,
    matmul,
    mean_pool,
    mul,
    narrow,
    neg,
    reshape,
    scale,
    segment_sum,
    sigmoid,
    softmax,
    stack_rows,
    sub,
    sum_all,
    tanh,
)
from .subtok import Subtokenizer

MAX_NAME_SUBTOKENS = 16


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 128
    encoder_hidden: int = 128
    decoder_hidden: int = 256
    recurrent_layers: int = 2
    ggnn_steps: int = 8
    beam_width: int = 5
    epochs: int = 60
    intermediate_weight: float = 0.1
    use_lexical: bool = True
    use_structural: bool = True

    def __post_init__(self):
        for name in (
            "embed_dim",
            "encoder_hidden",
            "decoder_hidden",
            "recurrent_layers",
            "beam_width",
            "epochs",
            "intermediate_weight",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"ModelConfig.{name} must be positive")
        if self.ggnn_steps < 0:
            raise ValueError("ModelConfig.ggnn_steps must be non-negative")
        if not (self.use_lexical or self.use_structural):
            raise ValueError("at least one encoder must be enabled")


@dataclass
class EncoderOutput:
    """Per-element and per-identifier representations from one encoder or
    from the combination step. `element_order` fixes the attention memory
    layout; `element_matrices` carry the stacked element rows per origin."""

    element_reps: dict
    identifier_reps: dict[int, Tensor]
    element_order: tuple
    element_matrices: tuple[tuple[str, Tensor], ...]


@dataclass(frozen=True)
class GoldName:
    placeholder: int
    ids: tuple[int, ...]
    intermediate: bool


@dataclass(frozen=True)
class NamePrediction:
    placeholder: int
    token_ids: tuple[int, ...]
    name: str
    keep: bool
    score: float


@dataclass
class PreparedEntry:
    """Parameter-independent arrays cached per corpus entry."""

    entry: CorpusEntry
    sub_ids: np.ndarray
    mention_positions: dict[int, np.ndarray]
    identifiers: tuple[int, ...]
    graph: CodeGraph
    vtype_ids: np.ndarray
    dtype_flat: np.ndarray
    dtype_seg: np.ndarray
    dtype_inv: np.ndarray
    name_flat: np.ndarray
    name_seg: np.ndarray
    name_inv: np.ndarray
    edges: dict
    msg_inv: np.ndarray
    gold: tuple[GoldName, ...]
    body_key: str


@dataclass
class _Hyp:
    ids: tuple[int, ...]
    score: float
    h: Tensor
    c: Tensor
    y_prev: int


class NamePredictor:
    """The full renaming model over a fixed subtokenizer."""

    def __init__(
        self,
        config: ModelConfig,
        subtokenizer: Subtokenizer,
        syntax_tags: Sequence[str] = SYNTAX_TAGS,
        seed: int = 0,
    ):
        self.config = config
        self.subtok = subtokenizer
        self.syntax_tags = tuple(syntax_tags)
        self._tag_index = {tag: i for i, tag in enumerate(self.syntax_tags)}
        self._tag_index[SUPERNODE_TAG] = len(self.syntax_tags)
        self.tape = Tape(seed)
        self._build_params()

    # -- parameters ---------------------------------------------------------

    def _build_params(self) -> None:
        cfg = self.config
        E, H, S = cfg.embed_dim, cfg.encoder_hidden, cfg.decoder_hidden
        A = 2 * H  # attention memory width
        C = 2 * H  # combined identifier width
        V = len(self.subtok.vocab)
        p = self.tape.param
        p("emb.sub", (V, E))
        p("emb.type", (len(self.syntax_tags) + 1, E))
        if cfg.use_lexical:
            for layer in range(cfg.recurrent_layers):
                inp = E if layer == 0 else 2 * H
                for d in ("fwd", "bwd"):
                    p(f"lex.l{layer}.{d}.w", (inp + H, 4 * H))
                    p(f"lex.l{layer}.{d}.b", (4 * H,))
        if cfg.use_structural:
            p("str.init.w", (3 * E, H))
            p("str.init.b", (H,))
            for layer in range(cfg.recurrent_layers):
                for etype in ALL_EDGE_TYPES:
                    p(f"str.l{layer}.msg.{etype.value}", (H, H))
                p(f"str.l{layer}.gru.wg", (2 * H, 2 * H))
                p(f"str.l{layer}.gru.bg", (2 * H,))
                p(f"str.l{layer}.gru.wx", (H, H))
                p(f"str.l{layer}.gru.wh", (H, H))
                p(f"str.l{layer}.gru.bh", (H,))
        cmb_in = (2 * H if cfg.use_lexical else 0) + (H if cfg.use_structural else 0)
        p("cmb.w", (cmb_in, C))
        p("cmb.b", (C,))
        if cfg.use_lexical:
            p("attn.mem.lex", (2 * H, A))
        if cfg.use_structural:
            p("attn.mem.str", (H, A))
        p("attn.w", (S, A))
        p("dec.init.w", (C, 2 * S))
        p("dec.init.b", (2 * S,))
        p("dec.lstm.w", (E + C + A + S, 4 * S))
        p("dec.lstm.b", (4 * S,))
        p("dec.blend.w", (S + A, E))
        p("dec.blend.b", (E,))

    def _lex_params(self, layer: int, direction: str) -> LstmParams:
        P = self.tape.params
        return LstmParams(P[f"lex.l{layer}.{direction}.w"], P[f"lex.l{layer}.{direction}.b"])

    def _gru_params(self, layer: int) -> GruParams:
        P = self.tape.params
        return GruParams(
            P[f"str.l{layer}.gru.wg"],
            P[f"str.l{layer}.gru.bg"],
            P[f"str.l{layer}.gru.wx"],
            P[f"str.l{layer}.gru.wh"],
            P[f"str.l{layer}.gru.bh"],
        )

    def _dec_params(self) -> LstmParams:
        P = self.tape.params
        return LstmParams(P["dec.lstm.w"], P["dec.lstm.b"])

    # -- entry preparation ---------------------------------------------------

    def prepare(self, entry: CorpusEntry) -> PreparedEntry:
        """Precompute all parameter-independent arrays for one entry."""
        sub_ids: list[int] = []
        mention_positions: dict[int, list[int]] = {}
        for text, kind in entry.tokens.tokens:
            if kind == KIND_PLACEHOLDER:
                k = int(text[3:])
                mention_positions.setdefault(k, []).append(len(sub_ids))
                sub_ids.append(self.subtok.vocab.placeholder_id(k))
            else:
                sub_ids.extend(self.subtok.encode(text, kind))
        identifiers = tuple(sorted(entry.table.entries))

        graph = build_graph(entry.ast)
        n_vertices = len(graph.vertices)
        vtype_ids = np.empty(n_vertices, dtype=np.int64)
        dtype_flat: list[int] = []
        dtype_seg: list[int] = []
        name_flat: list[int] = []
        name_seg: list[int] = []
        for vertex in graph.vertices:
            try:
                vtype_ids[vertex.index] = self._tag_index[vertex.tag]
            except KeyError:
                raise ValueError(f"syntactic tag '{vertex.tag}' not in model registry") from None
            if vertex.data_type:
                for word in vertex.data_type.split():
                    for sid in self.subtok.encode(word, KIND_CODE):
                        dtype_flat.append(sid)
                        dtype_seg.append(vertex.index)
            if vertex.name:
                if vertex.placeholder is not None:
                    name_ids = [self.subtok.vocab.placeholder_id(vertex.placeholder)]
                elif vertex.tag == "var":
                    k = _placeholder_num(vertex.name)
                    if k is not None:
                        name_ids = [self.subtok.vocab.placeholder_id(k)]
                    else:
                        name_ids = self.subtok.encode(vertex.name, KIND_CODE)
                else:
                    name_ids = self.subtok.encode(vertex.name, KIND_CODE)
                for sid in name_ids:
                    name_flat.append(sid)
                    name_seg.append(vertex.index)

        def inv_counts(seg: list[int]) -> np.ndarray:
            counts = np.bincount(np.asarray(seg, dtype=np.int64), minlength=n_vertices)
            inv = np.zeros((n_vertices, 1))
            nz = counts > 0
            inv[nz, 0] = 1.0 / counts[nz]
            return inv

        edges = {}
        incoming = np.zeros(n_vertices, dtype=np.int64)
        for etype in ALL_EDGE_TYPES:
            pairs = graph.edges.get(etype, ())
            if pairs:
                src = np.asarray([s for s, _ in pairs], dtype=np.int64)
                dst = np.asarray([d for _, d in pairs], dtype=np.int64)
                edges[etype] = (src, dst)
                np.add.at(incoming, dst, 1)
        msg_inv = np.zeros((n_vertices, 1))
        nz = incoming > 0
        msg_inv[nz, 0] = 1.0 / incoming[nz]

        gold = self.gold_for_entry(entry)
        body_key = json.dumps(entry.tokens.to_json(), separators=(",", ":"))
        return PreparedEntry(
            entry=entry,
            sub_ids=np.asarray(sub_ids, dtype=np.int64),
            mention_positions={k: np.asarray(v, dtype=np.int64) for k, v in mention_positions.items()},
            identifiers=identifiers,
            graph=graph,
            vtype_ids=vtype_ids,
            dtype_flat=np.asarray(dtype_flat, dtype=np.int64),
            dtype_seg=np.asarray(dtype_seg, dtype=np.int64),
            dtype_inv=inv_counts(dtype_seg),
            name_flat=np.asarray(name_flat, dtype=np.int64),
            name_seg=np.asarray(name_seg, dtype=np.int64),
            name_inv=inv_counts(name_seg),
            edges=edges,
            msg_inv=msg_inv,
            gold=gold,
            body_key=body_key,
        )

    def gold_for_entry(self, entry: CorpusEntry) -> tuple[GoldName, ...]:
        """Teacher sequences: developer-name subtokens closed by `</i>`, or
        the single `</identity>` token for unnamed temporaries."""
        vocab = self.subtok.vocab
        gold = []
        for k in sorted(entry.table.entries):
            dev = entry.table.entries[k].developer_name
            if dev is None:
                gold.append(GoldName(k, (vocab.keep_id,), True))
            else:
                ids = self.subtok.encode(dev, KIND_CODE)
                if len(ids) > MAX_NAME_SUBTOKENS:
                    ids = ids[:MAX_NAME_SUBTOKENS]
                gold.append(GoldName(k, tuple(ids) + (vocab.end_name_id,), False))
        return tuple(gold)

    # -- encoders -------------------------------------------------------------

    def encode_lexical(self, prep: PreparedEntry) -> EncoderOutput:
        """Two-layer bidirectional LSTM; element rep per subtoken position is
        [forward : backward] of the top layer, identifier rep is the mean of
        its mention positions."""
        cfg = self.config
        n = len(prep.sub_ids)
        if n == 0:
            raise ValueError("empty token stream")
        H = cfg.encoder_hidden
        table = self.tape.params["emb.sub"]
        x0 = embed(table, prep.sub_ids)  # (n, E)
        rows: list[Tensor] = [reshape(narrow(x0, 0, t, 1), (x0.shape[1],)) for t in range(n)]

        for layer in range(cfg.recurrent_layers):
            zero = Tensor(np.zeros(H))
            fwd_p = self._lex_params(layer, "fwd")
            bwd_p = self._lex_params(layer, "bwd")
            fwd_states: list[Tensor] = []
            h, c = zero, zero
            for t in range(n):
                h, c = lstm_cell(rows[t], h, c, fwd_p)
                fwd_states.append(h)
            bwd_states: list[Tensor] = [zero] * n
            h, c = zero, zero
            for t in range(n - 1, -1, -1):
                h, c = lstm_cell(rows[t], h, c, bwd_p)
                bwd_states[t] = h
            rows = [concat([fwd_states[t], bwd_states[t]], axis=-1) for t in range(n)]

        matrix = stack_rows(rows)  # (n, 2H)
        element_reps = {pos: rows[pos] for pos in range(n)}
        identifier_reps = {
            k: mean_pool(gather_rows(matrix, positions))
            for k, positions in sorted(prep.mention_positions.items())
        }
        return EncoderOutput(
            element_reps=element_reps,
            identifier_reps=identifier_reps,
            element_order=tuple(range(n)),
            element_matrices=(("lex", matrix),),
        )

    def encode_structural(self, prep: PreparedEntry) -> EncoderOutput:
        """Gated-graph encoder. Initial vertex states project the syntactic
        type, mean data-type, and mean name embeddings; states then evolve for
        `ggnn_steps` rounds of per-edge-type messages, mean-pooled and fed to
        a GRU. Identifier reps are the final supernode states."""
        cfg = self.config
        P = self.tape.params
        graph = prep.graph
        n_vertices = len(graph.vertices)
        table = P["emb.sub"]

        type_emb = embed(P["emb.type"], prep.vtype_ids)
        dtype_emb = self._segment_mean(table, prep.dtype_flat, prep.dtype_seg, prep.dtype_inv, n_vertices)
        name_emb = self._segment_mean(table, prep.name_flat, prep.name_seg, prep.name_inv, n_vertices)
        x = concat([type_emb, dtype_emb, name_emb], axis=-1)
        h = add(matmul(x, P["str.init.w"]), P["str.init.b"])  # (V, H)

        for layer in range(cfg.recurrent_layers):
            gru = self._gru_params(layer)
            weights = {etype: P[f"str.l{layer}.msg.{etype.value}"] for etype in ALL_EDGE_TYPES}
            for _ in range(cfg.ggnn_steps):
                messages = []
                targets = []
                for etype in ALL_EDGE_TYPES:
                    pair = prep.edges.get(etype)
                    if pair is None:
                        continue
                    src, dst = pair
                    messages.append(matmul(gather_rows(h, src), weights[etype]))
                    targets.append(dst)
                if messages:
                    stacked = concat(messages, axis=0) if len(messages) > 1 else messages[0]
                    pooled = scale(
                        segment_sum(stacked, np.concatenate(targets), n_vertices),
                        prep.msg_inv,
                    )
                else:
                    pooled = Tensor(np.zeros_like(h.data))
                h = gru_cell(pooled, h, gru)

        n_nodes = graph.n_ast_nodes
        node_matrix = narrow(h, 0, 0, n_nodes)
        order = []
        element_reps = {}
        for vertex in graph.vertices[:n_nodes]:
            node_id = vertex.node_id
            element_reps[node_id] = reshape(narrow(h, 0, vertex.index, 1), (h.shape[1],))
            order.append(node_id)
        identifier_reps = {
            k: reshape(narrow(h, 0, sv, 1), (h.shape[1],))
            for k, sv in sorted(graph.identifier_supernode.items())
        }
        return EncoderOutput(
            element_reps=element_reps,
            identifier_reps=identifier_reps,
            element_order=tuple(order),
            element_matrices=(("str", node_matrix),),
        )

    def _segment_mean(self, table, flat, seg, inv, n_vertices) -> Tensor:
        if len(flat) == 0:
            return Tensor(np.zeros((n_vertices, self.config.embed_dim)))
        return scale(segment_sum(embed(table, flat), seg, n_vertices), inv)

    def combine(self, lex: EncoderOutput | None, structural: EncoderOutput | None) -> EncoderOutput:
        """Union the element representations and merge each identifier's
        lexical and structural representations through a linear layer."""
        P = self.tape.params
        present = [e for e in (lex, structural) if e is not None]
        if not present:
            raise ValueError("combine requires at least one encoder output")
        keys = None
        for enc in present:
            enc_keys = set(enc.identifier_reps)
            if keys is None:
                keys = enc_keys
            elif enc_keys != keys:
                raise ValueError(
                    f"identifier key mismatch: {sorted(keys)} vs {sorted(enc_keys)}"
                )
        element_reps = {}
        order = []
        matrices = []
        for origin, enc in (("lex", lex), ("str", structural)):
            if enc is None:
                continue
            for key in enc.element_order:
                element_reps[(origin, key)] = enc.element_reps[key]
                order.append((origin, key))
            matrices.extend(enc.element_matrices)
        identifier_reps = {}
        for k in sorted(keys or ()):
            parts = [enc.identifier_reps[k] for enc in present]
            joined = concat(parts, axis=-1) if len(parts) > 1 else parts[0]
            identifier_reps[k] = add(matmul(joined, P["cmb.w"]), P["cmb.b"])
        return EncoderOutput(
            element_reps=element_reps,
            identifier_reps=identifier_reps,
            element_order=tuple(order),
            element_matrices=tuple(matrices),
        )

    def encode_entry(self, prep: PreparedEntry) -> EncoderOutput:
        lex = self.encode_lexical(prep) if self.config.use_lexical else None
        structural = self.encode_structural(prep) if self.config.use_structural else None
        return self.combine(lex, structural)

    # -- decoder --------------------------------------------------------------

    def _memory(self, enc: EncoderOutput) -> Tensor:
        P = self.tape.params
        parts = [
            matmul(matrix, P[f"attn.mem.{origin}"]) for origin, matrix in enc.element_matrices
        ]
        return concat(parts, axis=0) if len(parts) > 1 else parts[0]

    def _initial_state(self, enc: EncoderOutput) -> tuple[Tensor, Tensor]:
        P = self.tape.params
        S = self.config.decoder_hidden
        reps = [enc.identifier_reps[k] for k in sorted(enc.identifier_reps)]
        pooled = mean_pool(stack_rows(reps))
        hc = add(matmul(pooled, P["dec.init.w"]), P["dec.init.b"])
        return narrow(hc, -1, 0, S), narrow(hc, -1, S, S)

    def _step(self, y_prev: int, v_rep: Tensor, h: Tensor, c: Tensor, memory: Tensor):
        """One decoder step. The attention context is queried with the
        incoming state, feeds the LSTM input, and is blended with the new
        state before the output projection."""
        P = self.tape.params
        E = self.config.embed_dim
        query = matmul(h, P["attn.w"])  # (A,)
        scores = matmul(memory, query)  # (m,)
        probs = softmax(scores)
        context = matmul(probs, memory)  # (A,)
        y_emb = reshape(embed(P["emb.sub"], [y_prev]), (E,))
        x = concat([y_emb, v_rep, context], axis=-1)
        h2, c2 = lstm_cell(x, h, c, self._dec_params())
        blended = add(matmul(concat([h2, context], axis=-1), P["dec.blend.w"]), P["dec.blend.b"])
        logits = matmul(P["emb.sub"], blended)  # (V,), tied with the embedding
        return h2, c2, logits, probs

    def decode_loss(
        self,
        enc: EncoderOutput,
        gold: Sequence[GoldName],
        attention_sink: list | None = None,
    ) -> Tensor:
        """Teacher-forced negative log-likelihood, down-weighting subtokens
        of unnamed temporaries by the configured intermediate weight."""
        if not gold:
            return Tensor(0.0)
        vocab_size = len(self.subtok.vocab)
        memory = self._memory(enc)
        h, c = self._initial_state(enc)
        y_prev = self.subtok.vocab.start_id
        picked = []
        weights = []
        for name in gold:
            v_rep = enc.identifier_reps[name.placeholder]
            w = self.config.intermediate_weight if name.intermediate else 1.0
            for target in name.ids:
                if not 0 <= target < vocab_size:
                    raise ValueError(f"gold token id {target} outside vocabulary")
                h, c, logits, probs = self._step(y_prev, v_rep, h, c, memory)
                if attention_sink is not None:
                    attention_sink.append(probs.data.copy())
                picked.append(narrow(log_softmax(logits), 0, target, 1))
                weights.append(w)
                y_prev = target
        weighted = scale(concat(picked, axis=0), np.asarray(weights))
        return neg(sum_all(weighted))

    def greedy_decode(self, enc: EncoderOutput) -> list[NamePrediction]:
        """Argmax decoding; equivalent to beam_decode with width 1."""
        return self.beam_decode(enc, beam_width=1)

    def beam_decode(self, enc: EncoderOutput, beam_width: int | None = None) -> list[NamePrediction]:
        """Width-k beam over subtokens, identifier by identifier. Hypotheses
        close at `</i>`, at `</identity>`, or at the per-name length cap;
        score is the sum of log-probabilities with ties broken by the
        earlier lexicographic token-id sequence."""
        k_width = beam_width or self.config.beam_width
        if k_width < 1:
            raise ValueError("beam width must be >= 1")
        vocab = self.subtok.vocab
        if not enc.identifier_reps:
            return []
        memory = self._memory(enc)
        h, c = self._initial_state(enc)
        y_prev = vocab.start_id
        out: list[NamePrediction] = []
        arange = np.arange(len(vocab))
        for placeholder in sorted(enc.identifier_reps):
            v_rep = enc.identifier_reps[placeholder]
            active = [_Hyp((), 0.0, h, c, y_prev)]
            finished: list[_Hyp] = []
            while active:
                candidates: list[_Hyp] = []
                for hyp in active:
                    h2, c2, logits, _ = self._step(hyp.y_prev, v_rep, hyp.h, hyp.c, memory)
                    logp = log_softmax(logits).data
                    top = np.lexsort((arange, -logp))[:k_width]
                    for tid in top:
                        tid = int(tid)
                        candidates.append(
                            _Hyp(hyp.ids + (tid,), hyp.score + float(logp[tid]), h2, c2, tid)
                        )
                candidates.sort(key=lambda hyp: (-hyp.score, hyp.ids))
                active = []
                for hyp in candidates[:k_width]:
                    last = hyp.ids[-1]
                    content = len(hyp.ids) - (1 if last in (vocab.end_name_id, vocab.keep_id) else 0)
                    if last in (vocab.end_name_id, vocab.keep_id) or content >= MAX_NAME_SUBTOKENS:
                        finished.append(hyp)
                    else:
                        active.append(hyp)
            best = min(finished, key=lambda hyp: (-hyp.score, hyp.ids))
            keep = best.ids == (vocab.keep_id,)
            content_ids = tuple(
                tid for tid in best.ids if tid not in (vocab.end_name_id, vocab.keep_id)
            )
            out.append(
                NamePrediction(
                    placeholder=placeholder,
                    token_ids=content_ids,
                    name="" if keep else self.subtok.decode(content_ids),
                    keep=keep,
                    score=best.score,
                )
            )
            h, c, y_prev = best.h, best.c, best.ids[-1]
        return out

    def predict_entry(self, prep: PreparedEntry, beam_width: int | None = None) -> list[NamePrediction]:
        with neuro.no_grad():
            enc = self.encode_entry(prep)
            return self.beam_decode(enc, beam_width)

    # -- persistence ------------------------------------------------------------

    def save(self, path: str) -> None:
        neuro.save_checkpoint(
            self.tape.params,
            path,
            extra={
                "config": asdict(self.config),
                "tokenizer": self.subtok.to_json(),
                "syntax_tags": list(self.syntax_tags),
            },
        )

    @classmethod
    def load(cls, path: str) -> "NamePredictor":
        params, extra = neuro.load_checkpoint(path)
        if "config" not in extra or "tokenizer" not in extra:
            raise ValueError(f"'{path}' is a bare parameter checkpoint, not a model bundle")
        config = ModelConfig(**extra["config"])
        subtokenizer = Subtokenizer.from_json(extra["tokenizer"])
        model = cls(config, subtokenizer, syntax_tags=tuple(extra["syntax_tags"]))
        emb = params.get("emb.sub")
        if emb is None or emb.shape[0] != len(subtokenizer.vocab):
            size = None if emb is None else emb.shape[0]
            raise ValueError(
                f"vocabulary mismatch: checkpoint embeds {size} entries, "
                f"tokenizer has {len(subtokenizer.vocab)}"
            )
        model.tape.load_state(params)
        return model


def _placeholder_num(name: str) -> int | None:
    if name.startswith("VAR") and name[3:].isdigit():
        return int(name[3:])
    return None
