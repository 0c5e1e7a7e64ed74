"""Command-line entry points tying the pipeline together."""

from __future__ import annotations

import argparse
import json
import sys

from . import alignment, pipeline, synth
from .astcore import parse_ast
from .codegraph import build_graph, dump_edges
from .model import NamePredictor
from .pipeline import SplitSpec, TrainConfig
from .subtok import Subtokenizer, build_specials, train_segmenter


def _cmd_gen_corpus(args) -> int:
    entries = synth.generate_corpus(
        seed=args.seed,
        n_templates=args.templates,
        n_functions=args.functions,
        functions_per_binary=args.per_binary,
    )
    count = alignment.write_corpus(entries, args.out)
    print(f"wrote {count} entries to {args.out}")
    return 0


def _cmd_align(args) -> int:
    with open(args.stripped, "r", encoding="utf-8") as fh:
        stripped = parse_ast(fh.read())
    with open(args.debug, "r", encoding="utf-8") as fh:
        debug = parse_ast(fh.read())
    result = alignment.align(stripped, debug)
    doc = {
        "mapping": dict(sorted(result.mapping.items())),
        "skipped": sorted(result.skipped),
        "temporaries": sorted(result.temporaries(stripped)),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"aligned {len(doc['mapping'])} variables, skipped {len(doc['skipped'])}")
    return 0


def _cmd_bpe_train(args) -> int:
    corpus = alignment.read_corpus(args.corpus)
    config = TrainConfig(vocab_size=args.vocab_size)
    tokenizer = pipeline.build_tokenizer(corpus, config)
    tokenizer.save(args.out)
    print(f"vocabulary of {len(tokenizer.vocab)} subtokens -> {args.out}")
    return 0


def _cmd_build_graph(args) -> int:
    with open(args.entry, "r", encoding="utf-8") as fh:
        first_line = fh.readline()
    entry = alignment.entry_from_json(json.loads(first_line))
    graph = build_graph(entry.ast)
    count = dump_edges(graph, args.out)
    print(f"{len(graph.vertices)} vertices, {count} directed edges -> {args.out}")
    return 0


def _cmd_split(args) -> int:
    corpus = alignment.read_corpus(args.corpus)
    spec = SplitSpec.from_ratios(args.ratios)
    train, dev, test = pipeline.split(corpus, spec, args.seed)
    prefix = args.out_prefix or args.corpus
    for part, name in ((train, "train"), (dev, "dev"), (test, "test")):
        path = f"{prefix}.{name}.jsonl"
        alignment.write_corpus(part, path)
        print(f"{name}: {len(part)} functions -> {path}")
    return 0


def _cmd_train(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    config = TrainConfig.from_json(doc)
    train_corpus = alignment.read_corpus(doc["train_corpus"])
    dev_corpus = alignment.read_corpus(doc["dev_corpus"])
    out_prefix = doc.get("out_prefix", "model")

    def progress(stats):
        print(
            f"epoch {stats.epoch:3d} train {stats.train_loss:9.4f} dev {stats.dev_loss:9.4f}",
            flush=True,
        )

    result = pipeline.train(train_corpus, dev_corpus, config, progress=progress)
    final_path = f"{out_prefix}.final.json"
    best_path = f"{out_prefix}.best.json"
    result.model.save(final_path)
    result.model.tape.load_state(result.best_state)
    result.model.save(best_path)
    result.model.tape.load_state(result.final_state)
    log_path = f"{out_prefix}.log.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        for stats in result.history:
            fh.write(
                json.dumps(
                    {
                        "epoch": stats.epoch,
                        "train_loss": stats.train_loss,
                        "dev_loss": stats.dev_loss,
                        "updates": stats.updates,
                    }
                )
            )
            fh.write("\n")
    print(f"best epoch {result.best_epoch} -> {best_path}; final -> {final_path}")
    return 0


def _cmd_eval(args) -> int:
    model = NamePredictor.load(args.model)
    test_corpus = alignment.read_corpus(args.test)
    train_corpus = alignment.read_corpus(args.train)
    report = pipeline.evaluate(model, test_corpus, train_corpus, beam_width=args.beam)
    doc = report.to_json()
    with open(args.report, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    for row, values in doc["rows"].items():
        if values["accuracy"] is None:
            print(f"{row:20s} (empty)")
        else:
            print(
                f"{row:20s} acc {values['accuracy'] * 100:6.2f}%  "
                f"cer {values['cer'] * 100:6.2f}  n={values['count']}"
            )
    return 0


def _cmd_predict(args) -> int:
    model = NamePredictor.load(args.model)
    with open(args.entry, "r", encoding="utf-8") as fh:
        entry = alignment.entry_from_json(json.loads(fh.readline()))
    prep = model.prepare(entry)
    for prediction in model.predict_entry(prep, args.beam):
        name = pipeline.resolve_prediction(entry, prediction)
        print(
            json.dumps(
                {
                    "placeholder": prediction.placeholder,
                    "name": name,
                    "keep": prediction.keep,
                    "score": prediction.score,
                }
            )
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="revar", description="Variable-name recovery for decompiled code"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic aligned corpus")
    p.add_argument("--templates", type=int, default=synth.TEMPLATE_COUNT)
    p.add_argument("--functions", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-binary", type=int, default=synth.FUNCTIONS_PER_BINARY)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_corpus)

    p = sub.add_parser("align", help="align variables of two decompilations")
    p.add_argument("--stripped", required=True)
    p.add_argument("--debug", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("bpe-train", help="train the subword segmenter")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab-size", type=int, default=4096)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_bpe_train)

    p = sub.add_parser("build-graph", help="dump the augmented graph of an entry")
    p.add_argument("--entry", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_graph)

    p = sub.add_parser("split", help="split a corpus per binary")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ratios", default="80,10,10")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a test corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--beam", type=int, default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("predict", help="predict names for one corpus entry")
    p.add_argument("--model", required=True)
    p.add_argument("--entry", required=True)
    p.add_argument("--beam", type=int, default=None)
    p.set_defaults(func=_cmd_predict)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
