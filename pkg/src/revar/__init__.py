"""Variable-name recovery for decompiled code.

Submodules:
  astcore    decompiler AST model, serialization, traversal, rendering
  alignment  offset-signature alignment and corpus entries
  synth      synthetic paired-decompilation generator
  subtok     frequency-merged subword segmentation
  codegraph  augmented typed graph over ASTs
  neuro      tensors, reverse-mode autodiff, recurrent cells, Adam
  model      dual-encoder attention renamer with beam search
  pipeline   splitting, training loop, evaluation metrics
"""

from .alignment import CorpusEntry, align, build_corpus_entry, insert_placeholders
from .astcore import Ast, AstNode, TokenStream, parse_ast, preorder, render_tokens, serialize_ast
from .codegraph import CodeGraph, EdgeType, build_graph
from .model import ModelConfig, NamePredictor
from .pipeline import PredictionReport, SplitSpec, TrainConfig, cer, evaluate, split, train
from .subtok import Subtokenizer, train_segmenter
from .synth import generate_corpus, generate_pair

__version__ = "0.1.0"

__all__ = [
    "Ast",
    "AstNode",
    "CodeGraph",
    "CorpusEntry",
    "EdgeType",
    "ModelConfig",
    "NamePredictor",
    "PredictionReport",
    "SplitSpec",
    "Subtokenizer",
    "TokenStream",
    "TrainConfig",
    "align",
    "build_corpus_entry",
    "build_graph",
    "cer",
    "evaluate",
    "generate_corpus",
    "generate_pair",
    "insert_placeholders",
    "parse_ast",
    "preorder",
    "render_tokens",
    "serialize_ast",
    "split",
    "train",
    "train_segmenter",
]
