"""Neural code search over code semantic representation graphs.

The pipeline: tokenize a code/docstring corpus (:mod:`cssam.corpus`), build a
compact semantic graph per snippet (:mod:`cssam.graph`), pretrain token and
node embeddings (:mod:`cssam.pretrain`), train a dual-tower matcher
(:mod:`cssam.model`, :mod:`cssam.train`), then rank candidates for natural
language queries (:mod:`cssam.retrieval`) and score the ranker
(:mod:`cssam.evaluation`). :mod:`cssam.cli` ties the stages together.

Submodules are imported on first attribute access so that ``cssam.cli`` can
pin BLAS thread counts before numpy ever loads.
"""

from .errors import (
    CheckpointError,
    ConfigError,
    CorpusError,
    CssamError,
    EvalError,
    GraphError,
    ModelError,
    ParseError,
    TrainError,
)

__version__ = "0.1.0"

_EXPORTS = {
    # corpus
    "CodeDocPair": "corpus",
    "TokenSequence": "corpus",
    "Vocab": "corpus",
    "load_pairs": "corpus",
    "tokenize_code": "corpus",
    "tokenize_query": "corpus",
    # parsing + graphs
    "parse_ast": "parsers",
    "Ast": "parsers",
    "Csrg": "graph",
    "build_graph": "graph",
    "csrg_stats": "graph",
    # pretraining
    "EmbeddingTable": "pretrain",
    "train_token_embeddings": "pretrain",
    "train_node_embeddings": "pretrain",
    # autodiff
    "Tensor": "autodiff",
    # model
    "ModelConfig": "model",
    "ModelParams": "model",
    "code_sample": "model",
    "encode_pair": "model",
    "similarity": "model",
    "triplet_loss": "model",
    # training
    "TrainConfig": "train",
    "fit": "train",
    "train_epoch": "train",
    "save_checkpoint": "train",
    "load_checkpoint": "train",
    # retrieval
    "prepare_pool": "retrieval",
    "score_all": "retrieval",
    "search": "retrieval",
    # evaluation
    "EvalRecord": "evaluation",
    "EvalReport": "evaluation",
    "evaluate": "evaluation",
    "ablation_run": "evaluation",
    "mrr": "evaluation",
    "success_rate_at_k": "evaluation",
    "ndcg_at_k": "evaluation",
}

__all__ = sorted(
    [
        "CheckpointError",
        "ConfigError",
        "CorpusError",
        "CssamError",
        "EvalError",
        "GraphError",
        "ModelError",
        "ParseError",
        "TrainError",
        "__version__",
        *_EXPORTS,
    ]
)


def __getattr__(name):
    module_name = _EXPORTS.get(name)
    if module_name is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    import importlib

    module = importlib.import_module(f".{module_name}", __name__)
    value = getattr(module, name)
    globals()[name] = value
    return value


def __dir__():
    return __all__
