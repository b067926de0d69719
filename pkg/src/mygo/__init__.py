"""Multi-modal knowledge graph completion with tokenized visual and textual
attributes, built on a small numpy reverse-mode tape."""

__version__ = "0.1.0"

from .autodiff import Tape, Tensor, grad_check
from .kg import FilterIndex, KnowledgeGraph, load_graph
from .model import (EntityTokenData, ModelParams, contrastive_loss,
                    encode_context, encode_entities, entity_views, kgc_loss,
                    pooled_entities, total_loss, tucker_score, tucker_scores)
from .evaluation import (EvalReport, evaluate, rank_query, rank_split,
                         score_all_candidates)
from .tokens import (RawTokenStream, RefinedTokenSet, TokenCatalog,
                     load_catalog, refine_tokens, write_catalog)
from .train import (AdamState, TrainConfig, adam_step, init_params,
                    load_checkpoint, make_rng, save_checkpoint, train)

__all__ = [
    "Tape", "Tensor", "grad_check",
    "FilterIndex", "KnowledgeGraph", "load_graph",
    "EntityTokenData", "ModelParams", "contrastive_loss", "encode_context",
    "encode_entities", "entity_views", "kgc_loss", "pooled_entities",
    "total_loss", "tucker_score", "tucker_scores",
    "EvalReport", "evaluate", "rank_query", "rank_split",
    "score_all_candidates",
    "RawTokenStream", "RefinedTokenSet", "TokenCatalog", "load_catalog",
    "refine_tokens", "write_catalog",
    "AdamState", "TrainConfig", "adam_step", "init_params",
    "load_checkpoint", "make_rng", "save_checkpoint", "train",
    "__version__",
]
