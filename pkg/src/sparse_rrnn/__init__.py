"""Sparse rational RNNs: WFSA-based text classifiers with a per-state group-lasso penalty."""

from .data import EmbeddingTable, LabeledDoc, SynthConfig, encode, load_dataset, load_embeddings, synth_generate
from .group_lasso import PenaltyConfig, model_penalty, penalty, penalty_subgradient
from .model import RationalModel, accuracy, load_model, model_backward, model_forward, save_model
from .pruning import PrunedStructure, count_transitions, prune
from .training import (LambdaSearchConfig, TrainConfig, init_lambda_balance, lambda_search,
                       three_stage_pipeline, train)
from .visualize import emit_tradeoff_csv, render_pattern_table, top_bottom_phrases
from .wfsa import extreme_path, forward_score

__version__ = "0.1.0"
