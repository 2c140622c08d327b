"""Graph collaborative filtering with a compact meta-embedding codebook.

Entities (users and items) do not own embedding rows. Each one mixes at
most ``t`` rows of a shared ``c x d`` codebook through a sparse assignment
matrix; the codebook is trained with BPR while the assignment is refreshed
in closed form from graph-propagated representations.
"""
from .assignment import solve_assignment, solve_assignment_batched, sparsify, update_assignment, update_round
from .config import ConfigError, TrainConfig, parse_config, parse_config_text
from .data import InteractionDataset, load_dataset, load_dataset_dir, planted_communities, save_dataset_dir
from .embedding import (MetaCodebook, PropagationState, SparseAssignment, backward, compose,
                        compose_batch, parameter_count, propagate, split)
from .graph import ExpandedGraph, build_adjacency, expand_adjacency, normalize
from .linalg import pinv, row_topk, spmm, thin_svd
from .metrics import evaluate_ranking, ndcg_at, recall_at, score_all
from .partition import Partitioning, edge_cut, init_assignment, partition_graph
from .trainer import TrainResult, TrainState, bpr_loss_and_grad, sample_triplets, train

__version__ = "0.1.0"
