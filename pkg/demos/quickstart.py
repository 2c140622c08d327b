# coding: utf-8

# # Quickstart
#
# Train a small compositional model on a synthetic user/item dataset and look
# at what comes out. Every entity embedding is a weighted mix of t rows of a
# shared codebook, so the model stores c*d floats plus t weights per entity.

import numpy as np

from compgcf import planted_communities, train
from compgcf.config import TrainConfig
from compgcf.embedding import compose, parameter_count


# ## Data
#
# 400 users and 400 items split into 4 communities. Users mostly pick items
# from their own community, and popular items get picked more often.

data = planted_communities(400, 400, 4, p_in=0.05, p_out=0.01, popularity_skew=1.0, seed=0)
print(data.num_users, "users,", data.num_items, "items,", len(data.train), "train pairs,",
      len(data.test), "test pairs")


# ## Training
#
# A pretrain phase fits the codebook with the assignment frozen. The main
# phase then alternates codebook epochs with closed-form assignment updates.

cfg = TrainConfig(d=16, c=16, t=2, L=3, lr=1e-3, l2=1e-4, epochs_pretrain_max=100,
                  epochs_main_max=100, patience=10, batch_size_triplets=2048, seed=0)
result = train(data, cfg)
print(result.log_lines[0])
print(result.log_lines[-1])
print("assignment updated at main epochs", result.update_epochs[:5], "...")


# ## Results

for key, value in result.test_metrics.items():
    print(f"{key:10s} {value:.4f}")

state = result.state
print("parameters:", parameter_count(state.assignment, state.codebook),
      "vs a full table:", data.num_entities * cfg.d)


# The composed embeddings are ordinary dense rows once built.

emb = compose(state.assignment, state.codebook)
print(emb.shape, np.round(emb[0], 3))
