# coding: utf-8

# # Balanced graph partitioning
#
# The initial assignment gives every entity an anchor meta-embedding taken
# from a c-way partition of the user/item graph, so that tightly connected
# entities start out sharing a codebook row.

import numpy as np

from compgcf import planted_communities
from compgcf.graph import build_adjacency
from compgcf.partition import (edge_cut, init_assignment, max_part_size, partition_graph,
                               random_partitioning)

data = planted_communities(200, 200, 4, p_in=0.2, p_out=0.005, seed=1)
a = build_adjacency(data)
n = data.num_entities


# ## Multilevel partition vs. random labels

part = partition_graph(a, 4, seed=0)
rand = random_partitioning(n, 4, seed=0)
print("part sizes", part.part_sizes.tolist(), "limit", max_part_size(n, 4, 1.05))
print("edge cut  ", edge_cut(a, part.labels), "(random:", edge_cut(a, rand.labels), ")")


# The planted block of each user is user_id // 50; check how well the labels
# line up with it.

blocks = np.arange(data.num_users) // 50
agree = min(np.mean(part.labels[:data.num_users][blocks == b] == np.bincount(
    part.labels[:data.num_users][blocks == b]).argmax()) for b in range(4))
print("worst-block agreement among users", round(float(agree), 3))


# ## From labels to an assignment
#
# The anchor gets weight w*, and t-1 other meta ids share the rest.

s = init_assignment(part, t=2, w_star=0.7, seed=0)
print(s.index[:3].tolist(), s.weight[:3].tolist())
