# coding: utf-8

# # The closed-form assignment update, step by step
#
# After propagation every entity has an embedding row in H_full and every
# meta-embedding has one in H_meta. The update asks for weights S with
# S @ H_meta close to H_full, solves that by least squares through a
# pseudo-inverse, and keeps the t largest weights per row.

import numpy as np

from compgcf.assignment import solve_assignment, sparsify
from compgcf.linalg import pinv

rng = np.random.default_rng(0)
c, d, n = 6, 4, 5
h_meta = rng.standard_normal((c, d))

# entities built from known mixes of two meta rows
truth = np.zeros((n, c))
for row in truth:
    row[rng.choice(c, 2, replace=False)] = rng.uniform(0.2, 1.0, 2)
h_full = truth @ h_meta


# ## Dense solve
#
# With c > d the system is underdetermined, so the minimum-norm solution is
# not the planted one. It still reproduces H_full exactly.

dense = solve_assignment(h_full, h_meta)
print("residual", np.linalg.norm(dense @ h_meta - h_full))
print("same as h_full @ pinv(h_meta):", np.allclose(dense, h_full @ pinv(h_meta)))


# ## Top-t sparsification
#
# Negative weights are clamped to zero. A row with nothing positive falls
# back to uniform weights on its first t slots.

index, weight = sparsify(dense, 2)
for p in range(n):
    print(p, "kept", index[p].tolist(), np.round(weight[p], 3).tolist(),
          "planted", np.flatnonzero(truth[p]).tolist())
