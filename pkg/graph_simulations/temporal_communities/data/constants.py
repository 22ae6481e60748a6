# graph_simulations/temporal_communities/data/constants.py

"""
constants.py

Numerical constants and algorithm defaults shared by the logic modules.
Training hyperparameters that users may override live in train_config.py.
"""

import numpy as np

# -----------------------------
# Numerics
# -----------------------------
FLOAT = np.float64                 # every tensor, embedding and cluster parameter
GELU_COEF = 0.044715               # tanh approximation of GeLU
SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# -----------------------------
# Sampling
# -----------------------------
RESTART_FACTOR = 10                # temporal walk gives up after RESTART_FACTOR * l failed restarts

# -----------------------------
# Encoder
# -----------------------------
INIT_GAIN = 1.0                    # Glorot uniform gain for projections
TASK_HEAD_INIT_SCALE = 0.1

# -----------------------------
# Clustering
# -----------------------------
LOWER_BOUND_HISTORY = 6            # ring buffer of monitored lower-bound values
OSCILLATION_WINDOW = 4             # deltas inspected by the oscillation detector
CONVERGENCE_RTOL = 1e-6            # |delta| < rtol * |bound| counts as converged
BOUND_ATOL = 1e-9                  # EM updates may not lower the bound by more than this (relative)
COV_REG = 1e-6                     # epsilon = COV_REG * trace(cov) / d
KMEANS_MAX_ITER = 100
MERGE_NEIGHBOURS = 3               # nearest-mean merge candidates per cluster
MIN_SUBCLUSTER_SIZE = 2

# -----------------------------
# Training loop
# -----------------------------
PLATEAU_RTOL = 1e-3                # pretraining stops when relative gain < PLATEAU_RTOL ...
PLATEAU_PATIENCE = 3               # ... over this many epochs
EMBED_BATCH_SIZE = 512             # batch size for full-graph embedding snapshots

# -----------------------------
# Evaluation
# -----------------------------
EDGE_SPLIT_RATIOS = (0.8, 0.1, 0.1)
PROBE_REPEATS = 3
CF_EPOCHS = 200
CF_TEST_FRACTION = 0.2
TEMPORAL_LABEL_BINS = 4

REPORT_ROWS = (
    "LP_ACC",
    "CF_ACC L_y",
    "CF_ACC L_T",
    "COM_NMI L_y",
    "COM_NMI L_T",
    "COM_NMI L_G",
    "Modularity",
)

# -----------------------------
# Dataset files
# -----------------------------
MISSING = "-"
NODE_FILE_PREFIX = "nodes_"
EDGE_FILE_PREFIX = "edges_"
LABEL_FILE_PREFIX = "labels_"
GENERATOR_META_FILE = "generator_meta.json"
