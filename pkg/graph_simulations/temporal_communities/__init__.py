__version__ = "0.1.0"

# Core entry points; the CLI lives in main.py
from .data.train_config import TrainConfig
from .logic.graph import EdgeSpec, MultimodalGraph, NodeSpec, build_graph
from .logic.dataset import Dataset, load_dataset, save_dataset
from .logic.synthetic import SyntheticSpec, gen_synthetic
from .logic.pipeline import (
    embed_all,
    holdout_nodes,
    infer,
    load_checkpoint,
    pretrain,
    save_checkpoint,
    train,
)
from .logic.evaluation import evaluate_run, split_edges
from .logic.export import (
    export_clusters,
    export_embeddings,
    export_metrics,
    get_summary_dict,
)
from .logic.plots import save_all_plots

__all__ = [
    "TrainConfig",
    "EdgeSpec",
    "MultimodalGraph",
    "NodeSpec",
    "build_graph",
    "Dataset",
    "load_dataset",
    "save_dataset",
    "SyntheticSpec",
    "gen_synthetic",
    "embed_all",
    "holdout_nodes",
    "infer",
    "load_checkpoint",
    "pretrain",
    "save_checkpoint",
    "train",
    "evaluate_run",
    "split_edges",
    "export_clusters",
    "export_embeddings",
    "export_metrics",
    "get_summary_dict",
    "save_all_plots",
    "__version__",
]
