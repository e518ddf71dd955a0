"""Graph prompting toolkit.

Freeze a contrastively pre-trained GCN encoder and adapt it to node,
edge, graph, link, and regression tasks by inserting a small learnable
prompt graph into the inputs, optionally with a meta-learned prompt
initialization. Ships an error-bound lab that measures how well prompted
graphs imitate transformed ones.
"""

from .backbone import GCNBackbone, init_backbone, normalize_adjacency
from .data import (Dataset, Graph, augment, induced_graph, load_dataset,
                   save_dataset, synthesize_dataset, synthesize_node_graph)
from .errorlab import (ImitationResult, error_reduction_table, imitation_error,
                       learn_imitation_prompt)
from .errors import (CheckpointError, ConfigError, ContractError,
                     DomainTransferError, GraphPromptError, NumericError,
                     SchemaError, UndefinedMetricError, UnsupportedVersionError,
                     ValidationError)
from .experiments import (ResultsReport, compare_experiments, render_report,
                          run_experiment, transfer_experiment)
from .meta import MetaConfig, inner_adapt, meta_train
from .metrics import compute_metrics
from .pretrain import PretrainConfig, nt_xent_loss, pretrain
from .prompt import (PromptGraph, TaskHead, TuneConfig, init_head, init_prompt,
                     insert, prompted_forward, token_structure, tune_prompt)
from .tasks import (TaskEpisode, link_prediction_split, reformulate_task,
                    sample_few_shot)

__version__ = "0.1.0"

__all__ = [
    "CheckpointError", "ConfigError", "ContractError", "Dataset",
    "DomainTransferError", "GCNBackbone", "Graph", "GraphPromptError",
    "ImitationResult", "MetaConfig", "NumericError", "PretrainConfig",
    "PromptGraph", "ResultsReport", "SchemaError", "TaskEpisode", "TaskHead",
    "TuneConfig", "UndefinedMetricError", "UnsupportedVersionError",
    "ValidationError", "augment", "compare_experiments", "compute_metrics",
    "error_reduction_table", "imitation_error", "induced_graph", "init_backbone",
    "init_head", "init_prompt", "inner_adapt", "insert", "learn_imitation_prompt",
    "link_prediction_split", "load_dataset", "meta_train", "normalize_adjacency",
    "nt_xent_loss", "pretrain", "prompted_forward", "reformulate_task",
    "render_report", "run_experiment", "sample_few_shot", "save_dataset",
    "synthesize_dataset", "synthesize_node_graph", "token_structure",
    "transfer_experiment", "tune_prompt",
]
