"""Multiple-instance active learning toolkit.

Bags of instances carry weak labels; the learner repeatedly picks the most
informative positive bag, asks an oracle for its instance labels and
retrains a cost-sensitive kernel SVM. Ships two aggregation-based bag
selection strategies, two reference baselines, a benchmark harness and an
HTTP annotation service.
"""

from .clustering import (Dendrogram, InconsistencyTable, MultiLevelClustering,
                         build_dendrogram, cut_at_threshold, cut_levels, inconsistency)
from .data import (Bag, Instance, MILDataset, SyntheticConfig, ValidationReport,
                   generate_synthetic, load_dataset, save_dataset, split_train_test,
                   validate)
from .loop import (SessionConfig, SessionRunner, SessionState, init_hypothesis,
                   oracle_answer, run_experiment, run_session)
from .metrics import (ExperimentResult, LearningCurve, SessionRecord, TTestResult,
                      WinTable, auc_pr, count_wins, f1_score, naulc, welch_t_test,
                      wins_vs_query_fraction)
from .strategies import (BagScore, ClusterStats, QueryState, aggregate_bag,
                         cluster_criterion, informativeness, select_agin,
                         select_cbas, select_random, select_simple_margin)
from .svm import (CostSpec, KernelSpec, TrainedModel, decision_score,
                  decision_scores, fit, imbalance_ratio, kernel_eval,
                  kernel_matrix, load_model, predict, save_model)

__version__ = "0.1.0"

__all__ = [
    "Bag", "BagScore", "ClusterStats", "CostSpec", "Dendrogram", "ExperimentResult",
    "InconsistencyTable", "Instance", "KernelSpec", "LearningCurve", "MILDataset",
    "MultiLevelClustering", "QueryState", "SessionConfig", "SessionRecord",
    "SessionRunner", "SessionState", "SyntheticConfig", "TTestResult", "TrainedModel",
    "ValidationReport", "WinTable", "aggregate_bag", "auc_pr", "build_dendrogram",
    "cluster_criterion", "count_wins", "cut_at_threshold", "cut_levels",
    "decision_score", "decision_scores", "f1_score", "fit", "generate_synthetic",
    "imbalance_ratio", "inconsistency", "informativeness", "init_hypothesis",
    "kernel_eval", "kernel_matrix", "load_dataset", "load_model", "naulc",
    "oracle_answer", "predict", "run_experiment", "run_session", "save_dataset",
    "save_model", "select_agin", "select_cbas", "select_random",
    "select_simple_margin", "split_train_test", "validate", "welch_t_test",
    "wins_vs_query_fraction",
]
