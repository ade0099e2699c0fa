"""Evaluation: factor regression, policy matrices, feature curves, dh modes, planning, Q-transfer."""
from .curves import FeatureCurves, feature_curves
from .modes import (DhSamples, ModeCatalog, action_prototypes, cluster_modes, collect_dh, decompose_dh,
                    default_radius, predict_state, replay)
from .planning import DIRECTIONS, ModeReport, decomposition_accuracy, mode_report, prediction_accuracy
from .regression import (RegressionReport, factor_regression, latent_dataset, policy_action_matrix,
                         spearman_matrix)
from .transfer import QCurves, QTransferConfig, q_transfer, random_walk_lengths

__all__ = [
    "DIRECTIONS", "DhSamples", "FeatureCurves", "ModeCatalog", "ModeReport", "QCurves", "QTransferConfig",
    "RegressionReport", "action_prototypes", "cluster_modes", "collect_dh", "decompose_dh",
    "decomposition_accuracy", "default_radius", "factor_regression", "feature_curves", "latent_dataset",
    "mode_report", "policy_action_matrix", "predict_state", "prediction_accuracy", "q_transfer",
    "random_walk_lengths", "replay", "spearman_matrix",
]
