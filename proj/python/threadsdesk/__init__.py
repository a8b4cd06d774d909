"""Molecular-guided slide representation learning at desk scale."""

from threadsdesk._core import (
    GeneratorConfig,
    Model,
    ValidationError,
    auc_binary,
    balanced_accuracy,
    clustering_agreement,
    concordance_index,
    default_hyperparameters_json,
    fit_coxnet,
    fit_logistic_probe,
    generate_dataset,
    infonce_loss,
    init_model,
    kmeans,
    load_model,
    log2_tpm_normalize,
    macro_auc,
    map_at_k,
    probe_predict_proba,
    quadratic_weighted_kappa,
    rankme,
    singular_values,
    stable_softmax,
)

__all__ = [
    "GeneratorConfig",
    "Model",
    "ValidationError",
    "auc_binary",
    "balanced_accuracy",
    "clustering_agreement",
    "concordance_index",
    "default_hyperparameters_json",
    "fit_coxnet",
    "fit_logistic_probe",
    "generate_dataset",
    "infonce_loss",
    "init_model",
    "kmeans",
    "load_model",
    "log2_tpm_normalize",
    "macro_auc",
    "map_at_k",
    "probe_predict_proba",
    "quadratic_weighted_kappa",
    "rankme",
    "singular_values",
    "stable_softmax",
]

__version__ = "0.1.0"
