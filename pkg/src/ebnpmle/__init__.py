"""Empirical-Bayes classification with the grid-restricted Kiefer-Wolfowitz NPMLE."""

from .classifiers import ClassifierModel, GroupSummary, LabeledDataset, fit_npmle, summarize
from .mixture import MixingDistribution, hellinger_distance, mixture_log_density, normal_log_density
from .posterior import posterior_law, posterior_mean, predictive_log_density
from .solver import NpmleFit, ObservationSet, SolverOptions, build_grid, default_grid_size, solve

__all__ = [
    "ClassifierModel",
    "GroupSummary",
    "LabeledDataset",
    "MixingDistribution",
    "NpmleFit",
    "ObservationSet",
    "SolverOptions",
    "build_grid",
    "default_grid_size",
    "fit_npmle",
    "hellinger_distance",
    "mixture_log_density",
    "normal_log_density",
    "posterior_law",
    "posterior_mean",
    "predictive_log_density",
    "solve",
    "summarize",
]
