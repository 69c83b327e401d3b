"""Experiments behind the command-line interface."""

from vortex_patches.experiments.base import Experiment, ExperimentResult
from vortex_patches.experiments.evolve import EvolveExperiment, PatchExperiment
from vortex_patches.experiments.green_check import GreenCheckExperiment
from vortex_patches.experiments.kr_min import KRMinExperiment
from vortex_patches.experiments.localmax import LocalMaxExperiment
from vortex_patches.experiments.solve import SolveExperiment
from vortex_patches.experiments.sweep import SweepLambdaExperiment
from vortex_patches.experiments.uniqueness import UniquenessExperiment

# experiments that only need a RunConfig
ALL_EXPERIMENTS: list[type[Experiment]] = [
    KRMinExperiment,
    SolveExperiment,
    SweepLambdaExperiment,
    GreenCheckExperiment,
    UniquenessExperiment,
]

# experiments that start from a saved solve directory
PATCH_EXPERIMENTS: list[type[PatchExperiment]] = [
    EvolveExperiment,
    LocalMaxExperiment,
]


def get_experiment_class(name: str) -> type[Experiment] | None:
    """Experiment class for a command name (case-insensitive)."""
    for experiment in [*ALL_EXPERIMENTS, *PATCH_EXPERIMENTS]:
        if experiment.name.lower() == name.lower():
            return experiment
    return None


__all__ = [
    "Experiment",
    "ExperimentResult",
    "PatchExperiment",
    "KRMinExperiment",
    "SolveExperiment",
    "SweepLambdaExperiment",
    "GreenCheckExperiment",
    "UniquenessExperiment",
    "EvolveExperiment",
    "LocalMaxExperiment",
    "ALL_EXPERIMENTS",
    "PATCH_EXPERIMENTS",
    "get_experiment_class",
]
