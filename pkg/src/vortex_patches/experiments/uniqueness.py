"""Solve from random feasible starts and compare the maximizers found."""

from vortex_patches.experiments.base import Experiment, ExperimentResult
from vortex_patches.steady import uniqueness_probe


class UniquenessExperiment(Experiment):
    name = "uniqueness"

    def run(self, result: ExperimentResult) -> None:
        minimum = self.minimum()
        cfg = self.solver_config(minimum)
        probe = uniqueness_probe(cfg, self.green, self.cfg.evolution.trials, self.cfg.seed)
        rows = ({"trial": k, "E": e} for k, e in enumerate(probe.energies))
        self.out.write_csv("energies.csv", rows)
        result.report["minimum"] = minimum.to_dict()
        result.report.update(probe.to_dict())
        result.report["note"] = "empirical evidence only; uniqueness is not asserted"
        result.summary += [
            ("solves", str(len(probe.energies))),
            ("max pairwise L1", f"{probe.max_pairwise_l1:.3e} (tolerance {probe.tolerance:.3e})"),
            ("coincide", str(probe.coincide)),
        ]
