"""Locate a strict minimum of the Kirchhoff-Routh function."""

from vortex_patches.experiments.base import Experiment, ExperimentResult


class KRMinExperiment(Experiment):
    name = "kr-min"

    def run(self, result: ExperimentResult) -> None:
        minimum = self.minimum()
        result.report.update(minimum.to_dict())
        if minimum.scan is not None:
            self.out.write_csv(
                "scan.csv",
                ({"x1": r[0], "y1": r[1], "x2": r[2], "y2": r[3], "H": r[4]} for r in minimum.scan),
            )
        result.check(minimum.strictness_margin > 0, "strictness_margin")
        result.summary += [
            ("x1", f"({minimum.point.x1[0]:.6f}, {minimum.point.x1[1]:.6f})"),
            ("x2", f"({minimum.point.x2[0]:.6f}, {minimum.point.x2[1]:.6f})"),
            ("H", f"{minimum.value:.8f}"),
            ("delta", f"{minimum.delta:.4g}"),
            ("margin", f"{minimum.strictness_margin:.3e}"),
        ]
