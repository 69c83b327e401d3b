"""Steady patches over a range of λ."""

from vortex_patches.asymptotics import sweep_lambda
from vortex_patches.experiments.base import Experiment, ExperimentResult
from vortex_patches.report import baseline_key, within

# reruns must reproduce the pinned diam/ε range to this relative tolerance
DIAMETER_BASELINE_RTOL = 0.10


class SweepLambdaExperiment(Experiment):
    name = "sweep-lambda"

    def run(self, result: ExperimentResult) -> None:
        s = self.cfg.solver
        minimum = self.minimum()
        # the largest λ needs the fewest cells, so it is the one sure to fit
        template = self.solver_config(minimum, lam=max(s.lambdas))
        report = sweep_lambda(
            template,
            list(s.lambdas),
            green=None if s.refine else self.green,
            refine=s.refine,
            threads=self.cfg.threads,
        )
        self.out.write_csv("sweep.csv", (row.to_dict() for row in report.rows))
        result.report["minimum"] = minimum.to_dict()
        result.report.update(report.summary())
        result.failures.extend(report.failures)
        self.compare_baseline(report.diameter_ratio_range(), result)
        for row in report.rows:
            label = f"lambda={row.lam:g}"
            if row.failed:
                result.summary.append((label, f"failed: {row.error}"))
            else:
                flag = " (under-resolved)" if row.under_resolved else ""
                result.summary.append(
                    (label, f"E={row.energy:.8g} diam=({row.diam1:.4g}, {row.diam2:.4g}){flag}")
                )
        result.summary.append(
            ("E slope", f"{report.energy_slope:.4g} (expected {report.energy_slope_expected:.4g})")
        )

    def compare_baseline(
        self, ratios: tuple[float, float] | None, result: ExperimentResult
    ) -> None:
        """Pin the diam/ε range on the first run; later runs must stay within 10%."""
        if ratios is None:
            return
        d, s, v = self.cfg.domain, self.cfg.solver, self.cfg.vortex
        key = baseline_key(
            self.name,
            kind=d.kind,
            n=d.n,
            lambdas=sorted(s.lambdas),
            refine=s.refine,
            kappa=(v.kappa1, v.kappa2),
        )
        store = self.baselines()
        pinned, fresh = store.pin(key, {"diam_eps_min": ratios[0], "diam_eps_max": ratios[1]})
        verdict = all(
            within(value, pinned.get(name), DIAMETER_BASELINE_RTOL)
            for value, name in zip(ratios, ("diam_eps_min", "diam_eps_max"), strict=True)
        )
        result.report["baseline"] = {
            "path": str(store.path),
            "pinned": pinned,
            "recorded": fresh,
        }
        result.report.setdefault("invariants", {})["diameter_window_pinned"] = verdict
        result.check(verdict, "diameter_window_pinned")
        result.summary.append(
            ("diam/eps", f"{ratios[0]:.4g}..{ratios[1]:.4g}" + (" (pinned)" if fresh else ""))
        )
