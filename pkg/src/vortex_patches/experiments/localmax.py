"""Level-set comparison and rearrangement checks around a steady patch."""

import numpy as np

from vortex_patches.domain import DomainKind
from vortex_patches.errors import Inapplicable
from vortex_patches.evolution import (
    local_max_test,
    random_rearrangement,
    random_shape,
    riesz_check,
)
from vortex_patches.experiments.base import ExperimentResult
from vortex_patches.experiments.evolve import PatchExperiment

RIESZ_SHAPES = 20


class LocalMaxExperiment(PatchExperiment):
    name = "localmax"

    def run(self, result: ExperimentResult) -> None:
        saved = self.load()
        base = saved.patch
        rng = np.random.default_rng(self.cfg.seed)
        rows = []
        applicable = held = 0
        for trial in range(self.cfg.evolution.trials):
            candidate = random_rearrangement(base, rng)
            try:
                outcome = local_max_test(base, candidate, saved.green)
            except Inapplicable as exc:
                rows.append({"trial": trial, "applicable": False, "note": str(exc)})
                continue
            applicable += 1
            held += outcome.chain_holds
            rows.append({"trial": trial, "applicable": True, **outcome.to_dict()})
        self.out.write_csv("localmax.csv", rows)
        result.report["chain"] = {"trials": len(rows), "applicable": applicable, "held": held}
        result.check(held == applicable, "local_max_chain")
        result.summary.append(("chain holds", f"{held}/{applicable} applicable"))

        if base.grid.domain.kind is DomainKind.DISK:
            riesz_rows = []
            passed = 0
            for shape in range(RIESZ_SHAPES):
                check = riesz_check(base, random_shape(base, rng))
                passed += check.passed
                riesz_rows.append({"shape": shape, **_flat(check.to_dict())})
            self.out.write_csv("riesz.csv", riesz_rows)
            result.report["riesz"] = {"shapes": RIESZ_SHAPES, "passed": passed}
            result.check(passed == RIESZ_SHAPES, "riesz_rearrangement")
            result.summary.append(("rearrangement check", f"{passed}/{RIESZ_SHAPES}"))


def _flat(data: dict[str, object]) -> dict[str, object]:
    out: dict[str, object] = {}
    for key, value in data.items():
        if isinstance(value, list):
            for i, item in enumerate(value, start=1):
                out[f"{key}{i}"] = item
        else:
            out[key] = value
    return out
