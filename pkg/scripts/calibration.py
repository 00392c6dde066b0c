"""Size and power of the comparison and group tests, and partial-effect accuracy.

    python scripts/calibration.py --R 500
"""

import argparse
import json

from iopml.iop import EstimatorConfig
from iopml.learners import LearnerSpec
from iopml.sim import (
    compare_size,
    five_cell_dgp,
    group_rejection,
    partial_effect_coverage,
    two_circumstance_dgp,
    with_noise_circumstances,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--R", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--only", choices=["compare", "group", "power", "peffect"], action="append")
    args = ap.parse_args()
    todo = args.only or ["compare", "group", "power", "peffect"]

    gini = EstimatorConfig(indices=("gini",), learner=LearnerSpec("forest"), relative=False)
    noisy = with_noise_circumstances(five_cell_dgp(), 2)
    out = {}
    if "compare" in todo:
        out["compare_size"] = compare_size(five_cell_dgp(), gini, R=args.R, n=1000, seed=args.seed)
    if "group" in todo:
        out["group_size"] = group_rejection(noisy, ["z1", "z2"], gini, R=args.R, n=1000, seed=args.seed)
    if "power" in todo:
        out["group_power"] = group_rejection(noisy, ["c"], gini, R=min(args.R, 100), n=2000, seed=args.seed)
    if "peffect" in todo:
        both = EstimatorConfig(indices=("gini", "mld"), learner=LearnerSpec("forest"))
        out["peffect"] = partial_effect_coverage(two_circumstance_dgp(), both, R=min(args.R, 200), n=2000, seed=args.seed)
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
