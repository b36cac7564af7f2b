#!/usr/bin/env python3
"""From measured redundancy to a narrower network.

Loads the bundled wide ResNet-50 structure, fakes a redundancy report
in which deeper stages are increasingly redundant, and asks for a
width-reduction plan. Each width group shrinks by (1 - rho * lambda),
rounded to the nearest even width, never below the minimum width; the
parameter totals are recounted exactly.
"""

from ckrm import bundled_structure, count_params, suggest, validate
from ckrm.redundancy import CkrmResult, MultiRunCkrm, SampleInfo

structure = bundled_structure("resnet50_standard")
print(f"standard profile: {count_params(structure):,} parameters, "
      f"violations: {validate(structure)}")
narrow = bundled_structure("resnet50_optimized")
print(f"narrow reference: {count_params(narrow):,} parameters "
      f"({count_params(narrow) / count_params(structure):.2%} kept)\n")

# a plausible measurement: shallow stages hold diverse kernels, deep
# stages mostly re-learn the same ones
stage_lambda = {"stem": 0.05, "stage1": 0.15, "stage2": 0.5, "stage3": 0.8, "stage4": 0.9}


def fake_multirun(layer_id, lam):
    run = CkrmResult(
        layer_id=layer_id,
        thresholds=(0.5, 0.6, 0.7),
        lambdas=(min(1.0, lam * 1.2), lam, lam * 0.8),
        histogram=tuple([0] * 50),
        sample=SampleInfo(count=1000, exhaustive=False, seed=0),
        stderr=None,
    )
    return MultiRunCkrm(layer_id=layer_id, per_run=(run,), mean_lambda=run.lambdas)


report = {
    spec.layer_id: fake_multirun(spec.layer_id, stage_lambda[spec.group])
    for spec in structure.layers
}

plan = suggest(structure, report, t=0.6, rho=0.5)
print(f"{'layer':<8} {'group':<8} {'old':>5} {'new':>5}   lambda")
seen = set()
for spec, row in zip(structure.layers, plan.rows):
    if spec.group in seen:
        continue
    seen.add(spec.group)
    print(f"{row.layer_id:<8} {spec.group:<8} {row.old_f2:>5} {row.new_f2:>5}   "
          f"{row.lambda_used:.2f}")

print(f"\nprojected: {plan.params_before:,} -> {plan.params_after:,} parameters "
      f"({plan.params_after / plan.params_before:.2%} kept)")
print("after a retrain, measure again and repeat until lambda is near zero.")
