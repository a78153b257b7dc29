"""Voxel-wise and region-wise parameter recovery on a noisy phantom.

Fits every labeled voxel of the default phantom at 5% noise, aggregates the
parameter maps per organ, and contrasts the voxel-wise estimates with the
pool-first VoI protocol.
"""

import time

import numpy as np

from petkin import (
    FitConfig,
    NoiseModel,
    build_phantom,
    default_input_model,
    default_phantom_spec,
    fit_voi,
    fit_voxelwise,
    load_reference_params,
    organ_aggregate,
    synth_input,
    wb_fdg_schedule,
)

schedule = wb_fdg_schedule()
aif = synth_input(default_input_model(), schedule)
spec = default_phantom_spec(noise=NoiseModel("gaussian-fraction", 0.05), seed=3)
vol, labels, truth = build_phantom(spec, aif, schedule)

n = int((labels.labels != 0).sum())
t0 = time.perf_counter()
pv = fit_voxelwise(vol, aif, FitConfig(), mask=labels, workers=2)
print(f"fitted {n} voxels in {time.perf_counter() - t0:.1f} s")

report = organ_aggregate(pv, labels, vol, aif)
ref = load_reference_params("dnn")
print(f"\n{'organ':<10} {'k1 fit':>8} {'k1 true':>8} {'bias':>7} "
      f"{'vb fit':>7} {'vb true':>8} {'CS':>6}")
for row in report:
    true = ref[row.name].mean
    bias = (row.mean[0] - true.k1) / true.k1
    print(f"{row.name:<10} {row.mean[0]:8.3f} {true.k1:8.3f} {bias:6.1%} "
          f"{row.mean[3]:7.3f} {true.vb:8.3f} "
          f"{row.tac.cosine_similarity:6.3f}")

print("\nhigh blood-fraction regions (aorta, heart) are the hard cases for "
      "independent per-voxel fits:\nthe tissue term is a small residual on "
      "top of the blood signal, so noise inflates k1 there.")

print("\npool-first VoI fits (lower variance, organ-level only):")
for label, name in sorted(labels.legend.items()):
    res = fit_voi(vol, labels, label, aif)
    true = ref[name].mean
    print(f"  {name:<10} k1 {res.params.k1:.3f} (true {true.k1:.3f}) "
          f"converged={res.converged} mse={res.cost:,.0f}")
