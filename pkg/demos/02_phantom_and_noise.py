"""Synthetic phantoms: geometry, ground truth and count-like noise.

Builds the default seven-organ phantom twice (noise-free and at 5%
frame-duration-aware noise) and verifies that the empirical per-frame noise
matches the configured model.
"""

import numpy as np

from petkin import (
    NoiseModel,
    build_phantom,
    default_input_model,
    default_phantom_spec,
    synth_input,
    wb_fdg_schedule,
)

schedule = wb_fdg_schedule()
aif = synth_input(default_input_model(), schedule)

clean_spec = default_phantom_spec()
vol, labels, truth = build_phantom(clean_spec, aif, schedule)
print(f"phantom dims {clean_spec.dims} at {clean_spec.spacing_mm[0]} mm")
print(f"{'organ':<10} {'voxels':>7}")
for label, name in sorted(labels.legend.items()):
    print(f"{name:<10} {int((labels.labels == label).sum()):>7}")
print(f"background: {int((labels.labels == 0).sum())} voxels, all-zero TACs")

noisy_spec = default_phantom_spec(noise=NoiseModel('gaussian-fraction', 0.05),
                                  seed=1)
noisy, _, _ = build_phantom(noisy_spec, aif, schedule)
again, _, _ = build_phantom(noisy_spec, aif, schedule)
print(f"\nseeded noise is reproducible: "
      f"{np.array_equal(noisy.data, again.data)}")

# empirical vs configured noise in the lungs (largest region)
lung = labels.labels == labels.label_of("lungs")
resid = (noisy.data[:, lung] - vol.data[:, lung]).astype(np.float64)
emp = resid.std(axis=1)
pred = noisy_spec.noise.frame_sigma(vol.data[:, lung][:, 0].astype(np.float64),
                                    schedule.durations)
print(f"\nper-frame noise std over {int(lung.sum())} lung voxels "
      "(empirical / configured; frame 0 precedes the bolus and is noise-free):")
for i in (2, 5, 20, 40, 61):
    print(f"  frame {i:2d} ({schedule.durations[i]:5.0f} s): "
          f"{emp[i]:8.1f} / {pred[i]:8.1f}  "
          f"ratio {emp[i] / pred[i]:.3f}")
print("short early frames are noisier, like low-count frames in a real scan")
