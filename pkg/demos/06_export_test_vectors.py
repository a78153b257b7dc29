"""Export shared test vectors for downstream front ends.

Writes, under frontend/fixtures/:
  idif.csv              the default synthetic input at the frame mid-times
  forward_fixtures.csv  parameter rows plus their frame-averaged model TACs,
                        computed from the curve as stored in idif.csv
  ds_clean/, ds_noisy/  axial-slice subsets (z = 10..17, every slice holds
                        all seven organs) of the default phantom, in the
                        standard raw+sidecar dataset layout

Any independent implementation of the forward model can check itself against
forward_fixtures.csv after parsing idif.csv, and can train/evaluate on the
two datasets. Both the fixture TACs and the datasets are generated from the
curve exactly as stored in idif.csv (frame-mid samples), so a consumer that
parses that file reconstructs the noiseless TACs to float32 precision.
"""

import csv
from pathlib import Path

import numpy as np

from petkin import (
    DynamicVolume,
    KineticParams,
    LabelMap,
    NoiseModel,
    ParametricVolume,
    build_phantom,
    default_input_model,
    default_phantom_spec,
    load_reference_params,
    model_tac,
    read_idif,
    synth_input,
    wb_fdg_schedule,
    write_idif,
    write_volume,
)

OUT = Path(__file__).resolve().parents[1] / "frontend" / "fixtures"
Z_RANGE = slice(10, 18)

OUT.mkdir(parents=True, exist_ok=True)
schedule = wb_fdg_schedule()
aif_fine = synth_input(default_input_model(), schedule)

write_idif(OUT / "idif.csv", aif_fine, schedule)
aif, _ = read_idif(OUT / "idif.csv")  # exactly what a consumer will see

presets = [ref.mean for ref in load_reference_params("dnn").values()]
rng = np.random.default_rng(20260810)
cases = list(presets)
while len(cases) < 25:
    k1, k2, k3, vb = (rng.uniform(0.01, 2.0), rng.uniform(0.01, 3.0),
                      rng.uniform(0.01, 1.0), rng.uniform(0.0, 1.0))
    cases.append(KineticParams(k1, k2, k3, vb))

with open(OUT / "forward_fixtures.csv", "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["k1", "k2", "k3", "vb"]
               + [f"tac_{i}" for i in range(schedule.n_frames)])
    for p in cases:
        tac = model_tac(p, aif, schedule)
        w.writerow([repr(p.k1), repr(p.k2), repr(p.k3), repr(p.vb)]
                   + [repr(float(v)) for v in tac])
print(f"wrote {len(cases)} forward-model cases")

for name, noise, seed in (("ds_clean", NoiseModel("none", 0.05), 0),
                          ("ds_noisy", NoiseModel("gaussian-fraction", 0.05), 17)):
    spec = default_phantom_spec(noise=noise, seed=seed)
    vol, labels, truth = build_phantom(spec, aif, schedule)
    sub = OUT / name
    sub.mkdir(exist_ok=True)
    write_volume(sub / "dynamic",
                 DynamicVolume(vol.data[:, Z_RANGE], schedule, vol.spacing_mm))
    write_volume(sub / "labels",
                 LabelMap(labels.labels[Z_RANGE], labels.legend,
                          labels.spacing_mm))
    write_volume(sub / "truth",
                 ParametricVolume(truth.data[:, Z_RANGE], truth.channels,
                                  truth.spacing_mm))
    write_idif(sub / "idif.csv", aif_fine, schedule)
    n = int(np.count_nonzero(labels.labels[Z_RANGE]))
    print(f"wrote {name}: 8 slices, {n} labeled voxels, noise={noise.kind}")
