"""Synthetic dynamic PET datasets with known kinetic ground truth.

A phantom is a set of non-overlapping labeled regions (boxes/ellipsoids) on a
voxel grid, each carrying one kinetic parameter preset. Every voxel of a
region shares the same noiseless model TAC; configurable noise is then drawn
independently per voxel and frame from a stream keyed by (seed, voxel index),
so parallel and sequential generation agree bit for bit.

The analytic input-curve model is a gamma-variate bolus with two washout
exponentials (tri-exponential form): for t >= t0, with tau = (t - t0) in
minutes,

    A(t) = (a1*tau - a2 - a3) e^{-l1 tau} + a2 e^{-l2 tau} + a3 e^{-l3 tau}

which starts at zero, peaks early and decays to a slow tail. The default
coefficients are toolkit-defined stand-ins for a measured arterial curve,
not patient-derived values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinetics import (
    ForwardModel,
    FrameSchedule,
    InputFunction,
    KineticParams,
)
from .reference import load_reference_params
from .volumes import PARAM_CHANNELS, DynamicVolume, LabelMap, ParametricVolume

__all__ = [
    "InputFunctionModel",
    "OrganRegion",
    "NoiseModel",
    "PhantomSpec",
    "synth_input",
    "build_phantom",
    "default_input_model",
    "default_phantom_spec",
]

NOISE_KINDS = ("none", "gaussian-fraction", "scaled-poisson")


@dataclass(frozen=True)
class InputFunctionModel:
    """Tri-exponential arterial curve: a1 [Bq/ml/min]; a2, a3 [Bq/ml];
    eigenvalues l1 > l2 > l3 [1/min]; bolus arrival delay t0 [s]."""

    a1: float = 400000.0
    a2: float = 25000.0
    a3: float = 20000.0
    l1: float = 4.0
    l2: float = 0.12
    l3: float = 0.01
    t0_s: float = 10.0
    check_horizon_s: float = 3900.0

    def __post_init__(self):
        if min(self.l1, self.l2, self.l3) <= 0:
            raise ValueError("eigenvalues must be > 0")
        if self.t0_s < 0:
            raise ValueError("delay must be >= 0")
        t = np.linspace(0.0, max(self.check_horizon_s, self.t0_s + 1.0), 8192)
        if np.any(self(t) < 0):
            raise ValueError("coefficients produce negative activity")

    def __call__(self, t_s) -> np.ndarray:
        t = np.asarray(t_s, dtype=np.float64)
        tau = np.maximum(t - self.t0_s, 0.0) / 60.0
        val = ((self.a1 * tau - self.a2 - self.a3) * np.exp(-self.l1 * tau)
               + self.a2 * np.exp(-self.l2 * tau)
               + self.a3 * np.exp(-self.l3 * tau))
        return np.where(t < self.t0_s, 0.0, val)


def default_input_model() -> InputFunctionModel:
    return InputFunctionModel()


def synth_input(model: InputFunctionModel, schedule: FrameSchedule,
                fine_step_s: float = 1.0) -> InputFunction:
    """Sample the analytic curve on the fine grid covering the schedule."""
    if fine_step_s <= 0:
        raise ValueError("fine_step_s must be > 0")
    n = int(np.ceil(schedule.end_time / fine_step_s - 1e-9))
    t = np.arange(n + 1) * fine_step_s
    vals = np.maximum(model(t), 0.0)  # clip representation dust
    return InputFunction(t, vals)


@dataclass(frozen=True)
class OrganRegion:
    """One labeled region: an axis-aligned ellipsoid or box in voxel index
    space, center and semi-axes given as (z, y, x)."""

    label: int
    name: str
    shape: str
    center: tuple[float, float, float]
    semi_axes: tuple[float, float, float]
    params: KineticParams

    def __post_init__(self):
        if self.shape not in ("ellipsoid", "box"):
            raise ValueError(f"unknown shape {self.shape!r}")
        if not 1 <= int(self.label) <= 255:
            raise ValueError("label must be in [1, 255]")
        if any(a <= 0 for a in self.semi_axes):
            raise ValueError("semi-axes must be > 0")

    def mask(self, dims: tuple[int, int, int]) -> np.ndarray:
        zz, yy, xx = np.meshgrid(*(np.arange(d, dtype=np.float64) for d in dims),
                                 indexing="ij")
        dz = (zz - self.center[0]) / self.semi_axes[0]
        dy = (yy - self.center[1]) / self.semi_axes[1]
        dx = (xx - self.center[2]) / self.semi_axes[2]
        if self.shape == "ellipsoid":
            return dz * dz + dy * dy + dx * dx < 1.0
        return (np.abs(dz) < 1.0) & (np.abs(dy) < 1.0) & (np.abs(dx) < 1.0)


@dataclass(frozen=True)
class NoiseModel:
    """Per-frame noise applied to each voxel TAC independently.

    "gaussian-fraction": zero-mean gaussian with frame std
        sigma_i = level * sqrt(C_i / C_peak) * sqrt(mean_dur / dur_i) * C_peak,
    i.e. `level` is the noise fraction of the voxel's peak at a frame of
    average duration, and short frames are noisier like low-count frames are.
    "scaled-poisson": counts ~ Poisson(C_i * dur_i * level) rescaled back to
    activity; `level` is the count rate per (Bq/ml * s).
    """

    kind: str = "gaussian-fraction"
    level: float = 0.05

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; have {NOISE_KINDS}")
        if self.kind != "none" and self.level <= 0:
            raise ValueError("noise level must be > 0")

    def frame_sigma(self, clean_tac: np.ndarray,
                    durations_s: np.ndarray) -> np.ndarray:
        """Predicted per-frame std of the gaussian-fraction model."""
        if self.kind != "gaussian-fraction":
            raise ValueError("frame_sigma applies to gaussian-fraction noise")
        peak = float(np.max(clean_tac))
        if peak <= 0:
            return np.zeros_like(clean_tac)
        rel = np.maximum(clean_tac, 0.0) / peak
        return self.level * peak * np.sqrt(rel) * np.sqrt(
            np.mean(durations_s) / durations_s)


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry, presets, noise and seed for one synthetic dataset."""

    dims: tuple[int, int, int] = (32, 64, 64)
    spacing_mm: tuple[float, float, float] = (2.5, 2.5, 2.5)
    organs: tuple[OrganRegion, ...] = ()
    noise: NoiseModel = field(default_factory=lambda: NoiseModel("none", 0.05))
    seed: int = 0

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(d) <= 0 for d in self.dims):
            raise ValueError("dims must be 3 positive integers (z, y, x)")
        # several regions may share one label (e.g. paired organs) but then
        # must agree on name and params
        seen: dict[int, OrganRegion] = {}
        for o in self.organs:
            prev = seen.setdefault(o.label, o)
            if prev.name != o.name or prev.params != o.params:
                raise ValueError(
                    f"label {o.label} is reused with a different name/preset")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "organs", tuple(self.organs))

    @property
    def legend(self) -> dict[int, str]:
        return {o.label: o.name for o in self.organs}


def default_phantom_spec(noise: NoiseModel | None = None,
                         seed: int = 0) -> PhantomSpec:
    """Seven-organ desk-scale phantom on a 64x64x32 grid at 2.5 mm.

    Regions are laid out so that every axial slice in z = 10..17 contains all
    seven organs; presets come from the bundled "dnn" reference table.
    """
    ref = load_reference_params("dnn")
    geo = {
        # name: (shape, center (z, y, x), semi-axes (z, y, x))
        "lungs_left": ("ellipsoid", (16, 20, 18), (12, 10, 9)),
        "lungs_right": ("ellipsoid", (16, 20, 46), (12, 10, 9)),
        "heart": ("ellipsoid", (16, 24, 32), (7, 6, 4.5)),
        "aorta": ("ellipsoid", (16, 36, 32), (14, 2.5, 2.5)),
        "liver": ("ellipsoid", (14, 42, 20), (10, 8, 11)),
        "spleen": ("ellipsoid", (14, 42, 46), (8, 6, 6)),
        "kidney_left": ("ellipsoid", (12, 54, 24), (6, 4, 4)),
        "kidney_right": ("ellipsoid", (12, 54, 40), (6, 4, 4)),
        "bones": ("box", (15.5, 46, 32), (16, 2, 2)),
    }
    part_of = {"lungs_left": "lungs", "lungs_right": "lungs",
               "kidney_left": "kidneys", "kidney_right": "kidneys"}
    organs = []
    for name, (shape, center, axes) in geo.items():
        organ = part_of.get(name, name)
        organs.append(OrganRegion(ref[organ].label, organ, shape, center, axes,
                                  ref[organ].mean))
    return PhantomSpec(organs=tuple(organs),
                       noise=noise or NoiseModel("none", 0.05), seed=seed)


def _voxel_rng(seed: int, voxel_index: int) -> np.random.Generator:
    """Independent stream per voxel: Philox keyed by seed with the voxel
    index in the high counter word (streams 2^192 apart)."""
    bitgen = np.random.Philox(key=np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                              counter=[0, 0, 0, int(voxel_index)])
    return np.random.Generator(bitgen)


def build_phantom(spec: PhantomSpec, input_function: InputFunction,
                  schedule: FrameSchedule, fine_step_s: float = 1.0
                  ) -> tuple[DynamicVolume, LabelMap, ParametricVolume]:
    """Realize a phantom spec into (dynamic volume, labels, ground truth).

    Unlabeled voxels have identically zero TACs; labeled voxels get their
    organ's noiseless model TAC plus per-voxel noise. Raises on overlapping
    regions.
    """
    dims = spec.dims
    labels = np.zeros(dims, dtype=np.uint8)
    for organ in spec.organs:
        m = organ.mask(dims)
        clash = m & (labels != 0)
        if np.any(clash):
            raise ValueError(
                f"region {organ.name!r} overlaps {int(np.count_nonzero(clash))} "
                "already-labeled voxels")
        labels[m] = organ.label

    model = ForwardModel(input_function, schedule, fine_step_s)
    n_frames = schedule.n_frames
    clean = {o.label: model.tac(o.params) for o in spec.organs}

    data = np.zeros((n_frames,) + dims, dtype=np.float32)
    flat_labels = labels.reshape(-1)
    flat_data = data.reshape(n_frames, -1)
    for label, tac in clean.items():
        flat_data[:, flat_labels == label] = tac.astype(np.float32)[:, None]

    if spec.noise.kind != "none":
        durs = schedule.durations
        labeled = np.flatnonzero(flat_labels)
        sigma = {lab: spec.noise.frame_sigma(clean[lab], durs)
                 for lab in clean} if spec.noise.kind == "gaussian-fraction" else None
        for vidx in labeled:
            rng = _voxel_rng(spec.seed, int(vidx))
            lab = int(flat_labels[vidx])
            if spec.noise.kind == "gaussian-fraction":
                noisy = clean[lab] + rng.standard_normal(n_frames) * sigma[lab]
            else:  # scaled-poisson
                lam = np.maximum(clean[lab], 0.0) * durs * spec.noise.level
                noisy = rng.poisson(lam) / (durs * spec.noise.level)
            flat_data[:, vidx] = noisy.astype(np.float32)

    truth = np.zeros((4,) + dims, dtype=np.float32)
    flat_truth = truth.reshape(4, -1)
    for organ in spec.organs:
        flat_truth[:, flat_labels == organ.label] = \
            organ.params.as_array().astype(np.float32)[:, None]

    return (DynamicVolume(data, schedule, spec.spacing_mm),
            LabelMap(labels, spec.legend, spec.spacing_mm),
            ParametricVolume(truth, PARAM_CHANNELS, spec.spacing_mm))
