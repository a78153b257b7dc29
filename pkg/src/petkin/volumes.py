"""In-memory containers for dynamic, label and parametric volumes.

Array layouts follow the acquisition convention: a dynamic study is
[T, Z, Y, X] (frames outermost), labels are [Z, Y, X] uint8 and parameter
maps are [C, Z, Y, X] with a channel legend. Serialization of these types
lives in petkin.dataio.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinetics import FrameSchedule, KineticParams

PARAM_CHANNELS = ("k1", "k2", "k3", "vb")
FIT_CHANNELS = PARAM_CHANNELS + ("converged",)

__all__ = ["DynamicVolume", "LabelMap", "ParametricVolume",
           "PARAM_CHANNELS", "FIT_CHANNELS"]


def _spacing(value) -> tuple[float, float, float]:
    sp = tuple(float(v) for v in np.atleast_1d(value).ravel())
    if len(sp) == 1:
        sp = sp * 3
    if len(sp) != 3 or any(v <= 0 for v in sp):
        raise ValueError(f"spacing must be 1 or 3 positive values, got {value!r}")
    return sp


@dataclass(frozen=True)
class DynamicVolume:
    """Frame stack of activity concentrations [Bq/ml], layout [T, Z, Y, X]."""

    data: np.ndarray
    schedule: FrameSchedule
    spacing_mm: tuple[float, float, float] = (2.5, 2.5, 2.5)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 4:
            raise ValueError(f"expected [T, Z, Y, X] data, got shape {data.shape}")
        if data.shape[0] != self.schedule.n_frames:
            raise ValueError(
                f"{data.shape[0]} frames in data vs {self.schedule.n_frames} "
                "in the schedule")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing_mm", _spacing(self.spacing_mm))

    @property
    def spatial_shape(self) -> tuple[int, int, int]:
        return self.data.shape[1:]

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    def tac_at(self, z: int, y: int, x: int) -> np.ndarray:
        return self.data[:, z, y, x].astype(np.float64)

    def voxel_tacs(self) -> np.ndarray:
        """All voxel TACs as a [n_voxels, T] float64 matrix (C-order voxels)."""
        t = self.data.reshape(self.n_frames, -1)
        return np.ascontiguousarray(t.T, dtype=np.float64)


@dataclass(frozen=True)
class LabelMap:
    """Organ labels [Z, Y, X]; 0 is background, the legend names the rest."""

    labels: np.ndarray
    legend: dict[int, str] = field(default_factory=dict)
    spacing_mm: tuple[float, float, float] = (2.5, 2.5, 2.5)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 3:
            raise ValueError(f"expected [Z, Y, X] labels, got shape {labels.shape}")
        if labels.dtype != np.uint8:
            if labels.min() < 0 or labels.max() > 255:
                raise ValueError("labels must fit in uint8")
            labels = labels.astype(np.uint8)
        legend = {int(k): str(v) for k, v in self.legend.items()}
        present = set(int(v) for v in np.unique(labels)) - {0}
        missing = present - set(legend)
        if missing:
            raise ValueError(f"legend does not name labels {sorted(missing)}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "legend", legend)
        object.__setattr__(self, "spacing_mm", _spacing(self.spacing_mm))

    def mask(self, label: int | None = None) -> np.ndarray:
        """Boolean mask of one label, or of all labeled voxels if None."""
        if label is None:
            return self.labels != 0
        return self.labels == int(label)

    def label_of(self, name: str) -> int:
        for lab, nm in self.legend.items():
            if nm == name:
                return lab
        raise KeyError(f"no label named {name!r}")


@dataclass(frozen=True)
class ParametricVolume:
    """Per-voxel parameter maps [C, Z, Y, X] with a channel legend."""

    data: np.ndarray
    channels: tuple[str, ...] = FIT_CHANNELS
    spacing_mm: tuple[float, float, float] = (2.5, 2.5, 2.5)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 4:
            raise ValueError(f"expected [C, Z, Y, X] data, got shape {data.shape}")
        channels = tuple(str(c) for c in self.channels)
        if len(channels) != data.shape[0]:
            raise ValueError(
                f"{data.shape[0]} channels in data vs {len(channels)} names")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "spacing_mm", _spacing(self.spacing_mm))

    @property
    def spatial_shape(self) -> tuple[int, int, int]:
        return self.data.shape[1:]

    def channel(self, name: str) -> np.ndarray:
        try:
            idx = self.channels.index(name)
        except ValueError:
            raise KeyError(f"no channel named {name!r}; have {self.channels}")
        return self.data[idx]

    def params_at(self, z: int, y: int, x: int) -> KineticParams:
        vec = [float(self.channel(c)[z, y, x]) for c in PARAM_CHANNELS]
        return KineticParams(*vec)

    def param_matrix(self) -> np.ndarray:
        """The four kinetic channels as a [n_voxels, 4] float64 matrix."""
        rows = [self.channel(c).reshape(-1) for c in PARAM_CHANNELS]
        return np.ascontiguousarray(np.stack(rows, axis=1), dtype=np.float64)
